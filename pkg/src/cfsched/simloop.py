"""Multi-slot proportional-fair simulation and long-term metrics."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import Scheme, conjugate_beamformers, round_robin, zf_beamformers
from .channel import ChannelSet, draw_true_channels, estimate_channels, noise_power, perfect_csi
from .config import ExperimentConfig
from .links import Links, received
from .netgen import generate_network
from .pilots import assign_pilots, hac_group
from .solver import Problem, SolverError, extract_schedule, solve

log = logging.getLogger(__name__)


def pre_log_factor(tau_d: int, tau_p: int) -> float:
    return (tau_d - tau_p) / tau_d


def actual_rate(schedule, w, h, links: Links, sigma2: float, pre_log: float = 1.0) -> np.ndarray:
    """Per-user rate in bits/s/Hz on the true channels (non-coherent, SIC)."""
    s = np.asarray(schedule, dtype=bool)
    amp, interference, _ = received(h, w, links, active=s)
    signal = links.per_user_sum(np.where(s, amp.real**2 + amp.imag**2, 0.0))
    return pre_log * np.log2(1.0 + signal / (interference + sigma2))


def effective_rate(schedule, w, h_hat, theta, links: Links, sigma2: float, pre_log: float = 1.0) -> np.ndarray:
    """Rate the optimizer sees: estimates plus error-covariance terms."""
    s = np.asarray(schedule, dtype=bool)
    amp, interference, power = received(h_hat, w, links, active=s)
    signal = links.per_user_sum(np.where(s, amp.real**2 + amp.imag**2, 0.0))
    robust = np.asarray(theta).T @ power
    return pre_log * np.log2(1.0 + signal / (interference + robust + sigma2))


def update_pf(rbar, rate, eta: float, floor: float = 1e-3):
    """Exponential rate average and the matching PF weights 1 / rbar."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    rbar = eta * np.asarray(rate, dtype=float) + (1.0 - eta) * np.asarray(rbar, dtype=float)
    rbar = np.maximum(rbar, floor)
    return rbar, 1.0 / rbar


def pilot_reuse_factor(tau_p: int, user_density: float) -> float:
    if not user_density > 0:
        raise ValueError("user density must be positive")
    return tau_p / user_density


@dataclass
class SlotDecision:
    schedule: np.ndarray
    w: np.ndarray
    state: object = None


def run_scheme(cfg: ExperimentConfig, channels: ChannelSet, links: Links, weights, slot: int) -> SlotDecision:
    scheme = cfg.scheme
    power = cfg.power_w
    m = channels.antennas
    if scheme.uses_solver:
        st = solve(Problem.build(channels, links, weights), cfg.solver_config())
        s = extract_schedule(st.w, links, power, m, cfg.solver.threshold_frac)
        if scheme is Scheme.PROPOSED:
            return SlotDecision(s, st.w * s[:, None], st)
        return SlotDecision(s, zf_beamformers(s, channels.h_hat, links, power), st)
    s = round_robin(links, m, slot)
    if scheme is Scheme.ZF_RR:
        return SlotDecision(s, zf_beamformers(s, channels.h_hat, links, power))
    return SlotDecision(s, conjugate_beamformers(s, channels.h_hat, links, power))


@dataclass
class RealizationResult:
    index: int
    rates: np.ndarray  # (T, U) bits/s/Hz
    scheduled: np.ndarray  # (T, U) served by at least one RRH
    weights: np.ndarray  # (T, U) PF weights used in each slot
    rbar: np.ndarray  # (T, U) averaged rate after each slot
    iterations: list = field(default_factory=list)
    objective_traces: list = field(default_factory=list)
    final_lambda: list = field(default_factory=list)

    @property
    def num_users(self) -> int:
        return self.rates.shape[1]


def run_realization(cfg: ExperimentConfig, index: int, seq: np.random.SeedSequence) -> RealizationResult:
    net_seq, pilot_seq, fading_seq, noise_seq = seq.spawn(4)
    net = generate_network(cfg.layout, np.random.default_rng(net_seq))
    links = Links.from_served(net.served, net.num_users)
    m = cfg.layout.antennas_per_rrh
    sigma2 = noise_power(cfg.noise.density_dbm_hz, cfg.noise.figure_db, cfg.noise.bandwidth_hz)
    pilots = None
    if cfg.mode == "PEAR":
        groups = hac_group(net.user_positions, cfg.tau_p, cfg.layout)
        pilots = assign_pilots(groups, cfg.tau_p, np.random.default_rng(pilot_seq), net.num_users)
    fading = np.random.default_rng(fading_seq)
    noise = np.random.default_rng(noise_seq)

    n_u, n_t = net.num_users, cfg.slots
    rbar = np.full(n_u, cfg.rate_floor)
    delta = 1.0 / rbar
    out = RealizationResult(index=index, rates=np.zeros((n_t, n_u)), scheduled=np.zeros((n_t, n_u), bool),
                            weights=np.zeros((n_t, n_u)), rbar=np.zeros((n_t, n_u)))
    for t in range(n_t):
        h = draw_true_channels(net.large_scale_gain, m, fading)
        if pilots is None:
            channels = perfect_csi(h, net.large_scale_gain, sigma2, cfg.pilot_power_w)
        else:
            channels = estimate_channels(h, net.large_scale_gain, pilots, cfg.pilot_power_w, sigma2, noise)
        weights = delta if cfg.weighting == "pf" else np.ones(n_u)
        try:
            dec = run_scheme(cfg, channels, links, weights, t)
        except SolverError as exc:
            raise SolverError(f"realization {index}, slot {t}: {exc}") from exc
        rate = actual_rate(dec.schedule, dec.w, h, links, sigma2, cfg.pre_log)
        out.rates[t] = rate
        out.scheduled[t] = links.per_user_sum(dec.schedule.astype(float)) > 0
        out.weights[t] = weights
        rbar, delta = update_pf(rbar, rate, cfg.eta, cfg.rate_floor)
        out.rbar[t] = rbar
        if dec.state is not None:
            out.iterations.append(dec.state.iterations)
            out.objective_traces.append(list(dec.state.objective_trace))
            out.final_lambda.append(dec.state.lam.copy())
    return out


@dataclass
class CampaignMetrics:
    config: ExperimentConfig
    seeds: list
    results: list

    @property
    def pilot_reuse(self) -> float:
        return pilot_reuse_factor(self.config.tau_p, self.config.layout.user_density)

    def long_term_se(self, index: int | None = None) -> np.ndarray:
        """Per-user mean rate over the final ``window`` slots (all realizations
        concatenated unless ``index`` is given)."""
        w = self.config.window
        picks = self.results if index is None else [self.results[index]]
        return np.concatenate([r.rates[-w:].mean(axis=0) for r in picks])

    def sum_se(self) -> np.ndarray:
        """Long-term network sum SE per realization."""
        return np.array([self.long_term_se(i).sum() for i in range(len(self.results))])

    def sum_se_per_slot(self) -> np.ndarray:
        return np.array([r.rates.sum(axis=1) for r in self.results])

    def summary(self) -> dict:
        se = self.long_term_se()
        return {
            "scheme": self.config.scheme.value,
            "mode": self.config.mode,
            "realizations": len(self.results),
            "users": int(se.size),
            "median_user_se": float(np.median(se)),
            "p10_user_se": float(np.percentile(se, 10)),
            "mean_sum_se": float(self.sum_se().mean()),
            "sum_se": self.sum_se().tolist(),
            "pilot_reuse": self.pilot_reuse,
            "pre_log": self.config.pre_log,
        }


def _run_one(args):
    cfg, index, seq = args
    return run_realization(cfg, index, seq)


def realization_seeds(seed: int, count: int) -> list:
    return np.random.SeedSequence(seed).spawn(count)


def run_campaign(cfg: ExperimentConfig) -> CampaignMetrics:
    """All realizations of one configuration; results in realization order."""
    seqs = realization_seeds(cfg.seed, cfg.realizations)
    jobs = [(cfg, i, s) for i, s in enumerate(seqs)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    return CampaignMetrics(config=cfg, seeds=[cfg.seed, cfg.realizations], results=results)
