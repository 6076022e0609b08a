"""Joint user scheduling and robust beamforming by fractional programming.

Block coordinate ascent over the SINR auxiliaries ``gamma``, the quadratic
transform auxiliaries ``beta``, the beamformers ``W`` (with per-RRH power and
reweighted-l1 capacity multipliers) and the l1 weights ``alpha``. Natural
logarithms are used throughout; reporting code converts to bits.

All per-link quantities are arrays indexed by :class:`~cfsched.links.Links`.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .links import Links, received

log = logging.getLogger(__name__)

_JITTER = 1e-12


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    power: float = 1.0  # per-RRH budget, W
    epsilon: float | None = None  # None -> 0.9 p / M
    tol: float = 1e-5
    k_stable: int = 3
    iter_max: int = 200
    threshold_frac: float = 1e-4
    lambda_init_frac: float = 1e-3
    lambda_doublings: int = 10

    def eps_for(self, antennas: int) -> float:
        return 0.9 * self.power / antennas if self.epsilon is None else self.epsilon


@dataclass(frozen=True)
class Problem:
    """What the solver sees: estimates, error covariances and PF weights."""

    h_hat: np.ndarray  # (B, U, M)
    theta: np.ndarray  # (B, U) scalar error covariance per link
    sigma2: float
    links: Links
    weights: np.ndarray  # (U,) PF weights delta_u

    @property
    def antennas(self) -> int:
        return self.h_hat.shape[-1]

    @classmethod
    def build(cls, channels, links: Links, weights=None) -> "Problem":
        u = links.num_users
        w = np.ones(u) if weights is None else np.asarray(weights, dtype=float)
        return cls(h_hat=channels.h_hat, theta=channels.theta, sigma2=channels.noise_power,
                   links=links, weights=w)


@dataclass
class _Measure:
    amp: np.ndarray  # (L,) hhat_{ru}^H w_ru
    signal: np.ndarray  # (U,) sum_r |hhat^H w|^2
    denom: np.ndarray  # (U,) B_u(W)
    power: np.ndarray  # (B,)

    @property
    def total(self) -> np.ndarray:
        return self.signal + self.denom


def _measure(problem: Problem, w) -> _Measure:
    links = problem.links
    amp, interference, power = received(problem.h_hat, w, links)
    signal = links.per_user_sum(amp.real**2 + amp.imag**2)
    robust = problem.theta.T @ power
    denom = interference + robust + problem.sigma2
    return _Measure(amp=amp, signal=signal, denom=denom, power=power)


def update_gamma(problem: Problem, w) -> np.ndarray:
    """SINR auxiliaries at fixed beamformers: signal over B_u(W)."""
    m = _measure(problem, w)
    return m.signal / m.denom


def _beta_from(problem: Problem, m: _Measure, gamma) -> np.ndarray:
    u = problem.links.user
    root = np.sqrt(problem.weights[u] * (1.0 + gamma[u]))
    return root * m.amp.conj() / m.total[u]


def update_beta(problem: Problem, w, gamma) -> np.ndarray:
    """Maximizer of the quadratic-transform surrogate over beta."""
    return _beta_from(problem, _measure(problem, w), np.asarray(gamma, dtype=float))


def _f4_from(problem: Problem, m: _Measure, gamma, beta) -> float:
    u = problem.links.user
    delta = problem.weights
    first = np.sum(delta * (np.log1p(gamma) - gamma))
    root = np.sqrt(delta[u] * (1.0 + gamma[u]))
    # w^H hhat = conj(amp)
    linear = 2.0 * np.real(beta.conj() * root * m.amp.conj())
    quad = (beta.real**2 + beta.imag**2) * m.total[u]
    return float(first + np.sum(linear - quad))


def objective_f4(problem: Problem, w, gamma, beta) -> float:
    """Surrogate objective in (W, gamma, beta); natural log."""
    return _f4_from(problem, _measure(problem, w), np.asarray(gamma, dtype=float), np.asarray(beta))


def f3_per_rrh(problem: Problem, w, gamma, beta) -> np.ndarray:
    """The per-RRH quadratic-transform terms; they sum to f4's second part."""
    m = _measure(problem, w)
    u = problem.links.user
    root = np.sqrt(problem.weights[u] * (1.0 + gamma[u]))
    terms = 2.0 * np.real(np.conj(beta) * root * m.amp.conj()) - np.abs(beta) ** 2 * m.total[u]
    return problem.links.per_rrh_sum(terms)


def weighted_sum_rate(problem: Problem, w) -> float:
    return float(np.sum(problem.weights * np.log1p(update_gamma(problem, w))))


class BeamSystem:
    """Per-RRH Gram matrices, factorized once, for the closed-form W update.

    w_ru(mu, lam) = c_ru (G_r + (mu_r + lam_r alpha_ru) I)^{-1} hhat_ru with
    G_r = sum_u b_u (hhat_ru hhat_ru^H + Theta_ru) and b_u = sum_r |beta_ru|^2.
    """

    def __init__(self, problem: Problem, gamma, beta):
        links = problem.links
        beta = np.asarray(beta)
        b = links.per_user_sum(beta.real**2 + beta.imag**2)
        h = problem.h_hat
        gram = np.matmul(h.transpose(0, 2, 1) * b, h.conj())
        ridge = problem.theta @ b
        gram = gram + ridge[:, None, None] * np.eye(problem.antennas)
        evals, evecs = np.linalg.eigh(gram)
        self.evals = np.maximum(evals, 0.0)
        self.evecs = evecs
        self.scale = np.maximum(np.trace(gram, axis1=1, axis2=2).real / problem.antennas, 0.0)
        u = links.user
        self.coef = np.sqrt(problem.weights[u] * (1.0 + gamma[u])) * beta.conj()
        h_links = h[links.rrh, u]
        self.proj = np.matmul(h_links[:, None, :], evecs[links.rrh].conj())[:, 0, :]
        self._c2z2 = (np.abs(self.coef) ** 2)[:, None] * np.abs(self.proj) ** 2
        self.links = links
        self._prepare()

    def _prepare(self):
        r = self.links.rrh
        self._evals_l = self.evals[r]
        self._floor_l = (_JITTER * np.where(self.scale > 0, self.scale, 1.0))[r][:, None]

    def _denom(self, mu, lam, alpha, warn=False):
        r = self.links.rrh
        d = self._evals_l + (np.asarray(mu)[r] + np.asarray(lam)[r] * alpha)[:, None]
        bad = d < self._floor_l
        if bad.any():
            if warn and np.any(bad & (self._c2z2 > 0)):
                warnings.warn("singular beamformer system; adding jitter", RuntimeWarning, stacklevel=3)
            d = np.where(bad, d + self._floor_l, d)
        return d

    def beams(self, mu, lam, alpha) -> np.ndarray:
        d = self._denom(mu, lam, alpha, warn=True)
        w = np.matmul(self.evecs[self.links.rrh], (self.proj / d)[:, :, None])[:, :, 0]
        return self.coef[:, None] * w

    def power(self, mu, lam, alpha) -> np.ndarray:
        d = self._denom(mu, lam, alpha)
        return self.links.per_rrh_sum(np.sum(self._c2z2 / d**2, axis=1))

    def _power_and_slope(self, mu, lam, alpha):
        d = self._denom(mu, lam, alpha)
        q = self._c2z2 / d**2
        return (self.links.per_rrh_sum(q.sum(axis=1)),
                self.links.per_rrh_sum((q / d).sum(axis=1)))

    def capacity(self, mu, lam, alpha) -> np.ndarray:
        d = self._denom(mu, lam, alpha)
        return self.links.per_rrh_sum(alpha * np.sum(self._c2z2 / d**2, axis=1))

    def bisect_mu(self, lam, alpha, budget: float, which=None, rtol: float = 1e-13) -> np.ndarray:
        """Smallest mu >= 0 per RRH with transmit power at the budget.

        Power is strictly decreasing in mu. The bracket comes from the bound
        power(mu) <= sum |c z|^2 / mu^2, and Newton steps on power**-0.5 start
        from its left end, falling back to bisection if a step leaves the
        bracket. Stops once the power is within ``rtol`` of the budget.
        """
        nb = self.links.num_rrh
        which = np.ones(nb, dtype=bool) if which is None else np.asarray(which, dtype=bool)
        mu = np.zeros(nb)
        need = which & (self.power(mu, lam, alpha) > budget)
        if not need.any():
            return mu
        # every denominator is >= mu, so power(mu) <= sum(c2z2) / mu**2
        total = self.links.per_rrh_sum(self._c2z2.sum(axis=1))
        hi = np.sqrt(total / budget)
        shift = self.links.per_rrh_sum(np.zeros(len(self.links)))
        np.maximum.at(shift, self.links.rrh, self._evals_l.max(axis=1) + np.asarray(lam)[self.links.rrh] * alpha)
        lo = np.maximum(hi - shift, 0.0)
        for _ in range(4000):
            grow = need & (self.power(hi, lam, alpha) > budget)
            if not grow.any():
                break
            lo = np.where(grow, hi, lo)
            hi = np.where(grow, 2.0 * hi, hi)
        else:
            raise SolverError("failed to bracket the power multiplier")
        target = budget**-0.5
        # power**-0.5 is concave increasing: Newton from the left never overshoots
        x = lo.copy()
        pending = need.copy()
        for _ in range(300):
            pw, slope = self._power_and_slope(x, lam, alpha)
            done = np.abs(pw - budget) <= rtol * budget
            mu = np.where(pending & done, x, mu)
            pending &= ~done
            if not pending.any():
                break
            over = pw > budget
            lo = np.where(pending & over, x, lo)
            hi = np.where(pending & ~over, x, hi)
            # d/dmu power**-0.5 = power**-1.5 * sum c2z2 / d**3
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                g = pw**-0.5
                dg = pw**-1.5 * slope
                step = np.where(dg > 0, x - (g - target) / np.where(dg > 0, dg, 1.0), np.nan)
            inside = (step > lo) & (step < hi)
            x = np.where(pending, np.where(inside, step, 0.5 * (lo + hi)), x)
            tight = pending & (hi - lo <= 4.0 * np.finfo(float).eps * hi)
            mu = np.where(tight, hi, mu)
            pending &= ~tight
        mu = np.where(pending, hi, mu)
        return mu


def update_beamformers(problem: Problem, gamma, beta, alpha, mu, lam) -> np.ndarray:
    """Closed-form beamformers for given auxiliaries and multipliers."""
    return BeamSystem(problem, np.asarray(gamma, dtype=float), beta).beams(mu, lam, np.asarray(alpha))


def _multipliers(system: BeamSystem, alpha, cfg: SolverConfig, antennas: int):
    nb = system.links.num_rrh
    budget = cfg.power
    lam = np.zeros(nb)
    mu = system.bisect_mu(lam, alpha, budget)
    cap = system.capacity(mu, lam, alpha)
    viol = cap > antennas * (1.0 + 1e-9)
    if not viol.any():
        return mu, lam
    lam[viol] = cfg.lambda_init_frac * np.where(system.scale > 0, system.scale, 1.0)[viol]
    pending = viol.copy()
    for k in range(cfg.lambda_doublings + 1):
        mu_new = system.bisect_mu(lam, alpha, budget, which=pending)
        mu = np.where(pending, mu_new, mu)
        cap = system.capacity(mu, lam, alpha)
        pending = pending & (cap > antennas * (1.0 + 1e-9))
        if not pending.any():
            break
        if k == cfg.lambda_doublings:
            log.debug("capacity surrogate still violated at %d RRHs after lambda cap", int(pending.sum()))
            break
        lam = np.where(pending, 2.0 * lam, lam)
    return mu, lam


def update_multipliers(problem: Problem, gamma, beta, alpha, cfg: SolverConfig):
    """Per-RRH (mu, lam) via the complementary-slackness heuristic.

    lam = 0 and mu bisected to meet the power budget; where the reweighted
    capacity surrogate is then violated, lam starts small and doubles, with
    mu re-bisected each time.
    """
    system = BeamSystem(problem, np.asarray(gamma, dtype=float), beta)
    return _multipliers(system, np.asarray(alpha), cfg, problem.antennas)


def update_alpha(w, eps: float) -> np.ndarray:
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    return 1.0 / (np.sum(np.abs(w) ** 2, axis=1) + eps)


def conjugate_init(h_hat, links: Links, power: float) -> np.ndarray:
    """Matched-filter beams with the budget split evenly over each E_r."""
    h_links = h_hat[links.rrh, links.user]
    norms = np.linalg.norm(h_links, axis=1)
    share = power / np.maximum(links.count()[links.rrh], 1)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms[:, None] > 0, np.sqrt(share)[:, None] * h_links / safe[:, None], 0.0)


@dataclass
class SolverState:
    w: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    weights: np.ndarray
    epsilon: float
    objective_trace: list = field(default_factory=list)
    power_trace: list = field(default_factory=list)
    mu_trace: list = field(default_factory=list)
    lam_trace: list = field(default_factory=list)
    active_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.objective_trace)


def solve(problem: Problem, cfg: SolverConfig = SolverConfig()) -> SolverState:
    """Run the block-coordinate ascent until the surrogate stops improving."""
    links = problem.links
    m_ant = problem.antennas
    eps = cfg.eps_for(m_ant)
    if np.any(problem.weights <= 0):
        raise ValueError("PF weights must be positive")
    w = conjugate_init(problem.h_hat, links, cfg.power)
    alpha = 1.0 / (cfg.power / np.maximum(links.count()[links.rrh], 1) + eps)
    state = SolverState(w=w, gamma=np.zeros(links.num_users), beta=np.zeros(len(links), complex),
                        alpha=alpha, mu=np.zeros(links.num_rrh), lam=np.zeros(links.num_rrh),
                        weights=problem.weights, epsilon=eps)
    if len(links) == 0:
        state.converged = True
        return state

    m = _measure(problem, w)
    stable = 0
    prev = None
    for it in range(cfg.iter_max):
        gamma = m.signal / m.denom
        beta = _beta_from(problem, m, gamma)
        system = BeamSystem(problem, gamma, beta)
        mu, lam = _multipliers(system, alpha, cfg, m_ant)
        w = system.beams(mu, lam, alpha)
        m = _measure(problem, w)
        f = _f4_from(problem, m, gamma, beta)
        if not np.isfinite(f) or not np.all(np.isfinite(w)):
            raise SolverError(f"non-finite value at iteration {it}")
        state.objective_trace.append(f)
        state.power_trace.append(m.power.copy())
        state.mu_trace.append(mu)
        state.lam_trace.append(lam)
        pw = np.sum(np.abs(w) ** 2, axis=1)
        state.active_trace.append(int(np.sum(pw > cfg.threshold_frac * cfg.power)))
        state.w, state.gamma, state.beta, state.mu, state.lam = w, gamma, beta, mu, lam
        alpha = update_alpha(w, eps)
        state.alpha = alpha
        if prev is not None:
            change = abs(f - prev) / max(1.0, abs(f))
            stable = stable + 1 if change < cfg.tol else 0
            if stable >= cfg.k_stable:
                state.converged = True
                break
        prev = f
    return state


def extract_schedule(w, links: Links, power: float, antennas: int, threshold_frac: float = 1e-4) -> np.ndarray:
    """Binary schedule per link: strong beams, at most ``antennas`` per RRH."""
    pw = np.sum(np.abs(np.asarray(w)) ** 2, axis=1)
    s = pw > threshold_frac * power
    for r in range(links.num_rrh):
        sl = links.at(r)
        on = np.flatnonzero(s[sl])
        if on.size > antennas:
            order = on[np.argsort(-pw[sl][on], kind="stable")]
            s[sl.start + order[antennas:]] = False
    return s
