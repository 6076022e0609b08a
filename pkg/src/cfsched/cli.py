"""Command line entry point: ``cfsched {campaign,trace,sweep} [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import Scheme
from .channel import draw_true_channels, estimate_channels, noise_power, perfect_csi
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .links import Links
from .netgen import generate_network
from .pilots import assign_pilots, hac_group
from .simloop import pilot_reuse_factor, realization_seeds, run_campaign
from .solver import Problem, SolverError, extract_schedule, solve

log = logging.getLogger("cfsched")

OUT_ENV = "CFSCHED_OUT"
CSV_VERSION = 1
SWEEP_TAU_P = (16, 32, 64)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, kind: str, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# cfsched {kind} v{CSV_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_summary(path: Path, cfg: ExperimentConfig, payload: dict):
    data = {
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config": cfg.to_dict(),
        **payload,
    }
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _slot_rows(metrics):
    for res in metrics.results:
        for t in range(res.rates.shape[0]):
            for u in range(res.num_users):
                yield (res.index, t, u, res.rates[t, u], res.scheduled[t, u], res.weights[t, u])


def cmd_campaign(cfg: ExperimentConfig, out: Path) -> str:
    metrics = run_campaign(cfg)
    write_csv(out / "slots.csv", "slots", ["realization", "slot", "user", "rate", "scheduled", "weight"],
              _slot_rows(metrics))
    summary = metrics.summary()
    write_summary(out / "summary.json", cfg, {"seeds": metrics.seeds, "metrics": summary})
    return (f"{summary['scheme']} {summary['mode']}: median user SE {summary['median_user_se']:.4f}, "
            f"10th pct {summary['p10_user_se']:.4f}, sum SE {summary['mean_sum_se']:.3f} bits/s/Hz, "
            f"xi_p {summary['pilot_reuse']:.2f}")


def trace_instance(cfg: ExperimentConfig):
    """One network, one slot, equal weights: the solver run behind trace.csv."""
    seq = realization_seeds(cfg.seed, 1)[0]
    net_seq, pilot_seq, fading_seq, noise_seq = seq.spawn(4)
    net = generate_network(cfg.layout, np.random.default_rng(net_seq))
    links = Links.from_served(net.served, net.num_users)
    sigma2 = noise_power(cfg.noise.density_dbm_hz, cfg.noise.figure_db, cfg.noise.bandwidth_hz)
    h = draw_true_channels(net.large_scale_gain, cfg.layout.antennas_per_rrh, np.random.default_rng(fading_seq))
    if cfg.mode == "PI":
        ch = perfect_csi(h, net.large_scale_gain, sigma2, cfg.pilot_power_w)
    else:
        groups = hac_group(net.user_positions, cfg.tau_p, cfg.layout)
        pilots = assign_pilots(groups, cfg.tau_p, np.random.default_rng(pilot_seq), net.num_users)
        ch = estimate_channels(h, net.large_scale_gain, pilots, cfg.pilot_power_w, sigma2,
                               np.random.default_rng(noise_seq))
    problem = Problem.build(ch, links)
    return problem, solve(problem, cfg.solver_config())


def cmd_trace(cfg: ExperimentConfig, out: Path) -> str:
    problem, state = trace_instance(cfg)
    rows = []
    for i, f in enumerate(state.objective_trace):
        for r in range(problem.links.num_rrh):
            rows.append((i, f, r, state.power_trace[i][r], state.mu_trace[i][r], state.lam_trace[i][r],
                         state.active_trace[i]))
    write_csv(out / "trace.csv", "trace", ["iteration", "objective", "rrh", "power", "mu", "lam", "active_links"],
              rows)
    sched = extract_schedule(state.w, problem.links, cfg.power_w, problem.antennas, cfg.solver.threshold_frac)
    write_summary(out / "summary.json", cfg, {
        "iterations": state.iterations,
        "converged": state.converged,
        "final_objective": state.objective_trace[-1] if state.objective_trace else None,
        "scheduled_links": int(sched.sum()),
    })
    return (f"trace: {state.iterations} iterations, converged={state.converged}, "
            f"f4={state.objective_trace[-1]:.6g}, scheduled links {int(sched.sum())}")


def cmd_sweep(cfg: ExperimentConfig, out: Path, over: str) -> str:
    if over == "tau_p":
        variants = [cfg.replace(tau_p=t) for t in SWEEP_TAU_P if t < cfg.tau_d]
    elif over == "scheme":
        variants = [cfg.replace(scheme=s) for s in Scheme]
    else:
        raise ConfigError(f"cannot sweep over {over!r}")
    rows = []
    for v in variants:
        s = run_campaign(v).summary()
        rows.append((v.scheme.value, v.mode, v.tau_p, pilot_reuse_factor(v.tau_p, v.layout.user_density),
                     s["median_user_se"], s["p10_user_se"], s["mean_sum_se"]))
    header = ["scheme", "mode", "tau_p", "xi_p", "median_user_se", "p10_user_se", "mean_sum_se"]
    write_csv(out / "sweep.csv", "sweep", header, rows)
    write_summary(out / "summary.json", cfg, {"sweep_over": over, "rows": [dict(zip(header, r)) for r in rows]})
    lines = ["  ".join(f"{h:>14}" for h in header)]
    for r in rows:
        lines.append("  ".join(f"{v:>14.4f}" if isinstance(v, float) else f"{v!s:>14}" for v in r))
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfsched", description=__doc__)
    p.add_argument("command", choices=["campaign", "trace", "sweep"])
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--preset", choices=["full", "desk"], help="base parameter set (overridden by --config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=[s.value for s in Scheme])
    p.add_argument("--mode", choices=["PI", "PEAR"])
    p.add_argument("--out", help=f"output directory (env {OUT_ENV} is used when omitted)")
    p.add_argument("--over", choices=["tau_p", "scheme"], default="scheme", help="sweep dimension")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        import yaml

        text = Path(args.config).read_text()
        data = (yaml.safe_load(text) if text.strip() else {}) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping at the top level")
    if args.preset and "preset" not in data:
        data["preset"] = args.preset
    cfg = config_from_dict(data) if data else load_config(None)
    changes = {k: getattr(args, k) for k in ("seed", "scheme", "mode") if getattr(args, k) is not None}
    out = args.out or os.environ.get(OUT_ENV)
    if out:
        changes["out_dir"] = out
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "campaign":
            digest = cmd_campaign(cfg, out)
        elif args.command == "trace":
            digest = cmd_trace(cfg, out)
        else:
            digest = cmd_sweep(cfg, out, args.over)
    except (ConfigError, SolverError, OSError, ValueError) as exc:
        print(f"cfsched: error: {exc}", file=sys.stderr)
        return 2
    print(digest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
