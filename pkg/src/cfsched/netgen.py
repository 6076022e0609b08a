"""Wrap-around network realizations for the 7-cell hexagonal layout.

Hexagons are flat-top with apothem ``cell_inner_radius``. The seven-cell
cluster tiles the plane under six translations of length sqrt(21) * R_c,
which is what the minimum-image distance uses.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

PATH_LOSS_INTERCEPT_DB = -112.4271
PATH_LOSS_SLOPE_DB = 38.0


class ConfigError(ValueError):
    """Raised when a configuration violates its invariants."""


def path_loss_db(d_km):
    """COST231 Walfish-Ikegami path gain at 1800 MHz, distance in km."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss distance must be positive")
    out = PATH_LOSS_INTERCEPT_DB - PATH_LOSS_SLOPE_DB * np.log10(d)
    return float(out) if out.ndim == 0 else out


def db_to_linear(x_db):
    return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm_to_watt(x_dbm):
    return float(10.0 ** ((x_dbm - 30.0) / 10.0))


@dataclass(frozen=True)
class LayoutConfig:
    num_cells: int = 7
    rrh_per_cell: int = 10
    antennas_per_rrh: int = 8
    cell_inner_radius: float = 500.0  # m
    user_density: float = 200.0  # users / km^2
    exclusion_radius: float = 20.0  # m
    shadowing_sigma: float = 4.0  # dB
    cluster_threshold: float = float(db_to_linear(path_loss_db(0.4)))
    rng_seed: int = 0
    # fixed user count instead of a Poisson draw
    num_users: int | None = None

    def __post_init__(self):
        if self.num_cells != 7:
            raise ConfigError("layout.num_cells: only the 7-cell wrap-around cluster is supported")
        for name in ("rrh_per_cell", "antennas_per_rrh"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"layout.{name} must be >= 1")
        for name in ("cell_inner_radius", "exclusion_radius", "user_density"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"layout.{name} must be > 0")
        if self.shadowing_sigma < 0:
            raise ConfigError("layout.shadowing_sigma must be >= 0")
        if self.cluster_threshold < 0:
            raise ConfigError("layout.cluster_threshold must be >= 0")
        if self.num_users is not None and self.num_users < 1:
            raise ConfigError("layout.num_users must be >= 1 when given")
        if self.exclusion_radius >= self.cell_inner_radius:
            raise ConfigError("layout.exclusion_radius must be smaller than the cell radius")

    @property
    def circumradius(self) -> float:
        return 2.0 * self.cell_inner_radius / math.sqrt(3.0)

    @property
    def cell_area_km2(self) -> float:
        a = self.cell_inner_radius / 1000.0
        return 2.0 * math.sqrt(3.0) * a * a

    @property
    def total_area_km2(self) -> float:
        return self.num_cells * self.cell_area_km2

    @property
    def mean_user_count(self) -> float:
        return self.user_density * self.total_area_km2


def cell_centers(layout: LayoutConfig) -> np.ndarray:
    """Centre cell at the origin plus its six neighbours (flat-top tiling)."""
    spacing = 2.0 * layout.cell_inner_radius
    angles = np.deg2rad(30.0 + 60.0 * np.arange(6))
    ring = spacing * np.column_stack([np.cos(angles), np.sin(angles)])
    return np.vstack([np.zeros((1, 2)), ring])


def wrap_vectors(layout: LayoutConfig) -> np.ndarray:
    """The six translations mapping the 7-cell cluster onto its copies."""
    rc = layout.circumradius
    spacing = math.sqrt(3.0) * rc
    u = spacing * np.array([math.cos(math.pi / 6), math.sin(math.pi / 6)])
    v = spacing * np.array([0.0, 1.0])
    base = 2.0 * u + v
    out = []
    for k in range(6):
        c, s = math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)
        out.append([c * base[0] - s * base[1], s * base[0] + c * base[1]])
    return np.asarray(out)


def _images(layout: LayoutConfig) -> np.ndarray:
    return np.vstack([np.zeros((1, 2)), wrap_vectors(layout)])


def wrap_distance(a, b, layout: LayoutConfig):
    """Minimum-image distance in metres between point sets ``a`` and ``b``.

    Broadcasts like ``a - b`` over leading axes; the last axis holds (x, y).
    """
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    shifted = diff[..., None, :] - _images(layout)
    d = np.sqrt(np.sum(shifted**2, axis=-1)).min(axis=-1)
    return float(d) if d.ndim == 0 else d


def pairwise_wrap_distance(p, q, layout: LayoutConfig) -> np.ndarray:
    """|p| x |q| matrix of minimum-image distances in metres."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    best = None
    for t in _images(layout):
        diff = p[:, None, :] - (q[None, :, :] + t)
        d = np.hypot(diff[..., 0], diff[..., 1])
        best = d if best is None else np.minimum(best, d)
    return best


def _inside_hexagon(xy: np.ndarray, apothem: float) -> np.ndarray:
    rc = 2.0 * apothem / math.sqrt(3.0)
    x, y = np.abs(xy[..., 0]), np.abs(xy[..., 1])
    return (y <= apothem) & (math.sqrt(3.0) * x + y <= math.sqrt(3.0) * rc)


def sample_hexagon(n: int, apothem: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform points in a flat-top hexagon centred at the origin."""
    rc = 2.0 * apothem / math.sqrt(3.0)
    out = np.empty((0, 2))
    while out.shape[0] < n:
        need = n - out.shape[0]
        cand = np.column_stack([
            rng.uniform(-rc, rc, size=2 * need + 8),
            rng.uniform(-apothem, apothem, size=2 * need + 8),
        ])
        out = np.vstack([out, cand[_inside_hexagon(cand, apothem)]])
    return out[:n]


def sample_region(n: int, layout: LayoutConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform points over the whole 7-cell region."""
    centers = cell_centers(layout)
    cells = rng.integers(0, centers.shape[0], size=n)
    return centers[cells] + sample_hexagon(n, layout.cell_inner_radius, rng)


def form_clusters(gains, rho: float):
    """User-centric serving sets from large-scale gains (|B| x |U|).

    Returns ``(clusters, served)``: per-user RRH index arrays and per-RRH
    user index arrays. A user with no gain above ``rho`` keeps its single
    strongest RRH.
    """
    gains = np.asarray(gains, dtype=float)
    mask = gains >= rho
    empty = ~mask.any(axis=0)
    if np.any(empty):
        best = np.argmax(gains[:, empty], axis=0)
        mask[best, np.flatnonzero(empty)] = True
    clusters = [np.flatnonzero(mask[:, u]) for u in range(gains.shape[1])]
    served = [np.flatnonzero(mask[r]) for r in range(gains.shape[0])]
    return clusters, served


@dataclass(frozen=True)
class NetworkRealization:
    layout: LayoutConfig
    rrh_positions: np.ndarray  # (B, 2) m
    user_positions: np.ndarray  # (U, 2) m
    distances_km: np.ndarray  # (B, U)
    shadowing: np.ndarray  # (B, U) linear
    large_scale_gain: np.ndarray  # (B, U) linear
    clusters: list = field(repr=False)
    served: list = field(repr=False)

    @property
    def num_rrh(self) -> int:
        return self.rrh_positions.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_positions.shape[0]

    @property
    def candidate_mask(self) -> np.ndarray:
        mask = np.zeros((self.num_rrh, self.num_users), dtype=bool)
        for r, users in enumerate(self.served):
            mask[r, users] = True
        return mask

    def to_json(self) -> str:
        return json.dumps({
            "rrh_positions_m": self.rrh_positions.tolist(),
            "user_positions_m": self.user_positions.tolist(),
            "large_scale_gain_db": linear_to_db(self.large_scale_gain).tolist(),
            "clusters": [c.tolist() for c in self.clusters],
            "served": [s.tolist() for s in self.served],
        })


def generate_network(cfg: LayoutConfig, rng: np.random.Generator | None = None) -> NetworkRealization:
    """Draw RRHs, users, shadowing and serving clusters for one realization.

    Deterministic in ``cfg.rng_seed`` unless an explicit generator is given.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    centers = cell_centers(cfg)
    rrh = np.vstack([
        c + sample_hexagon(cfg.rrh_per_cell, cfg.cell_inner_radius, rng) for c in centers
    ])

    n_users = cfg.num_users if cfg.num_users is not None else int(rng.poisson(cfg.mean_user_count))
    n_users = max(n_users, 1)
    users = sample_region(n_users, cfg, rng)
    # resample users falling inside any exclusion disk
    while True:
        bad = pairwise_wrap_distance(users, rrh, cfg).min(axis=1) < cfg.exclusion_radius
        if not bad.any():
            break
        users[bad] = sample_region(int(bad.sum()), cfg, rng)

    dist_km = pairwise_wrap_distance(rrh, users, cfg) / 1000.0
    shadow_db = rng.normal(0.0, cfg.shadowing_sigma, size=dist_km.shape)
    shadowing = db_to_linear(shadow_db)
    gain = shadowing * db_to_linear(path_loss_db(dist_km))
    clusters, served = form_clusters(gain, cfg.cluster_threshold)
    return NetworkRealization(
        layout=cfg,
        rrh_positions=rrh,
        user_positions=users,
        distances_km=dist_km,
        shadowing=shadowing,
        large_scale_gain=gain,
        clusters=clusters,
        served=served,
    )
