"""Reference schemes: round-robin scheduling with ZF or conjugate beams."""
from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .links import Links


class Scheme(str, Enum):
    PROPOSED = "proposed"
    CONJUGATE_RR = "conjugate-RR"
    ZF_RR = "ZF-RR"
    ZF_OPT = "ZF-optSched"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        for s in cls:
            if s.value.lower() == str(value).lower():
                return s
        raise ValueError(f"unknown scheme {value!r}; expected one of {[s.value for s in cls]}")

    @property
    def uses_solver(self) -> bool:
        return self in (Scheme.PROPOSED, Scheme.ZF_OPT)


def round_robin(links: Links, antennas: int, slot: int) -> np.ndarray:
    """Per-RRH circular pointer over E_r (ascending user index at slot 0).

    Each slot RRH r serves the next min(M, |E_r|) users, so every candidate is
    served at least once in any ceil(|E_r| / M) consecutive slots.
    """
    s = np.zeros(len(links), dtype=bool)
    for r in range(links.num_rrh):
        sl = links.at(r)
        n = sl.stop - sl.start
        if n == 0:
            continue
        k = min(antennas, n)
        start = (slot * k) % n
        s[sl.start + (start + np.arange(k)) % n] = True
    return s


def rr_period(n_candidates: int, antennas: int) -> int:
    return max(1, math.ceil(n_candidates / antennas))


def _link_channels(h, links: Links) -> np.ndarray:
    return np.asarray(h)[links.rrh, links.user]


def conjugate_beamformers(schedule, h, links: Links, power: float) -> np.ndarray:
    """Matched filters with the budget split equally over scheduled links."""
    schedule = np.asarray(schedule, dtype=bool)
    hl = _link_channels(h, links)
    norms = np.linalg.norm(hl, axis=1)
    use = schedule & (norms > 0)
    n = links.per_rrh_sum(use.astype(float))
    w = np.zeros_like(hl)
    share = np.sqrt(power / np.maximum(n[links.rrh], 1.0))
    w[use] = share[use, None] * hl[use] / norms[use, None]
    return w


def _zf_block(hs: np.ndarray, rcond: float = 1e-10):
    """Pseudo-inverse beams for the columns of ``hs`` (M x K), dropping the
    weakest user until the stack has full column rank."""
    keep = np.arange(hs.shape[1])
    while keep.size:
        sub = hs[:, keep]
        sv = np.linalg.svd(sub, compute_uv=False)
        if keep.size <= sub.shape[0] and sv[-1] > rcond * sv[0]:
            # columns w_k with hs^H w = I
            return keep, np.linalg.pinv(sub.conj().T)
        weakest = np.argmin(np.linalg.norm(sub, axis=0))
        keep = np.delete(keep, weakest)
    return keep, np.zeros((hs.shape[0], 0), dtype=hs.dtype)


def zf_beamformers(schedule, h, links: Links, power: float) -> np.ndarray:
    """Per-RRH zero forcing among the scheduled users, equal power each.

    Beams null every other scheduled user of the same RRH; users dropped by
    the rank fallback get a zero beam.
    """
    schedule = np.asarray(schedule, dtype=bool)
    hl = _link_channels(h, links)
    w = np.zeros_like(hl)
    for r in range(links.num_rrh):
        sl = links.at(r)
        idx = sl.start + np.flatnonzero(schedule[sl] & (np.linalg.norm(hl[sl], axis=1) > 0))
        if idx.size == 0:
            continue
        keep, beams = _zf_block(hl[idx].T)
        if keep.size == 0:
            continue
        beams = beams / np.linalg.norm(beams, axis=0, keepdims=True)
        w[idx[keep]] = (np.sqrt(power / keep.size) * beams).T
    return w


def zf_with_optimized_schedule(schedule, h, links: Links, power: float) -> np.ndarray:
    """ZF beams on the schedule extracted from the proposed solver."""
    return zf_beamformers(schedule, h, links, power)
