"""Flat indexing of candidate (RRH, user) links and received-power bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Links:
    """Candidate links sorted by RRH, then user.

    Beamformers, schedules and per-link auxiliaries are stored as arrays with
    one row per link; ``rrh[l]`` and ``user[l]`` identify link ``l``.
    """

    rrh: np.ndarray
    user: np.ndarray
    num_rrh: int
    num_users: int
    offsets: np.ndarray  # (B + 1,)

    @property
    def slot(self) -> np.ndarray:
        """Position of each link within its RRH's block."""
        return np.arange(len(self.rrh)) - self.offsets[self.rrh]

    @property
    def width(self) -> int:
        return int(self.count().max()) if self.num_rrh else 0

    def pad(self, values, fill=0):
        """Scatter per-link rows into a (B, max |E_r|, ...) array."""
        values = np.asarray(values)
        out = np.full((self.num_rrh, self.width) + values.shape[1:], fill, dtype=values.dtype)
        out[self.rrh, self.slot] = values
        return out

    @classmethod
    def from_mask(cls, mask) -> "Links":
        mask = np.asarray(mask, dtype=bool)
        rrh, user = np.nonzero(mask)
        counts = mask.sum(axis=1)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return cls(rrh=rrh, user=user, num_rrh=mask.shape[0], num_users=mask.shape[1], offsets=offsets)

    @classmethod
    def from_served(cls, served, num_users: int) -> "Links":
        mask = np.zeros((len(served), num_users), dtype=bool)
        for r, users in enumerate(served):
            mask[r, np.asarray(users, dtype=int)] = True
        return cls.from_mask(mask)

    def __len__(self) -> int:
        return self.rrh.shape[0]

    def at(self, r: int) -> slice:
        return slice(int(self.offsets[r]), int(self.offsets[r + 1]))

    def count(self) -> np.ndarray:
        return np.diff(self.offsets)

    def index(self, r: int, u: int) -> int:
        sl = self.at(r)
        hit = np.flatnonzero(self.user[sl] == u)
        if hit.size == 0:
            raise KeyError((r, u))
        return sl.start + int(hit[0])

    def per_rrh_sum(self, values) -> np.ndarray:
        return np.bincount(self.rrh, weights=values, minlength=self.num_rrh)

    def per_user_sum(self, values) -> np.ndarray:
        return np.bincount(self.user, weights=values, minlength=self.num_users)


def received(h, w, links: Links, active=None):
    """Per-link received amplitudes and per-user cross interference.

    Returns ``(amp, interference, power)`` where ``amp[l] = h_{r u}^H w_l`` for
    link ``l = (r, u)``, ``interference[u]`` sums ``|h_{r u}^H w_l|^2`` over
    every active link whose user is not ``u``, and ``power[r]`` is the
    transmit power of RRH ``r``. ``active`` masks links (default: all).

    Interference is total received power minus the user's own links, so it
    carries a cancellation error of order 1e-16 times the total.
    """
    h = np.asarray(h)
    w = np.asarray(w)
    if active is not None:
        w = w * np.asarray(active, dtype=bool)[:, None]
    if len(links) == 0:
        return np.zeros(0, complex), np.zeros(links.num_users), np.zeros(links.num_rrh)
    amp = np.einsum("lm,lm->l", h[links.rrh, links.user].conj(), w)
    # total power at u from RRH r is h_ru^H (W_r W_r^H) h_ru; own links removed after
    wp = links.pad(w)
    gram = np.matmul(wp.transpose(0, 2, 1), wp.conj())
    total = np.sum((np.matmul(h.conj(), gram) * h).real, axis=(0, 2))
    own = links.per_user_sum(amp.real**2 + amp.imag**2)
    interference = np.maximum(total - own, 0.0)
    power = links.per_rrh_sum(np.sum(w.real**2 + w.imag**2, axis=1))
    return amp, interference, power
