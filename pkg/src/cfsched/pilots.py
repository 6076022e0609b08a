"""Location-based pilot assignment through Ward agglomerative clustering."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .netgen import LayoutConfig, pairwise_wrap_distance


def ward_linkage(dist: np.ndarray) -> np.ndarray:
    """Ward minimum-variance agglomeration from a square distance matrix.

    Returns an (n-1) x 4 merge table in the usual layout
    ``[left, right, height, size]``; leaves are 0..n-1 and the node created by
    merge ``k`` is ``n + k``. Distances are updated with the Lance-Williams
    recurrence, so any symmetric metric (e.g. wrap-around) is accepted. Ties
    go to the lowest pair of active slots.
    """
    d = np.array(dist, dtype=float)
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValueError("distance matrix must be square")
    z = np.zeros((max(n - 1, 0), 4))
    if n < 2:
        return z
    d[np.tril_indices(n)] = np.inf
    sizes = np.ones(n)
    node_id = np.arange(n)
    active = np.ones(n, dtype=bool)
    for k in range(n - 1):
        flat = int(np.argmin(d))
        i, j = divmod(flat, n)
        h = d[i, j]
        ni, nj = sizes[i], sizes[j]
        z[k] = (min(node_id[i], node_id[j]), max(node_id[i], node_id[j]), h, ni + nj)

        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        dik = np.where(others < i, d[others, i], d[i, others])
        djk = np.where(others < j, d[others, j], d[j, others])
        nk = sizes[others]
        new = np.sqrt(((ni + nk) * dik**2 + (nj + nk) * djk**2 - nk * h**2) / (ni + nj + nk))

        lo = others < i
        d[others[lo], i] = new[lo]
        d[i, others[~lo]] = new[~lo]
        d[j, :] = np.inf
        d[:, j] = np.inf
        active[j] = False
        sizes[i] = ni + nj
        node_id[i] = n + k
    return z


def hac_groups_from_linkage(z: np.ndarray, n: int, tau_p: int) -> list[np.ndarray]:
    """Depth-first backtrack from the root, emitting nodes with <= tau_p users."""
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    if n == 0:
        return []
    children = {n + k: (int(z[k, 0]), int(z[k, 1])) for k in range(n - 1)}
    size = {n + k: int(z[k, 3]) for k in range(n - 1)}

    def leaves(node):
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.extend(reversed(children[x]))
        return out

    groups = []
    stack = [2 * n - 2 if n > 1 else 0]
    while stack:
        node = stack.pop()
        if node < n or size[node] <= tau_p:
            groups.append(np.array(sorted(leaves(node)), dtype=int))
        else:
            left, right = children[node]
            stack.append(right)
            stack.append(left)
    return groups


def hac_group(user_positions, tau_p: int, layout: LayoutConfig | None = None) -> list[np.ndarray]:
    """Partition users into groups of at most ``tau_p`` nearby users.

    Distances use the wrap-around metric when ``layout`` is given.
    """
    pos = np.asarray(user_positions, dtype=float)
    n = pos.shape[0]
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    if n <= tau_p:
        return [np.arange(n)] if n else []
    if layout is None:
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
    else:
        dist = pairwise_wrap_distance(pos, pos, layout)
    return hac_groups_from_linkage(ward_linkage(dist), n, tau_p)


def dft_pilots(tau_p: int) -> np.ndarray:
    """Unitary DFT matrix; row k is pilot sequence k."""
    k = np.arange(tau_p)
    return np.exp(-2j * np.pi * np.outer(k, k) / tau_p) / np.sqrt(tau_p)


@dataclass(frozen=True)
class PilotAssignment:
    tau_p: int
    pilot_index: np.ndarray  # (U,)
    pilot_matrix: np.ndarray  # (tau_p, tau_p)

    @property
    def num_users(self) -> int:
        return self.pilot_index.shape[0]

    @property
    def sequences(self) -> np.ndarray:
        """(U, tau_p) pilot row of every user."""
        return self.pilot_matrix[self.pilot_index]

    @property
    def copilot_sets(self) -> list[np.ndarray]:
        by_pilot = {k: np.flatnonzero(self.pilot_index == k) for k in np.unique(self.pilot_index)}
        return [by_pilot[k] for k in self.pilot_index]

    def to_json(self) -> str:
        return json.dumps({"tau_p": self.tau_p, "pilot_index": self.pilot_index.tolist()})


def assign_pilots(groups, tau_p: int, rng: np.random.Generator, num_users: int | None = None) -> PilotAssignment:
    """Give each group distinct pilots drawn uniformly at random."""
    if num_users is None:
        num_users = sum(len(g) for g in groups)
    index = np.full(num_users, -1, dtype=int)
    for g in groups:
        if len(g) > tau_p:
            raise ValueError(f"group of {len(g)} users exceeds tau_p = {tau_p}")
        index[np.asarray(g, dtype=int)] = rng.permutation(tau_p)[: len(g)]
    if np.any(index < 0):
        raise ValueError("groups do not cover every user")
    return PilotAssignment(tau_p=tau_p, pilot_index=index, pilot_matrix=dft_pilots(tau_p))
