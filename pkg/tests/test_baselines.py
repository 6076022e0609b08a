import math

import numpy as np
import pytest

from cfsched.baselines import (
    Scheme,
    conjugate_beamformers,
    round_robin,
    rr_period,
    zf_beamformers,
    zf_with_optimized_schedule,
)
from cfsched.links import Links


def _channels(rng, b, u, m):
    return (rng.standard_normal((b, u, m)) + 1j * rng.standard_normal((b, u, m))) / math.sqrt(2)


def test_scheme_parse():
    assert Scheme.parse("zf-rr") is Scheme.ZF_RR
    assert Scheme.parse(Scheme.PROPOSED) is Scheme.PROPOSED
    with pytest.raises(ValueError):
        Scheme.parse("mmse")


def test_round_robin_small_sets_always_served():
    links = Links.from_mask(np.array([[1, 1, 0, 1], [0, 1, 0, 0]], dtype=bool))
    for t in range(5):
        assert round_robin(links, 4, t).all()


def test_round_robin_every_other_slot():
    links = Links.from_mask(np.ones((1, 8), dtype=bool))
    s0, s1, s2 = (round_robin(links, 4, t) for t in range(3))
    assert s0.tolist() == [True] * 4 + [False] * 4
    assert (s0 ^ s1).all()
    np.testing.assert_array_equal(s0, s2)


def test_round_robin_coverage_random_sizes():
    rng = np.random.default_rng(0)
    for _ in range(50):
        m = int(rng.integers(1, 6))
        mask = rng.uniform(size=(4, 30)) < rng.uniform(0.05, 0.8)
        links = Links.from_mask(mask)
        for start in range(0, 12, 5):
            for r in range(4):
                sl = links.at(r)
                n = sl.stop - sl.start
                if n == 0:
                    continue
                seen = np.zeros(n, dtype=bool)
                for t in range(start, start + rr_period(n, m)):
                    s = round_robin(links, m, t)[sl]
                    assert s.sum() == min(m, n)
                    seen |= s
                assert seen.all()


def test_zf_two_user_nulls_and_power():
    rng = np.random.default_rng(1)
    links = Links.from_mask(np.ones((1, 2), dtype=bool))
    for _ in range(20):
        h = _channels(rng, 1, 2, 4)
        w = zf_beamformers(np.ones(2, bool), h, links, 1.0)
        assert abs(np.vdot(h[0, 1], w[0])) <= 1e-10 * np.linalg.norm(h[0, 1]) * np.linalg.norm(w[0])
        assert abs(np.vdot(h[0, 0], w[1])) <= 1e-10 * np.linalg.norm(h[0, 0]) * np.linalg.norm(w[1])
        np.testing.assert_allclose(np.sum(np.abs(w) ** 2, axis=1), 0.5, rtol=1e-12)
        # pseudo-inverse oracle: w_k proportional to column k of pinv(H^H)
        pinv = np.linalg.pinv(h[0].conj())
        for k in range(2):
            cos = abs(np.vdot(pinv[:, k], w[k])) / (np.linalg.norm(pinv[:, k]) * np.linalg.norm(w[k]))
            assert cos == pytest.approx(1.0, abs=1e-12)


def test_zf_single_user_is_matched_filter():
    rng = np.random.default_rng(2)
    h = _channels(rng, 1, 3, 4)
    links = Links.from_mask(np.ones((1, 3), dtype=bool))
    w = zf_beamformers(np.array([False, True, False]), h, links, 2.0)
    assert np.vdot(w[1], w[1]).real == pytest.approx(2.0)
    np.testing.assert_allclose(w[1], math.sqrt(2.0) * h[0, 1] / np.linalg.norm(h[0, 1]), atol=1e-12)
    assert not w[[0, 2]].any()


def test_zf_orthogonal_estimates():
    h = np.zeros((1, 2, 3), complex)
    h[0, 0, 0], h[0, 1, 2] = 2.0, 1j
    w = zf_beamformers(np.ones(2, bool), h, Links.from_mask(np.ones((1, 2), bool)), 1.0)
    np.testing.assert_allclose(np.abs(w[0]), [math.sqrt(0.5), 0, 0], atol=1e-12)
    np.testing.assert_allclose(np.abs(w[1]), [0, 0, math.sqrt(0.5)], atol=1e-12)


def test_zf_rank_fallback_drops_weakest():
    h = _channels(np.random.default_rng(3), 1, 3, 2)
    h[0, 2] *= 0.01  # three users, two antennas: weakest goes
    w = zf_beamformers(np.ones(3, bool), h, Links.from_mask(np.ones((1, 3), bool)), 1.0)
    assert not w[2].any()
    np.testing.assert_allclose(np.sum(np.abs(w[:2]) ** 2, axis=1), 0.5)


def test_conjugate_power_split():
    rng = np.random.default_rng(4)
    links = Links.from_mask(rng.uniform(size=(5, 12)) < 0.5)
    h = _channels(rng, 5, 12, 3)
    one = np.zeros(len(links), bool)
    one[links.at(0).start] = True
    w = conjugate_beamformers(one, h, links, 1.0)
    assert np.sum(np.abs(w) ** 2) == pytest.approx(1.0)
    s = round_robin(links, 3, 0)
    w = conjugate_beamformers(s, h, links, 1.0)
    pw = links.per_rrh_sum(np.sum(np.abs(w) ** 2, axis=1))
    np.testing.assert_allclose(pw[links.count() > 0], 1.0, rtol=1e-12)
    l0 = np.flatnonzero(s)[0]
    r, u = links.rrh[l0], links.user[l0]
    cos = abs(np.vdot(h[r, u], w[l0])) / (np.linalg.norm(h[r, u]) * np.linalg.norm(w[l0]))
    assert cos == pytest.approx(1.0)


def test_conjugate_skips_zero_estimate():
    links = Links.from_mask(np.ones((1, 2), bool))
    h = np.zeros((1, 2, 2), complex)
    h[0, 0] = [1, 0]
    w = conjugate_beamformers(np.ones(2, bool), h, links, 1.0)
    assert np.sum(np.abs(w[0]) ** 2) == pytest.approx(1.0) and not w[1].any()


def test_zf_leakage_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(100):
        links = Links.from_mask(rng.uniform(size=(3, 10)) < 0.6)
        h = _channels(rng, 3, 10, 4)
        s = round_robin(links, 4, int(rng.integers(0, 5)))
        w = zf_with_optimized_schedule(s, h, links, 1.0)
        for r in range(3):
            idx = np.flatnonzero(s[links.at(r)]) + links.at(r).start
            for a in idx:
                for b in idx:
                    if a != b:
                        hb = h[r, links.user[b]]
                        assert abs(np.vdot(hb, w[a])) <= 1e-10 * np.linalg.norm(hb) * np.linalg.norm(w[a])


def test_zf_empty_schedule():
    links = Links.from_mask(np.ones((2, 3), bool))
    h = _channels(np.random.default_rng(6), 2, 3, 2)
    assert not zf_with_optimized_schedule(np.zeros(6, bool), h, links, 1.0).any()
    s = round_robin(links, 2, 1)
    np.testing.assert_array_equal(zf_with_optimized_schedule(s, h, links, 1.0), zf_beamformers(s, h, links, 1.0))
