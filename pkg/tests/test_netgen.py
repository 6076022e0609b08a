import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfsched.netgen import (
    ConfigError,
    LayoutConfig,
    cell_centers,
    form_clusters,
    generate_network,
    path_loss_db,
    wrap_distance,
    wrap_vectors,
)

LAYOUT = LayoutConfig()
SMALL = LayoutConfig(rrh_per_cell=3, antennas_per_rrh=4, user_density=50.0)


@pytest.mark.parametrize("d, expected", [(1.0, -112.4271), (0.1, -74.4271), (0.4, -97.3054)])
def test_path_loss_values(d, expected):
    assert path_loss_db(d) == pytest.approx(expected, abs=5e-5)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_path_loss_domain(d):
    with pytest.raises(ValueError):
        path_loss_db(d)


def test_wrap_vectors_geometry():
    t = wrap_vectors(LAYOUT)
    rc = 1000.0 / math.sqrt(3.0)
    np.testing.assert_allclose(np.linalg.norm(t, axis=1), math.sqrt(21.0) * rc)
    assert math.sqrt(21.0) * rc == pytest.approx(2645.75, abs=0.01)
    # neighbour centres sit one inter-site distance from the origin
    np.testing.assert_allclose(np.linalg.norm(cell_centers(LAYOUT)[1:], axis=1), 1000.0)


def test_wrap_identity():
    a = np.array([123.0, -45.0])
    assert wrap_distance(a, a, LAYOUT) == 0.0
    for t in wrap_vectors(LAYOUT):
        assert wrap_distance(a, a + t, LAYOUT) == pytest.approx(0.0, abs=1e-9)


def _brute_wrap(a, b):
    shifts = [np.zeros(2)] + list(wrap_vectors(LAYOUT))
    return min(math.dist(a, b + s) for s in shifts)


coord = st.floats(-1500, 1500, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, coord)
def test_wrap_matches_brute_force(ax, ay, bx, by):
    a, b = np.array([ax, ay]), np.array([bx, by])
    d = wrap_distance(a, b, LAYOUT)
    assert d == pytest.approx(_brute_wrap(a, b), abs=1e-9)
    assert d == pytest.approx(wrap_distance(b, a, LAYOUT), abs=1e-9)
    assert d <= math.dist(a, b) + 1e-9


def test_mean_user_count_closed_form():
    area = 7 * 2 * math.sqrt(3) * 0.5**2
    assert LAYOUT.total_area_km2 == pytest.approx(area)
    assert area == pytest.approx(6.06, abs=0.01)
    assert LAYOUT.mean_user_count == pytest.approx(1212.4, abs=0.1)


def test_poisson_user_count():
    counts = [generate_network(SMALL, np.random.default_rng(s)).num_users for s in range(120)]
    mean = SMALL.mean_user_count
    se = math.sqrt(mean / len(counts))
    assert abs(np.mean(counts) - mean) < 3 * se


def test_shadowing_statistics():
    draws = np.concatenate([
        10 * np.log10(generate_network(SMALL, np.random.default_rng(s)).shadowing).ravel() for s in range(3)
    ])
    n = draws.size
    assert n >= 10_000
    assert abs(draws.mean()) < 3 * 4.0 / math.sqrt(n)
    # standard error of the sample std for a normal sample is sigma / sqrt(2n)
    assert abs(draws.std(ddof=1) - 4.0) < 3 * 4.0 / math.sqrt(2 * n)


def test_network_invariants():
    net = generate_network(SMALL, np.random.default_rng(7))
    assert net.distances_km.min() * 1000 >= SMALL.exclusion_radius
    assert np.all(net.large_scale_gain > 0) and np.all(np.isfinite(net.large_scale_gain))
    assert all(len(c) > 0 for c in net.clusters)
    for u, c in enumerate(net.clusters):
        for r in range(net.num_rrh):
            assert (r in c) == (u in net.served[r])
    # RRHs stay inside their own hexagon
    assert net.rrh_positions.shape == (21, 2)


def test_generate_deterministic():
    a = generate_network(SMALL, np.random.default_rng(11))
    b = generate_network(SMALL, np.random.default_rng(11))
    assert a.to_json() == b.to_json()
    assert generate_network(SMALL).to_json() == generate_network(SMALL).to_json()


def test_fixed_user_count():
    net = generate_network(LayoutConfig(rrh_per_cell=2, num_users=17), np.random.default_rng(0))
    assert net.num_users == 17


def test_clusters_fallback_and_rho_zero():
    gains = np.array([[1e-3, 5e-12], [2e-3, 1e-12], [1e-9, 3e-12]])
    clusters, served = form_clusters(gains, 1e-6)
    assert list(clusters[1]) == [0]  # all below threshold: argmax only
    assert list(clusters[0]) == [0, 1]
    clusters, _ = form_clusters(gains, 0.0)
    assert all(len(c) == 3 for c in clusters)


def test_clusters_dual_consistency_random():
    rng = np.random.default_rng(5)
    gains = rng.exponential(size=(6, 40))
    clusters, served = form_clusters(gains, 1.0)
    brute_c = [{r for r in range(6) if gains[r, u] >= 1.0} or {int(np.argmax(gains[:, u]))} for u in range(40)]
    assert [set(c.tolist()) for c in clusters] == brute_c
    brute_e = [{u for u in range(40) if r in brute_c[u]} for r in range(6)]
    assert [set(s.tolist()) for s in served] == brute_e


@pytest.mark.parametrize("bad", [dict(num_cells=3), dict(user_density=-1.0), dict(antennas_per_rrh=0)])
def test_layout_validation(bad):
    with pytest.raises(ConfigError):
        LayoutConfig(**bad)
