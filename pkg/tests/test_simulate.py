import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperlrt import _pykernels
from hyperlrt._backend import BACKEND, kernels
from hyperlrt.core import torus_diff
from hyperlrt.simulate import (ModelConfig, RSASaturationError, replicate_rng, rsa_radius,
                               sim_matching, sim_rsa, simulate, stable_matching, thin)
from oracles import mutual_nn_matching

MODELS = ["poisson", "thomas", "rsa", "url", "matching"]


def _min_torus_distance(pts, L):
    d = torus_diff(pts[:, None, :], pts[None, :, :], L)
    r = np.sqrt((d * d).sum(-1))
    r[np.diag_indices(len(pts))] = np.inf
    return r.min()


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"model": "nope"},
        {"model": "matching", "alpha": 1.0},
        {"model": "url", "box_length": 10.5},
        {"model": "rsa", "dim": 4},
        {"model": "poisson", "thin": 0.0},
        {"model": "poisson", "box_length": -1.0},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ModelConfig(**kw)

    def test_rsa_radius(self):
        c = ModelConfig("rsa", dim=2, box_length=35.0)
        assert c.rsa_count == 1225
        assert c.rsa_count * np.pi * c.rsa_radius ** 2 == pytest.approx(0.547 * 35.0 ** 2)
        assert rsa_radius(10, 0.3, 5.0, 3) == pytest.approx((0.3 * 125 / (10 * 4 / 3 * np.pi)) ** (1 / 3))


@pytest.mark.parametrize("model", MODELS)
def test_deterministic_given_seed(model):
    c = ModelConfig(model, box_length=12.0)
    a = simulate(c, replicate_rng(7, 3))
    b = simulate(c, replicate_rng(7, 3))
    d = simulate(c, replicate_rng(7, 4))
    assert np.array_equal(a.points, b.points)
    assert a.points.shape != d.points.shape or not np.array_equal(a.points, d.points)


@pytest.mark.parametrize("model", MODELS)
def test_points_in_box(model):
    p = simulate(ModelConfig(model, box_length=15.0), 1)
    assert p.points.min() >= 0 and p.points.max() < 15.0


def test_poisson_mean_count():
    c = ModelConfig("poisson", box_length=10.0, intensity=2.0)
    counts = [len(simulate(c, replicate_rng(1, i))) for i in range(400)]
    assert np.mean(counts) == pytest.approx(200, abs=4 * np.sqrt(200 / 400))


def test_thomas_mean_count():
    c = ModelConfig("thomas", box_length=20.0)
    counts = [len(simulate(c, replicate_rng(2, i))) for i in range(300)]
    # compound Poisson: variance = 400 * (1 + 10)
    assert np.mean(counts) == pytest.approx(400, abs=4 * np.sqrt(4400 / 300))


class TestRSA:
    @pytest.mark.parametrize("dim,L", [(1, 60.0), (2, 20.0), (3, 7.0)])
    def test_count_and_no_overlap(self, dim, L):
        c = ModelConfig("rsa", dim=dim, box_length=L)
        info = {}
        p = sim_rsa(c, replicate_rng(0, 1), info=info)
        assert len(p) == c.rsa_count
        assert _min_torus_distance(p.points, L) >= 2 * c.rsa_radius * (1 - 1e-12)
        assert info["restarts"] >= 0

    def test_low_density_has_no_restarts(self):
        c = ModelConfig("rsa", box_length=20.0, volume_fraction=0.2)
        info = {}
        sim_rsa(c, 1, info=info)
        assert info["restarts"] == 0

    def test_budget_error(self):
        c = ModelConfig("rsa", box_length=10.0, volume_fraction=0.9)
        with pytest.raises(RSASaturationError):
            sim_rsa(c, 0)

    @pytest.mark.skipif(BACKEND != "cython", reason="compiled backend not built")
    def test_backends_identical(self):
        for seed in range(3):
            a = kernels.rsa_fill(replicate_rng(seed, 0), 150, 1.1, 15.0, 2, 10 ** 6)
            b = _pykernels.rsa_fill(replicate_rng(seed, 0), 150, 1.1, 15.0, 2, 10 ** 6)
            assert a[1:] == b[1:]
            assert np.array_equal(a[0], b[0])


class TestURL:
    def test_one_point_per_shifted_cell(self):
        p = simulate(ModelConfig("url", box_length=9.0), 5)
        assert len(p) == 81
        # replay the stream: 81 x 2 jitters, then the global shift
        rng = np.random.default_rng(5)
        rng.random((81, 2))
        shift = rng.random(2)
        cells = np.floor(np.mod(p.points - shift, 9.0) + 1e-12).astype(int) % 9
        assert len({tuple(c) for c in cells}) == 81


class TestMatching:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(3, 6))
    def test_equals_mutual_nearest_neighbour_rounds(self, seed, m):
        rng = np.random.default_rng(seed)
        L = float(m)
        a = rng.random((m * m, 2)) * L
        b = rng.random((rng.integers(m * m, 3 * m * m + 1), 2)) * L
        assert np.array_equal(stable_matching(a, b, L), mutual_nn_matching(a, b, L))

    def test_too_few_poisson_points(self):
        assert stable_matching(np.zeros((4, 2)), np.zeros((3, 2)), 2.0) is None

    def test_candidate_list_growth(self):
        # every lattice site prefers the same cluster, forcing k beyond the first guess
        rng = np.random.default_rng(0)
        a = rng.random((30, 2)) * 10
        b = np.vstack([5 + 0.01 * rng.random((40, 2)), rng.random((40, 2)) * 10])
        assert np.array_equal(stable_matching(a, b, 10.0, k0=2), mutual_nn_matching(a, b, 10.0))

    @pytest.mark.skipif(BACKEND != "cython", reason="compiled backend not built")
    def test_backends_identical(self, rng):
        cand = np.argsort(rng.random((50, 120)), axis=1)[:, :20]
        dist = np.sort(rng.random((50, 20)), axis=1)
        a = kernels.gale_shapley(cand, dist, 120)
        b = _pykernels.gale_shapley(cand, dist, 120)
        assert a[1] == b[1] and np.array_equal(a[0], b[0])

    def test_pattern_has_lattice_count(self):
        info = {}
        p = sim_matching(ModelConfig("matching", box_length=10.0), 3, info=info)
        assert len(p) == 100
        assert info["restarts"] == 0


class TestThinning:
    def test_nested_for_shared_seed(self):
        p = simulate(ModelConfig("poisson", box_length=20.0), 0)
        sizes = []
        prev = None
        for q in (1.0, 0.9, 0.5, 0.1):
            t = thin(p, q, 11)
            rows = {tuple(r) for r in t.points}
            if prev is not None:
                assert rows <= prev
            prev = rows
            sizes.append(len(t))
        assert sizes[0] == len(p)

    def test_rejects_bad_probability(self):
        p = simulate(ModelConfig("poisson", box_length=5.0), 0)
        with pytest.raises(ValueError):
            thin(p, 1.5)

    def test_config_thinning_rate(self):
        c = ModelConfig("url", box_length=30.0, thin=0.7)
        n = [len(simulate(c, replicate_rng(4, i))) for i in range(100)]
        assert np.mean(n) == pytest.approx(0.7 * 900, abs=4 * np.sqrt(900 * 0.21 / 100))
