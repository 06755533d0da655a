import math

import numpy as np
import pytest
from scipy import stats

from invgeo import (
    PackingInfeasibleError,
    Rect,
    SsiConfig,
    sample_intensity,
    sample_ssi,
    sample_uniform,
    ssi_conditional_logdensity,
)
from invgeo.model import distance_matrix
from invgeo.pointprocess import InhibitionPrior
from invgeo.priors import IntensityPrior

UNIT = Rect(0, 1, 0, 1)


def min_pair_distance(pts):
    d = distance_matrix(pts, pts)
    np.fill_diagonal(d, np.inf)
    return d.min()


def test_uniform_in_unit_square():
    pts = sample_uniform(201, UNIT, seed=0)
    assert pts.shape == (201, 2)
    assert np.all((pts >= 0) & (pts <= 1))


def test_uniform_degenerate_rect():
    pts = sample_uniform(1, Rect(0.3, 0.3, 0.7, 0.7), seed=1)
    np.testing.assert_array_equal(pts, [[0.3, 0.7]])


def test_uniform_quadrant_counts():
    pts = sample_uniform(10_000, UNIT, seed=2)
    q = (pts[:, 0] > 0.5).astype(int) * 2 + (pts[:, 1] > 0.5)
    counts = np.bincount(q, minlength=4)
    band = 4 * math.sqrt(2500 * 0.75)
    assert np.all(np.abs(counts - 2500) <= band)


def test_samplers_reproducible():
    assert np.array_equal(sample_uniform(50, UNIT, seed=7), sample_uniform(50, UNIT, seed=7))
    prior = IntensityPrior(np.array([[1.0, 2.0], [3.0, 4.0]]), 0, 0, 0.5, 0.5)
    assert np.array_equal(sample_intensity(50, prior, seed=7), sample_intensity(50, prior, seed=7))
    cfg = SsiConfig(delta=0.05, n=40)
    assert np.array_equal(sample_ssi(cfg, seed=7), sample_ssi(cfg, seed=7))


def test_intensity_point_mass_cell():
    vals = np.zeros((3, 3))
    vals[1, 2] = 4.0
    prior = IntensityPrior(vals, 0, 0, 1, 1)
    pts = sample_intensity(500, prior, seed=3)
    assert np.all((pts[:, 0] >= 2) & (pts[:, 0] <= 3) & (pts[:, 1] >= 1) & (pts[:, 1] <= 2))


def test_intensity_two_cells_ratio():
    prior = IntensityPrior(np.array([[3.0, 1.0]]), 0, 0, 0.5, 1.0)
    pts = sample_intensity(10_000, prior, seed=4)
    left = np.count_nonzero(pts[:, 0] < 0.5)
    sd = math.sqrt(10_000 * 0.75 * 0.25)
    assert abs(left - 7500) <= 4 * sd


def test_constant_intensity_matches_uniform_in_distribution():
    prior = IntensityPrior(np.full((7, 9), 2.0), 0, 0, 1 / 9, 1 / 7)
    a = sample_intensity(10_000, prior, seed=5)
    b = sample_uniform(10_000, UNIT, seed=6)
    bins = [np.linspace(0, 1, 5)] * 2
    ha, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=bins)
    hb, _, _ = np.histogram2d(b[:, 0], b[:, 1], bins=bins)
    _, p, _, _ = stats.chi2_contingency(np.vstack([ha.ravel(), hb.ravel()]))
    assert p > 0.001


# n=201 at delta=0.06 is close to the jamming limit; seed 5 completes
@pytest.mark.parametrize("delta, seed", [(0.04, 0), (0.06, 5)])
def test_ssi_min_distance(delta, seed):
    pts = sample_ssi(SsiConfig(delta=delta, n=201), seed=seed)
    assert pts.shape == (201, 2)
    assert min_pair_distance(pts) >= delta


def test_ssi_jamming_and_retries():
    cfg = SsiConfig(delta=0.06, n=201)
    with pytest.raises(PackingInfeasibleError):
        sample_ssi(cfg, seed=0)
    pts = sample_ssi(cfg, seed=0, retries=30)
    assert min_pair_distance(pts) >= 0.06


def test_ssi_zero_delta_is_sampling_without_replacement():
    cfg = SsiConfig(delta=0.0, n=100, lattice=(10, 10))
    pts = sample_ssi(cfg, seed=1)
    assert len({tuple(p) for p in pts}) == 100


def test_ssi_infeasible():
    with pytest.raises(PackingInfeasibleError) as err:
        sample_ssi(SsiConfig(delta=1.5, n=2), seed=0)
    assert err.value.placed == 1


def test_ssi_conditional_examples():
    known = np.array([[0.5, 0.5]])
    assert ssi_conditional_logdensity([[0.52, 0.5]], known, 0.04) == -math.inf
    assert ssi_conditional_logdensity([[0.58, 0.5]], known, 0.04) == 0.0


def test_ssi_conditional_mutual_flag():
    known = np.array([[0.1, 0.1]])
    pair = np.array([[0.5, 0.5], [0.51, 0.5]])
    assert ssi_conditional_logdensity(pair, known, 0.04) == -math.inf
    assert ssi_conditional_logdensity(pair, known, 0.04, mutual=False) == 0.0


def test_inhibition_prior_grid_scan_matches_brute_force():
    rng = np.random.default_rng(8)
    known = rng.random((15, 2))
    delta = 0.09
    prior = InhibitionPrior(UNIT, known, delta)
    xs = (np.arange(40) + 0.5) / 40
    nodes = np.array([[x, y] for y in xs for x in xs])
    got = np.isfinite(prior.logpdf(nodes))
    for node, ok in zip(nodes, got):
        brute = all(math.dist(node, k) >= delta for k in known)
        assert ok == brute
