import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_mps
from tnvqml.analysis import (
    LOG2_3,
    Domain,
    entropy_rows,
    function_distance,
    gram_matrix,
    haar_purity_samples,
    page_curve,
    page_reference,
    renyi2_profile,
    summarize,
    truncation_error_curve,
    write_csv,
    write_json,
)
from tnvqml.circuits import CircuitSpec, EncodingMap
from tnvqml.coeffs import coefficient_from_dense, to_coefficient_mps
from tnvqml.learn import feature_map
from tnvqml.tensor_core import Mps, mps_truncate


def _equal_schmidt(r):
    """Normalized two-site qutrit MPS with ``r`` equal Schmidt values."""
    v = np.zeros((3, 3))
    for i in range(r):
        v[i, i] = 1.0 / math.sqrt(r)
    return Mps.from_dense(v.reshape(-1), [3, 3])


# entropy -----------------------------------------------------------------------------


def test_entropy_product_is_zero():
    m = Mps.product([np.array([1.0, 2.0, 0.5])] * 4)
    np.testing.assert_allclose(renyi2_profile(m).s2, 0.0, atol=1e-12)


@pytest.mark.parametrize("r,expected", [(1, 0.0), (2, 1.0), (3, math.log2(3))])
def test_entropy_equal_values(r, expected):
    assert renyi2_profile(_equal_schmidt(r)).s2_max == pytest.approx(expected, abs=1e-12)


def test_entropy_zero_norm():
    with pytest.raises(ZeroDivisionError):
        renyi2_profile(Mps.product([np.zeros(3)] * 3))


@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
def test_entropy_bounds_and_scale_invariance(seed, scale):
    m = random_mps(np.random.default_rng(seed), 6, 3, 12, real=True)
    prof = renyi2_profile(m)
    bound = np.array([min(k, 6 - k) for k in range(1, 6)]) * LOG2_3
    assert np.all(prof.s2 >= 0) and np.all(prof.s2 <= bound + 1e-12)
    np.testing.assert_allclose(renyi2_profile(m.scaled(scale)).s2, prof.s2, atol=1e-9)


def test_entropy_of_circuit_coefficients():
    c = to_coefficient_mps(CircuitSpec.random(4, 2, seed=0))
    prof = renyi2_profile(c)
    assert prof.n_sites == 4 and prof.s2.size == 3


# Page reference -----------------------------------------------------------------------------


def test_page_frozen_value():
    assert page_reference(2, 1) == pytest.approx(-math.log2(0.6), abs=1e-15)


def test_page_against_haar_sampling():
    p = haar_purity_samples(3, 3, 10_000, seed=0)
    est, se = p.mean(), p.std(ddof=1) / math.sqrt(p.size)
    exact = 2 ** -page_reference(2, 1)
    assert abs(est - exact) < 3 * se


@pytest.mark.parametrize("n", [2, 5, 8, 11])
def test_page_symmetric_and_peaked(n):
    curve = page_curve(n)
    np.testing.assert_allclose(curve, curve[::-1], atol=1e-12)
    assert curve[n // 2 - 1] == pytest.approx(curve.max())


def test_page_rejects_bad_cut():
    with pytest.raises(ValueError):
        page_reference(4, 4)


# truncation ---------------------------------------------------------------------------------


def test_truncation_curve_examples(rng):
    assert truncation_error_curve(_equal_schmidt(2), [1])[1] == pytest.approx(0.5)
    m = random_mps(rng, 5, 3, 6, real=True)
    curve = truncation_error_curve(m, [1, 2, 4, 6, 9, 20])
    vals = list(curve.values())
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    assert curve[20] == 0.0


def test_truncation_curve_matches_sweep_bound(rng):
    m = random_mps(rng, 6, 3, 9, real=True)
    eps = truncation_error_curve(m, [3])[3]
    t, _ = mps_truncate(m, 3)
    assert np.sum((m.to_dense() - t.to_dense()).real ** 2) <= 2 * eps + 1e-9


def test_truncation_normalized(rng):
    m = random_mps(rng, 4, 3, 5, real=True).scaled(7.0)
    raw = truncation_error_curve(m, [1])[1]
    norm = truncation_error_curve(m, [1], normalize=True)[1]
    assert norm == pytest.approx(raw / m.norm() ** 2, rel=1e-10)
    with pytest.raises(ValueError):
        truncation_error_curve(m, [0])


def test_noise_shrinks_truncation_error():
    noisy = truncation_error_curve(to_coefficient_mps(CircuitSpec.random(6, 6, seed=1, gamma=0.15)), [4])[4]
    clean = truncation_error_curve(to_coefficient_mps(CircuitSpec.random(6, 6, seed=1)), [4])[4]
    assert noisy < 1e-3 * clean


# Gram matrices --------------------------------------------------------------------------------


@pytest.mark.parametrize("n,expected", [(2, 5), (3, 7), (4, 9)])
def test_naive_gram_rank(n, expected):
    assert gram_matrix(EncodingMap.naive(n)).rank() == expected


@pytest.mark.parametrize("n", [2, 3])
def test_exponential_gram_full_rank(n):
    assert gram_matrix(EncodingMap.exponential(n)).rank() == 3**n


def test_quadrature_matches_analytic():
    enc = EncodingMap.exponential(3)
    a = gram_matrix(enc).matrix()
    q = gram_matrix(enc, mode="quadrature", samples=10_001).matrix()
    np.testing.assert_allclose(q, a, atol=1e-8)


def test_analytic_exponential_gram_is_diagonal():
    g = gram_matrix(EncodingMap.exponential(2)).matrix()
    # per site: <1,1> = 1, <cos,cos> = <sin,sin> = 1/2, orthogonal otherwise
    np.testing.assert_allclose(g, np.diag(np.kron([1, 0.5, 0.5], [1, 0.5, 0.5])), atol=1e-14)


def test_analytic_sample_rule_matches_closed_form():
    enc = EncodingMap.naive(4)
    g = gram_matrix(enc)
    f = np.array([feature_map(enc, x).to_dense() for x in g.points])
    np.testing.assert_allclose(f.T @ (g.weights[:, None] * f), g.matrix(), atol=1e-12)
    fro_samples = gram_matrix(enc)
    object.__setattr__(fro_samples, "dense", None)
    assert fro_samples.frobenius() == pytest.approx(np.linalg.norm(g.matrix()), rel=1e-10)


def test_gram_psd_and_symmetric(rng):
    for g in (gram_matrix(EncodingMap.iqp1d(3), mode="quadrature"), gram_matrix(EncodingMap.naive(3), Domain.finite(rng.uniform(-1, 1, 4)), "discrete")):
        m = g.matrix()
        np.testing.assert_allclose(m, m.T, atol=1e-14)
        assert np.linalg.eigvalsh(m).min() >= -1e-8


def test_discrete_rank_bounded(rng):
    g = gram_matrix(EncodingMap.exponential(3), Domain.finite(rng.uniform(-np.pi, np.pi, 5)), "discrete")
    assert g.rank() <= 5


def test_gram_mode_errors():
    with pytest.raises(ValueError):
        gram_matrix(EncodingMap.exponential(2, base=1.5))
    with pytest.raises(ValueError):
        gram_matrix(EncodingMap.naive(2), Domain.interval(0, 1))
    with pytest.raises(ValueError):
        gram_matrix(EncodingMap.naive(2), mode="discrete")
    with pytest.raises(ValueError):
        gram_matrix(EncodingMap.naive(2), mode="simpson")


# distances ---------------------------------------------------------------------------------------


def test_distance_identical_is_zero():
    c = to_coefficient_mps(CircuitSpec.random(3, 1, seed=0))
    d = function_distance(c, c, gram_matrix(EncodingMap.naive(3)))
    assert d.d == pytest.approx(0.0, abs=1e-14)
    assert d.coeff_dist == pytest.approx(0.0, abs=1e-12)


def test_distance_aliased_discrete_domain():
    enc = EncodingMap.naive(2)
    pts = np.array([0.3])
    t = feature_map(enc, 0.3).to_dense()
    delta = np.zeros(9)
    delta[1], delta[3] = 1.0, -1.0  # cos(x) on either site cancels everywhere
    assert delta @ t == pytest.approx(0.0)
    base = np.arange(9.0)
    d = function_distance(coefficient_from_dense(base + 5 * delta), coefficient_from_dense(base), gram_matrix(enc, Domain.finite(pts), "discrete"))
    assert d.d == pytest.approx(0.0, abs=1e-12)
    assert d.coeff_dist == pytest.approx(50.0)


def test_distance_diagonal_gram(rng):
    enc = EncodingMap.exponential(3)
    a, b = rng.normal(size=27), rng.normal(size=27)
    g = gram_matrix(enc)
    d = function_distance(coefficient_from_dense(a), coefficient_from_dense(b), g)
    weights = np.diag(g.matrix())
    assert d.d == pytest.approx(np.sum(weights * (a - b) ** 2), rel=1e-9)
    # the diagonal weights are not all one, so D differs from ||Delta||^2
    assert d.d < d.coeff_dist


@given(st.integers(0, 2**31 - 1))
def test_distance_below_bound(seed):
    rng = np.random.default_rng(seed)
    enc = EncodingMap.naive(4)
    a = coefficient_from_dense(rng.normal(size=81))
    b = coefficient_from_dense(rng.normal(size=81))
    d = function_distance(a, b, gram_matrix(enc))
    assert 0 <= d.d <= d.bound * (1 + 1e-12)


def test_distance_monte_carlo_oracle():
    n = 4
    enc = EncodingMap.exponential(n)
    cq = to_coefficient_mps(CircuitSpec.random(n, 2, seed=1, encoding=enc))
    cc = to_coefficient_mps(CircuitSpec.random(n, 2, seed=2, encoding=enc))
    g = gram_matrix(enc)
    exact = function_distance(cq, cc, g).d
    fro = g.frobenius()
    fine = function_distance(cq, cc, gram_matrix(enc, mode="quadrature", samples=20_001), fro).d
    assert fine == pytest.approx(exact, rel=1e-9)
    mc = function_distance(cq, cc, gram_matrix(enc, mode="montecarlo", samples=10_000, seed=0), fro)
    assert mc.std_error is not None
    assert abs(mc.d - exact) < 3 * mc.std_error


def test_distance_rejects_size_mismatch():
    with pytest.raises(ValueError):
        function_distance(coefficient_from_dense(np.ones(9)), coefficient_from_dense(np.ones(9)), gram_matrix(EncodingMap.naive(3)))


# summaries and emitters ---------------------------------------------------------------------------


def test_summarize():
    s = summarize([1.0, 2.0, 3.0])
    assert s["mean"] == 2.0 and s["std"] == 1.0 and s["n"] == 3
    half = 1.959963984540054 / math.sqrt(3)
    assert s["ci_low"] == pytest.approx(2 - half) and s["ci_high"] == pytest.approx(2 + half)
    with pytest.raises(ValueError):
        summarize([])


def test_emitters(tmp_path):
    prof = renyi2_profile(_equal_schmidt(2))
    rows = entropy_rows("e1", 2, 3, 0.0, 7, prof)
    write_csv(tmp_path / "a" / "e.csv", rows)
    with open(tmp_path / "a" / "e.csv") as fh:
        back = list(csv.DictReader(fh))
    assert back[0]["experiment_id"] == "e1" and float(back[0]["S2"]) == pytest.approx(1.0)
    write_json(tmp_path / "s.json", {"v": np.float64(1.5), "a": np.arange(2)})
    assert json.loads((tmp_path / "s.json").read_text()) == {"a": [0, 1], "v": 1.5}
