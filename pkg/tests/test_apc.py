import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite_e, legendre

from windconflict.apc import (build_index_set, build_univariate_basis, design_matrix, dump_coefficients,
                              fit_surrogate, load_surrogate, moments_from_raw, quadrature_exactness_check,
                              raw_moments, save_surrogate, surrogate_eval, surrogate_stats, quadrature_stats,
                              tensor_nodes, bases_from_samples)
from windconflict.errors import DataError, NumericalError


def uniform_moments(p):
    return [0.0 if k % 2 else 1.0 / (k + 1) for k in range(2 * p + 1)]


def normal_moments(p):
    return [0.0 if k % 2 else float(math.prod(range(k - 1, 0, -2))) for k in range(2 * p + 1)]


def gauss_legendre(p):
    x, w = legendre.leggauss(p)
    return x, w / 2.0


def gauss_hermite(p):
    x, w = hermite_e.hermegauss(p)
    return x, w / math.sqrt(2.0 * math.pi)


def uniform_basis(p=2):
    return build_univariate_basis(moments_from_raw(uniform_moments(p)))


# --- moments ------------------------------------------------------------------

def test_two_point_sample_moments():
    m = raw_moments([-1.0, 1.0], 1)
    assert np.array_equal(m.moments, [1.0, 0.0, 1.0])


def test_normal_fourth_moment_monte_carlo():
    s = np.random.default_rng(2).standard_normal(10 ** 6)
    m = raw_moments(s, 2)
    sigma_mc = math.sqrt((105.0 - 9.0) / s.size)
    assert abs(m.moments[4] - 3.0) <= 3 * sigma_mc


def test_constant_samples_name_failing_minor():
    with pytest.raises(NumericalError, match="leading minor of order 2"):
        raw_moments(np.full(20, 3.0), 2)


def test_raw_moments_validation():
    with pytest.raises(DataError):
        raw_moments([1.0, 2.0], 0)
    with pytest.raises(DataError):
        raw_moments([1.0, np.inf, 2.0], 1)


def test_raw_moments_match_direct_power_means(rng):
    s = rng.gamma(2.0, 1.5, 500) + 3.0
    m = raw_moments(s, 3)
    direct = [np.mean(s ** k) for k in range(7)]
    assert np.allclose(m.moments, direct, rtol=1e-10)


def test_moments_must_start_at_one():
    with pytest.raises(DataError, match="mu_0"):
        moments_from_raw([2.0, 0.0, 1.0])


# --- univariate basis -----------------------------------------------------------

@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_gauss_legendre_recovered(p):
    b = build_univariate_basis(moments_from_raw(uniform_moments(p)))
    x, w = gauss_legendre(p)
    assert np.max(np.abs(b.nodes - x)) < 1e-10
    assert np.max(np.abs(b.weights - w)) < 1e-10


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_gauss_hermite_recovered(p):
    b = build_univariate_basis(moments_from_raw(normal_moments(p)))
    x, w = gauss_hermite(p)
    assert np.max(np.abs(b.nodes - x)) < 1e-10
    assert np.max(np.abs(b.weights - w)) < 1e-10


def test_two_point_rules():
    b = uniform_basis(2)
    assert b.nodes == pytest.approx([-1 / math.sqrt(3), 1 / math.sqrt(3)], abs=1e-12)
    assert b.weights == pytest.approx([0.5, 0.5], abs=1e-12)
    h = build_univariate_basis(moments_from_raw([1, 0, 1, 0, 3]))
    assert h.nodes == pytest.approx([-1.0, 1.0], abs=1e-12)
    assert h.weights == pytest.approx([0.5, 0.5], abs=1e-12)


def test_normalized_legendre_polynomials():
    b = uniform_basis(2)
    assert np.allclose(b.coefficients[1], [0.0, math.sqrt(3), 0.0], atol=1e-12)
    assert np.allclose(b.coefficients[2], [-math.sqrt(5) / 2, 0.0, 3 * math.sqrt(5) / 2], atol=1e-12)
    x = np.linspace(-1, 1, 7)
    assert np.allclose(b.evaluate(x)[:, 2], b.polynomial(2)(x), atol=1e-12)


def test_recurrence_coefficients_legendre():
    # orthonormal Legendre: a_j = 0, b_j = j / sqrt(4 j^2 - 1)
    b = uniform_basis(4)
    j = np.arange(1, 5)
    assert np.allclose(b.a, 0.0, atol=1e-12)
    assert np.allclose(b.b, j / np.sqrt(4 * j ** 2 - 1), atol=1e-12)
    assert np.all(b.b > 0)


def test_exactness_check_values():
    m = moments_from_raw(uniform_moments(2))
    assert quadrature_exactness_check(uniform_basis(2), m) <= 1e-12
    mn = moments_from_raw([1, 0, 1, 0, 3])
    h = build_univariate_basis(mn)
    assert float(np.sum(h.weights * h.nodes ** 4)) == pytest.approx(1.0)
    assert abs(np.sum(h.weights) - 1.0) == 0.0 or abs(np.sum(h.weights) - 1.0) < 1e-15


def _gram(basis):
    psi = basis.evaluate(basis.nodes)
    return (basis.weights[:, None] * psi).T @ psi


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 4),
       kind=st.sampled_from(["normal", "uniform", "gamma", "bimodal"]))
def test_rule_matches_sample_moments_and_orthonormality(seed, p, kind):
    rng = np.random.default_rng(seed)
    n = 400
    s = {"normal": lambda: rng.standard_normal(n),
         "uniform": lambda: rng.uniform(-2, 5, n),
         "gamma": lambda: rng.gamma(3.0, 1.0, n),
         "bimodal": lambda: np.concatenate([rng.normal(-2, 0.5, n // 2), rng.normal(2, 0.5, n // 2)])}[kind]()
    m = raw_moments(s, p)
    b = build_univariate_basis(m)
    assert quadrature_exactness_check(b, m, relative=True) <= 1e-10
    assert abs(b.weights.sum() - 1.0) <= 1e-12
    G = _gram(b)
    for j in range(p + 1):
        for k in range(p + 1):
            if j + k <= 2 * p - 1:
                assert abs(G[j, k] - (j == k)) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-100, 100), scale=st.floats(0.01, 100))
def test_affine_equivariance(seed, shift, scale):
    s = np.random.default_rng(seed).gamma(2.0, 1.0, 300)
    b0 = build_univariate_basis(raw_moments(s, 3))
    bs = build_univariate_basis(raw_moments(s + shift, 3))
    bc = build_univariate_basis(raw_moments(scale * s, 3))
    span = np.ptp(b0.nodes)
    assert np.allclose(bs.nodes, b0.nodes + shift, atol=1e-8 * (span + abs(shift)))
    assert np.allclose(bs.weights, b0.weights, atol=1e-8)
    assert np.allclose(bc.nodes, scale * b0.nodes, rtol=1e-8, atol=1e-10 * scale * span)
    assert np.allclose(bc.weights, b0.weights, atol=1e-8)


# --- index sets and tensor rules ------------------------------------------------------

def test_index_set_two_vars():
    idx = list(build_index_set(2, 2))
    assert idx == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]


def test_index_set_one_var():
    assert list(build_index_set(1, 3)) == [(0,), (1,), (2,), (3,)]


@pytest.mark.parametrize("N_U, p", [(4, 2), (3, 3), (5, 1), (2, 5)])
def test_index_set_size(N_U, p):
    s = build_index_set(N_U, p)
    assert s.n_terms == math.comb(N_U + p, p)
    degrees = s.indices.sum(axis=1)
    assert np.all(np.diff(degrees) >= 0) and degrees[0] == 0


def test_tensor_rule_sizes():
    bases = [uniform_basis(2)] * 4
    tuples, w = tensor_nodes(bases)
    assert tuples.shape == (16, 4)
    assert abs(w.sum() - 1.0) <= 1e-12
    t1, w1 = tensor_nodes([uniform_basis(3)])
    assert np.array_equal(t1[:, 0], uniform_basis(3).nodes) and np.array_equal(w1, uniform_basis(3).weights)
    t2, w2 = tensor_nodes([uniform_basis(2)] * 2)
    assert np.allclose(w2, 0.25)
    # last variable varies fastest
    assert t2[0, 0] == t2[1, 0] and t2[0, 1] != t2[1, 1]


def test_empty_tensor_rule():
    tuples, w = tensor_nodes([])
    assert tuples.shape == (1, 0) and np.array_equal(w, [1.0])
    assert build_index_set(0, 2).n_terms == 1


# --- surrogates --------------------------------------------------------------------------

def _fit(fn, bases, p=2, T=1):
    tuples, _ = tensor_nodes(bases)
    outputs = np.array([[fn(t) * (1 + 0.1 * k) for k in range(T)] for t in tuples])
    return fit_surrogate(outputs, bases, build_index_set(len(bases), p))


def test_constant_output():
    s = _fit(lambda t: 4.5, [uniform_basis(2)] * 3)
    assert s.coefficients[0, 0] == pytest.approx(4.5, abs=1e-12)
    assert np.max(np.abs(s.coefficients[1:])) <= 1e-12
    assert surrogate_stats(s, 0) == pytest.approx((4.5, 0.0), abs=1e-12)


def test_first_basis_function_output():
    b = uniform_basis(2)
    s = _fit(lambda t: b.evaluate(t[0])[1], [b, b])
    pos = s.index_set.position((1, 0))
    expect = np.zeros(s.index_set.n_terms)
    expect[pos] = 1.0
    assert np.max(np.abs(s.coefficients[:, 0] - expect)) <= 1e-10
    assert surrogate_stats(s, 0) == pytest.approx((0.0, 1.0), abs=1e-12)


def test_product_output_coefficient():
    s = _fit(lambda t: t[0] * t[1], [uniform_basis(2)] * 2)
    assert s.coefficients[s.index_set.position((1, 1)), 0] == pytest.approx(1 / 3, abs=1e-12)


def test_surrogate_eval_examples():
    b = uniform_basis(2)
    s = _fit(lambda t: 2 * t[0], [b, b])
    assert surrogate_eval(s, 0, np.array([0.3, -0.9])) == pytest.approx(0.6, abs=1e-10)
    alpha = np.zeros((6, 1))
    alpha[0] = 5.0
    c = fit_surrogate(np.full((4, 1), 5.0), [b, b], build_index_set(2, 2))
    assert np.allclose(c.coefficients, alpha, atol=1e-12)
    assert surrogate_eval(c, 0, np.array([0.77, 0.1])) == pytest.approx(5.0, abs=1e-12)


def test_linear_map_moments():
    s = _fit(lambda t: 3 + 2 * t[0], [uniform_basis(2)] * 2)
    mean, var = surrogate_stats(s, 0)
    assert mean == pytest.approx(3.0, abs=1e-12)
    assert var == pytest.approx(4 / 3, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N_U=st.integers(1, 3), p=st.integers(1, 3))
def test_parseval_and_node_reproduction(seed, N_U, p):
    """Random polynomial models of total degree <= p on sample-built bases.

    The tensor rule with p nodes integrates products of degree <= 2p-1 per
    variable exactly, so models of total degree < p are reproduced at the
    nodes and the coefficient variance equals the quadrature variance.
    """
    rng = np.random.default_rng(seed)
    samples = rng.gamma(2.0, 1.0, (500, N_U))
    bases = bases_from_samples(samples, p)
    idx = build_index_set(N_U, p)
    tuples, w = tensor_nodes(bases)
    deg = p - 1
    sub = build_index_set(N_U, deg)
    c = rng.standard_normal(sub.n_terms)
    model = lambda xi: design_matrix(bases, sub, xi) @ c  # noqa: E731
    s = fit_surrogate(model(tuples)[:, None], bases, idx)
    assert np.max(np.abs(s.evaluate(tuples, 0) - model(tuples))) <= 1e-8 * (1 + np.abs(model(tuples)).max())
    mean_c, var_c = surrogate_stats(s, 0)
    mean_q, var_q = quadrature_stats(s, 0)
    assert mean_c == pytest.approx(float(mean_q), abs=1e-10 * (1 + abs(mean_c)))
    assert var_c == pytest.approx(float(var_q), abs=1e-8 * (1 + var_c))


def test_degree_p_model_stats_consistent():
    bases = [uniform_basis(2)] * 2
    s = _fit(lambda t: 1 + t[0] + 2 * t[1] + t[0] * t[1], bases)
    mean_c, var_c = surrogate_stats(s, 0)
    mean_q, var_q = quadrature_stats(s, 0)
    assert mean_c == pytest.approx(mean_q, abs=1e-12)
    assert var_c == pytest.approx(var_q, abs=1e-10)
    assert mean_c == pytest.approx(1.0)
    assert var_c == pytest.approx(1 / 3 + 4 / 3 + 1 / 9)


def test_mean_identity_per_step():
    bases = [uniform_basis(2)] * 3
    s = _fit(lambda t: np.exp(t[0]) + t[1] * t[2], bases, T=5)
    mean_q, _ = quadrature_stats(s)
    assert np.allclose(s.coefficients[0], mean_q, atol=1e-10)


def test_row_count_mismatch():
    with pytest.raises(DataError, match="node tuples"):
        fit_surrogate(np.zeros((3, 2)), [uniform_basis(2)] * 2, build_index_set(2, 2))


def test_non_finite_outputs_rejected():
    with pytest.raises(DataError, match="non-finite"):
        fit_surrogate(np.full((4, 1), np.nan), [uniform_basis(2)] * 2, build_index_set(2, 2))


def test_coefficients_interpolated_in_time():
    b = uniform_basis(2)
    tuples, _ = tensor_nodes([b])
    X = np.column_stack([tuples[:, 0], 3 * tuples[:, 0]])
    s = fit_surrogate(X, [b], build_index_set(1, 2), times=[0.0, 10.0])
    assert np.allclose(s.coefficients_at(2.5), 0.75 * s.coefficients[:, 0] + 0.25 * s.coefficients[:, 1])
    assert s.evaluate_at_time(np.array([[0.4]]), 10.0)[0] == pytest.approx(1.2)
    with pytest.raises(DataError, match="outside"):
        s.coefficients_at(11.0)


def test_archive_round_trip_and_dump(tmp_path):
    bases = bases_from_samples(np.random.default_rng(1).standard_normal((200, 2)), 2)
    tuples, _ = tensor_nodes(bases)
    X = np.column_stack([tuples.sum(axis=1), tuples.prod(axis=1), np.ones(4)])
    s = fit_surrogate(X, bases, build_index_set(2, 2), times=[0, 10, 20])
    save_surrogate(s, tmp_path / "s.bin")
    back = load_surrogate(tmp_path / "s.bin")
    assert np.array_equal(back.coefficients, s.coefficients)
    assert np.array_equal(back.node_outputs, s.node_outputs)
    assert np.array_equal(back.bases[1].nodes, s.bases[1].nodes)
    save_surrogate(back, tmp_path / "t.bin")
    assert (tmp_path / "s.bin").read_bytes() == (tmp_path / "t.bin").read_bytes()
    text = dump_coefficients(back, every=2)
    lines = text.splitlines()
    assert lines[0].split("\t") == ["t", "alpha00", "alpha01", "alpha10", "alpha02", "alpha11", "alpha20"]
    assert len(lines) == 1 + 2


def test_archive_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"WCAPCS01" + bytes(60))
    with pytest.raises(DataError):
        load_surrogate(tmp_path / "x.bin")
