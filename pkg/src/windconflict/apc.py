"""Moment-based arbitrary polynomial chaos.

Orthonormal polynomials, Gaussian quadrature and PCE surrogates are built
directly from raw sample moments, without fitting a parametric
distribution.  The chain is

    samples -> moments -> Hankel matrix -> Cholesky factor R
            -> three-term recurrence (a_j, b_j) -> Jacobi matrix
            -> nodes (eigenvalues) and weights (squared first components)

Multivariate bases are products of univariate ones, which treats the
inputs as independent.  The muKL coordinates are only guaranteed to be
uncorrelated, so this is an approximation for non-Gaussian data.
"""
import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import comb

from .ensemble_io import _frozen
from .errors import DataError, NumericalError

SURROGATE_MAGIC = b"WCAPCS01"


@dataclass(frozen=True)
class MomentSet:
    """Raw moments ``mu_0..mu_2p`` of one variable.

    ``center`` and ``central`` keep the same information about the sample
    mean, which is what the basis construction actually factorizes.
    """

    moments: np.ndarray
    p: int
    center: float
    central: np.ndarray

    def hankel(self, central=False):
        mu = self.central if central else self.moments
        n = self.p + 1
        return np.array([[mu[i + j] for j in range(n)] for i in range(n)])


def _raw_from_central(central, c):
    out = np.zeros_like(central)
    for k in range(central.size):
        out[k] = sum(comb(k, j, exact=True) * central[j] * c ** (k - j) for j in range(k + 1))
    return out


def _central_from_raw(raw, c):
    return _raw_from_central(raw, -c)


def _cholesky_upper(H):
    """Upper factor ``R`` with ``H = R^T R``; reports the first non-positive
    leading minor instead of failing opaquely."""
    n = H.shape[0]
    R = np.zeros_like(H)
    for j in range(n):
        d = H[j, j] - R[:j, j] @ R[:j, j]
        if not d > 1e-13 * max(abs(H[j, j]), 1e-300):
            raise NumericalError(
                f"Hankel moment matrix is not positive definite: leading minor of order {j + 1} "
                "is not positive (degenerate or too few distinct samples)")
        R[j, j] = math.sqrt(d)
        for k in range(j + 1, n):
            R[j, k] = (H[j, k] - R[:j, j] @ R[:j, k]) / R[j, j]
    return R


def moments_from_raw(moments, p=None):
    """Wrap known raw moments (e.g. of an analytic distribution)."""
    mu = np.asarray(moments, dtype=float)
    if p is None:
        p = (mu.size - 1) // 2
    if mu.size < 2 * p + 1:
        raise DataError(f"order p={p} needs moments up to mu_{2 * p}")
    mu = mu[:2 * p + 1]
    if not math.isclose(mu[0], 1.0, rel_tol=0, abs_tol=1e-12):
        raise DataError(f"mu_0 must be 1, got {mu[0]}")
    c = float(mu[1])
    central = _central_from_raw(mu, c)
    central[0], central[1] = 1.0, 0.0
    m = MomentSet(_frozen(mu), int(p), c, _frozen(central))
    _cholesky_upper(m.hankel(central=True))
    return m


def raw_moments(samples, p):
    """Sample raw moments ``mu_k = mean(s^k)``, ``k = 0..2p``.

    Computed about the sample mean and shifted back, which keeps the
    factorized (central) Hankel matrix well conditioned.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if p < 1:
        raise DataError(f"p must be >= 1, got {p}")
    if s.size < p + 1:
        raise DataError(f"{s.size} samples cannot support order p={p}")
    if not np.all(np.isfinite(s)):
        raise DataError("samples contain non-finite values")
    c = float(s.mean())
    d = s - c
    central = np.array([np.mean(d ** k) for k in range(2 * p + 1)])
    central[0], central[1] = 1.0, 0.0
    raw = _raw_from_central(central, c)
    raw[0] = 1.0
    m = MomentSet(_frozen(raw), int(p), c, _frozen(central))
    _cholesky_upper(m.hankel(central=True))
    return m


@dataclass(frozen=True)
class UnivariateBasis:
    """Orthonormal polynomials ``psi_0..psi_p`` and the ``p``-node Gaussian
    rule of one variable.

    ``a`` and ``b`` hold ``a_1..a_p`` and ``b_1..b_p``; row ``j`` of
    ``coefficients`` holds the monomial coefficients of ``psi_j`` in
    ascending powers.
    """

    a: np.ndarray
    b: np.ndarray
    coefficients: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def p(self):
        return self.a.size

    def evaluate(self, x):
        """Values of ``psi_0..psi_p`` at ``x``, shape ``x.shape + (p+1,)``."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (self.p + 1,))
        out[..., 0] = 1.0
        prev = np.zeros_like(x)
        for j in range(1, self.p + 1):
            b_prev = self.b[j - 2] if j >= 2 else 0.0
            out[..., j] = ((x - self.a[j - 1]) * out[..., j - 1] - b_prev * prev) / self.b[j - 1]
            prev = out[..., j - 1]
        return out

    def polynomial(self, j):
        return np.polynomial.Polynomial(self.coefficients[j, :j + 1])


def recurrence_from_cholesky(R):
    """Recurrence coefficients from the upper Cholesky factor of the Hankel
    matrix (size ``p+1``), using ``r_00 = 1`` and ``r_01 = 0``."""
    p = R.shape[0] - 1

    def r(i, j):  # 1-based entries of R, with the r_00 / r_01 convention
        if i == 0:
            return 1.0 if j == 0 else 0.0
        return R[i - 1, j - 1]

    a = np.array([r(j, j + 1) / r(j, j) - r(j - 1, j) / r(j - 1, j - 1) for j in range(1, p + 1)])
    b = np.array([r(j + 1, j + 1) / r(j, j) for j in range(1, p + 1)])
    return a, b


def _monomial_coefficients(a, b):
    p = a.size
    coef = np.zeros((p + 1, p + 1))
    coef[0, 0] = 1.0
    for j in range(1, p + 1):
        shifted = np.zeros(p + 1)
        shifted[1:] = coef[j - 1, :-1]
        prev = coef[j - 2] * b[j - 2] if j >= 2 else 0.0
        coef[j] = (shifted - a[j - 1] * coef[j - 1] - prev) / b[j - 1]
    return coef


def build_univariate_basis(m):
    R = _cholesky_upper(m.hankel(central=True))
    a, b = recurrence_from_cholesky(R)
    a = a + m.center
    if m.p == 1:
        nodes = a.copy()
        V = np.ones((1, 1))
    else:
        nodes, V = eigh_tridiagonal(a, b[:-1])
    weights = V[0] ** 2
    return UnivariateBasis(_frozen(a), _frozen(b), _frozen(_monomial_coefficients(a, b)),
                           _frozen(nodes), _frozen(weights))


def quadrature_exactness_check(basis, m, relative=False):
    """Largest deviation of ``sum_i w_i zeta_i^k`` from ``mu_k``, k <= 2p-1."""
    worst = 0.0
    for k in range(2 * basis.p):
        err = abs(float(np.sum(basis.weights * basis.nodes ** k)) - m.moments[k])
        if relative:
            err /= max(1.0, abs(m.moments[k]))
        worst = max(worst, err)
    return worst


@dataclass(frozen=True)
class MultiIndexSet:
    indices: np.ndarray

    @property
    def n_terms(self):
        return self.indices.shape[0]

    @property
    def n_vars(self):
        return self.indices.shape[1]

    def __iter__(self):
        return (tuple(int(i) for i in row) for row in self.indices)

    def position(self, index):
        hits = np.flatnonzero((self.indices == np.asarray(index)).all(axis=1))
        if hits.size == 0:
            raise KeyError(index)
        return int(hits[0])


def build_index_set(N_U, p):
    """All multi-indices of total degree <= p, graded then lexicographic."""
    if N_U < 0 or p < 0:
        raise DataError(f"need N_U >= 0 and p >= 0, got N_U={N_U}, p={p}")
    if N_U == 0:  # no random inputs: the constant term only
        return MultiIndexSet(_frozen(np.zeros((1, 0), dtype=int), dtype=int))
    idx = [t for t in itertools.product(range(p + 1), repeat=N_U) if sum(t) <= p]
    idx.sort(key=lambda t: (sum(t), t))
    return MultiIndexSet(_frozen(np.array(idx, dtype=int), dtype=int))


def tensor_nodes(bases):
    """Full tensor-product rule: node tuples (last variable varies fastest)
    and product weights.  With no bases the rule is one empty tuple of
    weight 1."""
    bases = list(bases)
    if not bases:
        return np.zeros((1, 0)), np.ones(1)
    tuples = np.array(list(itertools.product(*(b.nodes for b in bases))))
    weights = np.array([math.prod(w) for w in itertools.product(*(b.weights for b in bases))])
    return tuples, weights


def design_matrix(bases, index_set, xi):
    """Multivariate ``Psi_k(xi)`` for rows of ``xi``, shape ``(N, N_P)``."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != len(bases):
        raise DataError(f"xi has {xi.shape[1]} columns, expected {len(bases)}")
    psi = [b.evaluate(xi[:, i]) for i, b in enumerate(bases)]
    out = np.ones((xi.shape[0], index_set.n_terms))
    for i in range(len(bases)):
        out *= psi[i][:, index_set.indices[:, i]]
    return out


@dataclass(frozen=True)
class Surrogate:
    """PCE of one output variable at ``T`` time steps.

    ``coefficients`` is ``(N_P, T)``; ``node_outputs`` is
    ``(n_tuples, T)`` in :func:`tensor_nodes` order.
    """

    coefficients: np.ndarray
    bases: tuple
    index_set: MultiIndexSet
    node_tuples: np.ndarray
    tensor_weights: np.ndarray
    node_outputs: np.ndarray
    times: np.ndarray

    @property
    def n_steps(self):
        return self.coefficients.shape[1]

    def evaluate(self, xi, t_index=None):
        """Surrogate values at rows of ``xi``: ``(N,)`` for one step, else ``(N, T)``."""
        Psi = design_matrix(self.bases, self.index_set, xi)
        if t_index is None:
            return Psi @ self.coefficients
        return Psi @ self.coefficients[:, t_index]

    def coefficients_at(self, t):
        """Coefficients linearly interpolated to time ``t`` (seconds)."""
        times = self.times
        if t < times[0] - 1e-9 or t > times[-1] + 1e-9:
            raise DataError(f"time {t} outside [{times[0]}, {times[-1]}]")
        k = int(np.clip(np.searchsorted(times, t) - 1, 0, times.size - 2))
        frac = (t - times[k]) / (times[k + 1] - times[k])
        frac = min(max(frac, 0.0), 1.0)
        return (1 - frac) * self.coefficients[:, k] + frac * self.coefficients[:, k + 1]

    def evaluate_at_time(self, xi, t):
        return design_matrix(self.bases, self.index_set, xi) @ self.coefficients_at(t)


def fit_surrogate(node_outputs, bases, index_set, times=None):
    """Coefficients by Gaussian quadrature projection,
    ``alpha_k(t) = sum_tuples w * x(t) * Psi_k(tuple)``."""
    bases = tuple(bases)
    X = np.asarray(node_outputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    tuples, w = tensor_nodes(bases)
    if X.shape[0] != tuples.shape[0]:
        raise DataError(f"node_outputs has {X.shape[0]} rows but the rule has {tuples.shape[0]} node tuples")
    if not np.all(np.isfinite(X)):
        raise DataError("node_outputs contain non-finite values")
    if index_set.n_vars != len(bases):
        raise DataError("index set dimension does not match the number of bases")
    Psi = design_matrix(bases, index_set, tuples)
    alpha = Psi.T @ (w[:, None] * X)
    times = np.arange(X.shape[1], dtype=float) if times is None else np.asarray(times, dtype=float)
    if times.shape != (X.shape[1],):
        raise DataError("times length does not match the number of output steps")
    return Surrogate(_frozen(alpha), bases, index_set, _frozen(tuples), _frozen(w), _frozen(X), _frozen(times))


def surrogate_eval(s, t_index, xi):
    return float(s.evaluate(np.asarray(xi, dtype=float)[None, :], t_index)[0])


def surrogate_stats(s, t_index):
    """``(mean, variance)`` from the coefficients: ``alpha_1`` and the sum
    of the remaining squared coefficients."""
    alpha = s.coefficients[:, t_index]
    return float(alpha[0]), float(np.sum(alpha[1:] ** 2))


def quadrature_stats(s, t_index=None):
    """``(mean, variance)`` straight from the weighted node outputs."""
    X = s.node_outputs if t_index is None else s.node_outputs[:, t_index]
    w = s.tensor_weights if X.ndim == 1 else s.tensor_weights[:, None]
    mean = (w * X).sum(axis=0)
    var = (w * (X - mean) ** 2).sum(axis=0)
    return mean, var


def bases_from_samples(xi_samples, p):
    """One basis per column of an ``(R, M)`` sample matrix."""
    xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    return tuple(build_univariate_basis(raw_moments(xi[:, k], p)) for k in range(xi.shape[1]))


# --- serialization ------------------------------------------------------------
# Little-endian: 8-byte magic, five uint64 (N_U, p, N_P, n_tuples, T), then
# float64 arrays: times (T); per basis a (p), b (p), nodes (p), weights (p),
# coefficients ((p+1)^2); indices (N_P x N_U); node tuples (n_tuples x N_U);
# tensor weights (n_tuples); coefficients (N_P x T); node outputs (n_tuples x T).

def save_surrogate(s, path):
    N_U = len(s.bases)
    p = s.bases[0].p if s.bases else 0
    N_P = s.index_set.n_terms
    n_t = s.node_tuples.shape[0]
    T = s.n_steps
    arrays = [s.times]
    for b in s.bases:
        arrays += [b.a, b.b, b.nodes, b.weights, b.coefficients]
    arrays += [s.index_set.indices.astype(float), s.node_tuples, s.tensor_weights,
               s.coefficients, s.node_outputs]
    with open(path, "wb") as fh:
        fh.write(SURROGATE_MAGIC)
        fh.write(struct.pack("<5Q", N_U, p, N_P, n_t, T))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_surrogate(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != SURROGATE_MAGIC or len(data) < 48 or len(data) % 8:
        raise DataError(f"{path}: not a surrogate archive")
    N_U, p, N_P, n_t, T = struct.unpack_from("<5Q", data, 8)
    flat = np.frombuffer(data, dtype="<f8", offset=48).astype(float)
    expected = T + N_U * (4 * p + (p + 1) ** 2) + N_P * N_U + n_t * N_U + n_t + N_P * T + n_t * T
    if flat.size != expected:
        raise DataError(f"{path}: archive size does not match header")
    pos = 0

    def take(n, shape=None):
        nonlocal pos
        out = flat[pos:pos + n]
        pos += n
        return _frozen(out.reshape(shape) if shape else out)

    times = take(T)
    bases = []
    for _ in range(N_U):
        a, b, nodes, w = take(p), take(p), take(p), take(p)
        coef = take((p + 1) ** 2, (p + 1, p + 1))
        bases.append(UnivariateBasis(a, b, coef, nodes, w))
    idx = MultiIndexSet(_frozen(take(N_P * N_U, (N_P, N_U)).astype(int), dtype=int))
    tuples = take(n_t * N_U, (n_t, N_U))
    w = take(n_t)
    alpha = take(N_P * T, (N_P, T))
    X = take(n_t * T, (n_t, T))
    return Surrogate(alpha, tuple(bases), idx, tuples, w, X, times)


def dump_coefficients(s, every=1):
    """Text table of ``alpha_k(t)``: one row per time step, one column per index."""
    heads = ["t"] + ["alpha" + "".join(str(i) for i in idx) for idx in s.index_set]
    lines = ["\t".join(heads)]
    for k in range(0, s.n_steps, every):
        lines.append("\t".join(["%.6g" % s.times[k]] + ["%.9g" % a for a in s.coefficients[:, k]]))
    return "\n".join(lines) + "\n"
