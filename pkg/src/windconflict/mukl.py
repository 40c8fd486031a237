"""Karhunen-Loeve expansion of the correlated (u, v) wind processes through a
single assembled process.

The assembled vector of a member is ``[u(s); v(s)]`` over the flattened grid
(length ``2S``).  Its empirical covariance is decomposed with a Nystrom
discretization of the Fredholm eigenproblem: with quadrature weights ``w``
the eigenpairs solve ``C W f = lambda f`` and the eigenvectors are
orthonormal under ``<f, g> = sum_s w_s f(s) g(s)``.  Both wind components
share one set of uncorrelated coordinates ``xi_k``.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .ensemble_io import WindGrid, _frozen
from .errors import DataError, NumericalError

NEGATIVE_EIG_TOL = 1e-10
ZERO_MODE_TOL = 1e-12
ARCHIVE_MAGIC = b"WCMUKL01"


@dataclass(frozen=True)
class AssembledCovariance:
    matrix: np.ndarray
    weights: np.ndarray
    mean: np.ndarray
    grid: WindGrid
    n_members: int

    @property
    def n_points(self):
        return self.grid.size

    def block(self, i, j):
        """Covariance block between components ``i`` and ``j`` (0 = u, 1 = v)."""
        S = self.n_points
        return self.matrix[i * S:(i + 1) * S, j * S:(j + 1) * S]


def _deviations(ens):
    X = ens.stacked()
    mean = X.mean(axis=0)
    return X - mean, mean


def assemble_covariance(ens, cell_weights=None):
    """Empirical covariance of the stacked, mean-removed ``[u; v]`` vectors
    with ``1/(R-1)`` normalization.

    ``cell_weights`` (length ``S``) are the Nystrom quadrature weights per
    grid point; uniform unit weights by default.
    """
    S = ens.grid.size
    if cell_weights is None:
        w = np.ones(S)
    else:
        w = np.asarray(cell_weights, dtype=float).ravel()
        if w.shape != (S,) or np.any(w <= 0):
            raise DataError(f"cell_weights must be {S} positive values")
    D, mean = _deviations(ens)
    C = D.T @ D / (ens.n_members - 1)
    C = 0.5 * (C + C.T)
    return AssembledCovariance(_frozen(C), _frozen(np.concatenate([w, w])), _frozen(mean),
                               ens.grid, ens.n_members)


def solve_eigenproblem(cov):
    """Full spectral decomposition of the weighted covariance operator.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues descending and
    clipped at zero, and eigenvectors as columns orthonormal in the weighted
    inner product.  Each eigenvector is sign-normalized so its
    largest-magnitude entry is positive.
    """
    C = np.asarray(cov.matrix if hasattr(cov, "matrix") else cov, dtype=float)
    w = np.ones(C.shape[0]) if not hasattr(cov, "weights") else np.asarray(cov.weights)
    if not np.allclose(C, C.T, rtol=1e-12, atol=1e-12 * max(np.abs(C).max(), 1e-300)):
        raise DataError("covariance matrix is not symmetric")
    sw = np.sqrt(w)
    B = sw[:, None] * C * sw[None, :]
    try:
        lam, G = np.linalg.eigh(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigen-solver did not converge: {exc}") from None
    lam = lam[::-1]
    G = G[:, ::-1]
    lam_max = max(lam[0], 0.0)
    if lam[-1] < -NEGATIVE_EIG_TOL * lam_max:
        raise NumericalError(
            f"assembled covariance is not positive semi-definite: "
            f"lambda_min={lam[-1]:.3e}, lambda_max={lam_max:.3e}")
    lam = np.clip(lam, 0.0, None)
    F = G / sw[:, None]
    idx = np.abs(F).argmax(axis=0)
    signs = np.sign(F[idx, np.arange(F.shape[1])])
    signs[signs == 0] = 1.0
    return lam, F * signs


def n_selectable_modes(eigenvalues):
    lam = np.asarray(eigenvalues)
    if lam.size == 0 or lam[0] <= 0:
        return 0
    return int(np.count_nonzero(lam > ZERO_MODE_TOL * lam[0]))


def truncate(eigenvalues, delta):
    """Smallest ``M`` with ``sum_{k<=M} lambda_k >= delta * sum_k lambda_k``."""
    lam = np.asarray(eigenvalues, dtype=float)
    if not 0.0 < delta <= 1.0:
        raise DataError(f"delta must lie in (0, 1], got {delta}")
    if lam.size == 0 or not np.any(lam > 0):
        raise NumericalError("cannot truncate an all-zero spectrum")
    frac = np.cumsum(lam) / lam.sum()
    M = int(np.searchsorted(frac, delta * (1.0 - 1e-12))) + 1
    return min(M, n_selectable_modes(lam))


def extract_xi_samples(ens, cov, eigenvalues, eigenvectors, M):
    """Realizations ``xi_k^(r) = <dev_r, f_k>_w / sqrt(lambda_k)``, shape ``(R, M)``."""
    lam = np.asarray(eigenvalues)
    if M < 1 or M > lam.size:
        raise DataError(f"M={M} outside 1..{lam.size}")
    if lam[M - 1] <= ZERO_MODE_TOL * lam[0]:
        raise NumericalError(
            f"mode {M} has numerically zero eigenvalue {lam[M - 1]:.3e}; "
            f"at most {n_selectable_modes(lam)} modes are usable")
    D = ens.stacked() - np.asarray(cov.mean)
    proj = (D * np.asarray(cov.weights)) @ eigenvectors[:, :M]
    return proj / np.sqrt(lam[:M])


@dataclass(frozen=True)
class MuklExpansion:
    """Truncated expansion plus everything needed to rebuild wind fields.

    ``eigenvectors`` holds all ``2S`` assembled eigenfunctions as columns;
    ``xi_samples`` holds the ``R`` realizations of the first ``M``
    coordinates.  Mean fields are flattened in grid order.
    """

    grid: WindGrid
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    weights: np.ndarray
    mean_u: np.ndarray
    mean_v: np.ndarray
    xi_samples: np.ndarray
    M: int

    @property
    def n_points(self):
        return self.grid.size

    @property
    def n_members(self):
        return self.xi_samples.shape[0]

    @property
    def explained_fraction(self):
        total = self.eigenvalues.sum()
        if total <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total

    @property
    def explained_percent(self):
        """Percentage of total variance kept by the first ``M`` modes (100
        for a zero-variance ensemble, where nothing is lost)."""
        if self.eigenvalues.sum() <= 0:
            return 100.0
        return float(self.explained_fraction[:self.M].sum() * 100.0)

    def subfunctions(self, component):
        """Halves ``phi_k^(i)`` of the assembled eigenfunctions, shape ``(S, 2S)``."""
        S = self.n_points
        i = {"u": 0, "v": 1}.get(component, component)
        return self.eigenvectors[i * S:(i + 1) * S]

    def _component_norms(self, component):
        S = self.n_points
        phi = self.subfunctions(component)
        w = self.weights[:S]
        return np.sqrt((w[:, None] * phi ** 2).sum(axis=0))

    def normalized_subfunctions(self, component):
        norms = self._component_norms(component)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(norms > 0, self.subfunctions(component) / norms, 0.0)

    def scaled_eigenvalues(self, component):
        return self.eigenvalues * self._component_norms(component) ** 2

    def mode_fields(self, M=None):
        """``sqrt(lambda_k) phi_k^(i)`` for k < M as two ``(S, M)`` arrays."""
        M = self.M if M is None else M
        scale = np.sqrt(self.eigenvalues[:M])
        return self.subfunctions("u")[:, :M] * scale, self.subfunctions("v")[:, :M] * scale


def build_expansion(ens, M=None, delta=None, cell_weights=None, allow_degenerate=False):
    """Decompose an ensemble; exactly one of ``M`` or ``delta`` selects the order.

    A zero-variance ensemble raises :class:`NumericalError` unless
    ``allow_degenerate`` is set, in which case the expansion keeps no modes
    (``M = 0``) and describes the deterministic mean wind.
    """
    if (M is None) == (delta is None):
        raise DataError("give exactly one of M or delta")
    cov = assemble_covariance(ens, cell_weights)
    lam, F = solve_eigenproblem(cov)
    if allow_degenerate and n_selectable_modes(lam) == 0:
        S = ens.grid.size
        return MuklExpansion(ens.grid, _frozen(lam), _frozen(F), cov.weights, _frozen(cov.mean[:S]),
                             _frozen(cov.mean[S:]), _frozen(np.zeros((ens.n_members, 0))), 0)
    if delta is not None:
        M = truncate(lam, delta)
    usable = n_selectable_modes(lam)
    if usable == 0:
        raise NumericalError("ensemble has zero variance; nothing to expand")
    if M > usable:
        raise NumericalError(f"M={M} exceeds the {usable} numerically nonzero modes")
    xi = extract_xi_samples(ens, cov, lam, F, M)
    S = ens.grid.size
    return MuklExpansion(ens.grid, _frozen(lam), _frozen(F), cov.weights,
                         _frozen(cov.mean[:S]), _frozen(cov.mean[S:]), _frozen(xi), int(M))


def reconstruct_member(exp, xi):
    """Mean fields plus ``sum_k sqrt(lambda_k) phi_k^(i) xi_k``; returns
    ``(u, v)`` on the grid.  ``xi`` may be shorter than ``M`` (fewer modes)
    or longer, up to the number of numerically nonzero modes."""
    xi = np.asarray(xi, dtype=float).ravel()
    m = xi.size
    if m > n_selectable_modes(exp.eigenvalues):
        raise DataError(f"{m} coordinates given but only {n_selectable_modes(exp.eigenvalues)} modes are usable")
    mu, mv = exp.mode_fields(m)
    u = exp.mean_u + mu @ xi
    v = exp.mean_v + mv @ xi
    return u.reshape(exp.grid.shape), v.reshape(exp.grid.shape)


def full_xi_samples(exp, ens, M):
    """Coordinates of every member on the first ``M`` modes (may exceed ``exp.M``)."""
    mean = np.concatenate([exp.mean_u, exp.mean_v])
    D = ens.stacked() - mean
    return (D * exp.weights) @ exp.eigenvectors[:, :M] / np.sqrt(exp.eigenvalues[:M])


def truncation_error(exp, ens, M):
    """Measured ``sum_r ||member_r - Q_M(xi_r)||_w^2 / (R-1)``."""
    xi = full_xi_samples(exp, ens, M)
    mean = np.concatenate([exp.mean_u, exp.mean_v])
    approx = mean + xi @ (exp.eigenvectors[:, :M] * np.sqrt(exp.eigenvalues[:M])).T
    resid = ens.stacked() - approx
    return float((resid ** 2 * exp.weights).sum() / (ens.n_members - 1))


def explained_variance_table(exp, M=None):
    """Rows ``(k, percent, cumulative percent)`` for the first ``M`` modes."""
    M = exp.M if M is None else M
    frac = exp.explained_fraction[:M] * 100.0
    return [(k + 1, float(frac[k]), float(frac[:k + 1].sum())) for k in range(M)]


# --- archive ------------------------------------------------------------------
# Layout (little-endian): 8-byte magic, five uint64 dims
# (n_lat, n_lon, R, K, M), then float64 arrays in order: lats, lons,
# cell weights (S), eigenvalues (K), mean_u (S), mean_v (S),
# eigenvectors (2S x K, row-major), xi_samples (R x M).

def save_expansion(exp, path):
    n_lat, n_lon = exp.grid.shape
    S = exp.n_points
    K = exp.eigenvalues.size
    with open(path, "wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<5Q", n_lat, n_lon, exp.n_members, K, exp.M))
        for a in (exp.grid.lats, exp.grid.lons, exp.weights[:S], exp.eigenvalues,
                  exp.mean_u, exp.mean_v, exp.eigenvectors, exp.xi_samples):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_expansion(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != ARCHIVE_MAGIC or len(data) < 48:
        raise DataError(f"{path}: not a muKL archive")
    n_lat, n_lon, R, K, M = struct.unpack_from("<5Q", data, 8)
    S = n_lat * n_lon
    sizes = [n_lat, n_lon, S, K, S, S, 2 * S * K, R * M]
    expected = 8 + 40 + 8 * sum(sizes)
    if len(data) != expected:
        raise DataError(f"{path}: archive size {len(data)} does not match header ({expected})")
    flat = np.frombuffer(data, dtype="<f8", offset=48)
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    lats, lons, w, lam, mu, mv, F, xi = (p.astype(float) for p in parts)
    grid = WindGrid(lats, lons)
    return MuklExpansion(grid, _frozen(lam), _frozen(F.reshape(2 * S, K)), _frozen(np.concatenate([w, w])),
                         _frozen(mu), _frozen(mv), _frozen(xi.reshape(R, M)), int(M))
