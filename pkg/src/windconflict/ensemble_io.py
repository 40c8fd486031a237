"""Gridded ensemble wind data: containers, CSV round-trip, synthetic members
and radial-basis-function interpolation of gridded fields.

Spatial index convention used throughout the package: a field of shape
``(n_lat, n_lon)`` is flattened row-major (latitude-major), so grid point
``(i, j)`` has flat index ``s = i * n_lon + j``.  See :func:`flat_index`.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DataError, EnsembleFormatError, NumericalError, OutOfDomainError

CSV_HEADER = ("member", "lat", "lon", "u", "v")


def _fmt(x):
    return "%.9g" % x


def flat_index(i_lat, i_lon, n_lon):
    """Flat (row-major, latitude-major) index of grid cell ``(i_lat, i_lon)``."""
    return i_lat * n_lon + i_lon


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WindGrid:
    lats: np.ndarray
    lons: np.ndarray
    resolution_note: str = ""

    def __post_init__(self):
        lats = _frozen(self.lats)
        lons = _frozen(self.lons)
        for name, axis in (("lats", lats), ("lons", lons)):
            if axis.ndim != 1 or axis.size < 2:
                raise DataError(f"grid axis {name} needs at least 2 points")
            if not np.all(np.diff(axis) > 0):
                raise DataError(f"grid axis {name} must be strictly increasing")
            if not np.all(np.isfinite(axis)):
                raise DataError(f"grid axis {name} has non-finite values")
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)

    @classmethod
    def regular(cls, lat0, lat1, n_lat, lon0, lon1, n_lon):
        lats = np.linspace(lat0, lat1, n_lat)
        lons = np.linspace(lon0, lon1, n_lon)
        note = f"{(lat1 - lat0) / (n_lat - 1):g} x {(lon1 - lon0) / (n_lon - 1):g} deg"
        return cls(lats, lons, note)

    @property
    def shape(self):
        return (self.lats.size, self.lons.size)

    @property
    def size(self):
        return self.lats.size * self.lons.size

    def points(self):
        """All grid points as an ``(S, 2)`` array of (lat, lon) in flat-index order."""
        lat, lon = np.meshgrid(self.lats, self.lons, indexing="ij")
        return np.column_stack([lat.ravel(), lon.ravel()])

    @property
    def bounds(self):
        return (self.lats[0], self.lats[-1], self.lons[0], self.lons[-1])

    def contains(self, lat, lon, tol=1e-9):
        lat0, lat1, lon0, lon1 = self.bounds
        lat = np.asarray(lat)
        lon = np.asarray(lon)
        return (lat >= lat0 - tol) & (lat <= lat1 + tol) & (lon >= lon0 - tol) & (lon <= lon1 + tol)

    def same_as(self, other):
        return (self.shape == other.shape
                and np.array_equal(self.lats, other.lats)
                and np.array_equal(self.lons, other.lons))


@dataclass(frozen=True)
class WindEnsemble:
    """``R`` equiprobable realizations of the eastward (u) and northward (v)
    wind components on a common grid, in m/s.  ``u`` and ``v`` have shape
    ``(R, n_lat, n_lon)``."""

    grid: WindGrid
    u: np.ndarray
    v: np.ndarray
    member_ids: tuple = field(default=None)

    def __post_init__(self):
        u = _frozen(self.u)
        v = _frozen(self.v)
        if u.ndim != 3 or u.shape != v.shape:
            raise DataError(f"u and v must share a (R, n_lat, n_lon) shape, got {u.shape} and {v.shape}")
        if u.shape[1:] != self.grid.shape:
            raise DataError(f"member fields of shape {u.shape[1:]} do not match grid {self.grid.shape}")
        if u.shape[0] < 2:
            raise DataError(f"at least 2 members are required, got {u.shape[0]}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise DataError("ensemble contains non-finite wind values")
        ids = tuple(range(u.shape[0])) if self.member_ids is None else tuple(int(m) for m in self.member_ids)
        if len(ids) != u.shape[0]:
            raise DataError("member_ids length does not match the number of members")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "member_ids", ids)

    @property
    def n_members(self):
        return self.u.shape[0]

    @property
    def member_weights(self):
        return np.full(self.n_members, 1.0 / self.n_members)

    def stacked(self):
        """Members as rows of ``[u(s); v(s)]`` flattened, shape ``(R, 2S)``."""
        R = self.n_members
        return np.hstack([self.u.reshape(R, -1), self.v.reshape(R, -1)])


def load_ensemble(path, format="csv"):
    if format != "csv":
        raise DataError(f"unsupported ensemble format {format!r}")
    records = {}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read ensemble {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EnsembleFormatError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise EnsembleFormatError(f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise EnsembleFormatError(f"{path}: row {row_no} has {len(row)} fields", row=row_no)
            try:
                member = int(row[0])
                lat, lon, u, v = (float(x) for x in row[1:])
            except ValueError:
                raise EnsembleFormatError(f"{path}: row {row_no} is not numeric", row=row_no) from None
            if member < 0:
                raise EnsembleFormatError(f"{path}: row {row_no} has negative member id", row=row_no)
            if not all(math.isfinite(x) for x in (lat, lon, u, v)):
                raise EnsembleFormatError(f"{path}: non-finite value at row {row_no}", member=member, row=row_no)
            cells = records.setdefault(member, {})
            if (lat, lon) in cells:
                raise EnsembleFormatError(
                    f"{path}: duplicate cell (lat={lat}, lon={lon}) for member {member} at row {row_no}",
                    member=member, cell=(lat, lon), row=row_no)
            cells[(lat, lon)] = (u, v)

    if len(records) < 2:
        raise EnsembleFormatError(f"{path}: at least 2 members are required, found {len(records)}")
    lats = sorted({c[0] for cells in records.values() for c in cells})
    lons = sorted({c[1] for cells in records.values() for c in cells})
    if len(lats) < 2 or len(lons) < 2:
        raise EnsembleFormatError(f"{path}: grid needs at least 2 latitudes and 2 longitudes")
    grid = WindGrid(lats, lons)
    members = sorted(records)
    u = np.empty((len(members), len(lats), len(lons)))
    v = np.empty_like(u)
    for r, m in enumerate(members):
        cells = records[m]
        for i, lat in enumerate(lats):
            for j, lon in enumerate(lons):
                try:
                    u[r, i, j], v[r, i, j] = cells[(lat, lon)]
                except KeyError:
                    raise EnsembleFormatError(
                        f"{path}: member {m} is missing cell (lat={lat}, lon={lon})",
                        member=m, cell=(lat, lon)) from None
    return WindEnsemble(grid, u, v, tuple(members))


def save_ensemble(ens, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        lats, lons = ens.grid.lats, ens.grid.lons
        for r, m in enumerate(ens.member_ids):
            for i, lat in enumerate(lats):
                for j, lon in enumerate(lons):
                    fh.write(f"{m},{_fmt(lat)},{_fmt(lon)},{_fmt(ens.u[r, i, j])},{_fmt(ens.v[r, i, j])}\n")


def pool_ensembles(ensembles):
    """Concatenate ensembles (e.g. forecasts at different lead times) as
    equally weighted realizations; members are renumbered ``0..R-1``."""
    ensembles = list(ensembles)
    if not ensembles:
        raise DataError("no ensembles to pool")
    grid = ensembles[0].grid
    for k, e in enumerate(ensembles[1:], start=1):
        if not grid.same_as(e.grid):
            raise DataError(f"ensemble {k} is on a different grid than ensemble 0")
    u = np.concatenate([e.u for e in ensembles])
    v = np.concatenate([e.v for e in ensembles])
    return WindEnsemble(grid, u, v)


@dataclass(frozen=True)
class CorrelationSpec:
    """Gaussian random field parameters for synthetic members.

    The spatial kernel is ``exp(-d^2 / (2 L^2))`` with ``d`` the distance in
    degree space and ``L = length_deg``; ``math.inf`` gives spatially
    constant fields.  ``rho`` is the co-located u-v correlation.
    """

    length_deg: float = 2.0
    rho: float = 0.0
    sigma_u: float = 5.0
    sigma_v: float = 5.0
    mean_u: float = 0.0
    mean_v: float = 0.0

    def __post_init__(self):
        if not self.length_deg > 0:
            raise DataError(f"correlation length must be > 0, got {self.length_deg}")
        if not -1.0 <= self.rho <= 1.0:
            raise DataError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.sigma_u < 0 or self.sigma_v < 0:
            raise DataError("standard deviations must be nonnegative")


def _field_factor(grid, length):
    if math.isinf(length):
        return np.ones((grid.size, 1))
    pts = grid.points()
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    K = np.exp(-0.5 * d2 / length ** 2)
    lam, Q = np.linalg.eigh(K)
    lam = np.clip(lam, 0.0, None)
    keep = lam > lam.max() * 1e-14
    return Q[:, keep] * np.sqrt(lam[keep])


def generate_synthetic_ensemble(seed, grid, R, spec=None):
    """Draw ``R`` members from a stationary Gaussian random field.

    Deterministic for a given ``seed``.
    """
    spec = CorrelationSpec() if spec is None else spec
    if R < 2:
        raise DataError(f"R must be >= 2, got {R}")
    rng = np.random.default_rng(seed)
    F = _field_factor(grid, spec.length_deg)
    z1 = rng.standard_normal((R, F.shape[1])) @ F.T
    z2 = rng.standard_normal((R, F.shape[1])) @ F.T
    rho = spec.rho
    u = spec.mean_u + spec.sigma_u * z1
    v = spec.mean_v + spec.sigma_v * (rho * z1 + math.sqrt(1.0 - rho * rho) * z2)
    shape = (R,) + grid.shape
    return WindEnsemble(grid, u.reshape(shape), v.reshape(shape))


# --- radial basis functions -------------------------------------------------

def default_epsilon(grid):
    """``1 / median nearest-neighbour spacing`` of the grid points."""
    pts = grid.points()
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    return 1.0 / float(np.median(np.sqrt(d2.min(axis=1))))


class RbfSystem:
    """Factorized Gaussian-RBF collocation system with a polynomial tail.

    ``tail`` is ``"linear"`` (1, lat, lon) or ``"constant"``.  Solving for
    several value vectors shares one Cholesky factorization of the kernel
    block; the tail is eliminated through its small Schur complement.
    """

    def __init__(self, grid, epsilon=None, tail="linear"):
        if tail not in ("linear", "constant"):
            raise DataError(f"unknown RBF tail {tail!r}")
        self.grid = grid
        self.tail = tail
        self.epsilon = default_epsilon(grid) if epsilon is None else float(epsilon)
        if not self.epsilon > 0:
            raise DataError(f"epsilon must be > 0, got {epsilon}")
        self.centers = grid.points()
        self.origin = self.centers.mean(axis=0)
        A = self._kernel(self.centers)
        self._A = A
        try:
            self._cho = linalg.cho_factor(A, lower=True)
        except linalg.LinAlgError:
            n = A.shape[0]
            A = A + np.eye(n) * (1e-10 * np.trace(A) / n)
            try:
                self._cho = linalg.cho_factor(A, lower=True)
            except linalg.LinAlgError:
                raise NumericalError(
                    f"RBF collocation matrix is singular for epsilon={self.epsilon:g}; "
                    "increase epsilon") from None
        P = self.tail_basis(self.centers[:, 0], self.centers[:, 1])
        self._aip = linalg.cho_solve(self._cho, P)
        self._schur = linalg.cho_factor(P.T @ self._aip)

    def _kernel(self, pts):
        d2 = ((pts[:, None, :] - self.centers[None, :, :]) ** 2).sum(-1)
        return np.exp(-(self.epsilon ** 2) * d2)

    def tail_basis(self, lat, lon):
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        cols = [np.ones_like(lat)]
        if self.tail == "linear":
            cols += [lat - self.origin[0], lon - self.origin[1]]
        return np.column_stack(cols)

    def kernel_at(self, lat, lon):
        """Kernel matrix between query points and centers, shape ``(N, S)``."""
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        d2 = (lat[:, None] - self.centers[None, :, 0]) ** 2 + (lon[:, None] - self.centers[None, :, 1]) ** 2
        return np.exp(-(self.epsilon ** 2) * d2)

    def solve(self, values):
        """Kernel coefficients ``(S, k)`` and tail coefficients ``(m, k)`` for
        value columns ``(S, k)``."""
        f = np.asarray(values, dtype=float)
        squeeze = f.ndim == 1
        f = f.reshape(f.shape[0], -1)
        af = linalg.cho_solve(self._cho, f)
        tail = linalg.cho_solve(self._schur, self._aip.T @ f)
        coef = af - self._aip @ tail
        P = self.tail_basis(self.centers[:, 0], self.centers[:, 1])
        resid = np.abs(self._A @ coef + P @ tail - f)
        if np.any(resid > 1e-8 * (1.0 + np.abs(f))):
            raise NumericalError(
                f"RBF collocation is numerically singular for epsilon={self.epsilon:g} "
                f"(residual {resid.max():.2e} at the centers); increase epsilon")
        if squeeze:
            return coef[:, 0], tail[:, 0]
        return coef, tail

    def evaluate(self, coef, tail, lat, lon):
        """Evaluate one fitted field (1-D ``coef``) at many points."""
        return self.kernel_at(lat, lon) @ coef + self.tail_basis(lat, lon) @ tail

    def check_domain(self, lat, lon):
        inside = self.grid.contains(lat, lon)
        if not np.all(inside):
            lat = np.atleast_1d(lat)
            lon = np.atleast_1d(lon)
            bad = np.flatnonzero(~np.atleast_1d(inside))[0]
            raise OutOfDomainError(
                f"point (lat={lat[bad]:.6f}, lon={lon[bad]:.6f}) is outside the grid box {self.grid.bounds}")


@dataclass(frozen=True)
class RbfInterpolant:
    """A fitted scalar field.  ``coefficients`` has one entry per center;
    ``tail`` holds the polynomial tail coefficients (1 for a constant tail,
    3 for a linear one, in centered coordinates about ``origin``)."""

    centers: np.ndarray
    coefficients: np.ndarray
    tail: np.ndarray
    epsilon: float
    origin: tuple
    bounds: tuple

    def __call__(self, lat, lon):
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        lat0, lat1, lon0, lon1 = self.bounds
        tol = 1e-9
        if np.any((lat < lat0 - tol) | (lat > lat1 + tol) | (lon < lon0 - tol) | (lon > lon1 + tol)):
            raise OutOfDomainError(f"evaluation point outside the interpolation box {self.bounds}")
        d2 = (lat[..., None] - self.centers[:, 0]) ** 2 + (lon[..., None] - self.centers[:, 1]) ** 2
        out = np.exp(-(self.epsilon ** 2) * d2) @ self.coefficients + self.tail[0]
        if self.tail.size == 3:
            out = out + self.tail[1] * (lat - self.origin[0]) + self.tail[2] * (lon - self.origin[1])
        return out


def fit_rbf(grid, values, epsilon=None, tail="linear"):
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise DataError(f"values shape {values.shape} does not match grid {grid.shape}")
    system = RbfSystem(grid, epsilon, tail)
    coef, tail_coef = system.solve(values.ravel())
    return RbfInterpolant(system.centers, coef, tail_coef, system.epsilon,
                          tuple(system.origin), tuple(grid.bounds))


def eval_rbf(interp, lat, lon):
    return float(interp(lat, lon))
