"""Conflict verdicts from separation statistics.

Two screens are applied per aircraft pair.  The first is a 2-sigma envelope
of the separation distance, built from the quadrature nodes.  If that
envelope stays clear of the threshold, the separation PDF at the critical
instant is estimated with a Gaussian kernel density estimate, and the
probability of loss of separation is read off it.  Probabilities below a
threshold are exact Gaussian-mixture CDFs (sums of normal CDFs), so no
numerical integration of the density is involved.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .apc import design_matrix
from .ensemble_io import _frozen
from .errors import DataError, UndefinedConditionalError
from .trajectory import haversine_distance

NAUTICAL_MILE = 1852.0
DEFAULT_THRESHOLD = 5 * NAUTICAL_MILE
HIGH_RISK = 1e-2
NEGLIGIBLE = 1e-6
SQRT_2PI = np.sqrt(2.0 * np.pi)

CONFLICT_BY_ENVELOPE = "conflict-by-envelope"
NO_CONFLICT = "no-conflict"
CONFLICT_BY_PROBABILITY = "conflict-by-probability"
CLEAR_BY_PROBABILITY = "clear-by-probability"
FAILED = "failed"


@dataclass(frozen=True)
class EnvelopeSeries:
    times: np.ndarray
    mean: np.ndarray
    sigma: np.ndarray
    threshold: float = DEFAULT_THRESHOLD

    @property
    def lower(self):
        return self.mean - 2.0 * self.sigma

    @property
    def upper(self):
        return self.mean + 2.0 * self.sigma

    @property
    def argmin_index(self):
        return int(np.argmin(self.mean))


def envelope_series(node_separations, weights, times=None, threshold=DEFAULT_THRESHOLD):
    """Weighted quadrature mean and standard deviation of the separation at
    every step; ``node_separations`` is ``(n_tuples, T)``."""
    X = np.atleast_2d(np.asarray(node_separations, dtype=float))
    w = np.asarray(weights, dtype=float)
    if X.shape[0] != w.size:
        raise DataError(f"{X.shape[0]} node rows but {w.size} weights")
    if abs(w.sum() - 1.0) > 1e-10:
        raise DataError(f"quadrature weights sum to {w.sum()}, expected 1")
    mean = w @ X
    var = w @ (X - mean) ** 2
    times = np.arange(X.shape[1], dtype=float) if times is None else np.asarray(times, dtype=float)
    return EnvelopeSeries(_frozen(times), _frozen(mean), _frozen(np.sqrt(np.clip(var, 0.0, None))), float(threshold))


def envelope_verdict(env):
    """``(crosses, first crossing time)``: crossing means lower bound < threshold."""
    below = np.flatnonzero(env.lower < env.threshold)
    if below.size == 0:
        return False, None
    return True, float(env.times[below[0]])


def silverman_bandwidth(samples, d=1):
    """Silverman's rule ``(4 / ((d+2) q))^(1/(d+4)) * sigma_hat`` per axis.

    ``samples`` is ``(q,)`` or ``(q, d)``; the sample standard deviation uses
    ``q - 1`` in the denominator.
    """
    x = np.asarray(samples, dtype=float)
    q = x.shape[0]
    if q < 2:
        raise DataError("Silverman's rule needs at least 2 samples")
    sd = x.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise DataError("samples have zero variance; bandwidth undefined")
    return (4.0 / ((d + 2) * q)) ** (1.0 / (d + 4)) * sd


@dataclass(frozen=True)
class KdeModel:
    """Gaussian (product) kernel density estimate.

    ``samples`` is ``(q,)`` for ``d = 1`` or ``(q, 2)``; ``bandwidth`` is a
    scalar or one value per axis.
    """

    samples: np.ndarray
    bandwidth: np.ndarray

    @property
    def dimension(self):
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def n_samples(self):
        return self.samples.shape[0]

    def pdf(self, x):
        if self.dimension != 1:
            raise DataError("use pdf_grid for bivariate models")
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.samples) / self.bandwidth
        return np.exp(-0.5 * z ** 2).sum(-1) / (self.n_samples * self.bandwidth * SQRT_2PI)

    def pdf_grid(self, gx, gy):
        """Bivariate density on the tensor grid, shape ``(len(gx), len(gy))``."""
        hx, hy = self.bandwidth
        kx = np.exp(-0.5 * ((gx[None, :] - self.samples[:, :1]) / hx) ** 2) / (hx * SQRT_2PI)
        ky = np.exp(-0.5 * ((gy[None, :] - self.samples[:, 1:]) / hy) ** 2) / (hy * SQRT_2PI)
        return kx.T @ ky / self.n_samples

    def cdf_grid(self, gx, gy):
        hx, hy = self.bandwidth
        cx = ndtr((gx[None, :] - self.samples[:, :1]) / hx)
        cy = ndtr((gy[None, :] - self.samples[:, 1:]) / hy)
        return cx.T @ cy / self.n_samples

    def support(self, pad=6.0, n=401, axis=0):
        s = self.samples if self.dimension == 1 else self.samples[:, axis]
        h = float(np.ravel(self.bandwidth)[0 if self.dimension == 1 else axis])
        return np.linspace(s.min() - pad * h, s.max() + pad * h, n)


def kde_pdf(samples, eta=None):
    """Build a KDE; ``eta`` defaults to Silverman's rule (per axis)."""
    s = np.asarray(samples, dtype=float)
    if eta is None:
        d = 1 if s.ndim == 1 else s.shape[1]
        eta = silverman_bandwidth(s, d)
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise DataError("bandwidth must be > 0")
    return KdeModel(_frozen(s), _frozen(eta))


def kde_cdf_below(model, x0):
    """``P(X < x0)`` under a 1-D model: mean of ``Phi((x0 - s_i) / eta)``."""
    if model.dimension != 1:
        raise DataError("kde_cdf_below needs a 1-D model")
    return float(np.mean(ndtr((x0 - model.samples) / model.bandwidth)))


def kde_rectangle_below(model, x0, y0):
    """``P(X < x0, Y < y0)`` under a bivariate product-kernel model."""
    hx, hy = model.bandwidth
    cx = ndtr((x0 - model.samples[:, 0]) / hx)
    cy = ndtr((y0 - model.samples[:, 1]) / hy)
    return float(np.mean(cx * cy))


class PairSeparation:
    """Separation of two aircraft as a function of the muKL coordinates.

    Built from the PCE surrogates of each aircraft's latitude and longitude;
    the great-circle distance is taken after evaluating the positions, so the
    nonlinearity of the distance is not forced into the polynomial basis.
    Quacks like :class:`~windconflict.apc.Surrogate` for evaluation.
    """

    def __init__(self, lat_a, lon_a, lat_b, lon_b, radius):
        self.parts = (lat_a, lon_a, lat_b, lon_b)
        self.radius = float(radius)
        self.times = lat_a.times

    @property
    def n_steps(self):
        return self.times.size

    def _positions(self, xi, coeffs):
        Psi = design_matrix(self.parts[0].bases, self.parts[0].index_set, xi)
        return [Psi @ c for c in coeffs]

    def evaluate(self, xi, t_index=None):
        if t_index is None:
            coeffs = [s.coefficients for s in self.parts]
        else:
            coeffs = [s.coefficients[:, t_index] for s in self.parts]
        la, oa, lb, ob = self._positions(xi, coeffs)
        return haversine_distance((la, oa), (lb, ob), self.radius)

    def evaluate_at_time(self, xi, t):
        la, oa, lb, ob = self._positions(xi, [s.coefficients_at(t) for s in self.parts])
        return haversine_distance((la, oa), (lb, ob), self.radius)


@dataclass(frozen=True)
class ProbabilityEstimate:
    probability: float
    bandwidth: float
    n_samples: int
    warning: str = None

    @property
    def high_risk(self):
        return self.probability > HIGH_RISK


def _distance_samples(surrogate, xi_samples, t):
    xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    if isinstance(t, (int, np.integer)):
        return surrogate.evaluate(xi, int(t))
    return surrogate.evaluate_at_time(xi, float(t))


def _smoothed_bootstrap(xi, multiplier, seed):
    rng = np.random.default_rng(seed)
    q = xi.shape[0]
    rows = rng.integers(0, q, size=q * multiplier)
    h = silverman_bandwidth(xi, 1)
    return xi[rows] + rng.standard_normal((rows.size, xi.shape[1])) * h


def is_degenerate(samples):
    """True when the samples carry no usable spread for a KDE."""
    s = np.asarray(samples, dtype=float)
    return s.size < 2 or np.ptp(s) <= 1e-12 * max(1.0, np.abs(s).max())


def probability_from_samples(samples, threshold):
    s = np.asarray(samples, dtype=float)
    if is_degenerate(s):
        p = float(np.mean(s < threshold))
        msg = "distance samples have zero variance; probability is a hard threshold comparison"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return ProbabilityEstimate(p, 0.0, int(s.size), msg)
    model = kde_pdf(s)
    return ProbabilityEstimate(kde_cdf_below(model, threshold), float(model.bandwidth), int(s.size))


def conflict_probability(surrogate, xi_samples, threshold=DEFAULT_THRESHOLD, t=None, bootstrap=0, seed=0):
    """Probability that the separation at ``t`` is below ``threshold``.

    ``t`` is a time-step index (int) or a time in seconds (float).  The
    surrogate is evaluated at every row of ``xi_samples``; ``bootstrap > 0``
    adds a smoothed bootstrap of ``bootstrap * R`` rows instead.
    """
    xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    if bootstrap:
        xi = _smoothed_bootstrap(xi, int(bootstrap), seed)
    if t is None:
        raise DataError("a time index or time is required")
    return probability_from_samples(_distance_samples(surrogate, xi, t), threshold)


@dataclass(frozen=True)
class JointConditional:
    grid_x: np.ndarray
    grid_y: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    p_condition: float
    p_joint: float
    conditional: float
    p_marginal: float
    bandwidth: tuple


def joint_from_samples(d1, d2, bound, threshold=DEFAULT_THRESHOLD, grid_size=61, bandwidth_rule="marginal"):
    """Bivariate KDE of paired samples and ``P(d2 < threshold | d1 < bound)``.

    ``bandwidth_rule="marginal"`` uses the 1-D Silverman bandwidth on each
    axis, so the bivariate model's marginals are exactly the 1-D estimates;
    ``"silverman2d"`` uses the ``d = 2`` exponent instead.
    """
    pairs = np.column_stack([np.asarray(d1, dtype=float), np.asarray(d2, dtype=float)])
    if bandwidth_rule == "marginal":
        eta = np.array([silverman_bandwidth(pairs[:, 0], 1), silverman_bandwidth(pairs[:, 1], 1)])
    elif bandwidth_rule == "silverman2d":
        eta = silverman_bandwidth(pairs, 2)
    else:
        raise DataError(f"unknown bandwidth rule {bandwidth_rule!r}")
    model = kde_pdf(pairs, eta)
    p_cond = float(np.mean(ndtr((bound - pairs[:, 0]) / eta[0])))
    if p_cond < 1e-12:
        raise UndefinedConditionalError(
            f"conditioning event d(t1) < {bound} has probability {p_cond:.3e}; conditional undefined")
    p_joint = kde_rectangle_below(model, bound, threshold)
    p_marg = float(np.mean(ndtr((threshold - pairs[:, 1]) / eta[1])))
    gx = model.support(4.0, grid_size, axis=0)
    gy = model.support(4.0, grid_size, axis=1)
    return JointConditional(_frozen(gx), _frozen(gy), _frozen(model.pdf_grid(gx, gy)), _frozen(model.cdf_grid(gx, gy)),
                            p_cond, p_joint, p_joint / p_cond, p_marg, (float(eta[0]), float(eta[1])))


def joint_conditional(surrogate, xi_samples, t1, t2, bound, threshold=DEFAULT_THRESHOLD, **kwargs):
    """Joint PDF/CDF of the separations at ``t1`` and ``t2`` and the
    probability of conflict at ``t2`` given ``d(t1) < bound``."""
    if t1 == t2:
        raise DataError("t1 and t2 must differ")
    d1 = _distance_samples(surrogate, xi_samples, t1)
    d2 = _distance_samples(surrogate, xi_samples, t2)
    return joint_from_samples(d1, d2, bound, threshold, **kwargs)


def ensemble_baseline(member_separations, threshold=DEFAULT_THRESHOLD, t_index=None, condition=None):
    """Member-counting estimate: fraction of members below ``threshold`` at
    ``t_index``; with ``condition=(t1_index, bound)`` also the fraction among
    members with ``d(t1) < bound``.  Returns ``(probability, conditional)``."""
    D = np.atleast_2d(np.asarray(member_separations, dtype=float))
    if D.shape[0] < 1:
        raise DataError("need at least one member")
    t_index = int(np.argmin(D.mean(axis=0))) if t_index is None else int(t_index)
    hit = D[:, t_index] < threshold
    p = float(hit.sum() / D.shape[0])
    if condition is None:
        return p, None
    t1, bound = condition
    given = D[:, int(t1)] < bound
    if not given.any():
        raise UndefinedConditionalError(f"no member has d(t1) < {bound}; conditional undefined")
    return p, float((hit & given).sum() / given.sum())


@dataclass(frozen=True)
class ConflictVerdict:
    pair: tuple
    verdict: str
    t_min_distance: float = None
    probability: float = None
    crossing_time: float = None
    conditional: list = field(default_factory=list)
    probes: list = field(default_factory=list)
    note: str = None

    @property
    def high_risk(self):
        return self.probability is not None and self.probability > HIGH_RISK


def classify(env, probability=None):
    """Verdict label from the envelope screen and, if computed, the probability."""
    crosses, _ = envelope_verdict(env)
    if crosses:
        return CONFLICT_BY_ENVELOPE
    if probability is None or probability < NEGLIGIBLE:
        return NO_CONFLICT
    return CONFLICT_BY_PROBABILITY if probability > HIGH_RISK else CLEAR_BY_PROBABILITY
