"""Deterministic trajectory prediction under a known wind field.

The reference planner flies a constant true airspeed at cruise altitude and
solves the wind triangle at every instant so that the ground velocity points
along the great-circle bearing to the destination.  Position evolves by the
horizontal kinematics on a sphere of radius ``R_E + h``::

    dphi/dt    = (V cos chi + V_WN) / (R_E + h)
    dlambda/dt = (V sin chi + V_WE) / (cos(phi) (R_E + h))

integrated with classical fixed-step RK4.  Every planner works on batches:
``wind(lat, lon)`` receives one point per realization and returns that
realization's wind, so many wind fields are flown in a single pass.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .ensemble_io import RbfSystem, _frozen
from .errors import DataError, OutOfDomainError, PlannerError

EARTH_RADIUS = 6_371_000.0
ARRIVAL_TOLERANCE = 2_000.0
DEFAULT_DT = 10.0


@dataclass(frozen=True)
class AircraftSpec:
    id: str
    origin: tuple
    destination: tuple
    airspeed: float
    altitude: float = 11_000.0

    def __post_init__(self):
        origin = tuple(float(x) for x in self.origin)
        dest = tuple(float(x) for x in self.destination)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "destination", dest)
        if not self.airspeed > 0:
            raise DataError(f"aircraft {self.id}: airspeed must be > 0")
        if origin == dest:
            raise DataError(f"aircraft {self.id}: origin equals destination")
        for lat, _ in (origin, dest):
            if not abs(lat) < 90:
                raise DataError(f"aircraft {self.id}: latitude {lat} must satisfy |lat| < 90")

    @property
    def radius(self):
        return EARTH_RADIUS + self.altitude


@dataclass(frozen=True)
class Trajectory:
    """States on ``times``; after ``arrival_index`` the aircraft sits at its
    destination.  ``arrival_index`` is ``None`` for a partial trajectory."""

    aircraft_id: str
    times: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    heading: np.ndarray
    arrival_index: int
    radius: float

    @property
    def n_steps(self):
        return self.times.size

    @property
    def arrival_time(self):
        return None if self.arrival_index is None else float(self.times[self.arrival_index])

    def extended(self, n_steps):
        """Copy padded to ``n_steps`` samples by holding the final state."""
        if n_steps < self.n_steps:
            raise DataError("cannot shorten a trajectory")
        pad = n_steps - self.n_steps
        if pad == 0:
            return self
        dt = self.times[1] - self.times[0]
        times = self.times[0] + dt * np.arange(n_steps)
        hold = lambda a: np.concatenate([a, np.full(pad, a[-1])])  # noqa: E731
        return Trajectory(self.aircraft_id, _frozen(times), _frozen(hold(self.lat)), _frozen(hold(self.lon)),
                          _frozen(hold(self.heading)), self.arrival_index, self.radius)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lat", "lon", "heading"])
            for row in zip(self.times, self.lat, self.lon, self.heading):
                w.writerow(["%.9g" % x for x in row])


def align(trajectories):
    """Pad trajectories onto the longest common time grid."""
    n = max(t.n_steps for t in trajectories)
    return [t.extended(n) for t in trajectories]


# --- geometry -------------------------------------------------------------------

def haversine_distance(p1, p2, radius=EARTH_RADIUS):
    """Great-circle distance between (lat, lon) points in degrees."""
    lat1, lon1 = (np.radians(np.asarray(x, dtype=float)) for x in p1)
    lat2, lon2 = (np.radians(np.asarray(x, dtype=float)) for x in p2)
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    d = 2.0 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


def initial_bearing(lat, lon, lat2, lon2):
    """Great-circle bearing (radians clockwise from north) toward point 2."""
    p1, p2 = np.radians(lat), np.radians(lat2)
    dl = np.radians(np.asarray(lon2) - np.asarray(lon))
    y = np.sin(dl) * np.cos(p2)
    x = np.cos(p1) * np.sin(p2) - np.sin(p1) * np.cos(p2) * np.cos(dl)
    return np.arctan2(y, x)


def cross_track_angle(lat, lon, start, end):
    """Angular distance (degrees) of points from the great circle start-end."""
    d13 = haversine_distance(start, (lat, lon), 1.0)
    t13 = initial_bearing(start[0], start[1], lat, lon)
    t12 = initial_bearing(start[0], start[1], end[0], end[1])
    return np.degrees(np.abs(np.arcsin(np.sin(d13) * np.sin(t13 - t12))))


def wind_triangle(course, wind_e, wind_n, airspeed):
    """Heading and ground speed that keep the ground track on ``course``.

    With ``w_x`` the wind component to the right of the course, the heading
    is ``course - asin(w_x / V)``.
    """
    course = np.asarray(course, dtype=float)
    cross = wind_e * np.cos(course) - wind_n * np.sin(course)
    along = wind_e * np.sin(course) + wind_n * np.cos(course)
    ratio = cross / airspeed
    if np.any(np.abs(ratio) >= 1.0):
        raise PlannerError("crosswind component reaches the true airspeed; track cannot be held")
    crab = np.arcsin(ratio)
    ground = airspeed * np.cos(crab) + along
    if np.any(ground <= 0.0):
        raise PlannerError("headwind exceeds the available ground speed")
    return course - crab, ground


# --- wind views -----------------------------------------------------------------

class UniformWind:
    """Spatially constant wind, broadcast over any batch."""

    n_realizations = 1

    def __init__(self, wind_e, wind_n):
        self.wind_e = float(wind_e)
        self.wind_n = float(wind_n)

    def __call__(self, lat, lon):
        lat = np.asarray(lat, dtype=float)
        return np.full(lat.shape, self.wind_e), np.full(lat.shape, self.wind_n)


class WindFieldView:
    """``N`` RBF-interpolated wind realizations sharing one collocation system.

    Calling the view with arrays of length ``N`` evaluates realization ``j``
    at point ``j``.  Evaluation outside the grid box raises
    :class:`OutOfDomainError`.
    """

    def __init__(self, system, coef_u, tail_u, coef_v, tail_v):
        self.system = system
        self.coef_u = np.atleast_2d(coef_u)
        self.tail_u = np.atleast_2d(tail_u)
        self.coef_v = np.atleast_2d(coef_v)
        self.tail_v = np.atleast_2d(tail_v)

    @property
    def n_realizations(self):
        return self.coef_u.shape[0]

    @property
    def grid(self):
        return self.system.grid

    def __call__(self, lat, lon):
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        self.system.check_domain(lat, lon)
        K = self.system.kernel_at(lat, lon)
        P = self.system.tail_basis(lat, lon)
        if self.n_realizations == 1:
            u = K @ self.coef_u[0] + P @ self.tail_u[0]
            v = K @ self.coef_v[0] + P @ self.tail_v[0]
        else:
            if lat.size != self.n_realizations:
                raise DataError(f"batch of {lat.size} points for {self.n_realizations} realizations")
            u = np.einsum("ij,ij->i", K, self.coef_u) + np.einsum("ij,ij->i", P, self.tail_u)
            v = np.einsum("ij,ij->i", K, self.coef_v) + np.einsum("ij,ij->i", P, self.tail_v)
        return u, v

    def member(self, j):
        return WindFieldView(self.system, self.coef_u[j], self.tail_u[j], self.coef_v[j], self.tail_v[j])

    def subset(self, idx):
        return WindFieldView(self.system, self.coef_u[idx], self.tail_u[idx], self.coef_v[idx], self.tail_v[idx])

    @classmethod
    def from_fields(cls, grid, u_fields, v_fields, epsilon=None, system=None, tail="linear"):
        """Views of gridded fields, ``u_fields`` of shape ``(N, n_lat, n_lon)``."""
        system = RbfSystem(grid, epsilon, tail) if system is None else system
        u = np.asarray(u_fields, dtype=float).reshape(-1, grid.size)
        v = np.asarray(v_fields, dtype=float).reshape(-1, grid.size)
        cu, tu = system.solve(u.T)
        cv, tv = system.solve(v.T)
        return cls(system, cu.T, tu.T, cv.T, tv.T)

    @classmethod
    def from_expansion(cls, exp, xi, epsilon=None, system=None, tail="linear"):
        """Views of muKL fields at coordinate rows ``xi`` (shape ``(N, m)``).

        The mean fields and the scaled eigenfunction halves are interpolated
        once; each realization is their linear combination.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        system = RbfSystem(exp.grid, epsilon, tail) if system is None else system
        m = xi.shape[1]
        mu, mv = exp.mode_fields(m)
        cu, tu = system.solve(np.column_stack([exp.mean_u, mu]))
        cv, tv = system.solve(np.column_stack([exp.mean_v, mv]))
        lift = np.column_stack([np.ones(xi.shape[0]), xi])
        return cls(system, lift @ cu.T, lift @ tu.T, lift @ cv.T, lift @ tv.T)


# --- planners -------------------------------------------------------------------

def _n_batch(wind):
    return int(getattr(wind, "n_realizations", 1))


def propagate(spec, wind, dt=DEFAULT_DT, t_max=20_000.0, t_end=None, n=None):
    """Integrate a batch of realizations on a shared fixed-step grid.

    Stops when every realization has arrived (or at ``t_end`` if given, in
    which case arrival is not required).  Returns ``(times, lat, lon,
    heading, arrival_index)`` with state arrays of shape ``(N, T)`` and
    ``arrival_index`` equal to -1 for realizations still en route.
    """
    if not dt > 0:
        raise DataError(f"dt must be > 0, got {dt}")
    n = _n_batch(wind) if n is None else n
    radius = spec.radius
    V = float(spec.airspeed)
    dlat, dlon = spec.destination
    deg = 180.0 / math.pi

    def rates(lat, lon):
        course = initial_bearing(lat, lon, dlat, dlon)
        we, wn = wind(lat, lon)
        chi, _ = wind_triangle(course, we, wn, V)
        rate_lat = (V * np.cos(chi) + wn) / radius * deg
        rate_lon = (V * np.sin(chi) + we) / (np.cos(np.radians(lat)) * radius) * deg
        return rate_lat, rate_lon, chi

    lat = np.full(n, spec.origin[0])
    lon = np.full(n, spec.origin[1])
    active = np.ones(n, dtype=bool)
    arrival = np.full(n, -1)
    lats, lons, heads = [lat.copy()], [lon.copy()], []
    limit = t_max if t_end is None else t_end
    n_steps = int(math.floor(limit / dt + 1e-9))
    k = 0
    try:
        while True:
            k1a, k1o, chi = rates(lat, lon)
            heads.append(np.where(active, np.degrees(chi), heads[-1] if heads else np.degrees(chi)))
            if (t_end is None and not active.any()) or k >= n_steps:
                break
            k2a, k2o, _ = rates(lat + 0.5 * dt * k1a, lon + 0.5 * dt * k1o)
            k3a, k3o, _ = rates(lat + 0.5 * dt * k2a, lon + 0.5 * dt * k2o)
            k4a, k4o, _ = rates(lat + dt * k3a, lon + dt * k3o)
            new_lat = lat + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
            new_lon = lon + dt / 6.0 * (k1o + 2 * k2o + 2 * k3o + k4o)
            k += 1
            lat = np.where(active, new_lat, lat)
            lon = np.where(active, new_lon, lon)
            remaining = haversine_distance((lat, lon), (dlat, dlon), radius)
            reached = active & (np.atleast_1d(remaining) <= ARRIVAL_TOLERANCE)
            if reached.any():
                lat = np.where(reached, dlat, lat)
                lon = np.where(reached, dlon, lon)
                arrival[reached] = k
                active &= ~reached
            lats.append(lat.copy())
            lons.append(lon.copy())
    except (PlannerError, OutOfDomainError) as exc:
        heads = heads[:len(lats)] + [np.full(n, np.nan)] * (len(lats) - len(heads))
        partial = (dt * np.arange(len(lats)), np.array(lats).T, np.array(lons).T, np.array(heads).T, arrival)
        if isinstance(exc, PlannerError):
            raise PlannerError(f"aircraft {spec.id}: {exc}", partial) from None
        raise OutOfDomainError(f"aircraft {spec.id}: {exc}") from None
    times = dt * np.arange(len(lats))
    if t_end is None and active.any():
        raise PlannerError(
            f"aircraft {spec.id}: t_max={t_max} s exceeded before arrival",
            (times, np.array(lats).T, np.array(lons).T, np.array(heads).T, arrival))
    return times, np.array(lats).T, np.array(lons).T, np.array(heads).T, arrival


def _to_trajectories(spec, times, lats, lons, heads, arrival):
    out = []
    for j in range(lats.shape[0]):
        a = int(arrival[j])
        out.append(Trajectory(spec.id, _frozen(times), _frozen(lats[j]), _frozen(lons[j]), _frozen(heads[j]),
                              a if a >= 0 else None, spec.radius))
    return out


class WindTriangleTracker:
    """Reference planner: constant airspeed, wind-corrected great-circle tracking."""

    def __call__(self, spec, wind, dt=DEFAULT_DT, t_max=20_000.0):
        if _n_batch(wind) != 1:
            raise DataError("plan a single realization per call; use plan_batch for batches")
        return self.plan_batch(spec, wind, dt, t_max)[0]

    def plan_batch(self, spec, wind, dt=DEFAULT_DT, t_max=20_000.0):
        try:
            res = propagate(spec, wind, dt, t_max)
        except PlannerError as exc:
            partial = exc.partial
            if partial is not None:
                partial = _to_trajectories(spec, *partial)
                partial = partial[0] if len(partial) == 1 else partial
            raise PlannerError(str(exc), partial) from None
        return _to_trajectories(spec, *res)


def plan_trajectory(spec, wind, dt=DEFAULT_DT, t_max=20_000.0):
    return WindTriangleTracker()(spec, wind, dt, t_max)


def plan_many(planner, spec, wind, dt=DEFAULT_DT, t_max=20_000.0):
    """Plan every realization of ``wind`` with any planner, on one time grid."""
    if hasattr(planner, "plan_batch"):
        trajs = planner.plan_batch(spec, wind, dt, t_max)
    else:
        n = _n_batch(wind)
        trajs = [planner(spec, wind.member(j) if n > 1 else wind, dt, t_max) for j in range(n)]
    return align(trajs)


def separation_series(traj_a, traj_b):
    """Great-circle separation (m) at each shared time step."""
    if traj_a.n_steps != traj_b.n_steps or not np.allclose(traj_a.times, traj_b.times, rtol=0, atol=1e-9):
        raise DataError(f"trajectories {traj_a.aircraft_id} and {traj_b.aircraft_id} are on different time grids")
    radius = 0.5 * (traj_a.radius + traj_b.radius)
    return haversine_distance((traj_a.lat, traj_a.lon), (traj_b.lat, traj_b.lon), radius)
