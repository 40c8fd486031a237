"""Scenario configuration: one INI-style file with sections.

Example::

    [scenario]
    ensembles = members_a.csv, members_b.csv
    output_dir = run
    seed = 0

    [expansion]
    M = 4

    [quadrature]
    p = 2

    [planner]
    dt = 10
    t_max = 20000

    [conflict]
    threshold_nm = 5
    probe_times = 1000, 1100
    condition_time = 900
    condition_bound_nm = 25

    [aircraft A]
    origin = 25.3, -18.4
    destination = 28.6, -14.6
    airspeed = 230
    altitude = 11000

Relative paths resolve against the directory holding the file.  The only
environment variable consulted is ``WINDCONFLICT_OUTPUT_DIR``, which
overrides ``output_dir``.
"""
import configparser
import hashlib
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .conflict import NAUTICAL_MILE
from .errors import ConfigError, DataError
from .trajectory import AircraftSpec

OUTPUT_ENV = "WINDCONFLICT_OUTPUT_DIR"
AIRCRAFT_PREFIX = "aircraft "
KNOWN = {
    "scenario": {"ensembles", "output_dir", "seed"},
    "expansion": {"m", "delta"},
    "quadrature": {"p"},
    "planner": {"dt", "t_max", "rbf_epsilon", "rbf_tail"},
    "conflict": {"threshold_nm", "probe_times", "condition_time", "condition_bound_nm",
                 "bootstrap", "force_probability"},
}
AIRCRAFT_KEYS = {"origin", "destination", "airspeed", "altitude"}


@dataclass(frozen=True)
class ScenarioConfig:
    ensembles: tuple
    aircraft: tuple
    output_dir: str
    M: int = None
    delta: float = None
    p: int = 2
    dt: float = 10.0
    t_max: float = 20_000.0
    threshold_nm: float = 5.0
    probe_times: tuple = ()
    condition: tuple = None  # (t1 seconds, bound in NM)
    seed: int = 0
    bootstrap: int = 0
    force_probability: bool = False
    rbf_epsilon: float = None
    rbf_tail: str = "linear"
    source: str = field(default=None, compare=False)

    def __post_init__(self):
        validate(self)

    @property
    def threshold(self):
        return self.threshold_nm * NAUTICAL_MILE

    @property
    def condition_bound(self):
        return None if self.condition is None else self.condition[1] * NAUTICAL_MILE

    def with_changes(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        d = asdict(self)
        d.pop("source")
        d["aircraft"] = [asdict(a) for a in self.aircraft]
        return d

    def digest(self):
        """SHA-256 of the resolved settings (output location excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


def validate(cfg):
    def bad(name, why):
        raise ConfigError(f"{name}: {why}")

    if len(cfg.ensembles) < 1:
        bad("scenario.ensembles", "at least one ensemble file is required")
    if (cfg.M is None) == (cfg.delta is None):
        bad("expansion.M", "set exactly one of M or delta")
    if cfg.M is not None and (not isinstance(cfg.M, int) or cfg.M < 1):
        bad("expansion.M", f"must be an integer >= 1, got {cfg.M!r}")
    if cfg.delta is not None and not 0 < cfg.delta <= 1:
        bad("expansion.delta", f"must lie in (0, 1], got {cfg.delta}")
    if not isinstance(cfg.p, int) or cfg.p < 1:
        bad("quadrature.p", f"must be an integer >= 1, got {cfg.p!r}")
    if not cfg.dt > 0:
        bad("planner.dt", f"must be > 0, got {cfg.dt}")
    if not cfg.t_max > cfg.dt:
        bad("planner.t_max", f"must exceed dt, got {cfg.t_max}")
    if cfg.rbf_epsilon is not None and not cfg.rbf_epsilon > 0:
        bad("planner.rbf_epsilon", f"must be > 0, got {cfg.rbf_epsilon}")
    if cfg.rbf_tail not in ("linear", "constant"):
        bad("planner.rbf_tail", f"must be 'linear' or 'constant', got {cfg.rbf_tail!r}")
    if not cfg.threshold_nm > 0:
        bad("conflict.threshold_nm", f"must be > 0, got {cfg.threshold_nm}")
    if any(not t >= 0 for t in cfg.probe_times):
        bad("conflict.probe_times", "times must be >= 0")
    if cfg.condition is not None:
        t1, bound = cfg.condition
        if not t1 >= 0:
            bad("conflict.condition_time", f"must be >= 0, got {t1}")
        if not bound > 0:
            bad("conflict.condition_bound_nm", f"must be > 0, got {bound}")
    if cfg.bootstrap < 0:
        bad("conflict.bootstrap", f"must be >= 0, got {cfg.bootstrap}")
    if len(cfg.aircraft) < 2:
        bad("aircraft", f"at least 2 aircraft are required, got {len(cfg.aircraft)}")
    ids = [a.id for a in cfg.aircraft]
    for aid in ids:
        if not re.fullmatch(r"[A-Za-z0-9_.]+", aid):
            bad(f"aircraft {aid}", "ids may contain only letters, digits, '_' and '.'")
    if len(set(ids)) != len(ids):
        bad("aircraft", "duplicate aircraft ids")


def _number(raw, name, kind=float):
    try:
        value = kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {kind.__name__}, got {raw!r}") from None
    if kind is float and not math.isfinite(value) and name != "conflict.condition_bound_nm":
        raise ConfigError(f"{name}: must be finite")
    return value


def _numbers(raw, name, count=None):
    parts = [x.strip() for x in raw.replace("\n", ",").split(",") if x.strip()]
    values = tuple(_number(x, name) for x in parts)
    if count is not None and len(values) != count:
        raise ConfigError(f"{name}: expected {count} comma-separated numbers, got {raw!r}")
    return values


def _aircraft(name, section):
    label = f"aircraft {name}"
    unknown = set(section) - AIRCRAFT_KEYS
    if unknown:
        raise ConfigError(f"{label}.{sorted(unknown)[0]}: unknown key")
    for key in ("origin", "destination", "airspeed"):
        if key not in section:
            raise ConfigError(f"{label}.{key}: missing")
    try:
        return AircraftSpec(
            name,
            _numbers(section["origin"], f"{label}.origin", 2),
            _numbers(section["destination"], f"{label}.destination", 2),
            _number(section["airspeed"], f"{label}.airspeed"),
            _number(section.get("altitude", "11000"), f"{label}.altitude"),
        )
    except DataError as exc:
        raise ConfigError(f"{label}: {exc}") from None


def parse_config(text, base_dir=".", source=None, env=None):
    """Build a :class:`ScenarioConfig` from INI text."""
    env = os.environ if env is None else env
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{exc.section}: duplicate section") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{exc.section}.{exc.option}: duplicate key") from None
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None

    aircraft = []
    for sect in parser.sections():
        if sect.lower().startswith(AIRCRAFT_PREFIX):
            aircraft.append(_aircraft(sect[len(AIRCRAFT_PREFIX):].strip(), parser[sect]))
        elif sect.lower() not in KNOWN:
            raise ConfigError(f"{sect}: unknown section")
        else:
            unknown = set(parser[sect]) - KNOWN[sect.lower()]
            if unknown:
                raise ConfigError(f"{sect}.{sorted(unknown)[0]}: unknown key")

    def get(sect, key, default=None):
        if parser.has_section(sect) and parser[sect].get(key, "").strip() != "":
            return parser[sect][key].strip()
        return default

    base = Path(base_dir)
    raw_ens = get("scenario", "ensembles")
    if raw_ens is None:
        raise ConfigError("scenario.ensembles: missing")
    ensembles = tuple(str(base / p.strip()) for p in raw_ens.replace("\n", ",").split(",") if p.strip())
    out = env.get(OUTPUT_ENV) or get("scenario", "output_dir")
    if out is None:
        raise ConfigError("scenario.output_dir: missing")
    out = str(base / out)

    M = get("expansion", "m")
    delta = get("expansion", "delta")
    t1 = get("conflict", "condition_time")
    bound = get("conflict", "condition_bound_nm")
    if (t1 is None) != (bound is None):
        raise ConfigError("conflict.condition_bound_nm: condition_time and condition_bound_nm go together")
    condition = None
    if t1 is not None:
        condition = (_number(t1, "conflict.condition_time"), _number(bound, "conflict.condition_bound_nm"))
    eps = get("planner", "rbf_epsilon")
    force = get("conflict", "force_probability", "false").lower()
    if force not in ("true", "false", "yes", "no", "1", "0"):
        raise ConfigError(f"conflict.force_probability: expected a boolean, got {force!r}")

    return ScenarioConfig(
        ensembles=ensembles,
        aircraft=tuple(aircraft),
        output_dir=out,
        M=None if M is None else _number(M, "expansion.M", int),
        delta=None if delta is None else _number(delta, "expansion.delta"),
        p=_number(get("quadrature", "p", "2"), "quadrature.p", int),
        dt=_number(get("planner", "dt", "10"), "planner.dt"),
        t_max=_number(get("planner", "t_max", "20000"), "planner.t_max"),
        threshold_nm=_number(get("conflict", "threshold_nm", "5"), "conflict.threshold_nm"),
        probe_times=_numbers(get("conflict", "probe_times", ""), "conflict.probe_times"),
        condition=condition,
        seed=_number(get("scenario", "seed", "0"), "scenario.seed", int),
        bootstrap=_number(get("conflict", "bootstrap", "0"), "conflict.bootstrap", int),
        force_probability=force in ("true", "yes", "1"),
        rbf_epsilon=None if eps is None else _number(eps, "planner.rbf_epsilon"),
        rbf_tail=get("planner", "rbf_tail", "linear"),
        source=source,
    )


def load_config(path, env=None):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent, str(path), env)
