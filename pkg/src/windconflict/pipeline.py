"""Staged pipeline behind the command line.

Stages persist their results in the run directory so each one can be rerun
on its own::

    ingest     ensemble.csv, config.json
    decompose  mukl.bin, explained_variance.csv
    surrogate  nodes.csv, planning.json, trajectories/, surrogates/
    detect     report.json plus plot-ready CSV series
    report     the CSV series again, summary.txt, optional figures/

A later stage builds missing earlier artifacts in-line, except ``report``,
which only reads.  ``manifest.json`` records the config hash, library
versions, stage timings and every artifact written; timings never enter
``report.json``, which is byte-for-byte reproducible.
"""
import contextlib
import csv
import itertools
import json
import platform
import time
import warnings
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import conflict as cf
from .apc import bases_from_samples, build_index_set, fit_surrogate, load_surrogate, save_surrogate, tensor_nodes
from .ensemble_io import _fmt, load_ensemble, pool_ensembles, save_ensemble
from .errors import (ConfigError, MissingStageError, NumericalError, OutOfDomainError, PlannerError,
                     UndefinedConditionalError, WindConflictError)
from .mukl import build_expansion, explained_variance_table, load_expansion, n_selectable_modes, save_expansion
from .trajectory import AircraftSpec, WindFieldView, WindTriangleTracker, separation_series

REPORT_VERSION = 1


class RunDir:
    """File layout of one run."""

    def __init__(self, root):
        self.root = Path(root)

    def __truediv__(self, name):
        return self.root / name

    @property
    def ensemble(self):
        return self.root / "ensemble.csv"

    @property
    def config(self):
        return self.root / "config.json"

    @property
    def mukl(self):
        return self.root / "mukl.bin"

    @property
    def variance(self):
        return self.root / "explained_variance.csv"

    @property
    def nodes(self):
        return self.root / "nodes.csv"

    @property
    def planning(self):
        return self.root / "planning.json"

    @property
    def report(self):
        return self.root / "report.json"

    @property
    def summary(self):
        return self.root / "summary.txt"

    @property
    def manifest(self):
        return self.root / "manifest.json"

    def surrogate(self, aircraft_id, var):
        return self.root / "surrogates" / f"{aircraft_id}_{var}.bin"

    def separation(self, pair):
        return self.root / "surrogates" / f"separation_{pair_key(pair)}.bin"

    def trajectory(self, aircraft_id, node):
        return self.root / "trajectories" / aircraft_id / f"node_{node:04d}.csv"

    def require(self, path, stage):
        if not path.exists():
            raise MissingStageError(stage, path)
        return path


def pair_key(pair):
    return f"{pair[0]}-{pair[1]}"


def _rel(run, path):
    return Path(path).relative_to(run.root).as_posix()


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else _fmt(x) for x in row])


def _num(x):
    """JSON-safe float (infinities become strings)."""
    if x is None:
        return None
    x = float(x)
    if np.isnan(x):
        return "nan"
    return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")


def versions():
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"windconflict": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _update_manifest(run, stage, seconds, written, config_hash=None):
    path = run.manifest
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest["versions"] = versions()
    if config_hash is not None:
        manifest["config_hash"] = config_hash
    manifest.setdefault("timings", {})[stage] = round(seconds, 6)
    arts = set(manifest.get("artifacts", [])) | {_rel(run, p) for p in written}
    manifest["artifacts"] = sorted(a for a in arts if (run.root / a).exists())
    _write_json(path, manifest)


@contextlib.contextmanager
def _stage(name):
    """Tag errors escaping a stage with the stage name."""
    try:
        yield
    except WindConflictError as exc:
        if getattr(exc, "stage_context", None) is None:
            exc.stage_context = name
        raise


# --- ingest / decompose -------------------------------------------------------

def ingest(cfg):
    """Load and pool the configured ensembles into ``ensemble.csv``."""
    run = RunDir(cfg.output_dir)
    t0 = time.perf_counter()
    with _stage("ingest"):
        run.root.mkdir(parents=True, exist_ok=True)
        ens = pool_ensembles([load_ensemble(p) for p in cfg.ensembles])
        save_ensemble(ens, run.ensemble)
        _write_json(run.config, _json_safe(cfg.to_dict()))
    _update_manifest(run, "ingest", time.perf_counter() - t0, [run.ensemble, run.config], cfg.digest())
    return ens


def _ensemble(cfg, run):
    if not run.ensemble.exists():
        return ingest(cfg)
    return load_ensemble(run.ensemble)


def decompose(cfg):
    """muKL decomposition; writes the archive and the explained-variance table."""
    run = RunDir(cfg.output_dir)
    ens = _ensemble(cfg, run)
    t0 = time.perf_counter()
    with _stage("decompose"):
        exp = build_expansion(ens, M=cfg.M, delta=cfg.delta, allow_degenerate=True)
        save_expansion(exp, run.mukl)
        table = explained_variance_table(exp, n_selectable_modes(exp.eigenvalues))
        _write_csv(run.variance, ["k", "percent", "cumulative_percent"], table)
    _update_manifest(run, "decompose", time.perf_counter() - t0, [run.mukl, run.variance], cfg.digest())
    return exp


def _expansion(cfg, run):
    if not run.mukl.exists():
        return decompose(cfg)
    exp = load_expansion(run.mukl)
    if cfg.M is not None and exp.M not in (0, cfg.M):
        return decompose(cfg)
    return exp


# --- surrogate ----------------------------------------------------------------

def _planner():
    return WindTriangleTracker()


def surrogate(cfg):
    """Fly every aircraft at every quadrature node tuple and fit the PCEs.

    Each aircraft's latitude and longitude get a surrogate, and every pair
    gets a surrogate of its node separations.  An aircraft whose planning
    fails at any node tuple is recorded in ``planning.json``; pairs
    involving it are reported as failed downstream.
    """
    run = RunDir(cfg.output_dir)
    exp = _expansion(cfg, run)
    t0 = time.perf_counter()
    written = []
    with _stage("surrogate"):
        bases = bases_from_samples(exp.xi_samples, cfg.p)
        index_set = build_index_set(exp.M, cfg.p)
        tuples, weights = tensor_nodes(bases)
        rows = [[k] + list(t) + [w] for k, (t, w) in enumerate(zip(tuples, weights))]
        _write_csv(run.nodes, ["node"] + [f"xi{k + 1}" for k in range(exp.M)] + ["weight"], rows)
        written.append(run.nodes)

        wind = WindFieldView.from_expansion(exp, tuples, cfg.rbf_epsilon, tail=cfg.rbf_tail)
        planner = _planner()
        status, planned = {}, {}
        for spec in cfg.aircraft:
            try:
                planned[spec.id] = planner.plan_batch(spec, wind, cfg.dt, cfg.t_max)
                status[spec.id] = {"status": "ok"}
            except (PlannerError, OutOfDomainError) as exc:
                status[spec.id] = {"status": "failed", "message": str(exc)}
        if planned:
            n_steps = max(t.n_steps for trajs in planned.values() for t in trajs)
            planned = {aid: [t.extended(n_steps) for t in trajs] for aid, trajs in planned.items()}
        for aid, trajs in planned.items():
            status[aid]["arrival_times"] = [t.arrival_time for t in trajs]
            times = trajs[0].times
            for var in ("lat", "lon"):
                s = fit_surrogate(np.array([getattr(t, var) for t in trajs]), bases, index_set, times)
                path = run.surrogate(aid, var)
                path.parent.mkdir(parents=True, exist_ok=True)
                save_surrogate(s, path)
                written.append(path)
            for k, t in enumerate(trajs):
                path = run.trajectory(aid, k)
                path.parent.mkdir(parents=True, exist_ok=True)
                t.to_csv(path)
                written.append(path)
        for a, b in itertools.combinations(cfg.aircraft, 2):
            if a.id in planned and b.id in planned:
                seps = np.array([separation_series(x, y) for x, y in zip(planned[a.id], planned[b.id])])
                s = fit_surrogate(seps, bases, index_set, planned[a.id][0].times)
                save_surrogate(s, run.separation((a.id, b.id)))
                written.append(run.separation((a.id, b.id)))
        _write_json(run.planning, {"aircraft": status, "dt": cfg.dt, "n_nodes": int(tuples.shape[0])})
        written.append(run.planning)
    _update_manifest(run, "surrogate", time.perf_counter() - t0, written, cfg.digest())
    return status


# --- detect -------------------------------------------------------------------

def pair_separation(run, a, b):
    """:class:`~windconflict.conflict.PairSeparation` from persisted surrogates."""
    parts = [load_surrogate(run.require(run.surrogate(x.id, v), "surrogate"))
             for x in (a, b) for v in ("lat", "lon")]
    return cf.PairSeparation(*parts, radius=0.5 * (a.radius + b.radius))


def _baseline_separations(cfg, ens, cache):
    """Member-by-member planning on the full (untruncated) ensemble fields."""
    if "views" not in cache:
        cache["views"] = WindFieldView.from_fields(ens.grid, ens.u, ens.v, cfg.rbf_epsilon, tail=cfg.rbf_tail)
    out = {}
    for spec in cfg.aircraft:
        if spec.id not in cache:
            try:
                cache[spec.id] = _planner().plan_batch(spec, cache["views"], cfg.dt, cfg.t_max)
            except (PlannerError, OutOfDomainError) as exc:
                cache[spec.id] = exc
        out[spec.id] = cache[spec.id]
    return out


def _pair_baseline(cfg, trajs_a, trajs_b, k_star, n_steps):
    n = max(n_steps, trajs_a[0].n_steps, trajs_b[0].n_steps)
    ta = [t.extended(n) for t in trajs_a]
    tb = [t.extended(n) for t in trajs_b]
    D = np.array([separation_series(x, y) for x, y in zip(ta, tb)])
    cond = None
    if cfg.condition is not None:
        cond = (int(round(cfg.condition[0] / cfg.dt)), cfg.condition_bound)
        if cond[0] >= n:
            cond = (n - 1, cond[1])
    rec = {"n_members": int(D.shape[0]), "probability": None, "conditional": None, "note": None}
    try:
        p, c = cf.ensemble_baseline(D, cfg.threshold, k_star, cond)
        rec["probability"], rec["conditional"] = p, c
    except UndefinedConditionalError as exc:
        rec["probability"] = cf.ensemble_baseline(D, cfg.threshold, k_star)[0]
        rec["note"] = str(exc)
    return rec, D


def _analyse_pair(cfg, run, exp, a, b, planning, base_trajs):
    pair = (a.id, b.id)
    rec = {"pair": list(pair), "verdict": cf.FAILED, "note": None, "probability": None,
           "bandwidth_m": None, "warning": None, "probes": [], "conditional": [], "baseline": None,
           "envelope_crossing_time": None, "t_min_distance": None, "min_mean_separation_m": None,
           "sigma_at_min_m": None, "high_risk": False}
    failed = [x for x in pair if planning["aircraft"][x]["status"] != "ok"]
    if failed:
        rec["note"] = "; ".join(planning["aircraft"][x]["message"] for x in failed)
        return rec, None
    sep = load_surrogate(run.require(run.separation(pair), "surrogate"))
    env = cf.envelope_series(sep.node_outputs, sep.tensor_weights, sep.times, cfg.threshold)
    crosses, t_cross = cf.envelope_verdict(env)
    k = env.argmin_index
    rec.update(envelope_crossing_time=t_cross, t_min_distance=float(env.times[k]),
               min_mean_separation_m=float(env.mean[k]), sigma_at_min_m=float(env.sigma[k]))
    model = pair_separation(run, a, b)
    xi = exp.xi_samples
    probability = None
    if not crosses or cfg.force_probability:
        est = cf.conflict_probability(model, xi, cfg.threshold, t=k, bootstrap=cfg.bootstrap, seed=cfg.seed)
        probability = est.probability
        rec.update(probability=probability, bandwidth_m=est.bandwidth, warning=est.warning)
        for t in cfg.probe_times:
            probe = {"t": float(t), "probability": None, "note": None}
            try:
                probe["probability"] = cf.conflict_probability(
                    model, xi, cfg.threshold, t=float(t), bootstrap=cfg.bootstrap, seed=cfg.seed).probability
            except WindConflictError as exc:
                probe["note"] = str(exc)
            rec["probes"].append(probe)
        if cfg.condition is not None:
            t1, _ = cfg.condition
            c = {"t1": float(t1), "bound_m": _num(cfg.condition_bound), "t2": float(env.times[k]),
                 "probability": None, "p_condition": None, "p_joint": None, "note": None}
            try:
                jc = cf.joint_conditional(model, xi, float(t1), float(env.times[k]), cfg.condition_bound, cfg.threshold)
                c.update(probability=jc.conditional, p_condition=jc.p_condition, p_joint=jc.p_joint)
            except WindConflictError as exc:
                c["note"] = str(exc)
            rec["conditional"].append(c)
    rec["verdict"] = cf.classify(env, probability)
    risky = [probability] + [p["probability"] for p in rec["probes"]] + [c["probability"] for c in rec["conditional"]]
    rec["high_risk"] = any(p is not None and p > cf.HIGH_RISK for p in risky)

    D = None
    ta, tb = base_trajs[a.id], base_trajs[b.id]
    if isinstance(ta, Exception) or isinstance(tb, Exception):
        rec["baseline"] = {"n_members": None, "probability": None, "conditional": None,
                           "note": "; ".join(str(x) for x in (ta, tb) if isinstance(x, Exception))}
    else:
        rec["baseline"], D = _pair_baseline(cfg, ta, tb, k, sep.n_steps)
    return rec, D


def detect(cfg):
    """Envelope screen, probabilities and the ensemble baseline for every pair."""
    run = RunDir(cfg.output_dir)
    if not run.planning.exists():
        surrogate(cfg)
    exp = _expansion(cfg, run)
    ens = _ensemble(cfg, run)
    planning = json.loads(run.planning.read_text())
    t0 = time.perf_counter()
    with _stage("detect"), warnings.catch_warnings():
        # degenerate-sample warnings are recorded per pair in the report
        warnings.simplefilter("ignore", RuntimeWarning)
        cache = {}
        base = _baseline_separations(cfg, ens, cache)
        pairs, member_seps = [], {}
        for a, b in itertools.combinations(cfg.aircraft, 2):
            rec, D = _analyse_pair(cfg, run, exp, a, b, planning, base)
            pairs.append(rec)
            if D is not None:
                member_seps[pair_key((a.id, b.id))] = D
        report = {
            "version": REPORT_VERSION,
            "config_hash": cfg.digest(),
            "M": exp.M,
            "p": cfg.p,
            "n_members": exp.n_members,
            "explained_percent": exp.explained_percent,
            "threshold_m": cfg.threshold,
            "dt": cfg.dt,
            "pairs": pairs,
        }
        written = write_plot_data(run, cfg, exp, report, member_seps)
        for rec in pairs:
            rec["files"] = written.get(pair_key(rec["pair"]), {})
        report = _json_safe(report)
        _write_json(run.report, report)
    paths = [run.report] + _file_paths(run, written)
    _update_manifest(run, "detect", time.perf_counter() - t0, paths, cfg.digest())
    return report


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _file_paths(run, files):
    out = []
    for entry in files.values():
        for v in entry.values():
            out += [run.root / f for f in ([v] if isinstance(v, str) else v)]
    return out


# --- plot-ready series ----------------------------------------------------------

def _time_label(t):
    return ("%.3f" % t).rstrip("0").rstrip(".")


def write_plot_data(run, cfg, exp, report, member_seps=None):
    """Envelope, PDF and joint-PDF CSVs per pair; returns their relative paths."""
    files = {}
    plots = run / "series"
    aircraft = {a.id: a for a in cfg.aircraft}
    for rec in report["pairs"]:
        if rec["verdict"] == cf.FAILED:
            continue
        key = pair_key(rec["pair"])
        a, b = (aircraft[x] for x in rec["pair"])
        out = {}
        sep = load_surrogate(run.require(run.separation(rec["pair"]), "surrogate"))
        env = cf.envelope_series(sep.node_outputs, sep.tensor_weights, sep.times, cfg.threshold)
        path = plots / f"envelope_{key}.csv"
        _write_csv(path, ["t", "mean", "sigma", "lower", "upper"],
                   zip(env.times, env.mean, env.sigma, env.lower, env.upper))
        out["envelope"] = _rel(run, path)
        if rec["probability"] is not None:
            model = pair_separation(run, a, b)
            times = [("tstar", float(rec["t_min_distance"]))]
            times += [("probe", p["t"]) for p in rec["probes"] if p["probability"] is not None]
            for kind, t in times:
                s = model.evaluate_at_time(exp.xi_samples, t)
                if cf.is_degenerate(s):
                    continue
                kde = cf.kde_pdf(s)
                x = kde.support()
                path = plots / f"pdf_{key}_t{_time_label(t)}.csv"
                _write_csv(path, ["distance", "density"], zip(x, kde.pdf(x)))
                out.setdefault("pdf", []).append(_rel(run, path))
            for c in rec["conditional"]:
                if c["probability"] is None:
                    continue
                d1 = model.evaluate_at_time(exp.xi_samples, c["t1"])
                d2 = model.evaluate_at_time(exp.xi_samples, c["t2"])
                bound = float(c["bound_m"]) if not isinstance(c["bound_m"], str) else np.inf
                jc = cf.joint_from_samples(d1, d2, bound, cfg.threshold)
                path = plots / f"joint_{key}_t{_time_label(c['t1'])}_t{_time_label(c['t2'])}.csv"
                gx, gy = np.meshgrid(jc.grid_x, jc.grid_y, indexing="ij")
                _write_csv(path, ["d_t1", "d_t2", "pdf", "cdf"],
                           zip(gx.ravel(), gy.ravel(), jc.pdf.ravel(), jc.cdf.ravel()))
                out["joint"] = _rel(run, path)
        if member_seps is not None and key in member_seps:
            D = member_seps[key]
            t = cfg.dt * np.arange(D.shape[1])
            q = np.percentile(D, [5, 50, 95], axis=0)
            path = plots / f"ensemble_{key}.csv"
            _write_csv(path, ["t", "mean", "min", "p05", "median", "p95", "max", "fraction_below"],
                       zip(t, D.mean(0), D.min(0), q[0], q[1], q[2], D.max(0), (D < cfg.threshold).mean(0)))
            out["ensemble"] = _rel(run, path)
        elif (run / "series" / f"ensemble_{key}.csv").exists():
            out["ensemble"] = f"series/ensemble_{key}.csv"
        files[key] = out
    return files


# --- report -------------------------------------------------------------------

def _flag(p):
    return "  HIGH RISK" if p is not None and p > cf.HIGH_RISK else ""


def _fmt_p(p):
    return "n/a" if p is None else "%.6g" % p


def summary_lines(report):
    lines = [f"members={report['n_members']} M={report['M']} p={report['p']} "
             f"explained={report['explained_percent']:.2f}% threshold={report['threshold_m']:.0f} m",
             f"config {report['config_hash'][:12]}"]
    for rec in report["pairs"]:
        key = pair_key(rec["pair"])
        if rec["verdict"] == cf.FAILED:
            lines.append(f"{key}: failed ({rec['note']})")
            continue
        head = (f"{key}: {rec['verdict']}  t*={rec['t_min_distance']:g} s  "
                f"mean={rec['min_mean_separation_m']:.0f} m  sigma={rec['sigma_at_min_m']:.0f} m")
        if rec["envelope_crossing_time"] is not None:
            head += f"  envelope crosses at {rec['envelope_crossing_time']:g} s"
        lines.append(head)
        if rec["probability"] is not None:
            lines.append(f"  P(conflict at t*) = {_fmt_p(rec['probability'])}{_flag(rec['probability'])}")
        for p in rec["probes"]:
            lines.append(f"  P(conflict at {p['t']:g} s) = {_fmt_p(p['probability'])}{_flag(p['probability'])}"
                         + (f"  ({p['note']})" if p["note"] else ""))
        for c in rec["conditional"]:
            bound = c["bound_m"] if isinstance(c["bound_m"], str) else f"{c['bound_m']:.0f} m"
            lines.append(f"  P(conflict at {c['t2']:g} s | d({c['t1']:g} s) < {bound}) = "
                         f"{_fmt_p(c['probability'])}{_flag(c['probability'])}"
                         + (f"  ({c['note']})" if c["note"] else ""))
        bl = rec["baseline"]
        if bl is not None:
            text = f"  ensemble baseline: P = {_fmt_p(bl['probability'])}"
            if bl.get("conditional") is not None:
                text += f", conditional = {_fmt_p(bl['conditional'])}"
            if bl.get("note"):
                text += f"  ({bl['note']})"
            lines.append(text)
    return lines


def _load_run_config(run):
    from .config import ScenarioConfig

    d = json.loads(run.require(run.config, "ingest").read_text())
    d["aircraft"] = tuple(AircraftSpec(**a) for a in d["aircraft"])
    d["ensembles"] = tuple(d["ensembles"])
    d["probe_times"] = tuple(d["probe_times"])
    if d["condition"] is not None:
        d["condition"] = tuple(float(x) for x in d["condition"])
    try:
        return ScenarioConfig(**d)
    except TypeError as exc:
        raise ConfigError(f"{run.config}: {exc}") from None


def report(run_dir, figures=False):
    """Plot CSVs and ``summary.txt`` (plus PNGs with ``figures=True``) from a
    finished detect stage.  Returns the summary text."""
    run = RunDir(run_dir)
    if not run.root.is_dir():
        raise MissingStageError("ingest", run.root)
    t0 = time.perf_counter()
    with _stage("report"):
        data = json.loads(run.require(run.report, "detect").read_text())
        cfg = _load_run_config(run)
        exp = load_expansion(run.require(run.mukl, "decompose"))
        run.require(run.planning, "surrogate")
        files = write_plot_data(run, cfg, exp, data)
        text = "\n".join(summary_lines(data)) + "\n"
        run.summary.write_text(text, encoding="utf-8")
        written = [run.summary] + _file_paths(run, files)
        if figures:
            from .plotting import render_run

            written += render_run(run.root, data)
    _update_manifest(run, "report", time.perf_counter() - t0, written)
    return text


def run_all(cfg, figures=False):
    detect(cfg)
    return report(cfg.output_dir, figures)


# --- sweep --------------------------------------------------------------------

def parse_range(text):
    """``"3..6"`` -> ``[3, 4, 5, 6]``; a single integer is accepted too."""
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise ConfigError(f"--sweep-M: expected a..b, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise ConfigError(f"--sweep-M: need 1 <= a <= b, got {text!r}")
    return list(range(lo, hi + 1))


def sweep(cfg, Ms):
    """One full run per truncation order under ``<output_dir>/sweep/M<k>``
    plus a comparison table ``sweep.csv`` with wall-clock timings."""
    root = Path(cfg.output_dir)
    rows = []
    for M in Ms:
        sub = cfg.with_changes(M=M, delta=None, output_dir=str(root / "sweep" / f"M{M}"))
        t0 = time.perf_counter()
        try:
            rep = detect(sub)
        except NumericalError as exc:
            rows.append([M, "", f"failed: {exc}", "", "", "", "", "%.3f" % (time.perf_counter() - t0)])
            continue
        elapsed = time.perf_counter() - t0
        report(sub.output_dir)
        for rec in rep["pairs"]:
            bl = rec["baseline"] or {}
            rows.append([M, pair_key(rec["pair"]), rec["verdict"], _fmt_p(rec["probability"]),
                         _fmt_p(rec["conditional"][0]["probability"] if rec["conditional"] else None),
                         _fmt_p(bl.get("probability")), "%.4f" % rep["explained_percent"], "%.3f" % elapsed])
    root.mkdir(parents=True, exist_ok=True)
    _write_csv(root / "sweep.csv", ["M", "pair", "verdict", "probability", "conditional",
                                    "baseline_probability", "explained_percent", "seconds"],
               [[str(x) for x in r] for r in rows])
    return rows
