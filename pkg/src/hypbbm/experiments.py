"""Experiment specs, replica-parallel execution and report files.

A spec is a flat ``key = value`` document::

    kind = rates
    lambda = 1
    t = 12
    replicas = 50
    snapshots = 6, 8, 10, 12

Replicas are split into contiguous chunks; each chunk is reduced to small
per-replica records inside the worker, and the records are reassembled in
replica order, so the output does not depend on the number of workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from hypbbm import __version__
from hypbbm import estimators as est
from hypbbm.branching import ManyToOne, RunConfig, simulate, single_arm
from hypbbm.errors import InsufficientData, ParseError, ValidationError
from hypbbm.geometry import (
    DiskPoint,
    HalfPlanePoint,
    halfplane_to_disk_arrays,
    hdist_origin,
    poisson_arc_masses,
    to_disk,
    to_halfplane,
)
from hypbbm.motion import LEFT_ENDPOINT, TRAPEZOID, StepScheme, simulate_batch, single_particle_keys
from hypbbm.yule import DEFAULT_VERTEX_CAP, population_pmf

KINDS = ("population_law", "single_bm", "many_to_one", "rates", "log_correction", "clt",
         "escape", "boundary", "dimension", "regime_probe")

SCHEMA = "v1"
# the single-path escape ratio is only checked on long paths
ESCAPE_MIN_T = 50.0
SUMMARY_COLUMNS = ("replica", "t", "N", "martingale", "max_dist", "min_dist", "mean_dist")
PARTICLE_FIELDS = ("replica", "t", "address", "u", "w", "disk_re", "disk_im")

_COMMON = {"kind", "lambda", "t", "replicas", "seed", "dt", "u_integration", "start",
           "snapshots", "particle_cap", "alpha"}
_EXTRA = {
    "population_law": {"max_bin"},
    "single_bm": {"excursion", "tail_c"},
    "many_to_one": {"functional", "radius", "single_replicas"},
    "rates": set(),
    "log_correction": set(),
    "clt": set(),
    "escape": set(),
    "boundary": {"bins", "atom_bins"},
    "dimension": {"k_min", "k_max"},
    "regime_probe": {"radius"},
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    config: RunConfig
    replicas: int
    output_dir: str = "."
    params: dict = field(default_factory=dict)
    alpha: float = 1e-3

    @property
    def lam(self) -> float:
        return self.config.lam

    @property
    def horizon(self) -> float:
        return self.config.horizon

    def canonical(self) -> str:
        c = self.config
        lines = [
            f"kind = {self.kind}",
            f"lambda = {c.lam!r}",
            f"t = {c.horizon!r}",
            f"replicas = {self.replicas}",
            f"seed = {c.seed}",
            f"dt = {c.scheme.dt_max!r}",
            f"u_integration = {c.scheme.u_integration}",
            f"start = {to_halfplane(c.start).u!r}, {to_halfplane(c.start).w!r}",
            "snapshots = " + ", ".join(repr(t) for t in c.snapshot_times),
            f"particle_cap = {c.particle_cap}",
            f"alpha = {self.alpha!r}",
        ]
        lines += [f"{k} = {v!r}" for k, v in sorted(self.params.items())]
        return "\n".join(lines) + "\n"

    def spec_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "ExperimentSpec":
        c = self.config
        cfg = RunConfig(c.lam, c.horizon, c.snapshot_times, c.start, c.scheme, seed, c.particle_cap,
                        c.track_path_max)
        return ExperimentSpec(self.kind, cfg, self.replicas, self.output_dir, self.params, self.alpha)


# ---------------------------------------------------------------------------
# parsing


def _read_pairs(text: str) -> dict[str, tuple[int, str]]:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ParseError(lineno, "empty key or value")
        if key in pairs:
            raise ParseError(lineno, f"duplicate key {key!r}")
        pairs[key] = (lineno, value)
    return pairs


def _number(key, value, cast=float):
    try:
        x = cast(value)
    except ValueError:
        raise ValidationError(key, f"not a number: {value!r}") from None
    if isinstance(x, float) and not math.isfinite(x):
        raise ValidationError(key, "must be finite")
    return x


def _integer(key, value):
    try:
        x = float(value)
    except ValueError:
        raise ValidationError(key, f"not an integer: {value!r}") from None
    if not x.is_integer():
        raise ValidationError(key, f"not an integer: {value!r}")
    return int(x)


def _bool(key, value):
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValidationError(key, f"not a boolean: {value!r}")


def _start(value):
    """A disk point ``x`` or ``x+yj``, or a half-plane log pair ``u, w``."""
    if "," in value:
        u, w = (_number("start", s.strip()) for s in value.split(",", 1))
        return HalfPlanePoint(u, w)
    try:
        z = complex(value.replace(" ", ""))
    except ValueError:
        raise ValidationError("start", f"not a point: {value!r}") from None
    try:
        return to_halfplane(DiskPoint(z.real, z.imag))
    except ValueError as e:
        raise ValidationError("start", str(e)) from None


def _default_snapshots(kind, t):
    if kind in ("rates", "escape", "log_correction"):
        return tuple(t * k / 6 for k in range(1, 7))
    if kind == "regime_probe":
        return (t / 4, t * 5 / 8, t)
    if kind == "boundary":
        return (t / 2, t)
    return (t,)


def parse_spec(text: str, output_dir: str = ".") -> ExperimentSpec:
    """Validate a spec document and fill in defaults."""
    pairs = _read_pairs(text)
    get = {k: v for k, (_, v) in pairs.items()}
    if "kind" not in get:
        raise ValidationError("kind", "missing")
    kind = get["kind"]
    if kind not in KINDS:
        raise ValidationError("kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    allowed = _COMMON | _EXTRA[kind]
    for k, (lineno, _) in pairs.items():
        if k not in allowed:
            raise ValidationError(k, f"unknown key for kind {kind}")
    required = ("t", "replicas") if kind == "single_bm" else ("lambda", "t", "replicas")
    for k in required:
        if k not in get:
            raise ValidationError(k, "missing")

    lam = _number("lambda", get.get("lambda", "1"))
    if not lam > 0:
        raise ValidationError("lambda", "must be positive")
    t = _number("t", get["t"])
    if not t >= 0:
        raise ValidationError("t", "must be nonnegative")
    replicas = _integer("replicas", get["replicas"])
    if replicas < 1:
        raise ValidationError("replicas", "must be at least 1")
    seed = _integer("seed", get.get("seed", "0"))
    dt = _number("dt", get.get("dt", "0.01"))
    if not dt > 0:
        raise ValidationError("dt", "must be positive")
    scheme_name = get.get("u_integration", TRAPEZOID)
    if scheme_name not in (TRAPEZOID, LEFT_ENDPOINT):
        raise ValidationError("u_integration", f"expected {TRAPEZOID} or {LEFT_ENDPOINT}")
    start = _start(get["start"]) if "start" in get else _start("0")
    if "snapshots" in get:
        snaps = tuple(sorted(_number("snapshots", s.strip()) for s in get["snapshots"].split(",")))
        if snaps[0] < 0 or snaps[-1] > t:
            raise ValidationError("snapshots", "must lie in [0, t]")
        if len(set(snaps)) != len(snaps):
            raise ValidationError("snapshots", "must be distinct")
    else:
        snaps = _default_snapshots(kind, t)
    cap = _integer("particle_cap", get.get("particle_cap", str(DEFAULT_VERTEX_CAP)))
    if cap < 1:
        raise ValidationError("particle_cap", "must be positive")
    alpha = _number("alpha", get.get("alpha", "1e-3"))
    if not 0 < alpha < 1:
        raise ValidationError("alpha", "must lie in (0, 1)")

    params = {}
    track = False
    if kind == "population_law":
        params["max_bin"] = _integer("max_bin", get.get("max_bin", "10"))
        if params["max_bin"] < 2:
            raise ValidationError("max_bin", "must be at least 2")
    elif kind == "single_bm":
        params["excursion"] = _bool("excursion", get.get("excursion", "false"))
        params["tail_c"] = tuple(_number("tail_c", s.strip()) for s in get.get("tail_c", "1.5, 2, 2.5").split(","))
        track = params["excursion"]
        if track and "dt" not in get:
            dt = 1e-3
        snaps = (t,)
    elif kind == "many_to_one":
        fn = get.get("functional", "ball")
        if fn not in ("ball", "path_max", "one"):
            raise ValidationError("functional", "expected ball, path_max or one")
        params["functional"] = fn
        params["radius"] = _number("radius", get.get("radius", "1"))
        if not params["radius"] > 0:
            raise ValidationError("radius", "must be positive")
        params["single_replicas"] = _integer("single_replicas", get.get("single_replicas", str(5 * replicas)))
        if replicas < 100:
            raise ValidationError("replicas", "many_to_one needs at least 100 replicas")
        if params["single_replicas"] < 2:
            raise ValidationError("single_replicas", "must be at least 2")
        track = fn == "path_max"
        snaps = (t,)
    elif kind == "log_correction":
        # raises WrongRegime for lambda above 1/8
        est.correction_reference(lam)
        if snaps[0] < math.e:
            raise ValidationError("snapshots", "log corrections need snapshot times >= e")
    elif kind in ("rates", "escape"):
        if kind == "escape" and len(snaps) < 4:
            raise ValidationError("snapshots", "escape needs at least 4 snapshots")
    elif kind == "boundary":
        params["bins"] = _integer("bins", get.get("bins", "16"))
        if params["bins"] < 2:
            raise ValidationError("bins", "must be at least 2")
        params["atom_bins"] = _integer("atom_bins", get.get("atom_bins", str(2 ** 10)))
        if params["atom_bins"] < 2:
            raise ValidationError("atom_bins", "must be at least 2")
    elif kind == "dimension":
        params["k_min"] = _integer("k_min", get.get("k_min", "4"))
        params["k_max"] = _integer("k_max", get.get("k_max", "9"))
        if not 0 <= params["k_min"] < params["k_max"]:
            raise ValidationError("k_max", "need 0 <= k_min < k_max")
    elif kind == "regime_probe":
        params["radius"] = _number("radius", get.get("radius", "2"))
        if not params["radius"] > 0:
            raise ValidationError("radius", "must be positive")

    cfg = RunConfig(lam, t, snaps, start, StepScheme(dt, scheme_name), seed, cap, track)
    return ExperimentSpec(kind, cfg, replicas, output_dir, params, alpha)


def load_spec(path: str, output_dir: str | None = None) -> ExperimentSpec:
    with open(path) as fh:
        text = fh.read()
    return parse_spec(text, output_dir or os.path.splitext(path)[0] + "_out")


# ---------------------------------------------------------------------------
# per-replica reduction (runs inside workers)


def _functional(spec: ExperimentSpec):
    fn = spec.params["functional"]
    r = spec.params["radius"]
    if fn == "ball":
        return lambda u, w, m: (hdist_origin(u, w) <= r).astype(float)
    if fn == "path_max":
        return lambda u, w, m: (m <= r).astype(float)
    return lambda u, w, m: np.ones(np.shape(u))


def _summary_row(replica, pop, lam):
    d = pop.distances()
    return (replica, pop.t, pop.size, pop.size * math.exp(-lam * pop.t), float(d.max()), float(d.min()),
            math.fsum(d.tolist()) / d.size)


def _particle_lines(replica, pop) -> list[str]:
    re, im = halfplane_to_disk_arrays(pop.u, pop.w)
    out = []
    for a, x, y, p, q in zip(pop.addresses(), pop.u.tolist(), pop.w.tolist(), re.tolist(), im.tolist()):
        rec = dict(zip(PARTICLE_FIELDS, (replica, pop.t, a, x, y, p, q)))
        out.append(json.dumps(rec))
    return out


def _reduce_run(spec: ExperimentSpec, run, dump: bool) -> dict:
    kind = spec.kind
    lam = spec.lam
    pops = run.populations
    rec = {"replica": run.replica, "rows": [_summary_row(run.replica, p, lam) for p in pops]}
    if dump:
        rec["particles"] = [line for p in pops for line in _particle_lines(run.replica, p)]
    last = pops[-1]
    if kind == "many_to_one":
        f = _functional(spec)
        rec["sum"] = float(np.sum(f(last.u, last.w, last.path_max)))
    elif kind == "clt":
        if last.size >= 30:
            rec["ks"] = est.distance_clt_test(last, alpha=spec.alpha).statistic
            rec["ks_vert"] = est.vertical_clt_test(last, alpha=spec.alpha).statistic
        else:
            rec["ks"] = rec["ks_vert"] = float("nan")
    elif kind == "boundary":
        bins = spec.params["bins"]
        rec["mu"] = est.boundary_measure(last, bins, "mu").masses.tolist()
        rec["lambda"] = est.boundary_measure(last, bins, "lambda").masses.tolist()
        decay = est.atom_decay(pops, spec.params["atom_bins"])
        rec["max_mass"] = decay.max_mass.tolist()
        rec["occupied"] = decay.occupied.tolist()
    elif kind == "dimension":
        rec["angles"] = last.angles().tolist()
    elif kind == "regime_probe":
        rec["occupied"] = [est.ball_occupied(p, spec.params["radius"]) for p in pops]
    return rec


def _single_bm_chunk(spec: ExperimentSpec, replicas: list[int], dump: bool) -> list[dict]:
    c = spec.config
    keys = single_particle_keys(c.seed, len(replicas), replicas[0])
    b = simulate_batch(keys, c.horizon, c.scheme, c.start, track_max=spec.params["excursion"])
    s = to_halfplane(c.start)
    d = hdist_origin((b.u - s.u) * math.exp(-s.w), b.w - s.w)
    out = []
    for i, r in enumerate(replicas):
        rec = {"replica": r, "rows": [(r, c.horizon, 1, 1.0, float(d[i]), float(d[i]), float(d[i]))],
               "u": float(b.u[i]), "w": float(b.w[i]), "dist": float(d[i]),
               "path_max": float(b.max_dist[i]) if b.max_dist is not None else float("nan")}
        if dump:
            re, im = halfplane_to_disk_arrays(b.u[i:i + 1], b.w[i:i + 1])
            rec["particles"] = [json.dumps(dict(zip(PARTICLE_FIELDS, (
                r, c.horizon, "", float(b.u[i]), float(b.w[i]), float(re[0]), float(im[0])))))]
        out.append(rec)
    return out


def _chunk(args) -> list[dict]:
    spec, replicas, dump = args
    if spec.kind == "single_bm":
        return _single_bm_chunk(spec, replicas, dump)
    return [_reduce_run(spec, r, dump) for r in simulate(spec.config, replicas)]


def _chunks(n: int, size: int) -> list[list[int]]:
    return [list(range(i, min(i + size, n))) for i in range(0, n, size)]


# ---------------------------------------------------------------------------
# execution and aggregation


@dataclass
class Table:
    header: tuple
    rows: list

    def to_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.header)
        for row in self.rows:
            wr.writerow([_fmt(x) for x in row])
        return buf.getvalue()


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


@dataclass
class RunRecord:
    spec: ExperimentSpec
    spec_hash: str
    seed: int
    version: str
    rows: list
    reports: list
    tables: dict = field(default_factory=dict)
    particles: list | None = None

    @property
    def summary(self) -> Table:
        return Table(SUMMARY_COLUMNS, self.rows)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports if not r.extra.get("exploratory"))


def execute(spec: ExperimentSpec, workers: int = 1, dump_particles: bool = False,
            chunk_size: int | None = None) -> RunRecord:
    """Run every replica of the spec and aggregate the kind's statistics."""
    if chunk_size is None:
        chunk_size = 10_000 if spec.kind == "single_bm" else max(1, min(50, spec.replicas // max(1, 4 * workers) or 1))
    jobs = [(spec, ch, dump_particles) for ch in _chunks(spec.replicas, chunk_size)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_chunk, jobs))
    else:
        parts = [_chunk(j) for j in jobs]
    recs = [r for part in parts for r in part]
    recs.sort(key=lambda r: r["replica"])
    rows = [row for r in recs for row in r["rows"]]
    particles = [line for r in recs for line in r.get("particles", [])] if dump_particles else None
    reports, tables = AGGREGATORS[spec.kind](spec, recs)
    return RunRecord(spec, spec.spec_hash(), spec.config.seed, __version__, rows, reports, tables, particles)


def _agg_population_law(spec, recs):
    lam, t = spec.lam, spec.horizon
    kmax = spec.params["max_bin"]
    n = np.array([r["rows"][-1][2] for r in recs])
    obs = np.array([np.sum(n == k) for k in range(1, kmax + 1)] + [np.sum(n > kmax)])
    p = np.array([population_pmf(lam, t, k) for k in range(1, kmax + 1)])
    p = np.append(p, max(0.0, 1.0 - math.fsum(p.tolist())))
    expected = p * n.size
    rows = [(str(k), int(o), float(e)) for k, o, e in zip(list(range(1, kmax + 1)) + [f">{kmax}"], obs, expected)]
    reports = []
    keep = expected > 0
    if n.size > 1:
        chi = stats.chisquare(obs[keep], expected[keep] * obs[keep].sum() / expected[keep].sum())
        reports.append(est.TestReport.lower_test(chi.pvalue, spec.alpha, n.size,
                                                 f"N({t:g}) geometric law, chi-square p-value",
                                                 chi2=float(chi.statistic)))
        se = n.std(ddof=1) / math.sqrt(n.size)
        z = abs(n.mean() - math.exp(lam * t)) / se if se > 0 else 0.0
        reports.append(est.TestReport.upper_test(z, 3.0, n.size, f"mean N({t:g}) vs exp(lambda t) in std errors",
                                                 mean=float(n.mean())))
    return reports, {"population": Table(("n", "observed", "expected"), rows)}


def _agg_single_bm(spec, recs):
    t = spec.horizon
    w0 = to_halfplane(spec.config.start).w
    u = np.array([r["u"] for r in recs])
    w = np.array([r["w"] for r in recs])
    d = np.array([r["dist"] for r in recs])
    m = np.array([r["path_max"] for r in recs])
    rows = [(r["replica"], r["u"], r["w"], r["dist"], r["path_max"]) for r in recs]
    reports = []
    if t > 0 and len(recs) > 1:
        ks = stats.kstest(-(w - w0), stats.norm(0.5 * t, math.sqrt(t)).cdf)
        reports.append(est.TestReport.lower_test(ks.pvalue, spec.alpha, len(recs),
                                                 f"-log Im B_t vs N(t/2, t) at t={t:g}, KS p-value",
                                                 ks=float(ks.statistic)))
    if t >= ESCAPE_MIN_T and len(recs) > 1:
        ratio = float(np.mean(d / t))
        reports.append(est.TestReport.upper_test(abs(ratio - 0.5), 0.03, len(recs),
                                                 "|mean rho(B_t, B_0)/t - 1/2|", mean_ratio=ratio))
    if spec.params["excursion"] and t > 0:
        reports += est.excursion_tail_check(m, d, spec.params["tail_c"])
        try:
            rate = est.gaussian_tail_rate(m)
            reports.append(est.TestReport.upper_test(abs(rate - 1.0), 0.2, len(recs),
                                                     "|Gaussian tail-rate coefficient - 1| on c in [2, 4]",
                                                     rate=rate))
        except InsufficientData:
            pass
    return reports, {"single_bm": Table(("replica", "u", "w", "dist", "path_max"), rows)}


def _agg_many_to_one(spec, recs):
    c = spec.config
    sums = [r["sum"] for r in recs]
    vals = single_arm(_functional(spec), c.horizon, spec.params["single_replicas"], c.seed, c.scheme)
    m = ManyToOne.from_samples(sums, vals, c.lam, c.horizon)
    report = est.TestReport.upper_test(abs(m.z), 3.0, len(sums),
                                       f"many-to-one for {spec.params['functional']}, |z|",
                                       lhs=m.lhs, rhs=m.rhs, combined_se=m.combined_se)
    table = Table(("lhs", "rhs", "lhs_se", "rhs_se", "z"), [(m.lhs, m.rhs, m.lhs_se, m.rhs_se, m.z)])
    return [report], {"many_to_one": table}


def _by_time(recs, column):
    """Replica x snapshot array of a summary column."""
    return np.array([[row[column] for row in r["rows"]] for r in recs])


def _agg_rates(spec, recs):
    lam = spec.lam
    times = np.array(spec.config.snapshot_times)
    mx = _by_time(recs, 4).mean(axis=0)
    mn = _by_time(recs, 5).mean(axis=0)
    rs = est.r_star(lam)
    rows = [(t, a, b, a / t if t > 0 else float("nan"), rs) for t, a, b in zip(times, mx, mn)]
    reports = []
    if times[-1] > 0:
        ratio = mx[-1] / times[-1]
        reports.append(est.TestReport.interval(ratio, rs - 0.12, rs, len(recs),
                                               f"mean Max_t/t at t={times[-1]:g} in [r*-0.12, r*]"))
        if lam < est.TRANSIENT_LAMBDA:
            rl = est.r_lower(lam)
            reports.append(est.TestReport.interval(mn[-1] / times[-1], rl, rl + 0.12, len(recs),
                                                   f"mean Min_t/t at t={times[-1]:g} in [r_*, r_*+0.12]"))
    return reports, {"rates": Table(("t", "max", "min", "max_over_t", "reference"), rows)}


def _agg_log_correction(spec, recs):
    lam = spec.lam
    times = np.array(spec.config.snapshot_times)
    logs = np.log(times)
    cmax = (_by_time(recs, 4) - est.r_star(lam) * times) / logs
    cmin = (_by_time(recs, 5) - est.r_lower(lam) * times) / logs
    refmax, refmin = est.correction_reference(lam, "max"), est.correction_reference(lam, "min")
    rows = [(t, a, b, refmax, refmin) for t, a, b in zip(times, cmax.mean(axis=0), cmin.mean(axis=0))]
    frac = float(np.mean(cmin[:, -1] > 0))
    reports = [est.TestReport.lower_test(frac, 0.8, len(recs),
                                         f"fraction of replicas with (Min_t - r_* t)/log t > 0 at t={times[-1]:g}")]
    table = Table(("t", "max_correction", "min_correction", "max_reference", "min_reference"), rows)
    return reports, {"log_correction": table}


def _agg_clt(spec, recs):
    ks = np.array([r["ks"] for r in recs])
    kv = np.array([r["ks_vert"] for r in recs])
    ok = np.isfinite(ks)
    rows = [(r["replica"], r["rows"][-1][2], r["ks"], r["ks_vert"]) for r in recs]
    reports = []
    if ok.any():
        reports.append(est.TestReport.upper_test(float(np.median(ks[ok])), 0.1, int(ok.sum()),
                                                 "median KS distance of standardized distances"))
        reports.append(est.TestReport.upper_test(float(np.median(np.abs(ks[ok] - kv[ok]))), 0.05, int(ok.sum()),
                                                 "median |KS(distance) - KS(vertical)|"))
    return reports, {"clt": Table(("replica", "N", "ks_distance", "ks_vertical"), rows)}


def _agg_escape(spec, recs):
    times = np.array(spec.config.snapshot_times)
    means = _by_time(recs, 6)
    avg = np.array([math.fsum(col) / len(col) for col in means.T.tolist()])
    slope = est.rate_fit(est.RateSeries(list(zip(times, avg))))
    reports = [est.TestReport.interval(slope, 0.45, 0.55, len(recs), "slope of mean distance in [0.45, 0.55]")]
    return reports, {"escape": Table(("t", "mean_distance"), list(zip(times, avg)))}


def _agg_boundary(spec, recs):
    bins = spec.params["bins"]
    edges = est.arc_edges(bins)
    mu = [est.ArcHistogram(edges, np.array(r["mu"]), "mu") for r in recs]
    la = [est.ArcHistogram(edges, np.array(r["lambda"]), "lambda") for r in recs]
    mu_mean, _ = est.average_masses(mu)
    la_mean, la_se = est.average_masses(la)
    start = spec.config.start
    expected = poisson_arc_masses(to_disk(start), edges)
    rows = [(a, b, m, l, s, e) for a, b, m, l, s, e in zip(edges[:-1], edges[1:], mu_mean, la_mean, la_se, expected)]
    reports = []
    if len(recs) > bins + 1 and start.u == 0.0 and start.w == 0.0:
        reports.append(est.uniformity_test(la, spec.alpha))
    if len(recs) > 1:
        reports.append(est.poisson_comparison(la, start))
    tables = {"boundary": Table(("arc_lo", "arc_hi", "mu_mean", "lambda_mean", "lambda_se", "poisson"), rows)}
    times = spec.config.snapshot_times
    mm = np.array([r["max_mass"] for r in recs])
    oc = np.array([r["occupied"] for r in recs])
    tables["atoms"] = Table(("t", "max_mass_mean", "occupied_mean"),
                            list(zip(times, mm.mean(axis=0), oc.mean(axis=0))))
    if len(times) >= 2:
        n = len(recs)
        reports.append(est.TestReport.lower_test(float(np.mean(oc[:, -1] > oc[:, 0])), 0.9, n,
                                                 f"fraction with more occupied arcs at t={times[-1]:g} than t={times[0]:g}"))
        reports.append(est.TestReport.lower_test(float(np.mean(mm[:, -1] < mm[:, 0])), 0.9, n,
                                                 f"fraction with smaller max arc mass at t={times[-1]:g} than t={times[0]:g}"))
    return reports, tables


def _agg_dimension(spec, recs):
    angles = np.concatenate([np.array(r["angles"]) for r in recs])
    scales = est.dyadic_scales(spec.params["k_min"], spec.params["k_max"])
    ref = est.limit_set_dimension(spec.lam)
    reports = []
    try:
        d = est.box_dimension(angles, scales)
        rows = list(zip(d.scales, d.counts))
        reports.append(est.TestReport.upper_test(abs(d.dimension - ref), 0.15, angles.size,
                                                 "|box dimension - limit set dimension| (exploratory)",
                                                 dimension=d.dimension, r2=d.r2, reference=ref,
                                                 support_reference=est.support_dimension(spec.lam),
                                                 exploratory=True))
    except InsufficientData:
        rows = []
    return reports, {"dimension": Table(("scale", "count"), rows)}


def _agg_regime(spec, recs):
    times = spec.config.snapshot_times
    occ = np.array([r["occupied"] for r in recs], dtype=float)
    frac = occ.mean(axis=0)
    n = len(recs)
    if spec.lam <= est.TRANSIENT_LAMBDA:
        worst = max((b - a for a, b in zip(frac, frac[1:])), default=-1.0)
        report = est.TestReport.upper_test(worst, 0.0, n, "largest step of the occupation fraction",
                                           strict=True, fractions=frac.tolist())
    else:
        report = est.TestReport.lower_test(float(frac.min()), 0.5, n, "smallest occupation fraction",
                                           strict=True, fractions=frac.tolist())
    return [report], {"regime": Table(("t", "occupation_fraction"), list(zip(times, frac)))}


AGGREGATORS = {
    "population_law": _agg_population_law,
    "single_bm": _agg_single_bm,
    "many_to_one": _agg_many_to_one,
    "rates": _agg_rates,
    "log_correction": _agg_log_correction,
    "clt": _agg_clt,
    "escape": _agg_escape,
    "boundary": _agg_boundary,
    "dimension": _agg_dimension,
    "regime_probe": _agg_regime,
}


# ---------------------------------------------------------------------------
# report files


def _gnuplot(record: RunRecord) -> str:
    kind = record.spec.kind
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        f"set output '{kind}_gnuplot.png'",
    ]
    plots = {
        "population_law": "plot 'population.csv' using 0:2:xtic(1) with boxes, '' using 0:3 with linespoints",
        "single_bm": "plot 'single_bm.csv' using 4 bins=40 with boxes",
        "many_to_one": "plot 'many_to_one.csv' using (1):1:3 with yerrorbars, '' using (2):2:4 with yerrorbars",
        "rates": "plot 'rates.csv' using 1:4 with linespoints, '' using 1:5 with lines",
        "log_correction": "plot 'log_correction.csv' using 1:2 with linespoints, '' using 1:3 with linespoints, "
                          "'' using 1:4 with lines, '' using 1:5 with lines",
        "clt": "plot 'clt.csv' using 1:3 with points, '' using 1:4 with points",
        "escape": "plot 'escape.csv' using 1:2 with linespoints",
        "boundary": "plot 'boundary.csv' using 1:4 with steps, '' using 1:6 with steps",
        "dimension": "set logscale xy\nplot 'dimension.csv' using (1/$1):2 with linespoints",
        "regime_probe": "plot 'regime.csv' using 1:2 with linespoints",
    }
    lines.append(plots[kind])
    return "\n".join(lines) + "\n"


def emit_report(record: RunRecord, out_dir: str | None = None, figures: bool = True) -> list[str]:
    """Write the summary CSV, the kind's CSVs, reports.json, plot.gp and a PNG figure."""
    out_dir = out_dir or record.spec.output_dir
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        written.append(path)

    put("summary.csv", record.summary.to_csv(f"schema: hypbbm-summary/{SCHEMA}"))
    for name, table in record.tables.items():
        put(f"{name}.csv", table.to_csv(f"schema: hypbbm-{name}/{SCHEMA}"))
    meta = {
        "spec_hash": record.spec_hash,
        "seed": record.seed,
        "version": record.version,
        "kind": record.spec.kind,
        "spec": record.spec.canonical(),
        "reports": [r.to_dict() for r in record.reports],
    }
    put("reports.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    put("plot.gp", _gnuplot(record))
    if record.particles is not None:
        put("particles.jsonl", "".join(line + "\n" for line in record.particles))
    if figures:
        from hypbbm.plotting import render

        written.append(render(record, out_dir))
    return written
