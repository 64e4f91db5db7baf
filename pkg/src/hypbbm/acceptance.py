"""The acceptance suite: desk-scale statistical checks of the asymptotic laws.

Each check returns a ``CriterionResult``.  Expensive simulations shared by
several checks are cached for the lifetime of the process.  Seeds are fixed
per check.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, stats

from hypbbm import estimators as est
from hypbbm.branching import RunConfig, many_to_one, simulate
from hypbbm.experiments import emit_report, execute, parse_spec
from hypbbm.geometry import (
    BoundaryPoint,
    DiskPoint,
    HalfPlanePoint,
    MoebiusMap,
    apply,
    compose,
    dist_disk,
    disk_to_halfplane,
    gamma,
    halfplane_to_disk,
    hdist_origin,
    poisson_arc_masses,
    poisson_kernel,
)
from hypbbm.motion import EXCURSION_SCHEME, StepScheme, simulate_batch, single_particle_keys
from hypbbm.yule import population_pmf, population_sizes

ALPHA = 1e-3
# step ceilings for the population-level runs (positions enter only through distances and angles)
BBM_DT = 0.05
REGIME_DT = 0.1


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    exploratory: bool = False
    elapsed: float = 0.0
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        if self.exploratory:
            tag += " (exploratory)"
        return f"[{tag}] {self.number:2d}. {self.title}: {self.detail} ({self.elapsed:.1f} s)"


def _timed(number, title, exploratory=False):
    def deco(fn):
        def wrapper():
            t0 = time.perf_counter()
            passed, detail, values = fn()
            return CriterionResult(number, title, bool(passed), detail, exploratory,
                                   time.perf_counter() - t0, values)

        wrapper.number = number
        wrapper.title = title
        wrapper.exploratory = exploratory
        return wrapper

    return deco


def _within(x, se, target, k=3.0):
    return abs(x - target) <= k * se


# ---------------------------------------------------------------------------
# shared runs


@lru_cache(maxsize=None)
def shared_lambda1_run(replicas: int = 100):
    """lambda=1 to t=12 with snapshots 6, 8, 10, 12."""
    cfg = RunConfig(1.0, 12.0, (6.0, 8.0, 10.0, 12.0), scheme=StepScheme(BBM_DT), seed=7001)
    return tuple(tuple(r.populations) for r in simulate(cfg, range(replicas)))


# ---------------------------------------------------------------------------
# criteria


@_timed(1, "population law")
def criterion_1():
    n = population_sizes(1.0, [1.0], seed=1001, replicas=np.arange(10_000))[:, 0]
    obs = np.array([np.sum(n == k) for k in range(1, 11)] + [np.sum(n > 10)])
    p = np.array([population_pmf(1.0, 1.0, k) for k in range(1, 11)])
    p = np.append(p, 1.0 - math.fsum(p.tolist()))
    chi = stats.chisquare(obs, p * n.size)
    se = n.std(ddof=1) / math.sqrt(n.size)
    ok = chi.pvalue >= ALPHA and _within(n.mean(), se, math.e)
    return ok, f"chi-square p={chi.pvalue:.3g}, mean N={n.mean():.4f} (e={math.e:.4f}, se={se:.4f})", \
        {"p": chi.pvalue, "mean": n.mean()}


@_timed(2, "martingale")
def criterion_2():
    times = [1.0, 3.0, 6.0, 8.0]
    n = population_sizes(1.0, times, seed=1002, replicas=np.arange(10_000))
    m = n * np.exp(-np.array(times))
    parts, ok = [], True
    for j, t in enumerate(times[:3]):
        mean, se = m[:, j].mean(), m[:, j].std(ddof=1) / math.sqrt(m.shape[0])
        ok &= _within(mean, se, 1.0)
        parts.append(f"E M({t:g})={mean:.4f}+-{se:.4f}")
    v_late = np.var(m[:, 3] - m[:, 2], ddof=1)
    v_early = np.var(m[:, 1] - m[:, 0], ddof=1)
    ok &= v_late < v_early
    parts.append(f"var(M8-M6)={v_late:.4f} < var(M3-M1)={v_early:.4f}")
    return ok, ", ".join(parts), {"var_late": v_late, "var_early": v_early}


@_timed(3, "vertical law")
def criterion_3():
    b = simulate_batch(single_particle_keys(1003, 10_000), 4.0, StepScheme(1e-2))
    ks = stats.kstest(-b.w, stats.norm(2.0, 2.0).cdf)
    return ks.pvalue >= ALPHA, f"KS={ks.statistic:.4f}, p={ks.pvalue:.3g}", {"p": ks.pvalue}


@_timed(4, "single-particle escape")
def criterion_4():
    b = simulate_batch(single_particle_keys(1004, 200), 100.0, StepScheme(1e-2))
    r = float(np.mean(hdist_origin(b.u, b.w) / 100.0))
    return 0.47 <= r <= 0.53, f"mean rho/t={r:.4f} in [0.47, 0.53]", {"ratio": r}


@_timed(5, "excursion tail")
def criterion_5():
    b = simulate_batch(single_particle_keys(1005, 100_000), 1.0, EXCURSION_SCHEME, track_max=True)
    d = hdist_origin(b.u, b.w)
    checks = est.excursion_tail_check(b.max_dist, d, (1.5, 2.0, 2.5))
    rate = est.gaussian_tail_rate(b.max_dist)
    ok = all(c.passed for c in checks) and 0.8 <= rate <= 1.2
    parts = [f"c={c.description.split('>=')[1].split(']')[0]}: {c.statistic:+.4f}<={c.threshold:.4f}" for c in checks]
    return ok, "; ".join(parts) + f"; tail rate={rate:.3f} in [0.8, 1.2]", {"rate": rate}


@_timed(6, "many-to-one")
def criterion_6():
    t0 = time.perf_counter()
    m = many_to_one(lambda u, w, mx: (hdist_origin(u, w) <= 1.0).astype(float), 2.0, 0.5, 2000,
                    seed=1006, single_replicas=10_000)
    dt = time.perf_counter() - t0
    ok = abs(m.z) <= 3.0 and dt < 60.0
    return ok, f"lhs={m.lhs:.4f}, rhs={m.rhs:.4f}, z={m.z:+.2f}, {dt:.1f} s < 60 s", {"z": m.z}


@_timed(7, "max rate")
def criterion_7():
    pops = shared_lambda1_run()[:50]
    r = np.mean([est.max_min_distance(p[-1])[0] / 12.0 for p in pops])
    rs = est.r_star(1.0)
    ok = rs - 0.12 <= r <= rs
    return ok, f"mean Max_12/12={r:.4f} in [{rs - 0.12:.4f}, {rs:.4f}]", {"ratio": r}


@_timed(8, "min rate, transient")
def criterion_8():
    lam = 0.1
    cfg = RunConfig(lam, 12.0, (6.0, 8.0, 10.0, 12.0), seed=1008)
    mins = np.array([est.max_min_distance(r.populations[-1])[1] for r in simulate(cfg, range(50))])
    rl = est.r_lower(lam)
    ratio = float(np.mean(mins / 12.0))
    frac = float(np.mean((mins - rl * 12.0) / math.log(12.0) > 0))
    ok = rl <= ratio <= rl + 0.12 and frac >= 0.8
    return ok, f"mean Min_12/12={ratio:.4f} in [{rl:.4f}, {rl + 0.12:.4f}]; positive correction in {frac:.0%}", \
        {"ratio": ratio, "fraction": frac}


def _occupation(lam, seed, checkpoints=(10.0, 25.0, 40.0), replicas=500, radius=2.0):
    cfg = RunConfig(lam, checkpoints[-1], checkpoints, scheme=StepScheme(REGIME_DT), seed=seed)
    occ = np.array([[est.ball_occupied(p, radius) for p in r.populations] for r in simulate(cfg, range(replicas))])
    return occ.mean(axis=0)


@_timed(9, "recurrence dichotomy")
def criterion_9():
    low = _occupation(0.05, 1009)
    high = _occupation(0.25, 2009)
    ok_low = bool(np.all(np.diff(low) < 0))
    ok_high = bool(np.all(high > 0.5))
    return ok_low and ok_high, (f"lambda=0.05: {', '.join(f'{x:.3f}' for x in low)} (decreasing: {ok_low}); "
                                f"lambda=0.25: {', '.join(f'{x:.3f}' for x in high)} (> 0.5: {ok_high})"), \
        {"low": low.tolist(), "high": high.tolist()}


@_timed(10, "distance CLT")
def criterion_10():
    # replicas too small for a KS statistic are left out and counted
    pops = [r[2] for r in shared_lambda1_run() if r[2].size >= 30]
    ks = np.array([est.distance_clt_test(p).statistic for p in pops])
    kv = np.array([est.vertical_clt_test(p).statistic for p in pops])
    med = float(np.median(ks))
    gap = float(np.median(np.abs(ks - kv)))
    return med < 0.1 and gap < 0.05, \
        f"median KS={med:.4f} < 0.1, median gap={gap:.4f} < 0.05 ({len(pops)} replicas with N >= 30)", \
        {"median_ks": med, "median_gap": gap, "median_ks_vertical": float(np.median(kv))}


@_timed(11, "population escape rate")
def criterion_11():
    runs = shared_lambda1_run()[:50]
    times = [p.t for p in runs[0]]
    avg = [math.fsum(est.mean_distance(r[j]) for r in runs) / len(runs) for j in range(len(times))]
    slope = est.rate_fit(est.RateSeries(list(zip(times, avg))))
    return 0.45 <= slope <= 0.55, f"slope={slope:.4f} in [0.45, 0.55]", {"slope": slope}


def _lambda_arcs(start, seed, replicas=200, bins=16):
    cfg = RunConfig(1.0, 10.0, (10.0,), start=start, scheme=StepScheme(BBM_DT), seed=seed)
    return [est.boundary_measure(r.populations[-1], bins, "lambda") for r in simulate(cfg, range(replicas))]


@_timed(12, "boundary measure")
def criterion_12():
    uni = est.uniformity_test(_lambda_arcs(DiskPoint(0.0, 0.0), 1012), ALPHA)
    poi = est.poisson_comparison(_lambda_arcs(DiskPoint(0.5, 0.0), 2012), DiskPoint(0.5, 0.0))
    ok = uni.passed and poi.passed
    return ok, f"start o: Hotelling p={uni.statistic:.3g} >= {ALPHA:g}; start 0.5: max |z|={poi.statistic:.2f} <= 3", \
        {"p": uni.statistic, "max_z": poi.statistic}


@_timed(13, "support growth and atom decay")
def criterion_13():
    decays = [est.atom_decay([r[0], r[-1]], 2 ** 10) for r in shared_lambda1_run()]
    grow = float(np.mean([d.occupied[1] > d.occupied[0] for d in decays]))
    shrink = float(np.mean([d.max_mass[1] < d.max_mass[0] for d in decays]))
    return grow >= 0.9 and shrink >= 0.9, f"occupied up in {grow:.0%}, max mass down in {shrink:.0%}", \
        {"grow": grow, "shrink": shrink}


@_timed(14, "limit-set dimension", exploratory=True)
def criterion_14():
    lam = 0.125
    cfg = RunConfig(lam, 12.0, (12.0,), seed=1014)
    angles = np.concatenate([r.populations[-1].angles() for r in simulate(cfg, range(50))])
    d = est.box_dimension(angles)
    ref = est.limit_set_dimension(lam)
    return abs(d.dimension - ref) <= 0.15, \
        f"box slope={d.dimension:.3f} vs {ref:.3f} +- 0.15 from {angles.size} angles, counts {d.counts.tolist()}", \
        {"dimension": d.dimension, "n": int(angles.size), "support_reference": est.support_dimension(lam)}


def _equivariance_error(z0: DiskPoint, seed: int) -> float:
    base = RunConfig(1.0, 3.0, (1.5, 3.0), seed=seed)
    moved = RunConfig(1.0, 3.0, (1.5, 3.0), start=z0, seed=seed)
    g = gamma(z0)
    a = list(simulate(base, [0]))[0]
    b = list(simulate(moved, [0]))[0]
    err = 0.0
    for pa, pb in zip(a.populations, b.populations):
        assert pa.addresses() == pb.addresses()
        for ua, wa, ub, wb in zip(pa.u, pa.w, pb.u, pb.w):
            img = apply(g, halfplane_to_disk(HalfPlanePoint(float(ua), float(wa))))
            ref = halfplane_to_disk(HalfPlanePoint(float(ub), float(wb)))
            err = max(err, abs(img.z - ref.z))
    return err


def _random_disk(rng, n, rmax=0.99):
    r = rmax * np.sqrt(rng.uniform(size=n))
    th = rng.uniform(-math.pi, math.pi, size=n)
    return [DiskPoint(float(x), float(y)) for x, y in zip(r * np.cos(th), r * np.sin(th))]


@_timed(15, "determinism and invariance")
def criterion_15():
    rng = np.random.default_rng(1015)
    notes, ok = [], True

    text = "kind = rates\nlambda = 1\nt = 4\nreplicas = 4\nsnapshots = 1, 2, 3, 4\nseed = 11\n"
    outputs = []
    for workers in (1, 2, 1):
        with tempfile.TemporaryDirectory() as d:
            rec = execute(parse_spec(text, d), workers=workers, chunk_size=1 if workers > 1 else None)
            emit_report(rec, d, figures=False)
            outputs.append(tuple(open(f"{d}/{n}", "rb").read() for n in ("summary.csv", "rates.csv")))
    same = outputs[0] == outputs[1] == outputs[2]
    ok &= same
    notes.append(f"CSV bytes identical: {same}")

    pts = _random_disk(rng, 200)
    err = 0.0
    for i in range(0, 200, 2):
        a, b = pts[i], pts[i + 1]
        g = compose(gamma(_random_disk(rng, 1, 0.9)[0]), MoebiusMap.rotation(float(rng.uniform(-3, 3))))
        err = max(err, abs(dist_disk(apply(g, a), apply(g, b)) - dist_disk(a, b)))
    ok &= err <= 1e-9
    notes.append(f"isometry error {err:.1e}")

    rt = 0.0
    for p in pts:
        q = halfplane_to_disk(disk_to_halfplane(p))
        rt = max(rt, abs(q.z - p.z))
    ok &= rt <= 1e-12
    notes.append(f"round trip {rt:.1e}")

    norm = 0.0
    for z0 in _random_disk(rng, 5, 0.9):
        val, _ = integrate.quad(lambda s: poisson_kernel(z0, BoundaryPoint(s)) / (2 * math.pi),
                                -math.pi, math.pi, limit=200, epsabs=1e-12, epsrel=1e-12)
        arcs = math.fsum(poisson_arc_masses(z0, np.linspace(-math.pi, math.pi, 17)).tolist())
        norm = max(norm, abs(val - 1.0), abs(arcs - 1.0))
    ok &= norm <= 1e-8
    notes.append(f"Poisson normalization {norm:.1e}")

    eq = max(_equivariance_error(DiskPoint(0.5, 0.0), 21), _equivariance_error(DiskPoint(-0.3, 0.6), 22))
    ok &= eq <= 1e-8
    notes.append(f"equivariance {eq:.1e}")
    return ok, ", ".join(notes), {"isometry": err, "round_trip": rt, "poisson": norm, "equivariance": eq}


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10, criterion_11, criterion_12, criterion_13,
            criterion_14, criterion_15]


def run_all(numbers=None, echo=None) -> list[CriterionResult]:
    out = []
    for c in CRITERIA:
        if numbers is None or c.number in numbers:
            res = c()
            if echo:
                echo(res.line())
            out.append(res)
    return out


def verdict(results) -> bool:
    return all(r.passed for r in results if not r.exploratory)
