"""Statistics of populations: distance extremes and rates, distance CLT,
escape rate, boundary measures, atom decay and box-counting dimension.

Particles in one snapshot share ancestry, so single-snapshot tests are
reported as statistics; verdicts are formed by aggregating over replicas.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from hypbbm.errors import InsufficientData, WrongRegime
from hypbbm.geometry import ORIGIN_H, BoundaryPoint, poisson_arc_masses, to_disk

TRANSIENT_LAMBDA = 0.125


# ---------------------------------------------------------------------------
# reference constants


def r_star(lam: float) -> float:
    """Linear rate of the maximal distance."""
    return 0.5 + math.sqrt(2.0 * lam)


def r_lower(lam: float) -> float:
    """Linear rate of the minimal distance (positive only in the transient regime)."""
    return 0.5 - math.sqrt(2.0 * lam)


def correction_reference(lam: float, kind: str = "max") -> float:
    """Limit of (Max_t - r* t)/log t, or of (Min_t - r_* t)/log t for ``kind="min"``."""
    if lam > TRANSIENT_LAMBDA:
        raise WrongRegime(f"log corrections need lambda <= 1/8, got {lam}")
    c = 3.0 / math.sqrt(8.0 * lam)
    if kind == "max":
        return -c
    if kind == "min":
        return c
    raise ValueError("kind must be 'max' or 'min'")


def limit_set_dimension(lam: float) -> float:
    """Hausdorff dimension of the limit set; the full circle above 1/8."""
    if lam > TRANSIENT_LAMBDA:
        return 1.0
    return 0.5 * (1.0 - math.sqrt(max(0.0, 1.0 - 8.0 * lam)))


def support_dimension(lam: float) -> float:
    """Dimension of the support of the limit distribution."""
    return min(2.0 * lam, 1.0)


# ---------------------------------------------------------------------------
# records


@dataclass
class TestReport:
    """Outcome of a statistical check.

    ``passed`` is ``statistic <= threshold``, or ``statistic >= threshold`` for
    one-sided lower tests (``lower=True``); ``strict`` makes the comparison strict.
    """

    __test__ = False

    statistic: float
    threshold: float
    passed: bool
    sample_size: int
    description: str
    lower: bool = False
    strict: bool = False
    extra: dict = field(default_factory=dict)

    @classmethod
    def upper_test(cls, statistic, threshold, sample_size, description, strict=False, **extra):
        s, h = float(statistic), float(threshold)
        return cls(s, h, bool(s < h if strict else s <= h), int(sample_size), description, False, strict, extra)

    @classmethod
    def lower_test(cls, statistic, threshold, sample_size, description, strict=False, **extra):
        s, h = float(statistic), float(threshold)
        return cls(s, h, bool(s > h if strict else s >= h), int(sample_size), description, True, strict, extra)

    @classmethod
    def interval(cls, value, lo, hi, sample_size, description, **extra):
        """``value`` in ``[lo, hi]``; the statistic is the signed excess over the interval."""
        value = float(value)
        excess = max(lo - value, value - hi)
        return cls.upper_test(excess, 0.0, sample_size, description, value=value, lo=float(lo), hi=float(hi), **extra)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class RateSeries:
    points: list
    window_fraction: float = 1.0

    def __post_init__(self):
        self.points = [(float(t), float(v)) for t, v in self.points]
        ts = [t for t, _ in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.points)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.points])

    def fit(self, window_fraction: float | None = None) -> tuple[float, float]:
        frac = self.window_fraction if window_fraction is None else window_fraction
        return _tail_fit(self.times, self.values, frac)

    @property
    def slope(self) -> float:
        return self.fit()[0]

    @property
    def intercept(self) -> float:
        return self.fit()[1]


@dataclass
class CorrectionSeries:
    series: RateSeries
    reference: float
    kind: str = "max"


@dataclass
class DimensionEstimate:
    scales: np.ndarray
    counts: np.ndarray
    dimension: float
    r2: float


@dataclass
class ArcHistogram:
    """Masses of the arcs ``(edges[k], edges[k+1]]`` of the circle."""

    edges: np.ndarray
    masses: np.ndarray
    weights: str = "mu"

    @property
    def bins(self) -> int:
        return self.masses.size


@dataclass
class AtomDecay:
    times: np.ndarray
    max_mass: np.ndarray
    occupied: np.ndarray


# ---------------------------------------------------------------------------
# fits


def _linear_fit(x, y) -> tuple[float, float, float]:
    """Least squares line through (x, y) with compensated sums; returns slope, intercept, r^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm = math.fsum(x.tolist()) / x.size
    ym = math.fsum(y.tolist()) / y.size
    dx, dy = x - xm, y - ym
    sxx = math.fsum((dx * dx).tolist())
    sxy = math.fsum((dx * dy).tolist())
    syy = math.fsum((dy * dy).tolist())
    if sxx == 0:
        raise InsufficientData("all abscissae coincide")
    slope = sxy / sxx
    r2 = 1.0 if syy == 0 else sxy * sxy / (sxx * syy)
    return slope, ym - slope * xm, r2


def _tail_fit(t, v, window_fraction):
    if not 0 < window_fraction <= 1:
        raise ValueError("window_fraction must lie in (0, 1]")
    n = math.ceil(window_fraction * len(t) - 1e-12)
    if n < 4:
        raise InsufficientData(f"need at least 4 points in the window, have {n}")
    slope, intercept, _ = _linear_fit(t[-n:], v[-n:])
    return slope, intercept


def rate_fit(series: RateSeries, window_fraction: float = 1.0) -> float:
    """Least-squares slope on the trailing ``window_fraction`` of the points."""
    return series.fit(window_fraction)[0]


# ---------------------------------------------------------------------------
# distances


def _distances(pop, origin=ORIGIN_H) -> np.ndarray:
    if pop.size == 0:
        raise ValueError("empty population")
    return pop.distances(origin)


def max_min_distance(pop, origin=ORIGIN_H) -> tuple[float, float]:
    d = _distances(pop, origin)
    return float(d.max()), float(d.min())


def extremal_indices(pop, origin=ORIGIN_H) -> tuple[int, int]:
    """Indices of the farthest and the closest particle; ties go to the first in address order."""
    d = _distances(pop, origin)
    return int(np.argmax(d)), int(np.argmin(d))


def mean_distance(pop, origin=ORIGIN_H) -> float:
    d = _distances(pop, origin)
    return math.fsum(d.tolist()) / d.size


def extremes_series(pops, origin=ORIGIN_H) -> tuple[RateSeries, RateSeries]:
    """Max_t and Min_t over a run's snapshots."""
    mx, mn = [], []
    for p in pops:
        a, b = max_min_distance(p, origin)
        mx.append((p.t, a))
        mn.append((p.t, b))
    return RateSeries(mx), RateSeries(mn)


def log_correction(series: RateSeries, lam: float, kind: str = "max") -> CorrectionSeries:
    """(value - r t)/log t with r = r* (``kind="max"``) or r_* (``kind="min"``)."""
    ref = correction_reference(lam, kind)
    rate = r_star(lam) if kind == "max" else r_lower(lam)
    pts = []
    for t, v in series.points:
        if t < math.e:
            raise ValueError(f"log correction needs t >= e, got t={t}")
        pts.append((t, (v - rate * t) / math.log(t)))
    return CorrectionSeries(RateSeries(pts, series.window_fraction), ref, kind)


# ---------------------------------------------------------------------------
# central limit theorem of distances


def ks_threshold(n: int, alpha: float = 1e-3) -> float:
    """Critical value of the one-sample KS distance for ``n`` samples."""
    return float(stats.kstwo.isf(alpha, n))


def standardized_clt_test(values, t: float, description: str, alpha: float = 1e-3,
                          min_size: int = 30) -> TestReport:
    """KS distance of ``(values - t/2)/sqrt(t)`` from the standard normal."""
    values = np.asarray(values, dtype=float)
    if values.size < min_size:
        raise InsufficientData(f"need at least {min_size} particles, have {values.size}")
    if not t > 0:
        raise ValueError("t must be positive")
    z = (values - 0.5 * t) / math.sqrt(t)
    ks = stats.kstest(z, "norm").statistic
    return TestReport.upper_test(ks, ks_threshold(z.size, alpha), z.size, description)


def distance_clt_test(pop, t: float | None = None, origin=ORIGIN_H, alpha: float = 1e-3) -> TestReport:
    t = pop.t if t is None else t
    return standardized_clt_test(_distances(pop, origin), t, f"distance CLT at t={t:g}", alpha)


def vertical_clt_test(pop, t: float | None = None, alpha: float = 1e-3) -> TestReport:
    """Same test on -log Im, whose particles perform an exact Euclidean BBM."""
    t = pop.t if t is None else t
    return standardized_clt_test(-pop.w, t, f"vertical CLT at t={t:g}", alpha)


# ---------------------------------------------------------------------------
# escape rate


def mean_distance_series(pops, origin=ORIGIN_H) -> RateSeries:
    return RateSeries([(p.t, mean_distance(p, origin)) for p in pops])


def escape_rate(pops, origin=ORIGIN_H, window_fraction: float = 1.0) -> float:
    """Slope of the mean particle distance against time."""
    pops = list(pops)
    if len(pops) < 4:
        raise InsufficientData(f"need at least 4 snapshots, have {len(pops)}")
    return rate_fit(mean_distance_series(pops, origin), window_fraction)


# ---------------------------------------------------------------------------
# boundary


def arc_edges(bins: int) -> np.ndarray:
    if bins < 2:
        raise ValueError("need at least 2 bins")
    return np.linspace(-math.pi, math.pi, bins + 1)


def arc_index(angles, bins: int) -> np.ndarray:
    """Arc of each angle in (-pi, pi], arcs closed on the right."""
    width = 2.0 * math.pi / bins
    k = np.ceil((np.asarray(angles, dtype=float) + math.pi) / width).astype(np.int64) - 1
    return np.clip(k, 0, bins - 1)


def boundary_measure(pop, bins: int, weights: str = "mu") -> ArcHistogram:
    """Arc masses of the radial pushforward of mu_t (``"mu"``) or Lambda_t (``"lambda"``)."""
    edges = arc_edges(bins)
    if pop.size == 0:
        raise ValueError("empty population")
    if weights == "mu":
        w = 1.0 / pop.size
    elif weights == "lambda":
        w = math.exp(-pop.lam * pop.t)
    else:
        raise ValueError("weights must be 'mu' or 'lambda'")
    counts = np.bincount(arc_index(pop.angles(), bins), minlength=bins)
    return ArcHistogram(edges, counts * w, weights)


def average_masses(histograms) -> tuple[np.ndarray, np.ndarray]:
    """Replica mean and standard error of arc masses (compensated sums)."""
    m = np.array([h.masses for h in histograms])
    n = m.shape[0]
    mean = np.array([math.fsum(col) / n for col in m.T.tolist()])
    if n < 2:
        return mean, np.full(mean.size, np.nan)
    var = np.array([math.fsum(((col - mu) ** 2).tolist()) / (n - 1) for col, mu in zip(m.T, mean)])
    return mean, np.sqrt(var / n)


def uniformity_test(histograms, alpha: float = 1e-3) -> TestReport:
    """Hotelling test that the replica-mean arc masses equal 1/bins.

    Arc masses of one replica are dependent, and Lambda masses do not sum to a
    fixed total, so the full covariance of the per-replica vectors is used.
    The last arc is dropped when the masses sum to one in every replica.
    """
    m = np.array([h.masses for h in histograms])
    n, k = m.shape
    target = np.full(k, 1.0 / k)
    if np.allclose(m.sum(axis=1), 1.0, atol=1e-12):
        m, target = m[:, :-1], target[:-1]
    p = m.shape[1]
    if n <= p + 1:
        raise InsufficientData(f"need more than {p + 1} replicas, have {n}")
    diff = m.mean(axis=0) - target
    cov = np.cov(m, rowvar=False)
    t2 = n * float(diff @ np.linalg.solve(cov, diff))
    f = t2 * (n - p) / (p * (n - 1))
    pval = float(stats.f.sf(f, p, n - p))
    return TestReport.lower_test(pval, alpha, n, f"uniform arc masses over {k} arcs (p-value)",
                                 hotelling_t2=t2)


def poisson_comparison(histograms, z0, sigmas: float = 3.0) -> TestReport:
    """Largest |replica-mean mass - Poisson mass| in units of the standard error."""
    mean, se = average_masses(histograms)
    edges = histograms[0].edges
    expected = poisson_arc_masses(to_disk(z0), edges)
    z = np.abs(mean - expected) / se
    return TestReport.upper_test(float(z.max()), sigmas, len(histograms),
                                 f"arc masses vs Poisson kernel from {to_disk(z0).z:.3g}",
                                 expected=expected.tolist(), observed=mean.tolist())


def atom_decay(pops, bins: int = 2 ** 10) -> AtomDecay:
    """Largest single-arc mass of mu_t^rad and the number of occupied arcs, per snapshot."""
    pops = list(pops)
    if not pops:
        raise ValueError("empty series")
    mx, occ = [], []
    for p in pops:
        counts = np.bincount(arc_index(p.angles(), bins), minlength=bins)
        mx.append(counts.max() / p.size)
        occ.append(np.count_nonzero(counts))
    return AtomDecay(np.array([p.t for p in pops]), np.array(mx), np.array(occ))


def angular_supports(pops, bins: int = 2 ** 10) -> dict:
    """Occupied arcs of the last snapshot next to those of the whole trace of snapshots."""
    pops = list(pops)
    final = set(np.unique(arc_index(pops[-1].angles(), bins)).tolist())
    trace = set()
    for p in pops:
        trace.update(np.unique(arc_index(p.angles(), bins)).tolist())
    return {"bins": bins, "final": len(final), "trace": len(trace)}


# ---------------------------------------------------------------------------
# dimension


def dyadic_scales(k_min: int = 4, k_max: int = 9) -> np.ndarray:
    return 2.0 * math.pi / 2.0 ** np.arange(k_min, k_max + 1)


def _angle_array(angles) -> np.ndarray:
    out = []
    for a in angles:
        out.append(a.angle if isinstance(a, BoundaryPoint) else float(a))
    return np.array(out)


def box_dimension(angles, scales=None) -> DimensionEstimate:
    """Slope of log N(eps) against log(1/eps), N counting occupied arcs of width eps."""
    theta = _angle_array(angles)
    if theta.size < 100:
        raise InsufficientData(f"need at least 100 angles, have {theta.size}")
    scales = dyadic_scales() if scales is None else np.asarray(scales, dtype=float)
    if scales.size < 2 or np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be strictly decreasing and at least two")
    counts = []
    for eps in scales:
        nb = max(1, math.ceil(2.0 * math.pi / eps - 1e-9))
        k = np.minimum(np.floor((theta + math.pi) / eps).astype(np.int64), nb - 1)
        counts.append(np.unique(k).size)
    counts = np.array(counts)
    slope, _, r2 = _linear_fit(-np.log2(scales), np.log2(counts))
    return DimensionEstimate(scales, counts, slope, r2)


# ---------------------------------------------------------------------------
# excursions and compact sets


def excursion_tail_check(max_dist, end_dist, cs=(1.5, 2.0, 2.5), sigmas: float = 3.0) -> list[TestReport]:
    """P[M >= c] <= 2 P[rho(B_1, B_0) >= c] up to ``sigmas`` combined standard errors."""
    max_dist = np.asarray(max_dist)
    end_dist = np.asarray(end_dist)
    n = max_dist.size
    out = []
    for c in cs:
        pm = np.mean(max_dist >= c)
        pe = np.mean(end_dist >= c)
        se = math.sqrt(pm * (1 - pm) / n + 4.0 * pe * (1 - pe) / end_dist.size)
        out.append(TestReport.upper_test(pm - 2.0 * pe, sigmas * se, n,
                                         f"P[M>={c:g}] - 2 P[rho>={c:g}]", p_max=pm, p_end=pe))
    return out


def gaussian_tail_rate(max_dist, cs=None) -> float:
    """Slope of log P[M >= c] against -(c - 1/2)^2 / 2."""
    max_dist = np.asarray(max_dist)
    cs = np.linspace(2.0, 4.0, 9) if cs is None else np.asarray(cs, dtype=float)
    p = np.array([np.mean(max_dist >= c) for c in cs])
    keep = p > 0
    if np.count_nonzero(keep) < 3:
        raise InsufficientData("tail too thin for a fit")
    slope, _, _ = _linear_fit(-0.5 * (cs[keep] - 0.5) ** 2, np.log(p[keep]))
    return slope


def ball_occupied(pop, radius: float = 2.0, origin=ORIGIN_H) -> bool:
    """Whether some particle lies in the closed ball of the given radius."""
    return bool(pop.size and np.any(_distances(pop, origin) <= radius))


def occupation_fraction(pops, radius: float = 2.0, origin=ORIGIN_H) -> float:
    """Fraction of populations (one per replica) with a particle in the ball."""
    pops = list(pops)
    return sum(ball_occupied(p, radius, origin) for p in pops) / len(pops)
