"""Hyperbolic Brownian motion in the logarithmic half-plane chart.

With ``w = log Im z`` the generator is ``(e^{2w} d_u^2 + d_w^2 - d_w) / 2``, so
``w`` is a Brownian motion with drift -1/2 and is advanced exactly.  Given the
``w`` path, the ``u`` increment over a sub-step is centered normal with
variance ``int e^{2 w_s} ds``; that integral is approximated by the left
endpoint or by the trapezoid rule.

Paths are built as the image of a path started at ``i`` under the affine map
``z -> e^{w0} z + u0`` that sends ``i`` to the start point.  Sub-step ``j``
consumes the normal pair ``j`` of the stream.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from hypbbm import rng
from hypbbm.geometry import ORIGIN_H, HalfPlanePoint, hdist_origin, to_halfplane
from hypbbm.rng import RandomStream

LEFT_ENDPOINT = "left"
TRAPEZOID = "trapezoid"


@dataclass(frozen=True)
class StepScheme:
    dt_max: float = 1e-2
    u_integration: str = TRAPEZOID

    def __post_init__(self):
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if self.u_integration not in (LEFT_ENDPOINT, TRAPEZOID):
            raise ValueError(f"u_integration must be {LEFT_ENDPOINT!r} or {TRAPEZOID!r}")

    @property
    def trapezoid(self) -> bool:
        return self.u_integration == TRAPEZOID


EXCURSION_SCHEME = StepScheme(1e-3)


def increment(U, W, dt, z1, z2, trapezoid=True):
    """One sub-step of the local path ``(U, W)`` (arrays or floats)."""
    dw = -0.5 * dt + np.sqrt(dt) * z1
    if trapezoid:
        sig = np.sqrt(0.5 * dt * (1.0 + np.exp(2.0 * dw)))
    else:
        sig = np.sqrt(dt)
    return U + np.exp(W) * sig * z2, W + dw


def step(p: HalfPlanePoint, dt: float, stream: RandomStream, scheme: StepScheme = StepScheme(),
         index: int = 0) -> HalfPlanePoint:
    """Advance ``p`` by ``dt`` using normal pair ``index`` of ``stream``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    z1, z2 = stream.normal_pair(index)
    U, W = increment(0.0, 0.0, dt, z1, z2, scheme.trapezoid)
    return HalfPlanePoint(p.u + math.exp(p.w) * float(U), p.w + float(W))


def step_sizes(duration: float, dt_max: float) -> np.ndarray:
    if duration <= 0:
        return np.zeros(0)
    n = max(1, math.ceil(duration / dt_max - 1e-9))
    dts = np.full(n, dt_max)
    dts[-1] = duration - dt_max * (n - 1)
    return dts


@dataclass(frozen=True, eq=False)
class PathSegment:
    """A discretized path; ``times[0] = 0`` and ``(u[0], w[0])`` is the start."""

    start: HalfPlanePoint
    times: np.ndarray
    u: np.ndarray
    w: np.ndarray

    @property
    def total_duration(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> list[tuple[float, HalfPlanePoint]]:
        dts = np.diff(self.times)
        return [(float(d), HalfPlanePoint(float(a), float(b)))
                for d, a, b in zip(dts, self.u[1:], self.w[1:])]

    @property
    def end(self) -> HalfPlanePoint:
        return HalfPlanePoint(float(self.u[-1]), float(self.w[-1]))

    def distances_from_start(self) -> np.ndarray:
        # isometry: distance to the start equals distance of the local path to i
        return hdist_origin((self.u - self.start.u) * math.exp(-self.start.w), self.w - self.start.w)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "u", "w"])
        for row in zip(self.times.tolist(), self.u.tolist(), self.w.tolist()):
            wr.writerow([repr(x) for x in row])
        return buf.getvalue()


def _local_path(dts: np.ndarray, z1: np.ndarray, z2: np.ndarray, trapezoid: bool):
    dw = -0.5 * dts + np.sqrt(dts) * z1
    W = np.concatenate([[0.0], np.cumsum(dw)])
    if trapezoid:
        sig = np.sqrt(0.5 * dts * (1.0 + np.exp(2.0 * dw)))
    else:
        sig = np.sqrt(dts)
    U = np.concatenate([[0.0], np.cumsum(np.exp(W[:-1]) * sig * z2)])
    return U, W


def sample_path(start, duration: float, scheme: StepScheme = StepScheme(),
                stream: RandomStream | None = None) -> PathSegment:
    """Hyperbolic BM from ``start`` over ``[0, duration]``."""
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    start = to_halfplane(start)
    stream = stream or RandomStream()
    dts = step_sizes(duration, scheme.dt_max)
    z1, z2 = stream.normals(dts.size)
    U, W = _local_path(dts, z1, z2, scheme.trapezoid)
    times = np.concatenate([[0.0], np.cumsum(dts)])
    if dts.size:
        times[-1] = duration
    return PathSegment(start, times, start.u + math.exp(start.w) * U, start.w + W)


def max_distance_on_interval(start, duration: float, scheme: StepScheme = EXCURSION_SCHEME,
                             stream: RandomStream | None = None) -> float:
    """Max of ``rho(B_s, B_0)`` over the discretized path (a lower bound of the true max)."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    return float(sample_path(start, duration, scheme, stream).distances_from_start().max())


@dataclass
class BatchResult:
    u: np.ndarray
    w: np.ndarray
    max_dist: np.ndarray | None = None


def simulate_batch(keys, duration: float, scheme: StepScheme = StepScheme(), start=ORIGIN_H,
                   track_max: bool = False) -> BatchResult:
    """Independent paths, one per stream key, advanced in lockstep.

    Row ``i`` equals ``sample_path(start, duration, scheme, RandomStream(key=keys[i]))``.
    ``max_dist`` is the running max of the distance to the start point.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    start = to_halfplane(start)
    U = np.zeros(keys.size)
    W = np.zeros(keys.size)
    mx = np.zeros(keys.size) if track_max else None
    trap = scheme.trapezoid
    for j, dt in enumerate(step_sizes(duration, scheme.dt_max)):
        z1, z2 = rng.normal_pair(keys, np.full(keys.size, j, dtype=np.uint64))
        U, W = increment(U, W, dt, z1, z2, trap)
        if track_max:
            np.maximum(mx, hdist_origin(U, W), out=mx)
    return BatchResult(start.u + math.exp(start.w) * U, start.w + W, mx)


def single_particle_keys(seed: int, n: int, offset: int = 0) -> np.ndarray:
    return rng.replica_keys(seed, np.arange(offset, offset + n))
