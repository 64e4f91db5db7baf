"""Hyperbolic branching Brownian motion.

Each Yule edge ``[v', v]`` carries an independent Brownian path started at
``i`` (the local path), mapped by the affine isometry that sends ``i`` to the
particle's position at the fission ``v'``.  In the half-plane that isometry is
``z -> e^{pw} z + pu``, so positions compose as
``(u, w) = (pu + e^{pw} U, pw + W)``.  The endpoint of the local path is the
random group element of vertex ``v``; the composition of those along a lineage
is the branching random walk on the affine group.

All edges alive at a given moment are advanced together.  An edge's path is
sub-stepped on its own grid ``birth + k*dt_max``, cut additionally at its
fission time and at every snapshot time, and sub-step ``j`` of edge ``v``
always uses the normal pair ``j`` of the key of ``v``.  The result therefore
does not depend on how replicas are batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from hypbbm import rng
from hypbbm._kernels import advance_rows
from hypbbm.errors import PopulationCapExceeded, UnknownAddress
from hypbbm.geometry import (
    ORIGIN_H,
    DiskPoint,
    HalfPlanePoint,
    MoebiusMap,
    compose,
    gamma,
    gamma_from_halfplane,
    halfplane_angle,
    halfplane_to_disk_arrays,
    hdist_origin,
    to_disk,
    to_halfplane,
)
from hypbbm.motion import StepScheme, simulate_batch, single_particle_keys
from hypbbm.yule import DEFAULT_VERTEX_CAP, edge_lengths

_ROW_BUDGET = 400_000


@dataclass(frozen=True)
class RunConfig:
    lam: float
    horizon: float
    snapshot_times: tuple = ()
    start: object = ORIGIN_H
    scheme: StepScheme = StepScheme()
    seed: int = 0
    particle_cap: int = DEFAULT_VERTEX_CAP
    track_path_max: bool = False

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.horizon >= 0:
            raise ValueError("horizon must be nonnegative")
        snaps = tuple(sorted(float(t) for t in self.snapshot_times)) or (float(self.horizon),)
        if snaps[0] < 0 or snaps[-1] > self.horizon:
            raise ValueError("snapshot times must lie in [0, horizon]")
        object.__setattr__(self, "snapshot_times", snaps)
        object.__setattr__(self, "start", to_halfplane(self.start))


@dataclass
class Particle:
    address: str
    offset: float
    position: HalfPlanePoint


@dataclass(eq=False)
class Population:
    """Snapshot of one replica at time ``t``; arrays are in address order."""

    t: float
    u: np.ndarray
    w: np.ndarray
    depth: np.ndarray | None = None
    hi: np.ndarray | None = None
    lo: np.ndarray | None = None
    offset: np.ndarray | None = None
    path_max: np.ndarray | None = None
    replica: int = 0
    lam: float | None = None

    @classmethod
    def from_points(cls, t: float, points, lam=None) -> "Population":
        pts = [to_halfplane(p) for p in points]
        return cls(t, np.array([p.u for p in pts]), np.array([p.w for p in pts]), lam=lam)

    def __len__(self):
        return self.u.size

    @property
    def size(self) -> int:
        return self.u.size

    def addresses(self) -> list[str]:
        if self.depth is None:
            return [""] * self.size
        return [_word(int(d), int(h), int(l)) for d, h, l in zip(self.depth, self.hi, self.lo)]

    @property
    def particles(self) -> list[Particle]:
        off = self.offset if self.offset is not None else np.zeros(self.size)
        return [Particle(a, float(s), HalfPlanePoint(float(x), float(y)))
                for a, s, x, y in zip(self.addresses(), off, self.u, self.w)]

    def distances(self, origin=ORIGIN_H) -> np.ndarray:
        o = to_halfplane(origin)
        if o.u == 0.0 and o.w == 0.0:
            return hdist_origin(self.u, self.w)
        # move the origin to i by the inverse affine map
        return hdist_origin((self.u - o.u) * math.exp(-o.w), self.w - o.w)

    def angles(self) -> np.ndarray:
        return halfplane_angle(self.u, self.w)

    def disk(self):
        return halfplane_to_disk_arrays(self.u, self.w)

    def mapped(self, g: MoebiusMap) -> "Population":
        """Image under an isometry fixing the boundary point 1 (exact affine action)."""
        from hypbbm.geometry import affine_of

        bu, bw = affine_of(g)
        return Population(self.t, bu + math.exp(bw) * self.u, bw + self.w, self.depth, self.hi,
                          self.lo, self.offset, self.path_max, self.replica, self.lam)


def _word(depth: int, hi: int, lo: int) -> str:
    bits = format(hi, "064b") + format(lo, "064b")
    if depth > 128:
        raise ValueError("address deeper than 128 letters is not tracked")
    return bits[:depth].replace("0", "L").replace("1", "R")


@dataclass
class Genealogy:
    """Vertex table of one replica: edge data and the endpoint of each completed edge."""

    parent: np.ndarray
    side: np.ndarray
    birth: np.ndarray
    length: np.ndarray
    key: np.ndarray
    local_end: np.ndarray  # (n, 2): local path endpoint (U, W); nan if the edge is unfinished
    abs_end: np.ndarray  # (n, 2): absolute position (u, w) at the fission
    _index: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.parent.size

    def address(self, i: int) -> str:
        letters = []
        while self.parent[i] >= 0:
            letters.append("LR"[self.side[i]])
            i = self.parent[i]
        return "".join(reversed(letters))

    def index(self, word: str) -> int:
        if not self._index:
            self._index = {self.address(i): i for i in range(len(self))}
        try:
            return self._index[word]
        except KeyError:
            raise UnknownAddress(word) from None

    def edge_lengths(self) -> dict[str, float]:
        return {self.address(i): float(self.length[i]) for i in range(len(self))}


@dataclass
class Run:
    config: RunConfig
    populations: list[Population]
    genealogy: Genealogy | None = None
    replica: int = 0

    def __iter__(self):
        return iter(self.populations)

    def __len__(self):
        return len(self.populations)

    def __getitem__(self, i):
        return self.populations[i]

    def at(self, t: float) -> Population:
        for p in self.populations:
            if p.t == t:
                return p
        raise KeyError(t)


_DTYPES = dict(rep=np.int64, key=np.uint64, depth=np.int64, hi=np.uint64, lo=np.uint64,
               birth=float, end=float, pu=float, pw=float, U=float, W=float, cur=float,
               k=np.uint64, ng=float, mx=float, vid=np.int64)


class _Rows:
    """Growable structure-of-arrays for the edges currently alive."""

    def __init__(self, capacity: int):
        self.n = 0
        self.buf = {name: np.zeros(capacity, dtype=dt) for name, dt in _DTYPES.items()}

    def __getattr__(self, name):
        buf = self.__dict__.get("buf")
        if buf is not None and name in buf:
            return buf[name][: self.n]
        raise AttributeError(name)

    def append(self, **cols):
        m = len(next(iter(cols.values())))
        need = self.n + m
        cap = next(iter(self.buf.values())).size
        if need > cap:
            new = max(need, 2 * cap)
            for name, arr in self.buf.items():
                grown = np.zeros(new, dtype=arr.dtype)
                grown[: self.n] = arr[: self.n]
                self.buf[name] = grown
        for name, val in cols.items():
            self.buf[name][self.n:need] = val
        self.n = need


def _set_bit(hi, lo, depth, side):
    d = depth.astype(np.int64)
    s = np.uint64(side)
    hi = hi.copy()
    lo = lo.copy()
    m = d < 64
    hi[m] |= s << (np.uint64(63) - d[m].astype(np.uint64))
    m2 = (d >= 64) & (d < 128)
    lo[m2] |= s << (np.uint64(127) - d[m2].astype(np.uint64))
    return hi, lo


def simulate(config: RunConfig, replicas, keep_genealogy: bool = False) -> Iterator[Run]:
    """Run the given replica indices; yields one ``Run`` per replica, in order."""
    replicas = list(replicas)
    expected = 2.0 * math.exp(min(config.lam * config.horizon, 50.0))
    per = 1 if keep_genealogy else max(1, int(_ROW_BUDGET / expected))
    for i in range(0, len(replicas), per):
        yield from _simulate_batch(config, replicas[i:i + per], keep_genealogy)


def run(config: RunConfig, replica: int = 0) -> Run:
    """One replica of hyperbolic BBM with its genealogy."""
    return next(simulate(config, [replica], keep_genealogy=True))


def _simulate_batch(config: RunConfig, replicas: list[int], keep: bool) -> list[Run]:
    lam = config.lam
    dt_max = config.scheme.dt_max
    trap = config.scheme.trapezoid
    track = config.track_path_max
    cap = config.particle_cap
    nrep = len(replicas)
    u0, w0 = config.start.u, config.start.w

    keys = rng.replica_keys(config.seed, replicas)
    n = nrep
    rows = _Rows(max(16, int(min(_ROW_BUDGET, n * math.exp(min(lam * config.horizon, 30.0))))))
    rows.append(
        rep=np.arange(n), key=keys, depth=np.zeros(n), hi=0, lo=0, birth=0.0,
        end=edge_lengths(keys, lam), pu=u0, pw=w0, U=0.0, W=0.0, cur=0.0, k=0, ng=1.0,
        mx=float(hdist_origin(np.array([u0]), np.array([w0]))[0]), vid=np.arange(n),
    )
    nvert = np.ones(nrep, dtype=np.int64)
    # genealogy columns, appended per fission batch
    g_parent = [np.full(n, -1)]
    g_side = [np.zeros(n, dtype=np.int8)]
    g_birth = [np.zeros(n)]
    g_len = [rows.end.copy()]
    g_key = [keys.copy()]
    g_rep = [np.arange(n)]
    done_vid, done_local, done_abs = [], [], []
    nv_total = n

    snaps: list[list[Population]] = [[] for _ in range(nrep)]
    targets = list(config.snapshot_times)
    if targets[-1] < config.horizon:
        targets.append(float(config.horizon))
    record = set(config.snapshot_times)

    for target in targets:
        while True:
            cur, end = rows.cur, rows.end
            f = np.flatnonzero((cur >= end) & (end < target))
            if f.size:
                m = f.size
                rep, key, depth = rows.rep[f], rows.key[f], rows.depth[f]
                hi0, lo0, fend = rows.hi[f], rows.lo[f], end[f]
                pw = rows.pw[f]
                eu = rows.pu[f] + np.exp(pw) * rows.U[f]
                ew = pw + rows.W[f]
                if keep:
                    done_vid.append(rows.vid[f])
                    done_local.append(np.column_stack([rows.U[f], rows.W[f]]))
                    done_abs.append(np.column_stack([eu, ew]))
                nvert += 2 * np.bincount(rep, minlength=nrep)
                if nvert.max() > cap:
                    raise PopulationCapExceeded(cap)
                kid = {}
                for side in (rng.LEFT, rng.RIGHT):
                    ck = rng.child_keys(key, side)
                    hi, lo = _set_bit(hi0, lo0, depth, side)
                    ell = edge_lengths(ck, lam)
                    vid = np.arange(nv_total, nv_total + m)
                    nv_total += m
                    if keep:
                        g_parent.append(rows.vid[f])
                        g_side.append(np.full(m, side, dtype=np.int8))
                        g_birth.append(fend.copy())
                        g_len.append(ell)
                        g_key.append(ck)
                        g_rep.append(rep)
                    kid[side] = (ck, hi, lo, ell, vid)
                # left child takes over the parent's row, right child is appended
                ck, hi, lo, ell, vid = kid[rng.LEFT]
                rows.key[f] = ck
                rows.depth[f] = depth + 1
                rows.hi[f] = hi
                rows.lo[f] = lo
                rows.birth[f] = fend
                rows.end[f] = fend + ell
                rows.pu[f] = eu
                rows.pw[f] = ew
                rows.U[f] = 0.0
                rows.W[f] = 0.0
                rows.k[f] = 0
                rows.ng[f] = 1.0
                rows.vid[f] = vid
                ck, hi, lo, ell, vid = kid[rng.RIGHT]
                rows.append(rep=rep, key=ck, depth=depth + 1, hi=hi, lo=lo, birth=fend,
                            end=fend + ell, pu=eu, pw=ew, U=0.0, W=0.0, cur=fend, k=0, ng=1.0,
                            mx=rows.mx[f], vid=vid)
            nact, pending = advance_rows(
                rows.n, rows.key, rows.k, rows.U, rows.W, rows.cur, rows.birth, rows.ng,
                rows.end, rows.pu, rows.pw, rows.mx, target, dt_max, trap, track,
            )
            if nact == 0 and pending == 0:
                break
        if target in record:
            order = np.lexsort((rows.depth, rows.lo, rows.hi, rows.rep))
            rep = rows.rep[order]
            pw = rows.pw[order]
            u = rows.pu[order] + np.exp(pw) * rows.U[order]
            w = pw + rows.W[order]
            depth, hi, lo = rows.depth[order], rows.hi[order], rows.lo[order]
            off = target - rows.birth[order]
            mx = rows.mx[order] if track else None
            bounds = np.searchsorted(rep, np.arange(nrep + 1))
            for r in range(nrep):
                sl = slice(bounds[r], bounds[r + 1])
                snaps[r].append(Population(
                    target, u[sl], w[sl], depth[sl], hi[sl], lo[sl], off[sl],
                    mx[sl] if track else None, replica=replicas[r], lam=lam,
                ))

    out = []
    gen_all = None
    if keep:
        nv = nv_total
        local = np.full((nv, 2), np.nan)
        absend = np.full((nv, 2), np.nan)
        if done_vid:
            dv = np.concatenate(done_vid)
            local[dv] = np.concatenate(done_local)
            absend[dv] = np.concatenate(done_abs)
        gen_all = dict(parent=np.concatenate(g_parent), side=np.concatenate(g_side),
                       birth=np.concatenate(g_birth), length=np.concatenate(g_len),
                       key=np.concatenate(g_key), rep=np.concatenate(g_rep), local=local, absend=absend)
    for r in range(nrep):
        gen = None
        if keep:
            sel = np.flatnonzero(gen_all["rep"] == r)
            remap = np.full(nv_total, -1)
            remap[sel] = np.arange(sel.size)
            par = gen_all["parent"][sel]
            gen = Genealogy(
                parent=np.where(par >= 0, remap[np.maximum(par, 0)], -1),
                side=gen_all["side"][sel], birth=gen_all["birth"][sel],
                length=gen_all["length"][sel], key=gen_all["key"][sel],
                local_end=gen_all["local"][sel], abs_end=gen_all["absend"][sel],
            )
        out.append(Run(config, snaps[r], gen, replicas[r]))
    return out


def run_replicas(config: RunConfig, n: int, offset: int = 0) -> Iterator[Run]:
    return simulate(config, range(offset, offset + n))


# ---------------------------------------------------------------------------
# empirical measures

PUSHFORWARDS = ("identity", "radial", "vertical", "distance", "real_part")


@dataclass(eq=False)
class EmpiricalMeasure:
    """Atoms with weights; ``atoms`` is (n, 2) of (u, w) for the identity pushforward."""

    atoms: np.ndarray
    weights: np.ndarray
    kind: str = "identity"

    @property
    def total_weight(self) -> float:
        return math.fsum(self.weights.tolist())

    def mass(self, indicator: Callable[[np.ndarray], np.ndarray]) -> float:
        return math.fsum(self.weights[indicator(self.atoms)].tolist())

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return math.fsum((self.weights * f(self.atoms)).tolist())


def _pushforward(pop: Population, kind: str) -> np.ndarray:
    if kind == "identity":
        return np.column_stack([pop.u, pop.w])
    if kind == "radial":
        return pop.angles()
    if kind == "vertical":
        return -pop.w
    if kind == "distance":
        return pop.distances()
    if kind == "real_part":
        return pop.u.copy()
    raise ValueError(f"unknown pushforward {kind!r}; expected one of {PUSHFORWARDS}")


def empirical(pop: Population, pushforward: str = "identity") -> EmpiricalMeasure:
    """The normalized occupation measure (weights 1/N(t)), pushed forward."""
    if pop.size == 0:
        raise ValueError("empty population")
    return EmpiricalMeasure(_pushforward(pop, pushforward), np.full(pop.size, 1.0 / pop.size), pushforward)


def lambda_measure(pop: Population, lam: float | None = None, pushforward: str = "identity") -> EmpiricalMeasure:
    """The occupation measure scaled by exp(-lambda t); total mass N(t) exp(-lambda t)."""
    lam = pop.lam if lam is None else lam
    if pop.size == 0:
        raise ValueError("empty population")
    return EmpiricalMeasure(_pushforward(pop, pushforward), np.full(pop.size, math.exp(-lam * pop.t)), pushforward)


def martingale_value(pop: Population, lam: float | None = None) -> float:
    lam = pop.lam if lam is None else lam
    return pop.size * math.exp(-lam * pop.t)


# ---------------------------------------------------------------------------
# many-to-one

@dataclass
class ManyToOne:
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def z(self) -> float:
        return (self.lhs - self.rhs) / self.combined_se if self.combined_se > 0 else 0.0

    @classmethod
    def from_samples(cls, sums, single_values, lam: float, t: float) -> "ManyToOne":
        """``sums``: per-replica population sums; ``single_values``: f on single paths."""
        sums = np.asarray(sums, dtype=float)
        vals = np.asarray(single_values, dtype=float)
        scale = math.exp(lam * t)
        return cls(
            lhs=float(sums.mean()), rhs=scale * float(vals.mean()),
            lhs_se=float(sums.std(ddof=1) / math.sqrt(sums.size)),
            rhs_se=scale * float(vals.std(ddof=1) / math.sqrt(vals.size)),
        )


SINGLE_ARM_SALT = 0x5EED


def single_arm(f, t: float, n: int, seed: int = 0, scheme: StepScheme = StepScheme()) -> np.ndarray:
    """``f`` evaluated on ``n`` single hyperbolic BM paths from the origin."""
    keys = single_particle_keys(seed ^ SINGLE_ARM_SALT, n)
    b = simulate_batch(keys, t, scheme, ORIGIN_H, track_max=True)
    return np.asarray(f(b.u, b.w, b.max_dist), dtype=float)


def many_to_one(f, t: float, lam: float, replicas: int, seed: int = 0,
                single_replicas: int | None = None, scheme: StepScheme = StepScheme()) -> ManyToOne:
    """Compare E[sum over T(t) of f] with exp(lam t) E[f(single BM)].

    ``f(u, w, path_max)`` maps arrays of endpoint log coordinates and the
    running max of the distance to the origin to bounded values.
    """
    if replicas < 100:
        raise ValueError("need at least 100 replicas")
    cfg = RunConfig(lam, t, (t,), ORIGIN_H, scheme, seed, track_path_max=True)
    sums = [float(np.sum(f(p.u, p.w, p.path_max)))
            for r in simulate(cfg, range(replicas)) for p in r.populations]
    vals = single_arm(f, t, single_replicas or replicas, seed, scheme)
    return ManyToOne.from_samples(sums, vals, lam, t)


# ---------------------------------------------------------------------------
# group elements

def group_element(run: Run, v: str) -> MoebiusMap:
    """``G_v``: the product of the edge group elements along the lineage of ``v``."""
    gen = run.genealogy
    if gen is None:
        raise ValueError("run was simulated without its genealogy")
    g = MoebiusMap.identity()
    for k in range(len(v) + 1):
        i = gen.index(v[:k])
        U, W = gen.local_end[i]
        if not np.isfinite(U):
            raise UnknownAddress(f"edge {v[:k]!r} does not end before the horizon")
        g = compose(g, gamma_from_halfplane(HalfPlanePoint(float(U), float(W))))
    return g


def edge_element(run: Run, v: str) -> MoebiusMap:
    gen = run.genealogy
    i = gen.index(v)
    U, W = gen.local_end[i]
    if not np.isfinite(U):
        raise UnknownAddress(f"edge {v!r} does not end before the horizon")
    return gamma_from_halfplane(HalfPlanePoint(float(U), float(W)))


def vertex_position(run: Run, v: str) -> HalfPlanePoint:
    """Recorded position at the fission of vertex ``v``."""
    i = run.genealogy.index(v)
    u, w = run.genealogy.abs_end[i]
    if not np.isfinite(u):
        raise UnknownAddress(f"edge {v!r} does not end before the horizon")
    return HalfPlanePoint(float(u), float(w))


def start_map(config: RunConfig) -> MoebiusMap:
    """``gamma_{z0}`` for the run's start point."""
    return gamma_from_halfplane(config.start)
