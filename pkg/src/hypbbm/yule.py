"""The Yule tree: binary genealogy with i.i.d. Exp(lambda) edge lengths.

Vertices are addressed by words over ``{"L", "R"}``; the empty word is the
first fission point and the edge ``[ancestor, ""]`` carries the ancestor's
lifetime.  Each edge length is drawn from the counter-based stream keyed by
the vertex address, so any vertex can be regenerated in isolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from hypbbm import rng
from hypbbm.errors import OutOfHorizon, PopulationCapExceeded, UnknownAddress
from hypbbm.rng import RandomStream

DEFAULT_VERTEX_CAP = 10**7


def edge_lengths(keys, lam: float) -> np.ndarray:
    """Fission clocks of the vertices with the given keys."""
    return -np.log(rng.uniform(keys, np.zeros(np.shape(keys), dtype=np.uint64))) / lam


@dataclass
class YuleTree:
    lam: float
    horizon: float
    edge_length: dict[str, float]
    birth: dict[str, float] = field(default_factory=dict)
    seed: int | None = None
    root_key: int | None = None

    def __post_init__(self):
        if not self.birth:
            self.birth = _births(self.edge_length)

    def __len__(self):
        return len(self.edge_length)

    def __contains__(self, v):
        return v in self.edge_length

    def end(self, v: str) -> float:
        """``|v|``, the time of the fission at vertex ``v``."""
        return self.birth[v] + self.edge_length[v]

    def vertices(self):
        return sorted(self.edge_length, key=lambda v: (len(v), v))

    def population(self, t: float) -> int:
        return len(cross_section(self, t))

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"address": v, "edge_length": self.edge_length[v]}) + "\n"
            for v in self.vertices()
        )

    @classmethod
    def from_jsonl(cls, text: str, lam: float, horizon: float) -> "YuleTree":
        lengths = {}
        for line in text.splitlines():
            if line.strip():
                rec = json.loads(line)
                lengths[rec["address"]] = rec["edge_length"]
        return cls(lam, horizon, lengths)


def _births(edge_length: dict[str, float]) -> dict[str, float]:
    birth = {}
    for v in sorted(edge_length, key=len):
        birth[v] = 0.0 if v == "" else birth[v[:-1]] + edge_length[v[:-1]]
    return birth


def sample_tree(lam: float, horizon: float, stream: RandomStream, cap: int = DEFAULT_VERTEX_CAP) -> YuleTree:
    """Materialize every vertex born before ``horizon`` (plus the root edge)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    words = [""]
    keys = np.array([stream.key], dtype=np.uint64)
    births = np.zeros(1)
    lengths: dict[str, float] = {}
    birth_map: dict[str, float] = {}
    while words:
        ell = edge_lengths(keys, lam)
        for word, b, l in zip(words, births.tolist(), ell.tolist()):
            lengths[word] = l
            birth_map[word] = b
        if len(lengths) > cap:
            raise PopulationCapExceeded(cap)
        ends = births + ell
        split = ends < horizon
        if not split.any():
            break
        parents = [w for w, s in zip(words, split) if s]
        pk = keys[split]
        words = [w + ch for w in parents for ch in "LR"]
        keys = np.column_stack([rng.child_keys(pk, rng.LEFT), rng.child_keys(pk, rng.RIGHT)]).ravel()
        births = np.repeat(ends[split], 2)
    return YuleTree(lam, horizon, lengths, birth_map, seed=stream.seed, root_key=stream.key)


@dataclass
class CrossSection:
    """Tree points at distance ``t`` from the ancestor, as (edge address, offset)."""

    t: float
    elements: list[tuple[str, float]]

    def __len__(self):
        return len(self.elements)

    @property
    def size(self) -> int:
        return len(self.elements)


def cross_section(tree: YuleTree, t: float) -> CrossSection:
    """All points ``s v`` with ``|s v| = t``.

    A vertex born exactly at ``t`` is reported as the endpoint of its parent
    edge (offset equal to the parent's length).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t > tree.horizon:
        raise OutOfHorizon(f"t={t} beyond tree horizon {tree.horizon}")
    if t == 0:
        return CrossSection(0.0, [("", 0.0)])
    out = []
    for v in sorted(tree.edge_length):
        b = tree.birth[v]
        if b < t <= b + tree.edge_length[v]:
            out.append((v, t - b))
    return CrossSection(t, out)


def population_pmf(lam: float, t: float, n: int) -> float:
    """P[N(t) = n] for the geometric population law with success probability exp(-lam t)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be nonnegative")
    p = math.exp(-lam * t)
    if n == 1:
        return p
    return p * (-math.expm1(-lam * t)) ** (n - 1)


@dataclass
class MartingaleTrack:
    lam: float
    samples: list[tuple[float, float]]

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.samples])


def martingale_track(tree: YuleTree, grid) -> MartingaleTrack:
    return MartingaleTrack(
        tree.lam,
        [(float(t), len(cross_section(tree, t)) * math.exp(-tree.lam * t)) for t in grid],
    )


def subtree(tree: YuleTree, u: str) -> YuleTree:
    """The tree rooted at ``u`` (``u`` plays the role of the empty word)."""
    if u not in tree.edge_length:
        raise UnknownAddress(u)
    b0 = tree.birth[u]
    k = len(u)
    lengths = {v[k:]: l for v, l in tree.edge_length.items() if v.startswith(u)}
    births = {v[k:]: tree.birth[v] - b0 for v in tree.edge_length if v.startswith(u)}
    root_key = None if tree.root_key is None else rng.address_key(tree.root_key, u)
    return YuleTree(tree.lam, tree.horizon - b0, lengths, births, seed=tree.seed, root_key=root_key)


def confluent(a: str, b: str) -> str:
    """Last shared vertex of two rays through ``a`` and ``b``."""
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return a[:n]


def population_sizes(lam: float, times, seed: int, replicas, cap: int = DEFAULT_VERTEX_CAP,
                     chunk_vertices: int = 2_000_000) -> np.ndarray:
    """N(t) for every replica and time, without materializing addresses.

    Uses the same keyed edge lengths as ``sample_tree`` on ``RandomStream(seed).for_replica(r)``.
    Returns an int array of shape ``(len(replicas), len(times))``.
    """
    times = np.asarray(times, dtype=float)
    replicas = np.asarray(replicas)
    horizon = float(times.max()) if times.size else 0.0
    out = np.zeros((replicas.size, times.size), dtype=np.int64)
    per = max(1, int(chunk_vertices / (2.0 * math.exp(lam * horizon))))
    for start in range(0, replicas.size, per):
        sl = slice(start, min(start + per, replicas.size))
        idx = np.arange(sl.start, sl.stop)
        keys = rng.replica_keys(seed, replicas[sl])
        births = np.zeros(idx.size)
        owner = idx - sl.start
        nvert = np.ones(idx.size, dtype=np.int64)
        counts = np.zeros((idx.size, times.size), dtype=np.int64)
        counts[:, times == 0] += 1
        while keys.size:
            ends = births + edge_lengths(keys, lam)
            alive = (births[:, None] < times[None, :]) & (times[None, :] <= ends[:, None])
            for j in range(times.size):
                counts[:, j] += np.bincount(owner[alive[:, j]], minlength=idx.size)
            split = ends < horizon
            if not split.any():
                break
            owner = np.repeat(owner[split], 2)
            nvert += 2 * np.bincount(owner[::2], minlength=idx.size)
            if nvert.max() > cap:
                raise PopulationCapExceeded(cap)
            pk = keys[split]
            keys = np.column_stack([rng.child_keys(pk, rng.LEFT), rng.child_keys(pk, rng.RIGHT)]).ravel()
            births = np.repeat(ends[split], 2)
        out[sl] = counts
    return out
