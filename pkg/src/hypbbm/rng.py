"""Counter-based random numbers keyed by (stream key, counter).

Every random quantity in a simulation is a pure function of a 64-bit key and
an integer counter, so results do not depend on traversal order, batching or
worker count.  The bit generator is the SplitMix64 output function applied to
``key + (counter + 1) * GOLDEN``, i.e. the ``counter``-th output of a SplitMix64
sequence started at ``key``.

Keys for tree vertices are obtained by hashing the parent key with the side
(L or R), so a vertex key is a hash of the run seed and the vertex address.

Counter layout per vertex key: counter 0 is the fission clock (edge length),
counters ``2j+1, 2j+2`` feed the Box-Muller pair of Brownian sub-step ``j``.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_CHILD_SALT = np.uint64(0xD1B54A32D192ED03)
_CHILD_STEP = np.uint64(0x8CB92BA72F3D8DD7)
_SEED_SALT = np.uint64(0x2545F4914F6CDD1D)
_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0

LEFT = 0
RIGHT = 1


def _u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.array([int(x) & _MASK64], dtype=np.uint64)
    return np.asarray(x, dtype=np.uint64)


def mix64(x) -> np.ndarray:
    """SplitMix64 finalizer (a bijection on 64-bit words)."""
    z = _u64(x).copy()
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= _M1
        z ^= z >> np.uint64(27)
        z *= _M2
        z ^= z >> np.uint64(31)
    return z


def random_bits(keys, counters) -> np.ndarray:
    keys = _u64(keys)
    counters = np.asarray(counters).astype(np.uint64)
    with np.errstate(over="ignore"):
        return mix64(keys + (counters + np.uint64(1)) * GOLDEN)


def uniform(keys, counters) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1)."""
    b = random_bits(keys, counters) >> np.uint64(11)
    return (b.astype(np.float64) + 0.5) * _INV_2_53


def normal_pair(keys, steps):
    """Two independent standard normals per key for Brownian sub-step ``steps``."""
    steps = np.asarray(steps).astype(np.uint64)
    u1 = uniform(keys, np.uint64(2) * steps + np.uint64(1))
    u2 = uniform(keys, np.uint64(2) * steps + np.uint64(2))
    r = np.sqrt(-2.0 * np.log(u1))
    theta = _TWO_PI * u2
    return r * np.cos(theta), r * np.sin(theta)


def child_keys(keys, side) -> np.ndarray:
    """Keys of the L (side=0) or R (side=1) children."""
    keys = _u64(keys)
    with np.errstate(over="ignore"):
        return mix64(mix64(keys ^ _CHILD_SALT) + np.uint64(side + 1) * _CHILD_STEP)


def replica_keys(seed: int, replicas) -> np.ndarray:
    """Root (vertex epsilon) keys for independent replicas of a run."""
    base = mix64(mix64(int(seed) & _MASK64) ^ _SEED_SALT)
    r = np.asarray(replicas).astype(np.uint64)
    with np.errstate(over="ignore"):
        return mix64(base + r * GOLDEN)


def address_key(root_key: int, word: str) -> int:
    k = _u64(root_key)
    for ch in word:
        k = child_keys(k, LEFT if ch == "L" else RIGHT)
    return int(k[0])


class RandomStream:
    """A keyed counter-based stream.

    ``RandomStream(seed)`` is the root stream of replica 0; ``for_replica``
    and ``child`` derive independent streams.  Draws are addressed by counter,
    so two streams with the same key always agree.
    """

    __slots__ = ("seed", "key")

    def __init__(self, seed: int = 0, key: int | None = None):
        self.seed = int(seed)
        self.key = int(replica_keys(seed, [0])[0]) if key is None else int(key) & _MASK64

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key=0x{self.key:016x})"

    def for_replica(self, replica: int) -> "RandomStream":
        return RandomStream(self.seed, int(replica_keys(self.seed, [replica])[0]))

    def child(self, side: int | str) -> "RandomStream":
        if isinstance(side, str):
            side = LEFT if side == "L" else RIGHT
        return RandomStream(self.seed, int(child_keys(self.key, side)[0]))

    def at(self, word: str) -> "RandomStream":
        return RandomStream(self.seed, address_key(self.key, word))

    def uniform(self, counter: int) -> float:
        return float(uniform(self.key, [counter])[0])

    def exponential(self, rate: float) -> float:
        """The fission clock of this key (counter 0)."""
        return float(-np.log(uniform(self.key, [0])[0]) / rate)

    def normal_pair(self, step: int) -> tuple[float, float]:
        z1, z2 = normal_pair(self.key, [step])
        return float(z1[0]), float(z2[0])

    def normals(self, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
        keys = np.full(n_steps, self.key, dtype=np.uint64)
        return normal_pair(keys, np.arange(n_steps))
