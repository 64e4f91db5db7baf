"""Compiled inner loops for the BBM engine.

The random stream here follows ``hypbbm.rng`` draw for draw (the normals agree
up to the last bit of the libm transcendentals).
"""

import math

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_INV_2_53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi
_LOG2 = math.log(2.0)


@nb.njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, inline="always")
def _uniform(key, counter):
    b = _mix(key + (counter + _ONE) * _GOLDEN) >> _S11
    return (np.float64(b) + 0.5) * _INV_2_53


@nb.njit(cache=True)
def normal_pair_scalar(key, step):
    u1 = _uniform(key, _TWO * step + _ONE)
    u2 = _uniform(key, _TWO * step + _TWO)
    r = math.sqrt(-2.0 * math.log(u1))
    th = _TWO_PI * u2
    return r * math.cos(th), r * math.sin(th)


@nb.njit(cache=True)
def dist_origin_scalar(u, w):
    if abs(w) < 300.0 and abs(u) < 1e50:
        y = 0.5 * (u * u + math.expm1(w) ** 2) * math.exp(-w)
        return math.log1p(y + math.sqrt(y) * math.sqrt(y + 2.0))
    wmax = max(w, 0.0)
    a = 2.0 * math.log(abs(u)) if u != 0.0 else -math.inf
    b = 2.0 * (wmax + math.log(-math.expm1(-abs(w))))
    m = max(a, b)
    log_y = m + math.log(math.exp(a - m) + math.exp(b - m)) - _LOG2 - w
    if log_y < 0.0:
        y = math.exp(log_y)
        return math.log1p(y + math.sqrt(y * (y + 2.0)))
    e = math.exp(-log_y)
    return log_y + math.log(1.0 + e + math.sqrt(1.0 + 2.0 * e))


@nb.njit(cache=True)
def advance_rows(n, key, k, U, W, cur, birth, ng, end, pu, pw, mx, target, dt_max, trap, track):
    """One sub-step for every row with ``cur < target``.

    Returns (rows stepped, rows now due to fission before ``target``).
    """
    nact = 0
    nfis = 0
    for i in range(n):
        c = cur[i]
        e = end[i]
        if c < target:
            g = birth[i] + ng[i] * dt_max
            te = min(g, e, target)
            dt = te - c
            z1, z2 = normal_pair_scalar(key[i], k[i])
            dw = -0.5 * dt + math.sqrt(dt) * z1
            if trap:
                sig = math.sqrt(0.5 * dt * (1.0 + math.exp(2.0 * dw)))
            else:
                sig = math.sqrt(dt)
            Ui = U[i] + math.exp(W[i]) * sig * z2
            Wi = W[i] + dw
            U[i] = Ui
            W[i] = Wi
            cur[i] = te
            k[i] += _ONE
            if te == g:
                ng[i] += 1.0
            if track:
                d = dist_origin_scalar(pu[i] + math.exp(pw[i]) * Ui, pw[i] + Wi)
                if d > mx[i]:
                    mx[i] = d
            nact += 1
            c = te
        if c >= e and e < target:
            nfis += 1
    return nact, nfis
