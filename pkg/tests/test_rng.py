import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from hypbbm import rng
from hypbbm._kernels import normal_pair_scalar
from hypbbm.rng import RandomStream


def test_uniform_in_open_interval():
    u = rng.uniform(rng.replica_keys(3, np.arange(1000)), np.arange(1000))
    assert np.all((u > 0) & (u < 1))


def test_same_key_same_draws():
    a, b = RandomStream(11), RandomStream(11)
    assert a.key == b.key
    assert a.uniform(5) == b.uniform(5)
    assert np.array_equal(a.normals(20)[0], b.normals(20)[0])
    assert RandomStream(12).key != a.key


def test_child_and_address_keys_agree():
    s = RandomStream(4)
    assert s.child("L").child("R").key == s.at("LR").key
    assert s.child("L").key != s.child("R").key
    assert s.at("").key == s.key


def test_replica_streams_differ():
    keys = rng.replica_keys(9, np.arange(10000))
    assert np.unique(keys).size == keys.size
    assert RandomStream(9).for_replica(0).key == RandomStream(9).key


def test_normals_moments():
    z1, z2 = RandomStream(2).normals(200000)
    for z in (z1, z2):
        assert abs(z.mean()) < 0.015
        assert abs(z.var() - 1) < 0.015
    assert abs(np.corrcoef(z1, z2)[0, 1]) < 0.015


@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_compiled_normals_match(key, step):
    a = normal_pair_scalar(np.uint64(key), np.uint64(step))
    b = rng.normal_pair(np.array([key], dtype=np.uint64), [step])
    assert abs(a[0] - b[0][0]) <= 1e-15 * max(1.0, abs(b[0][0]))
    assert abs(a[1] - b[1][0]) <= 1e-15 * max(1.0, abs(b[1][0]))
