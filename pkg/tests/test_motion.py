import math

import numpy as np
import pytest
from scipy import stats

from hypbbm.geometry import (
    ORIGIN_H,
    DiskPoint,
    HalfPlanePoint,
    dist_halfplane,
    halfplane_angle,
    poisson_arc_masses,
    to_halfplane,
)
from hypbbm.motion import (
    LEFT_ENDPOINT,
    StepScheme,
    max_distance_on_interval,
    sample_path,
    simulate_batch,
    single_particle_keys,
    step,
    step_sizes,
)
from hypbbm.rng import RandomStream


def test_vertical_increments_over_unit_steps():
    path = sample_path(ORIGIN_H, 1e5, StepScheme(1.0), RandomStream(1))
    dw = np.diff(path.w)
    assert dw.size == 100000
    assert abs(dw.mean() + 0.5) < 4 / math.sqrt(dw.size)
    assert abs(dw.var() - 1.0) < 4 * math.sqrt(2 / dw.size)


def test_horizontal_increments_centered():
    res = simulate_batch(single_particle_keys(2, 100000), 1.0, StepScheme(1.0))
    z = res.u / np.sqrt(0.5 * (1 + np.exp(2 * res.w)))
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * math.sqrt(2 / z.size)


def test_small_steps_are_continuous():
    path = sample_path(HalfPlanePoint(0.3, 0.2), 1.0, StepScheme(1e-4), RandomStream(3))
    d = [dist_halfplane(HalfPlanePoint(path.u[i], path.w[i]), HalfPlanePoint(path.u[i + 1], path.w[i + 1]))
         for i in range(0, path.u.size - 1, 50)]
    assert max(d) < 0.08


def test_zero_duration():
    start = DiskPoint(0.1, 0.2)
    path = sample_path(start, 0.0)
    assert path.total_duration == 0.0
    assert path.end == to_halfplane(start)
    assert path.steps == []


def test_step_sizes_sum_to_duration():
    for duration, dt in [(1.0, 0.3), (2.5, 0.01), (0.001, 0.1)]:
        dts = step_sizes(duration, dt)
        assert math.fsum(dts) == pytest.approx(duration, abs=1e-12)
        assert np.all(dts > 0) and np.all(dts <= dt + 1e-15)
    path = sample_path(ORIGIN_H, 1.7, StepScheme(0.25), RandomStream(1))
    assert math.fsum(d for d, _ in path.steps) == pytest.approx(1.7, abs=1e-12)


def test_single_step_matches_path():
    s = RandomStream(5)
    p = HalfPlanePoint(0.4, -0.3)
    assert step(p, 0.1, s, StepScheme(0.1)) == sample_path(p, 0.1, StepScheme(0.1), s).end
    with pytest.raises(ValueError):
        step(p, 0.0, s)


@pytest.mark.parametrize("dt", [0.1, 0.001])
def test_vertical_law(dt):
    t = 1.0
    res = simulate_batch(single_particle_keys(4, 3000), t, StepScheme(dt))
    assert stats.kstest((res.w + t / 2) / math.sqrt(t), "norm").pvalue > 1e-3


def test_batch_matches_single_paths():
    keys = single_particle_keys(6, 5)
    start = HalfPlanePoint(1.0, 0.5)
    res = simulate_batch(keys, 0.73, StepScheme(0.05), start, track_max=True)
    for i, k in enumerate(keys):
        path = sample_path(start, 0.73, StepScheme(0.05), RandomStream(key=int(k)))
        assert res.u[i] == pytest.approx(path.u[-1], abs=1e-12)
        assert res.w[i] == pytest.approx(path.w[-1], abs=1e-12)
        assert res.max_dist[i] == pytest.approx(path.distances_from_start()[1:].max(), abs=1e-12)


def test_max_dominates_endpoint():
    for seed in range(20):
        s = RandomStream(seed)
        m = max_distance_on_interval(ORIGIN_H, 0.5, stream=s)
        end = sample_path(ORIGIN_H, 0.5, StepScheme(1e-3), s).end
        assert m >= dist_halfplane(end, ORIGIN_H)


def test_schemes_share_vertical_path():
    s = RandomStream(8)
    a = sample_path(ORIGIN_H, 1.0, StepScheme(0.1), s)
    b = sample_path(ORIGIN_H, 1.0, StepScheme(0.1, LEFT_ENDPOINT), s)
    assert np.array_equal(a.w, b.w)
    with pytest.raises(ValueError):
        StepScheme(0.1, "midpoint")


def test_boundary_convergence():
    start = DiskPoint(0.5, 0.0)
    res = simulate_batch(single_particle_keys(12, 500), 200.0, StepScheme(0.05), start)
    ang = halfplane_angle(res.u, res.w)
    edges = np.linspace(-math.pi, math.pi, 17)
    obs, _ = np.histogram(ang, edges)
    expected = 500 * poisson_arc_masses(start, edges)
    assert stats.chisquare(obs, expected).pvalue > 1e-3


def test_to_csv():
    path = sample_path(ORIGIN_H, 0.2, StepScheme(0.1), RandomStream(1))
    lines = path.to_csv().splitlines()
    assert lines[0] == "t,u,w"
    assert len(lines) == 4
    assert [float(x) for x in lines[-1].split(",")] == [0.2, path.u[-1], path.w[-1]]
