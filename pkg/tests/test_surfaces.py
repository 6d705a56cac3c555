"""Hypographical surfaces: geometry, stepping, evolution, serialization."""

import io

import numpy as np
import pytest

from dualflow import (
    BilinearDrift,
    ConstantDrift,
    LevelSurface,
    LineSurface,
    LogisticDrift,
    ModelError,
    PlaneSurface,
    RngSpec,
    SurfaceTrajectory,
    TimeGrid,
    evolve_surface,
    sample_brownian,
    step_surface,
)
from dualflow.surfaces import read_surfaces_jsonl, variant_name, write_surfaces_jsonl


def toy_logistic():
    inputs = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, 1.0], [-1.0, -1.0]])
    labels = np.array([1.0, 1.0, 0.0, 0.0])
    return LogisticDrift(inputs, labels)


# ---------------------------------------------------------------------------
# geometry


def test_level_surface_geometry():
    s = LevelSurface(0.7)
    assert s.n == 1
    assert s.lipschitz == 0.0
    assert s.height() == 0.7
    assert s.contains(np.array([0.7]))
    assert not s.contains(np.array([0.700001]))
    assert variant_name(s) == "level"


def test_line_surface_geometry():
    s = LineSurface(u=np.array([1.0, 2.0]), anchor=np.array([0.4, 0.0]))
    # graph over x2 with slope u1/u2 through the anchor
    assert s.height(np.array([2.0])) == pytest.approx(0.4 + 0.5 * 2.0)
    assert s.lipschitz == pytest.approx(0.5)
    assert s.contains(np.array([1.4, 2.0]))
    assert not s.contains(np.array([1.41, 2.0]))
    assert variant_name(s) == "line"


def test_line_surface_needs_interior_cone_direction():
    with pytest.raises(ModelError):
        LineSurface(u=np.array([2.0, 1.0]), anchor=np.zeros(2))
    with pytest.raises(ModelError):
        LineSurface(u=np.array([1.0, -2.0]), anchor=np.zeros(2))


def test_plane_surface_geometry():
    d = np.array([1.0, -1.0]) / np.sqrt(2.0)
    s = PlaneSurface(normal=d, anchor=np.array([0.5, 0.0]))
    # on the plane: d @ x = d @ anchor
    x2 = 1.0
    h = s.height(np.array([x2]))
    assert d @ np.array([h, x2]) == pytest.approx(d @ s.anchor)
    assert s.lipschitz == pytest.approx(1.0)
    assert variant_name(s) == "plane"


def test_plane_surface_validation():
    with pytest.raises(ModelError):
        PlaneSurface(normal=np.array([1.0, 1.0]), anchor=np.zeros(2))  # not unit
    with pytest.raises(ModelError):
        PlaneSurface(normal=np.array([-1.0, 0.0]), anchor=np.zeros(2))  # d1 <= 0


# ---------------------------------------------------------------------------
# stepping


def test_level_step_forward_backward_inverse():
    drift = ConstantDrift(0.5)
    s = LevelSurface(0.3)
    d = np.array([0.2])
    fwd = step_surface(s, drift, 0.1, d)
    assert fwd.level == pytest.approx(0.3 + 0.05 + 0.2)
    back = step_surface(fwd, drift, 0.1, -d, backward=True)
    assert back.level == pytest.approx(0.3, abs=1e-15)


def test_line_step_forward_backward_inverse():
    drift = BilinearDrift()
    s = LineSurface(u=np.array([1.0, 2.0]), anchor=np.array([0.4, 0.1]))
    d = np.array([0.05, -0.08])
    dt = 0.01
    fwd = step_surface(s, drift, dt, d)
    # direction follows its own deterministic substep
    assert np.allclose(fwd.u, s.u + dt * np.array([s.u[1], s.u[0]]))
    back = step_surface(fwd, drift, dt, -d, backward=True)
    # the anchor inverts exactly (implicit/explicit pair); the direction
    # substep only inverts to second order in dt
    assert np.allclose(back.anchor, s.anchor, atol=1e-12)
    assert np.allclose(back.u, s.u, atol=5.0 * dt**2)


def test_plane_step_forward_backward_inverse():
    drift = toy_logistic()
    d_normal = np.array([1.0, -1.0]) / np.sqrt(2.0)  # orthogonal to the inputs
    s = PlaneSurface(normal=d_normal, anchor=np.array([0.3, 0.0]))
    d = np.array([0.05, 0.02])
    dt = 0.01
    fwd = step_surface(s, drift, dt, d)
    back = step_surface(fwd, drift, dt, -d, backward=True)
    assert np.allclose(back.anchor, s.anchor, atol=1e-12)


def test_plane_step_rejects_tilted_drift():
    drift = ConstantDrift(np.array([1.0, 0.0]))
    s = PlaneSurface(normal=np.array([1.0, 0.0]), anchor=np.zeros(2))
    with pytest.raises(ModelError):
        step_surface(s, drift, 0.01, np.array([0.1, 0.0]))


def test_variant_name_unknown():
    with pytest.raises(ModelError):
        variant_name(object())


# ---------------------------------------------------------------------------
# evolution


def test_evolve_surface_concatenates():
    drift = BilinearDrift()
    grid = TimeGrid(0.5, 20)
    noise = sample_brownian(grid, 2, RngSpec(31, 0))
    s0 = LineSurface(u=np.array([1.0, 2.0]), anchor=np.array([0.4, 0.1]))
    full = evolve_surface(s0, noise, drift)
    assert len(full) == grid.N + 1

    # restarting from the midpoint surface reproduces the second half
    half = grid.N // 2
    sub_grid = TimeGrid(grid.T / 2, half)
    shifted = noise.values[half:] - noise.values[half]
    from dualflow import SamplePath

    sub_noise = SamplePath(sub_grid, shifted)
    second = evolve_surface(full[half], sub_noise, drift)
    assert np.allclose(second[half].anchor, full[grid.N].anchor, atol=1e-12)
    assert np.allclose(second[half].u, full[grid.N].u, atol=1e-12)


def test_trajectory_validation_and_reversal():
    grid = TimeGrid(1.0, 2)
    surfaces = (LevelSurface(0.0), LevelSurface(1.0), LevelSurface(2.0))
    traj = SurfaceTrajectory(grid, surfaces)
    assert traj[1].level == 1.0
    rev = traj.reversed()
    assert rev[0].level == 2.0 and rev[2].level == 0.0
    with pytest.raises(ModelError):
        SurfaceTrajectory(grid, surfaces[:2])  # wrong node count
    with pytest.raises(ModelError):
        SurfaceTrajectory(
            grid, (LevelSurface(0.0), LineSurface(np.array([1.0, 2.0]), np.zeros(2)), LevelSurface(2.0))
        )  # mixed variants


# ---------------------------------------------------------------------------
# serialization


def test_surfaces_jsonl_round_trip():
    grid = TimeGrid(0.5, 20)
    noise = sample_brownian(grid, 2, RngSpec(31, 1))
    s0 = LineSurface(u=np.array([1.0, 2.0]), anchor=np.array([0.4, 0.1]))
    traj = evolve_surface(s0, noise, BilinearDrift())
    buf = io.StringIO()
    write_surfaces_jsonl(buf, traj)
    buf.seek(0)
    back = read_surfaces_jsonl(buf)
    assert len(back) == len(traj)
    for a, b in zip(traj.surfaces, back.surfaces):
        assert np.allclose(a.anchor, b.anchor, atol=0.0)
        assert np.allclose(a.u, b.u, atol=0.0)
