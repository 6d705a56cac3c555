"""Hypograph surfaces: graphs over the non-first coordinates, and their flows.

A surface splits R^n into the points at or below a height function of the
remaining coordinates and the points strictly above it.  Three families are
supported: a level in one dimension, a line in the plane carried by a
rotating direction vector, and a fixed-normal hyperplane.  Each family
evolves under the same dynamics as the paths it interacts with, driven by
the noise with its first coordinate negated (the "flipped" noise), so that
an upper boundary and a lower path can share one Brownian source.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import (
    DriftField,
    ModelError,
    SamplePath,
    TimeGrid,
    explicit_step,
    implicit_step,
)


@dataclass(frozen=True)
class LevelSurface:
    """One-dimensional hypograph: everything at or below a level."""

    level: float

    @property
    def n(self) -> int:
        return 1

    @property
    def lipschitz(self) -> float:
        return 0.0

    def height(self, rest=None) -> float:
        return float(self.level)

    def contains(self, x) -> bool:
        return float(np.atleast_1d(x)[0]) <= self.level

    def params(self) -> dict:
        return {"level": float(self.level)}


@dataclass(frozen=True)
class LineSurface:
    """Planar hypograph below a line with direction u through an anchor point.

    The direction must satisfy |u_1| < u_2 so the line is a graph over the
    second coordinate with slope u_1/u_2 of modulus below one.
    """

    u: np.ndarray
    anchor: np.ndarray

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=float)
        a = np.asarray(self.anchor, dtype=float)
        if u.shape != (2,) or a.shape != (2,):
            raise ModelError("direction and anchor must be 2-vectors")
        if not u[1] > abs(u[0]):
            raise ModelError(
                f"degenerate line direction: need u_2 > |u_1|, got u={u.tolist()}"
            )
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "anchor", a)

    @property
    def n(self) -> int:
        return 2

    @property
    def lipschitz(self) -> float:
        return abs(self.u[0] / self.u[1])

    def height(self, rest) -> float:
        x2 = float(np.atleast_1d(rest)[0])
        return float(self.u[0] / self.u[1] * (x2 - self.anchor[1]) + self.anchor[0])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return float(x[0]) <= self.height(x[1:])

    def params(self) -> dict:
        return {"u": self.u.tolist(), "anchor": self.anchor.tolist()}


@dataclass(frozen=True)
class PlaneSurface:
    """Hyperplane hypograph with a fixed unit normal whose first entry is positive."""

    normal: np.ndarray
    anchor: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.normal, dtype=float)
        a = np.asarray(self.anchor, dtype=float)
        if d.ndim != 1 or a.shape != d.shape:
            raise ModelError("normal and anchor must be vectors of equal length")
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ModelError(f"normal must be a unit vector, got norm {np.linalg.norm(d)!r}")
        if not d[0] > 0.0:
            raise ModelError("normal must have positive first coordinate")
        object.__setattr__(self, "normal", d)
        object.__setattr__(self, "anchor", a)

    @property
    def n(self) -> int:
        return self.normal.shape[0]

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.normal[1:]) / self.normal[0])

    def height(self, rest) -> float:
        rest = np.atleast_1d(np.asarray(rest, dtype=float))
        d = self.normal
        return float((d @ self.anchor - d[1:] @ rest) / d[0])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return float(self.normal @ x) <= float(self.normal @ self.anchor)

    def params(self) -> dict:
        return {"normal": self.normal.tolist(), "anchor": self.anchor.tolist()}


HypoSurface = Union[LevelSurface, LineSurface, PlaneSurface]

_VARIANTS = {"level": LevelSurface, "line": LineSurface, "plane": PlaneSurface}


def variant_name(surface: HypoSurface) -> str:
    for name, cls in _VARIANTS.items():
        if isinstance(surface, cls):
            return name
    raise ModelError(f"unknown surface type {type(surface)}")


def _check_normal(surface: PlaneSurface, drift: DriftField) -> None:
    # the normal stays fixed only if the drift has no component along it
    b = drift.beta(surface.anchor)
    if abs(float(surface.normal @ b)) > 1e-8 * (1.0 + float(np.linalg.norm(b))):
        raise ModelError(
            "drift is tilted against the hyperplane normal; the surface would not stay planar"
        )


def step_surface(
    surface: HypoSurface,
    drift: DriftField,
    dt: float,
    dnoise_flipped: np.ndarray,
    backward: bool = False,
) -> HypoSurface:
    """Advance a surface one step, driven by a flipped-noise increment.

    Forward steps move the anchor with drift +beta: the level explicitly,
    the line and plane anchors by the implicit inverse-flow step, and the
    line direction by one deterministic Euler substep.  Backward steps use
    the explicit scheme with drift -beta throughout, which inverts the
    forward step exactly for the implicit families.
    """
    d = np.atleast_1d(np.asarray(dnoise_flipped, dtype=float))
    if isinstance(surface, LevelSurface):
        z = np.array([surface.level])
        b = float(drift.beta(z)[0])
        if backward:
            return LevelSurface(surface.level - b * dt + float(d[0]))
        return LevelSurface(surface.level + b * dt + float(d[0]))
    if isinstance(surface, LineSurface):
        u = surface.u
        du = np.array([u[1], u[0]]) * dt
        if backward:
            u_new = u - du
            a_new = explicit_step(surface.anchor, dt, d, drift)
        else:
            u_new = u + du
            a_new = implicit_step(surface.anchor, d, dt, drift)
        return LineSurface(u_new, a_new)
    if isinstance(surface, PlaneSurface):
        _check_normal(surface, drift)
        if backward:
            a_new = explicit_step(surface.anchor, dt, d, drift)
        else:
            a_new = implicit_step(surface.anchor, d, dt, drift)
        return PlaneSurface(surface.normal, a_new)
    raise ModelError(f"unknown surface type {type(surface)}")


@dataclass(frozen=True)
class SurfaceTrajectory:
    """A surface per grid node, all of one family."""

    grid: TimeGrid
    surfaces: tuple

    def __post_init__(self) -> None:
        if len(self.surfaces) != self.grid.N + 1:
            raise ModelError(
                f"need {self.grid.N + 1} surfaces for the grid, got {len(self.surfaces)}"
            )
        kinds = {type(s) for s in self.surfaces}
        if len(kinds) != 1:
            raise ModelError(f"mixed surface families in one trajectory: {kinds}")
        object.__setattr__(self, "surfaces", tuple(self.surfaces))

    def __getitem__(self, k: int) -> HypoSurface:
        return self.surfaces[k]

    def __len__(self) -> int:
        return len(self.surfaces)

    def reversed(self) -> "SurfaceTrajectory":
        return SurfaceTrajectory(self.grid, tuple(self.surfaces[::-1]))


def evolve_surface(
    initial: HypoSurface,
    flipped_noise: SamplePath,
    drift: DriftField,
    backward: bool = False,
) -> SurfaceTrajectory:
    """Evolve a surface along a whole grid of flipped-noise increments.

    Evolving over consecutive sub-grids and concatenating gives the same
    nodes as one pass, since each step consumes exactly one increment.
    """
    grid = flipped_noise.grid
    dt = grid.dt
    inc = flipped_noise.increments()
    out = [initial]
    for k in range(grid.N):
        out.append(step_surface(out[-1], drift, dt, inc[k], backward=backward))
    return SurfaceTrajectory(grid, tuple(out))


def write_surfaces_jsonl(fp, traj: SurfaceTrajectory) -> None:
    for t, s in zip(traj.grid.times, traj.surfaces):
        fp.write(
            json.dumps({"t": float(t), "variant": variant_name(s), "params": s.params()})
            + "\n"
        )


def read_surfaces_jsonl(fp) -> SurfaceTrajectory:
    ts, surfaces = [], []
    for line in fp:
        if not line.strip():
            continue
        rec = json.loads(line)
        ts.append(rec["t"])
        cls = _VARIANTS[rec["variant"]]
        surfaces.append(cls(**rec["params"]))
    grid = TimeGrid(float(ts[-1]), len(ts) - 1)
    return SurfaceTrajectory(grid, tuple(surfaces))
