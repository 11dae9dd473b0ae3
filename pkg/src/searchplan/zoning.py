"""Search zones: shells of equally sized cells around an object of interest.

Each searched face is tiled by a grid. Every grid cell gets a cuboid standing
off the face between ``d_near`` and ``d_near + depth``, and a small cube at
the cuboid's center that the agent must enter for the cell to count as
searched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import CompoundObject, Cuboid, Face, faces, face_index, overlap_volume
from .sensing import SensorModel, detection_prob, footprint_side

DEFAULT_CUBE_FRACTION = 0.2
_EPS = 1e-9


class ZoningError(ValueError):
    pass


@dataclass(frozen=True)
class ZoneSpec:
    index: int
    d_near: float
    depth: float
    pd: float
    cell_side_override: float | None = None

    def __post_init__(self):
        if not self.d_near > 0:
            raise ZoningError(f"zone {self.index}: d_near must be positive")
        if not self.depth > 0:
            raise ZoningError(f"zone {self.index}: depth must be positive")
        if not 0.0 <= self.pd <= 1.0:
            raise ZoningError(f"zone {self.index}: pd must lie in [0, 1]")
        if self.cell_side_override is not None and not self.cell_side_override > 0:
            raise ZoningError(f"zone {self.index}: cell side override must be positive")

    @property
    def d_far(self) -> float:
        return self.d_near + self.depth


@dataclass(frozen=True)
class GridCell:
    row: int
    col: int
    s0: float  # offset along the face u axis
    t0: float  # offset along the face v axis
    size_u: float
    size_v: float

    def center_on(self, face: Face) -> np.ndarray:
        return face.point(self.s0 + self.size_u / 2.0, self.t0 + self.size_v / 2.0)


@dataclass(frozen=True)
class SearchCell:
    cell_cuboid: Cuboid
    interior_cube: Cuboid
    face: Face
    grid: GridCell
    zone_index: int
    part_index: int
    d_near: float
    depth: float

    @property
    def face_id(self) -> str:
        return self.face.face_id

    @property
    def grid_index(self) -> tuple[int, int]:
        return (self.grid.row, self.grid.col)

    @property
    def sigma(self) -> tuple[float, float, float]:
        return (self.grid.size_u, self.grid.size_v, self.depth)

    @property
    def label(self) -> str:
        return f"p{self.part_index}{self.face_id}r{self.grid.row}c{self.grid.col}"


@dataclass(frozen=True)
class Zone:
    spec: ZoneSpec
    cells: tuple[SearchCell, ...]
    object_index: int = 0

    @property
    def index(self) -> int:
        return self.spec.index

    @property
    def pd(self) -> float:
        return self.spec.pd

    def __len__(self) -> int:
        return len(self.cells)


def quantize_detection(s: SensorModel, breakpoints: Sequence[float],
                       pd_overrides: Sequence[float] | None = None,
                       cell_side_overrides: Sequence[float | None] | None = None) -> list[ZoneSpec]:
    """Split the detection-probability domain at ``breakpoints`` into zone specs.

    Zone i covers [b_i, b_{i+1}). Its probability defaults to the value at the
    far edge, the smallest value inside the interval. The first breakpoint may
    equal d_min; the zone is then open at that end.
    """
    b = [float(x) for x in breakpoints]
    if len(b) < 2:
        raise ZoningError("need at least two breakpoints")
    if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
        raise ZoningError(f"breakpoints must be strictly increasing: {b}")
    if b[0] < s.d_min:
        raise ZoningError(f"breakpoint {b[0]} lies below d_min={s.d_min}")
    if b[-1] > s.d_max + _EPS:
        raise ZoningError(f"breakpoint {b[-1]} lies beyond d_max={s.d_max}")
    n = len(b) - 1
    if pd_overrides is not None and len(pd_overrides) != n:
        raise ZoningError(f"expected {n} pd overrides, got {len(pd_overrides)}")
    if cell_side_overrides is not None and len(cell_side_overrides) != n:
        raise ZoningError(f"expected {n} cell side overrides, got {len(cell_side_overrides)}")
    specs = []
    for i in range(n):
        pd = detection_prob(b[i + 1], s) if pd_overrides is None else float(pd_overrides[i])
        side = None if cell_side_overrides is None else cell_side_overrides[i]
        specs.append(ZoneSpec(i, b[i], b[i + 1] - b[i], pd,
                              None if side is None else float(side)))
    return specs


def face_grid(face: Face, cell_side: float) -> list[GridCell]:
    """Tile a face with the fewest cells no larger than ``cell_side``."""
    if not cell_side > 0:
        raise ZoningError("cell side must be positive")
    length, width = face.extent
    rows = max(1, math.ceil(length / cell_side - _EPS))
    cols = max(1, math.ceil(width / cell_side - _EPS))
    su, sv = length / rows, width / cols
    return [GridCell(r, c, r * su, c * sv, su, sv) for r in range(rows) for c in range(cols)]


def coverage_margin_check(cell: SearchCell, s: SensorModel) -> bool:
    """Footprint from the closest point of the interior cube still covers the
    grid cell under the worst lateral offset inside the cube."""
    h = cell.interior_cube.dims[0] / 2.0
    d_inner = cell.d_near + cell.depth / 2.0 - h
    side = max(cell.grid.size_u, cell.grid.size_v)
    return footprint_side(max(d_inner, 0.0), s) >= side + 2.0 * h - _EPS


def _cell_cuboid(face: Face, g: GridCell, d_near: float, depth: float) -> Cuboid:
    axis = face.axis
    sign = float(face.outward_normal[axis])
    lo = face.point(g.s0, g.t0).copy()
    hi = face.point(g.s0 + g.size_u, g.t0 + g.size_v).copy()
    plane = face.origin[axis]
    near, far = plane + sign * d_near, plane + sign * (d_near + depth)
    lo[axis], hi[axis] = min(near, far), max(near, far)
    return Cuboid.from_bounds(lo, hi)


def build_zone(obj: Cuboid | CompoundObject, faces_to_search: Iterable[str], spec: ZoneSpec,
               s: SensorModel, cube_fraction: float = DEFAULT_CUBE_FRACTION,
               object_index: int = 0) -> Zone:
    parts = obj.parts if isinstance(obj, CompoundObject) else (obj,)
    face_ids = list(dict.fromkeys(faces_to_search))
    if not face_ids:
        raise ZoningError("at least one face must be searched")
    for fid in face_ids:
        face_index(fid)
        if fid == "-z":
            raise ZoningError("the ground face (-z) cannot be searched")
    if not 0 < cube_fraction <= 1:
        raise ZoningError("cube_fraction must lie in (0, 1]")
    side = spec.cell_side_override
    if side is None:
        side = footprint_side(spec.d_near, s)

    cells: list[SearchCell] = []
    for pi, part in enumerate(parts):
        by_id = {f.face_id: f for f in faces(part, owner=pi)}
        for fid in face_ids:
            face = by_id[fid]
            for g in face_grid(face, side):
                box = _cell_cuboid(face, g, spec.d_near, spec.depth)
                cube_side = cube_fraction * float(np.min(box.dims))
                cube = Cuboid(box.center, np.full(3, cube_side))
                cell = SearchCell(box, cube, face, g, spec.index, pi, spec.d_near, spec.depth)
                if not coverage_margin_check(cell, s):
                    raise ZoningError(
                        f"zone {spec.index} cell {cell.label}: footprint from the interior cube "
                        f"does not cover the {max(g.size_u, g.size_v):g} m grid cell; "
                        "reduce cube_fraction or the cell side")
                cells.append(cell)

    for a in range(len(cells)):
        for b in range(a + 1, len(cells)):
            ca, cb = cells[a], cells[b]
            if (ca.part_index, ca.face_id) == (cb.part_index, cb.face_id):
                continue
            if overlap_volume(ca.cell_cuboid, cb.cell_cuboid) > _EPS:
                raise ZoningError(
                    f"zone {spec.index}: cells {ca.label} and {cb.label} overlap")
    return Zone(spec, tuple(cells), object_index)


def build_zones(obj: Cuboid | CompoundObject, faces_to_search: Iterable[str],
                specs: Sequence[ZoneSpec], s: SensorModel,
                cube_fraction: float = DEFAULT_CUBE_FRACTION, object_index: int = 0) -> list[Zone]:
    faces_to_search = list(faces_to_search)
    return [build_zone(obj, faces_to_search, spec, s, cube_fraction, object_index) for spec in specs]
