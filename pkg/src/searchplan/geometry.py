"""Half-spaces, axis-aligned cuboids and their faces.

Every cuboid is stored in box form (center, dims) and exposes the equivalent
six outward-facing planes, so containment can be evaluated either way.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# Canonical face order. Index l in the MIQP refers to this order.
FACE_IDS = ("+x", "-x", "+y", "-y", "+z", "-z")
_FACE_AXIS = {"+x": (0, 1.0), "-x": (0, -1.0), "+y": (1, 1.0),
              "-y": (1, -1.0), "+z": (2, 1.0), "-z": (2, -1.0)}
# (u, v) in-plane axes per normal axis.
_FACE_UV = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def _vec3(v, name="vector") -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Plane:
    """The plane normal . x = offset; normal points out of the negative side."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = _frozen(_vec3(self.normal, "normal").copy())
        if not np.any(n):
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))


def halfspace_side(plane: Plane, p) -> float:
    """Signed value normal . p - offset (negative inside, positive outside)."""
    return float(plane.normal @ _vec3(p, "point") - plane.offset)


@dataclass(frozen=True)
class Cuboid:
    center: np.ndarray
    dims: np.ndarray

    def __post_init__(self):
        c = _frozen(_vec3(self.center, "center").copy())
        d = _frozen(_vec3(self.dims, "dims").copy())
        if np.any(d <= 0):
            raise ValueError(f"cuboid dims must be positive, got {d.tolist()}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "dims", d)

    @classmethod
    def from_bounds(cls, lo, hi) -> "Cuboid":
        lo, hi = _vec3(lo, "min"), _vec3(hi, "max")
        return cls((lo + hi) / 2.0, hi - lo)

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.dims / 2.0

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.dims / 2.0

    @cached_property
    def planes(self) -> tuple[Plane, ...]:
        out = []
        for fid in FACE_IDS:
            axis, sign = _FACE_AXIS[fid]
            n = np.zeros(3)
            n[axis] = sign
            out.append(Plane(n, sign * (self.center[axis] + sign * self.dims[axis] / 2.0)))
        return tuple(out)

    @cached_property
    def plane_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (normals, offsets), shape (6, 3) and (6,), in FACE_IDS order."""
        a = np.array([p.normal for p in self.planes])
        b = np.array([p.offset for p in self.planes])
        return a, b

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array([[x, y, z] for x in (lo[0], hi[0])
                         for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])

    def volume(self) -> float:
        return float(np.prod(self.dims))


def contains(c: Cuboid, p, tol: float = 0.0) -> bool:
    """Closed containment: every plane gives normal . p - offset <= tol."""
    a, b = c.plane_matrix
    return bool(np.all(a @ _vec3(p, "point") - b <= tol))


def strictly_contains(c: Cuboid, p, tol: float = 0.0) -> bool:
    """Open containment: strictly on the negative side of all six planes by more than tol."""
    a, b = c.plane_matrix
    return bool(np.all(a @ _vec3(p, "point") - b < -tol))


def overlap_volume(a: Cuboid, b: Cuboid) -> float:
    ext = np.minimum(a.hi, b.hi) - np.maximum(a.lo, b.lo)
    return float(np.prod(ext)) if np.all(ext > 0) else 0.0


def is_inside(inner: Cuboid, outer: Cuboid, tol: float = 1e-9) -> bool:
    return bool(np.all(inner.lo >= outer.lo - tol) and np.all(inner.hi <= outer.hi + tol))


@dataclass(frozen=True)
class Face:
    """One rectangular face of a cuboid.

    ``origin`` is the face corner with the smallest in-plane coordinates; the
    face spans origin + s*u_axis + t*v_axis for s in [0, length], t in [0, width].
    """

    owner: int
    face_id: str
    origin: np.ndarray
    u_axis: np.ndarray
    v_axis: np.ndarray
    extent: tuple[float, float]
    outward_normal: np.ndarray

    @property
    def axis(self) -> int:
        return _FACE_AXIS[self.face_id][0]

    @property
    def center(self) -> np.ndarray:
        return self.origin + self.extent[0] / 2.0 * self.u_axis + self.extent[1] / 2.0 * self.v_axis

    def point(self, s: float, t: float) -> np.ndarray:
        return self.origin + s * self.u_axis + t * self.v_axis


def faces(c: Cuboid, owner: int = 0) -> list[Face]:
    """The six faces of ``c`` in canonical order (+x, -x, +y, -y, +z, -z)."""
    out = []
    for fid, plane in zip(FACE_IDS, c.planes):
        axis, sign = _FACE_AXIS[fid]
        ui, vi = _FACE_UV[axis]
        origin = c.lo.copy()
        origin[axis] = c.hi[axis] if sign > 0 else c.lo[axis]
        u = np.zeros(3)
        u[ui] = 1.0
        v = np.zeros(3)
        v[vi] = 1.0
        out.append(Face(owner, fid, _frozen(origin), _frozen(u), _frozen(v),
                        (float(c.dims[ui]), float(c.dims[vi])), plane.normal))
    return out


def face_index(face_id: str) -> int:
    try:
        return FACE_IDS.index(face_id)
    except ValueError:
        raise ValueError(f"unknown face id {face_id!r}; expected one of {FACE_IDS}") from None


def segment_intersects(c: Cuboid, p0, p1, interior: bool = False) -> bool:
    """Slab test of the closed segment p0-p1 against the box.

    With ``interior`` only the open interior counts, so a segment that runs
    along a face or touches an edge does not intersect.
    """
    p0, p1 = _vec3(p0, "p0"), _vec3(p1, "p1")
    d = p1 - p0
    t_lo, t_hi = 0.0, 1.0
    lo, hi = c.lo, c.hi
    for k in range(3):
        if d[k] == 0.0:
            if interior and not lo[k] < p0[k] < hi[k]:
                return False
            if p0[k] < lo[k] or p0[k] > hi[k]:
                return False
            continue
        ta, tb = (lo[k] - p0[k]) / d[k], (hi[k] - p0[k]) / d[k]
        if ta > tb:
            ta, tb = tb, ta
        t_lo, t_hi = max(t_lo, ta), min(t_hi, tb)
        if t_lo > t_hi or (interior and t_lo >= t_hi):
            return False
    return True


class ObjectKind(str, enum.Enum):
    OBSTACLE = "obstacle"
    OBJECT_OF_INTEREST = "object_of_interest"
    GOAL = "goal"


@dataclass(frozen=True)
class CompoundObject:
    """A union of cuboids."""

    parts: tuple[Cuboid, ...]
    kind: ObjectKind
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("compound object needs at least one part")
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "kind", ObjectKind(self.kind))

    def contains(self, p, tol: float = 0.0) -> bool:
        return any(contains(c, p, tol) for c in self.parts)
