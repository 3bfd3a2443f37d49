"""Point-cloud data model: clouds, rigid poses, boxes, spherical transforms.

Coordinate conventions used throughout the package:

* Cartesian frames are right-handed, z up, units in meters.
* ``azimuth`` is the two-argument arctangent of ``(x, y)`` — zero along +y,
  increasing toward +x — matching ``arctan(x/y)`` on its principal branch.
* ``elevation`` is the angle above the xy-plane, ``atan2(z, hypot(x, y))``,
  in ``[-pi/2, pi/2]``.
* Box ``yaw`` is the usual counter-clockwise angle of the box length axis
  from +x; "flip along x" mirrors across the x-axis (negates y).

Angles are radians everywhere inside the library; degrees appear only at the
config/CLI boundary.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PointCloud",
    "Pose",
    "BoxLabel",
    "to_spherical",
    "from_spherical",
    "transform",
    "validate_labels",
    "wrap_angle",
]

#: Column order of the arrays returned by :func:`to_spherical`.
SPHERICAL_COLUMNS = ("r", "azimuth", "elevation")


def _as_points(xyz) -> np.ndarray:
    arr = np.asarray(xyz, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected (N, 3) coordinates, got shape {arr.shape}")
    return arr


def wrap_angle(a):
    """Wrap angle(s) to the interval (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    wrapped = np.remainder(a + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of N points with d extra feature channels each.

    ``xyz`` is (N, 3) float64, ``feat`` is (N, d) float64 (d >= 0, d=1
    intensity by default).  Arrays are copied and frozen at construction;
    instances are immutable values, safe to share across threads.
    """

    xyz: np.ndarray
    feat: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        xyz = np.array(self.xyz, dtype=np.float64, copy=True)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must be (N, 3), got {xyz.shape}")
        if not np.isfinite(xyz).all():
            raise ValueError("point coordinates must be finite")
        feat = self.feat
        if feat is None:
            feat = np.zeros((xyz.shape[0], 0), dtype=np.float64)
        feat = np.array(feat, dtype=np.float64, copy=True)
        if feat.ndim == 1:
            feat = feat[:, None]
        if feat.shape[0] != xyz.shape[0]:
            raise ValueError(
                f"feature rows ({feat.shape[0]}) must match point count ({xyz.shape[0]})"
            )
        xyz.setflags(write=False)
        feat.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "feat", feat)

    @property
    def n(self) -> int:
        return self.xyz.shape[0]

    @property
    def d(self) -> int:
        return self.feat.shape[1]

    def __len__(self) -> int:
        return self.n

    def select(self, index) -> "PointCloud":
        """New cloud with the rows picked by `index` (order preserved)."""
        return PointCloud(self.xyz[index], self.feat[index])


@dataclass(frozen=True)
class Pose:
    """Rigid transform: ``p_world = rotation @ p_local + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    _ORTHO_TOL = 1e-9

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64, copy=True)
        t = np.array(self.translation, dtype=np.float64, copy=True).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.isfinite(r).all() or not np.isfinite(t).all():
            raise ValueError("pose entries must be finite")
        if np.abs(r.T @ r - np.eye(3)).max() > self._ORTHO_TOL:
            raise ValueError("rotation is not orthonormal (R^T R != I within 1e-9)")
        if abs(np.linalg.det(r) - 1.0) > self._ORTHO_TOL:
            raise ValueError("rotation must be proper (det R = 1 within 1e-9)")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_yaw(yaw: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        """Pose rotating by `yaw` about z, then translating."""
        c, s = math.cos(yaw), math.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return Pose(r, np.asarray(translation, dtype=np.float64))

    def compose(self, other: "Pose") -> "Pose":
        """`self after other`: (self.compose(other))(p) == self(other(p))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        pts = _as_points(xyz)
        out = pts @ self.rotation.T + self.translation
        return out[0] if np.asarray(xyz).ndim == 1 else out


@dataclass(frozen=True)
class BoxLabel:
    """Oriented 3D box with motion state and semantic class.

    Sizes ``(l, w, h)`` are full extents along the yaw-rotated x/y axes and
    z; ``class_id`` is 1-based (0 is reserved for "empty");
    ``velocity = (vx, vy)`` in m/s in the box's world frame.
    """

    cx: float
    cy: float
    cz: float
    l: float
    w: float
    h: float
    yaw: float
    vx: float = 0.0
    vy: float = 0.0
    class_id: int = 1
    is_dynamic: bool = False

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError("box sizes must be strictly positive")
        if self.class_id < 1:
            raise ValueError("class_id must be >= 1 (0 is the empty label)")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz])

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def at_time(self, dt: float) -> "BoxLabel":
        """Box displaced by its constant velocity over `dt` seconds."""
        if not self.is_dynamic or dt == 0.0:
            return self
        return BoxLabel(self.cx + self.vx * dt, self.cy + self.vy * dt, self.cz,
                        self.l, self.w, self.h, self.yaw,
                        self.vx, self.vy, self.class_id, self.is_dynamic)

    def contains(self, xyz: np.ndarray, atol: float = 0.0) -> np.ndarray:
        """Inclusive point-in-box test; returns a boolean mask."""
        pts = _as_points(xyz)
        local = pts - self.center
        c, s = math.cos(-self.yaw), math.sin(-self.yaw)
        lx = c * local[:, 0] - s * local[:, 1]
        ly = s * local[:, 0] + c * local[:, 1]
        inside = (
            (np.abs(lx) <= self.l / 2.0 + atol)
            & (np.abs(ly) <= self.w / 2.0 + atol)
            & (np.abs(local[:, 2]) <= self.h / 2.0 + atol)
        )
        return inside if np.asarray(xyz).ndim > 1 else bool(inside[0])


def to_spherical(xyz) -> np.ndarray:
    """Cartesian -> spherical coordinates, columns ``(r, azimuth, elevation)``.

    ``r = sqrt(x^2+y^2+z^2)``, ``azimuth = atan2(x, y)`` in (-pi, pi],
    ``elevation = atan2(z, hypot(x, y))`` in [-pi/2, pi/2].  The origin maps
    to ``(0, 0, 0)`` by convention; a warning flags that case.

    Accepts a single (3,) point or an (N, 3) array and returns the matching
    shape with three columns.
    """
    single = np.asarray(xyz).ndim == 1
    pts = _as_points(xyz)
    if not np.isfinite(pts).all():
        raise ValueError("coordinates must be finite")
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    rho = np.hypot(x, y)
    r = np.hypot(rho, z)
    az = wrap_angle(np.arctan2(x, y))
    el = np.arctan2(z, rho)
    at_origin = r == 0.0
    if at_origin.any():
        warnings.warn("origin point: azimuth/elevation set to 0 by convention",
                      stacklevel=2)
        az = np.where(at_origin, 0.0, az)
        el = np.where(at_origin, 0.0, el)
    out = np.stack([r, az, el], axis=-1)
    return out[0] if single else out


def from_spherical(sph) -> np.ndarray:
    """Inverse of :func:`to_spherical`; columns ``(r, azimuth, elevation)``.

    ``x = r cos(el) sin(az)``, ``y = r cos(el) cos(az)``, ``z = r sin(el)``.
    """
    single = np.asarray(sph).ndim == 1
    arr = np.asarray(sph, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[-1] != 3:
        raise ValueError(f"expected (..., 3) spherical coords, got {arr.shape}")
    r, az, el = arr[:, 0], arr[:, 1], arr[:, 2]
    if (r < 0).any():
        raise ValueError("range r must be >= 0")
    ce = np.cos(el)
    out = np.stack([r * ce * np.sin(az), r * ce * np.cos(az), r * np.sin(el)], axis=-1)
    return out[0] if single else out


def transform(cloud: PointCloud, pose: Pose) -> PointCloud:
    """Apply a rigid pose to every point; features and order are untouched."""
    return PointCloud(pose.apply(cloud.xyz), cloud.feat)


def validate_labels(labels, n_points: int, n_cls: int) -> np.ndarray:
    """Check a per-point label vector against its paired cloud.

    Returns the labels as an int64 array; raises ValueError on length or
    range violations.  Valid values are 0 (empty) .. n_cls.
    """
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.shape[0] != n_points:
        raise ValueError(f"labels must be length {n_points}, got shape {arr.shape}")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() > n_cls):
        raise ValueError(f"labels must lie in [0, {n_cls}]")
    return arr
