"""Point-cloud augmentations: beam re-sampling, random flip, random rotation.

Beam re-sampling compares beam densities (beams per degree of vertical FOV)
between a source and target sensor and discards whole beams from the source
scan until its density matches the target's.  Beams are recovered from raw
points by 1-D gap clustering of per-point elevations, so no ring indices are
needed.  Upsampling is never attempted: factors above 1 clamp to 1 with a
warning.

All ops are pure and deterministic in (input, seed); flips and rotations
move boxes (centers, yaws, velocities) together with the points and leave
semantic labels untouched.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cloud import BoxLabel, PointCloud, to_spherical, wrap_angle
from .synth import BeamSpec

__all__ = [
    "ResampleFactor", "AugmentConfig",
    "beam_density", "resample_factor", "estimate_beams", "beam_resample",
    "random_flip", "random_rotate", "augment_frame",
    "DEFAULT_MERGE_THRESHOLD_DEG",
]

#: Elevation gap (degrees) below which adjacent points merge into one beam.
DEFAULT_MERGE_THRESHOLD_DEG = 0.05


@dataclass(frozen=True)
class ResampleFactor:
    """Fraction of beams to keep, already clamped to (0, 1].

    ``clamped`` records that the raw density ratio exceeded 1 (the target
    sensor is denser than the source; upsampling is impossible).
    """

    value: float
    clamped: bool = False

    def __post_init__(self):
        if not 0.0 < self.value <= 1.0:
            raise ValueError(f"resample factor must lie in (0, 1], got {self.value}")


@dataclass(frozen=True)
class AugmentConfig:
    """Per-frame augmentation policy for the pre-training pipeline."""

    target_beam_specs: tuple[BeamSpec, ...] = ()
    flip_prob_x: float = 0.5
    flip_prob_y: float = 0.5
    rotation_range: float = math.pi / 4  # radians, symmetric about 0
    seed: int = 0

    def __post_init__(self):
        for name in ("flip_prob_x", "flip_prob_y"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.rotation_range < 0:
            raise ValueError("rotation_range must be >= 0")


def beam_density(b: BeamSpec) -> float:
    """Beams per degree of vertical field of view."""
    return b.n_beams / b.vfov_deg


def resample_factor(source: BeamSpec, target: BeamSpec) -> ResampleFactor:
    """Density ratio target/source, clamped to 1 (beams are only discarded)."""
    raw = beam_density(target) / beam_density(source)
    if raw > 1.0:
        warnings.warn(
            f"target denser than source (ratio {raw:.3f}); upsampling is "
            "impossible, clamping to 1.0", stacklevel=2)
        return ResampleFactor(1.0, clamped=True)
    return ResampleFactor(raw)


def estimate_beams(cloud: PointCloud,
                   merge_threshold_deg: float = DEFAULT_MERGE_THRESHOLD_DEG) -> list[np.ndarray]:
    """Group points into beams by elevation-gap clustering.

    Returns one index array per beam, ordered by ascending elevation; the
    arrays partition ``range(len(cloud))``.  A new beam starts wherever the
    gap between consecutive sorted elevations exceeds the merge threshold.
    """
    if len(cloud) == 0:
        return []
    el = to_spherical(cloud.xyz)[:, 2]
    order = np.argsort(el, kind="stable")
    sorted_el = el[order]
    threshold = math.radians(merge_threshold_deg)
    breaks = np.nonzero(np.diff(sorted_el) > threshold)[0] + 1
    return [np.sort(chunk) for chunk in np.split(order, breaks)]


def beam_resample(cloud: PointCloud, labels: np.ndarray, r: ResampleFactor,
                  seed: int,
                  merge_threshold_deg: float = DEFAULT_MERGE_THRESHOLD_DEG
                  ) -> tuple[PointCloud, np.ndarray]:
    """Keep a uniformly spaced subset of beams; points keep their order.

    With K recovered beams, ``K' = max(1, round(r*K))`` beams survive, picked
    at cluster indices ``floor(phase + j*K/K')`` where the phase is a seeded
    uniform draw in one stride (so different epochs keep different beams).
    """
    labels = np.asarray(labels)
    if len(cloud) == 0:
        return cloud, labels.copy()
    clusters = estimate_beams(cloud, merge_threshold_deg)
    k = len(clusters)
    keep = max(1, int(math.floor(r.value * k + 0.5)))
    if keep >= k:
        return cloud, labels.copy()

    stride = k / keep
    phase = np.random.default_rng(seed).uniform(0.0, stride)
    chosen = np.floor(phase + np.arange(keep) * stride).astype(int)

    mask = np.zeros(len(cloud), dtype=bool)
    for ci in chosen:
        mask[clusters[ci]] = True
    index = np.nonzero(mask)[0]
    return cloud.select(index), labels[index]


def _flip_boxes(boxes: list[BoxLabel], axis: str) -> list[BoxLabel]:
    out = []
    for b in boxes:
        if axis == "x":  # mirror across the x-axis: y -> -y
            out.append(BoxLabel(b.cx, -b.cy, b.cz, b.l, b.w, b.h,
                                wrap_angle(-b.yaw), b.vx, -b.vy,
                                b.class_id, b.is_dynamic))
        else:            # mirror across the y-axis: x -> -x
            out.append(BoxLabel(-b.cx, b.cy, b.cz, b.l, b.w, b.h,
                                wrap_angle(math.pi - b.yaw), -b.vx, b.vy,
                                b.class_id, b.is_dynamic))
    return out


def random_flip(cloud: PointCloud, labels: np.ndarray, boxes: list[BoxLabel],
                axis: str, seed: int = 0, prob: float = 1.0
                ) -> tuple[PointCloud, np.ndarray, list[BoxLabel]]:
    """Mirror the scene across the named axis with probability `prob`.

    ``axis="x"`` keeps x and negates y (yaw -> -yaw); ``axis="y"`` keeps y
    and negates x (yaw -> pi - yaw).  Velocities mirror component-wise;
    labels pass through unchanged.
    """
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    labels = np.asarray(labels)
    if prob < 1.0 and np.random.default_rng(seed).random() >= prob:
        return cloud, labels.copy(), list(boxes)
    xyz = cloud.xyz.copy()
    if axis == "x":
        xyz[:, 1] = -xyz[:, 1]
    else:
        xyz[:, 0] = -xyz[:, 0]
    return PointCloud(xyz, cloud.feat), labels.copy(), _flip_boxes(boxes, axis)


def random_rotate(cloud: PointCloud, labels: np.ndarray, boxes: list[BoxLabel],
                  angle: float | None = None, rotation_range: float = math.pi,
                  seed: int = 0) -> tuple[PointCloud, np.ndarray, list[BoxLabel]]:
    """Rotate points, boxes, yaws and velocities about z by `angle` (CCW).

    When `angle` is None it is drawn uniformly from
    [-rotation_range, +rotation_range] using `seed`.
    """
    labels = np.asarray(labels)
    if angle is None:
        angle = float(np.random.default_rng(seed).uniform(-rotation_range,
                                                          rotation_range))
    c, s = math.cos(angle), math.sin(angle)
    xyz = cloud.xyz.copy()
    x, y = xyz[:, 0].copy(), xyz[:, 1].copy()
    xyz[:, 0] = c * x - s * y
    xyz[:, 1] = s * x + c * y

    out_boxes = []
    for b in boxes:
        cx, cy = c * b.cx - s * b.cy, s * b.cx + c * b.cy
        vx, vy = c * b.vx - s * b.vy, s * b.vx + c * b.vy
        out_boxes.append(BoxLabel(cx, cy, b.cz, b.l, b.w, b.h,
                                  wrap_angle(b.yaw + angle), vx, vy,
                                  b.class_id, b.is_dynamic))
    return PointCloud(xyz, cloud.feat), labels.copy(), out_boxes


def augment_frame(cloud: PointCloud, labels: np.ndarray, boxes: list[BoxLabel],
                  source_beams: BeamSpec, config: AugmentConfig,
                  frame_key: int) -> tuple[PointCloud, np.ndarray, list[BoxLabel]]:
    """Full augmentation chain: beam re-sampling, then flips, then rotation.

    One target beam spec is drawn uniformly per frame; `frame_key` should be
    unique per (frame, epoch) so repeated passes see fresh draws.
    """
    rng = np.random.default_rng((config.seed, frame_key))
    if config.target_beam_specs:
        target = config.target_beam_specs[int(rng.integers(len(config.target_beam_specs)))]
        factor = resample_factor(source_beams, target)
        cloud, labels = beam_resample(cloud, labels, factor,
                                      seed=int(rng.integers(2**63)))
    if rng.random() < config.flip_prob_x:
        cloud, labels, boxes = random_flip(cloud, labels, boxes, "x")
    if rng.random() < config.flip_prob_y:
        cloud, labels, boxes = random_flip(cloud, labels, boxes, "y")
    if config.rotation_range > 0:
        angle = float(rng.uniform(-config.rotation_range, config.rotation_range))
        cloud, labels, boxes = random_rotate(cloud, labels, boxes, angle=angle)
    return cloud, labels, boxes
