"""Mask-driven box refinement and occlusion-aware compositing.

Instance masks live in patch-local pixels and are placed in the frame by
their PatchRect. Compositing pastes masks far-to-near (ascending order of
1/disparity, i.e. nearest last) so that near objects overwrite far ones,
yielding pairwise-disjoint visible regions and a visibility fraction per
proposal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask
from .geometry import BBox, PatchRect


@dataclass(frozen=True)
class InstanceMask:
    """Binary object mask in patch-local coordinates.

    The stored bitmap may be at a different resolution than the patch (e.g.
    512x512 from a fixed-size generator); it is scaled back to the patch side
    when mapped into the frame.
    """

    bits: np.ndarray  # (h, w) bool
    patch: PatchRect

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        if self.bits.ndim != 2:
            raise ValueError("mask must be 2-D")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


@dataclass
class CompositePlan:
    """Overwrite-resolved stack of masks in frame coordinates.

    owner[y, x] holds the index of the proposal visible at that pixel, or -1.
    footprints[i] is proposal i's full rasterized frame footprint (before
    occlusion), kept so the plan can be recomputed after drops.
    """

    order: list  # paste order, far to near
    owner: np.ndarray  # (frame_h, frame_w) int32
    footprints: list  # list of (frame_h, frame_w) bool arrays
    visible_frac: np.ndarray  # per proposal, 0..1

    def visible_mask(self, i: int) -> np.ndarray:
        return self.owner == i


def refine_bbox(mask: InstanceMask) -> BBox:
    """Tight box around the mask's set bits, in frame coordinates.

    Pixel (px, py) covers [px, px+1) x [py, py+1) patch-locally, scaled by
    patch.side / mask resolution when mapped to the frame.
    """
    ys, xs = np.nonzero(mask.bits)
    if ys.size == 0:
        raise EmptyMask("mask has no set bits")
    sx = mask.patch.side / mask.width
    sy = mask.patch.side / mask.height
    x_lo = mask.patch.x0 + xs.min() * sx
    x_hi = mask.patch.x0 + (xs.max() + 1) * sx
    y_hi = mask.patch.y0 + (ys.max() + 1) * sy
    h = (ys.max() + 1 - ys.min()) * sy
    return BBox(cx=(x_lo + x_hi) / 2.0, by=float(y_hi), w=float(x_hi - x_lo), h=float(h))


def composite_order(proposals) -> list:
    """Paste order: ascending disparity (farthest first), stable on ties."""
    return sorted(range(len(proposals)), key=lambda i: (proposals[i].d_effective, i))


def rasterize_mask(mask: InstanceMask, frame_w: int, frame_h: int) -> np.ndarray:
    """Nearest-neighbor placement of a patch-local mask onto the frame grid."""
    out = np.zeros((frame_h, frame_w), dtype=bool)
    side = mask.patch.side
    x0, y0 = mask.patch.x0, mask.patch.y0
    fx0, fx1 = max(x0, 0), min(x0 + side, frame_w)
    fy0, fy1 = max(y0, 0), min(y0 + side, frame_h)
    if fx0 >= fx1 or fy0 >= fy1:
        return out
    # frame pixel centers sampled back into mask resolution
    xs = ((np.arange(fx0, fx1) - x0 + 0.5) * mask.width / side).astype(np.intp)
    ys = ((np.arange(fy0, fy1) - y0 + 0.5) * mask.height / side).astype(np.intp)
    xs = np.clip(xs, 0, mask.width - 1)
    ys = np.clip(ys, 0, mask.height - 1)
    out[fy0:fy1, fx0:fx1] = mask.bits[np.ix_(ys, xs)]
    return out


def composite_masks(proposals, masks, order, frame_w: int, frame_h: int) -> CompositePlan:
    """Resolve overlaps by pasting in the given order; later masks win."""
    footprints = [rasterize_mask(m, frame_w, frame_h) for m in masks]
    owner = np.full((frame_h, frame_w), -1, dtype=np.int32)
    for i in order:
        owner[footprints[i]] = i
    visible = np.zeros(len(masks))
    for i, fp in enumerate(footprints):
        total = fp.sum()
        visible[i] = (owner == i).sum() / total if total else 0.0
    return CompositePlan(order=list(order), owner=owner,
                         footprints=footprints, visible_frac=visible)


def visibility_filter(plan: CompositePlan, min_visible: float = 0.2):
    """Drop proposals occluded below min_visible and recompute the plan.

    Returns (kept_indices, new_plan); new_plan keeps the original indexing
    (dropped proposals simply own no pixels and have visible_frac 0).
    """
    if not 0.0 <= min_visible <= 1.0:
        raise ValueError("min_visible must be in [0, 1]")
    kept = [i for i in range(len(plan.footprints)) if plan.visible_frac[i] >= min_visible]
    owner = np.full_like(plan.owner, -1)
    for i in plan.order:
        if i in kept:
            owner[plan.footprints[i]] = i
    visible = np.zeros(len(plan.footprints))
    for i in kept:
        total = plan.footprints[i].sum()
        visible[i] = (owner == i).sum() / total if total else 0.0
    new_plan = CompositePlan(order=[i for i in plan.order if i in kept],
                             owner=owner, footprints=plan.footprints,
                             visible_frac=visible)
    return kept, new_plan
