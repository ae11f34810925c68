"""Shared synthetic fixtures: hand-built models, scenes, and datasets.

The synthetic generative process defined here is the oracle for the fit and
sampling tests: data are drawn from known parameters, and the tests check
that fitting/sampling recovers them.
"""

import numpy as np
import pytest

from scene_placer.config import RunConfig
from scene_placer.dataset_io import Annotation, AnnotatedFrame
from scene_placer.fitting import (
    ClassModel,
    Histogram,
    LocationModel,
    LogNormalParams,
    PowerCurve,
)
from scene_placer.geometry import BBox, DepthGrid, DrivableMask
from scene_placer.sampler import SceneContext


def make_class_model(
    class_id=1,
    depth_mu=2.0,
    depth_sigma=0.5,
    h_a=1.0,
    h_b=0.5,
    h_c=0.8,
    h_sigma=0.1,
    aspect_edges=(0.5, 1.0, 1.5, 2.0),
    aspect_probs=(0.2, 0.5, 0.3),
    domain=(0.05, 60.0),
):
    lo, hi = domain
    return ClassModel(
        class_id=class_id,
        depth=LogNormalParams(mu=depth_mu, sigma=depth_sigma),
        height_mu_curve=PowerCurve(a=h_a, b=h_b, c=h_c, domain_lo=lo, domain_hi=hi),
        height_sigma_curve=PowerCurve(a=h_sigma, b=0.0, c=1.0, domain_lo=lo, domain_hi=hi),
        aspect=Histogram(edges=np.asarray(aspect_edges), probs=np.asarray(aspect_probs)),
        sample_count=10_000,
    )


def make_model(class_models, config=None):
    class_models = {cm.class_id: cm for cm in class_models}
    n = len(class_models)
    prior = Histogram(edges=np.arange(n + 1, dtype=float), probs=np.full(n, 1.0 / n))
    return LocationModel(
        cameras={"default": class_models, "*": class_models},
        class_prior=prior,
        prior_classes=tuple(sorted(class_models)),
        config=config or RunConfig(),
    )


def make_scene(depth_values, drivable_bits, frame_scale=1, camera_id="default"):
    depth = DepthGrid(np.asarray(depth_values, dtype=np.float32))
    mask = DrivableMask(np.asarray(drivable_bits, dtype=bool))
    return SceneContext(
        frame_w=depth.width * frame_scale,
        frame_h=depth.height * frame_scale,
        camera_id=camera_id,
        depth=depth,
        drivable=mask,
    )


def open_scene(side=200, max_depth=60.0, frame_scale=20, camera_id="default"):
    """Fully drivable scene whose depth field finely covers [0, max_depth],
    so any plausible sampled depth has a non-empty band without reset."""
    vals = np.linspace(0.0, max_depth, side * side, dtype=np.float32).reshape(side, side)
    return make_scene(vals, np.ones((side, side), bool),
                      frame_scale=frame_scale, camera_id=camera_id)


def draw_objects(cm: ClassModel, n, rng):
    """Draw (d, h, ratio) triples from the generative process of a ClassModel."""
    d = np.exp(cm.depth.mu + cm.depth.sigma * rng.standard_normal(n))
    mu_h = cm.height_mu_curve.a + cm.height_mu_curve.b * d**cm.height_mu_curve.c
    sigma_h = cm.height_sigma_curve.a
    h = np.exp(mu_h + sigma_h * rng.standard_normal(n))
    cdf = np.cumsum(cm.aspect.probs)
    bins = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    bins = np.minimum(bins, len(cm.aspect.probs) - 1)
    lo = cm.aspect.edges[bins]
    hi = cm.aspect.edges[bins + 1]
    ratio = rng.uniform(lo, hi)
    return d, h, ratio


def synthetic_dataset(class_models, n_per_class, rng, camera_id="cam0"):
    """One AnnotatedFrame per object, with a constant depth grid equal to the
    object's true depth so the fit's 3x3-median probe reads it back exactly."""
    frames = []
    grids = {}
    fid = 0
    for cm in class_models:
        d, h, ratio = draw_objects(cm, n_per_class, rng)
        for i in range(n_per_class):
            grids[str(fid)] = DepthGrid(np.full((8, 8), d[i], dtype=np.float32))
            box = BBox(cx=32.0, by=48.0, w=float(ratio[i] * h[i]), h=float(h[i]))
            frames.append(AnnotatedFrame(
                frame_id=str(fid), camera_id=camera_id, width=64, height=64,
                annotations=(Annotation(class_id=cm.class_id, box=box),),
            ))
            fid += 1
    return frames, lambda frame: grids[frame.frame_id]


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
