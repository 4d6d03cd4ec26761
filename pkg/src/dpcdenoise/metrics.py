"""Evaluation metrics and Gaussian noise injection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Frame, build_neighbor_index


@dataclass
class FrameMetrics:
    """Per-frame quality numbers and optimizer trace."""

    frame_index: int
    mse_nn: Optional[float] = None
    mse_index: Optional[float] = None
    gpsnr_db: Optional[float] = None
    objective_trace: list = field(default_factory=list)
    best_iteration: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "frame_index": self.frame_index,
            "mse_nn": self.mse_nn,
            "mse_index": self.mse_index,
            "gpsnr_db": _json_float(self.gpsnr_db),
            "best_iteration": self.best_iteration,
            "diagnostics": self.diagnostics,
        }
        out["objective_trace"] = [
            {
                "fidelity": o.fidelity,
                "temporal": o.temporal,
                "spatial": o.spatial,
                "total": o.total,
            }
            for o in self.objective_trace
        ]
        return out


def _json_float(value):
    if value is None:
        return None
    if math.isinf(value):
        return "inf"
    return value


@dataclass
class MetricsReport:
    """Metrics for a whole sequence."""

    frames: list

    def to_dict(self) -> dict:
        return {"frames": [f.to_dict() for f in self.frames]}


def add_gaussian_noise(frame: Frame, sigma: float, seed: int) -> Frame:
    """Add i.i.d. zero-mean Gaussian noise per coordinate.

    Normals are dropped: they no longer describe the perturbed surface
    and must be re-estimated.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=frame.positions.shape) if sigma > 0 else 0.0
    return Frame(frame.positions + noise, None, frame.frame_index)


def mse_nn(a: Frame, b: Frame) -> float:
    """Symmetric nearest-neighbor mean squared error."""
    tree_b = build_neighbor_index(b).tree
    tree_a = build_neighbor_index(a).tree
    d_ab, _ = tree_b.query(a.positions, k=1)
    d_ba, _ = tree_a.query(b.positions, k=1)
    return 0.5 * (float(np.mean(d_ab**2)) + float(np.mean(d_ba**2)))


def mse_index(a: Frame, b: Frame) -> float:
    """Mean squared error between identically indexed points."""
    if len(a) != len(b):
        raise ValueError("frames must have the same cardinality")
    return float(np.mean(np.sum((a.positions - b.positions) ** 2, axis=1)))


def gpsnr(test: Frame, reference: Frame, peak: float = 5.0) -> float:
    """Point-to-plane PSNR in decibels.

    Errors are projected onto the reference normals before averaging:
    test-to-reference uses the nearest reference point's normal, and
    reference-to-test uses each reference point's own normal. The worse
    (larger) directional MSE is converted against ``peak``; identical
    clouds give +infinity.
    """
    if reference.normals is None:
        raise ValueError("reference frame has no normals")
    if peak <= 0:
        raise ValueError("peak must be > 0")
    ref_tree = build_neighbor_index(reference).tree
    test_tree = build_neighbor_index(test).tree
    _, nearest_ref = ref_tree.query(test.positions, k=1)
    delta = test.positions - reference.positions[nearest_ref]
    proj = np.einsum("ij,ij->i", delta, reference.normals[nearest_ref])
    mse_fwd = float(np.mean(proj**2))
    _, nearest_test = test_tree.query(reference.positions, k=1)
    delta = reference.positions - test.positions[nearest_test]
    proj = np.einsum("ij,ij->i", delta, reference.normals)
    mse_bwd = float(np.mean(proj**2))
    worst = max(mse_fwd, mse_bwd)
    if worst == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / worst)
