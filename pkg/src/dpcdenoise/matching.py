"""Variation-based patch distance and temporal patch matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Frame, NeighborIndex, knn
from .graph import apply_rw, build_epsilon_graph, random_walk_laplacian
from .patches import Patch, PatchSet, all_relative_coords, patch_epsilon, relative_coords


def variation_rows(points: np.ndarray, normals: np.ndarray, epsilon: float) -> np.ndarray:
    """Degree-normalized variation of the normal field at each point.

    Builds the epsilon-neighborhood graph over ``points`` and applies
    its random-walk Laplacian to the normal coordinates; row i holds
    the per-axis variation around point i. Points without neighbors
    contribute zero rows.
    """
    pts = np.asarray(points, dtype=np.float64)
    nrm = np.asarray(normals, dtype=np.float64)
    if pts.shape != nrm.shape:
        raise ValueError("points and normals must have the same shape")
    lap = random_walk_laplacian(build_epsilon_graph(pts, epsilon))
    return apply_rw(lap, nrm)


def variation_measure(
    patch: Patch, positions: np.ndarray, normals: np.ndarray, epsilon: float
) -> np.ndarray:
    """Per-axis total variation of a patch's normals, as a 3-vector."""
    pts = np.asarray(positions, dtype=np.float64)[patch.member_indices]
    nrm = np.asarray(normals, dtype=np.float64)[patch.member_indices]
    rows = variation_rows(pts, nrm, epsilon)
    return np.mean(np.abs(rows), axis=0)


def patch_distance(va: np.ndarray, vb: np.ndarray) -> float:
    """Distance between two variation vectors: l2 norm of the per-axis gaps."""
    va = np.asarray(va, dtype=np.float64)
    vb = np.asarray(vb, dtype=np.float64)
    d = np.abs(va - vb)
    return float(np.sqrt(np.sum(d * d)))


def point_correspondence(
    rw_rows_target: np.ndarray,
    rw_rows_matched: np.ndarray,
    rel_target: np.ndarray,
    rel_matched: np.ndarray,
    alpha: float,
) -> np.ndarray:
    """Map each target point to its best counterpart in the matched patch.

    The per-pair cost blends squared variation difference (weight
    ``alpha``) and squared relative-coordinate difference (weight
    ``1 - alpha``); ties go to the lowest index. The map may be
    many-to-one.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    rt = np.asarray(rw_rows_target, dtype=np.float64)
    rm = np.asarray(rw_rows_matched, dtype=np.float64)
    vt = np.asarray(rel_target, dtype=np.float64)
    vm = np.asarray(rel_matched, dtype=np.float64)
    if rt.shape != rm.shape or vt.shape != vm.shape or rt.shape != vt.shape:
        raise ValueError("both patches must have the same size")
    cost = alpha * _sq_dists(rt, rm) + (1.0 - alpha) * _sq_dists(vt, vm)
    return np.argmin(cost, axis=1).astype(np.int64)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sum(diff * diff, axis=2)


@dataclass(frozen=True)
class TemporalMatch:
    """One matched patch pair across adjacent frames."""

    target_patch: int
    matched_patch: int
    distance: float
    point_map: np.ndarray

    def __post_init__(self) -> None:
        if self.distance < 0:
            raise ValueError("distance must be >= 0")
        pm = np.ascontiguousarray(np.asarray(self.point_map, dtype=np.int64))
        pm.flags.writeable = False
        object.__setattr__(self, "point_map", pm)


@dataclass(frozen=True)
class ReferencePatches:
    """Precomputed matching data for one (already denoised) reference frame."""

    frame: Frame
    patchset: PatchSet
    rel: np.ndarray = field(repr=False)          # (m, k+1, 3)
    var_rows: np.ndarray = field(repr=False)     # (m, k+1, 3)
    variations: np.ndarray = field(repr=False)   # (m, 3)
    center_index: NeighborIndex = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.patchset)


def prepare_reference(frame: Frame, patchset: PatchSet, c: float = 5.0) -> ReferencePatches:
    """Compute per-patch variation data for a frame used as matching reference."""
    if frame.normals is None:
        raise ValueError("reference frame needs normals")
    if len(patchset) < 1:
        raise ValueError("reference patch set is empty")
    positions = frame.positions
    normals = frame.normals
    rel = all_relative_coords(patchset, positions)
    m, size, _ = rel.shape
    var_rows = np.empty_like(rel)
    variations = np.empty((m, 3))
    for l in range(m):
        idx = patchset.members[l]
        eps = patch_epsilon(patchset.patch(l), positions, c)
        rows = variation_rows(positions[idx], normals[idx], eps)
        var_rows[l] = rows
        variations[l] = np.mean(np.abs(rows), axis=0)
    centers = NeighborIndex.from_points(positions[patchset.center_indices])
    return ReferencePatches(
        frame=frame,
        patchset=patchset,
        rel=rel,
        var_rows=var_rows,
        variations=variations,
        center_index=centers,
    )


def temporal_match(
    target: Patch,
    target_frame: Frame,
    reference: ReferencePatches,
    xi: int,
    alpha: float = 0.5,
    c: float = 5.0,
    target_id: int = 0,
) -> TemporalMatch:
    """Match one target patch against the reference frame's patches.

    Candidates are the reference patches whose centers are the ``xi``
    nearest to the target's center; the one with the smallest variation
    distance wins, ties broken by ascending patch index. The per-point
    map is then computed by :func:`point_correspondence`.
    ``target_id`` is the patch's index within the caller's patch set.
    """
    if target_frame.normals is None:
        raise ValueError("target frame needs normals")
    if xi < 1:
        raise ValueError("xi must be >= 1")
    positions = target_frame.positions
    idx = target.member_indices
    eps = patch_epsilon(target, positions, c)
    rows_t = variation_rows(positions[idx], target_frame.normals[idx], eps)
    v_t = np.mean(np.abs(rows_t), axis=0)
    rel_t = relative_coords(target, positions)
    center = positions[target.center_index]
    return _match_prepared(target_id, center, rows_t, v_t, rel_t, reference, xi, alpha)


def _match_prepared(
    target_id: int,
    center: np.ndarray,
    rows_t: np.ndarray,
    v_t: np.ndarray,
    rel_t: np.ndarray,
    reference: ReferencePatches,
    xi: int,
    alpha: float,
) -> TemporalMatch:
    cand = knn(reference.center_index, center, min(xi, len(reference)))
    gaps = reference.variations[cand] - v_t
    dists = np.sqrt(np.sum(gaps * gaps, axis=1))
    best = int(cand[np.lexsort((cand, dists))[0]])
    point_map = point_correspondence(
        rows_t, reference.var_rows[best], rel_t, reference.rel[best], alpha
    )
    return TemporalMatch(
        target_patch=target_id,
        matched_patch=best,
        distance=float(np.min(dists)),
        point_map=point_map,
    )


def match_patches(
    frame: Frame,
    patchset: PatchSet,
    reference: ReferencePatches,
    xi: int,
    alpha: float = 0.5,
    c: float = 5.0,
) -> list:
    """Match every patch of ``patchset`` against the reference frame.

    Returns one :class:`TemporalMatch` per target patch, in patch order;
    ``target_patch`` is the patch's index within ``patchset``.
    """
    if frame.normals is None:
        raise ValueError("target frame needs normals")
    positions = frame.positions
    normals = frame.normals
    rel = all_relative_coords(patchset, positions)
    matches = []
    for l in range(len(patchset)):
        patch = patchset.patch(l)
        idx = patchset.members[l]
        eps = patch_epsilon(patch, positions, c)
        rows_t = variation_rows(positions[idx], normals[idx], eps)
        v_t = np.mean(np.abs(rows_t), axis=0)
        center = positions[patch.center_index]
        matches.append(
            _match_prepared(l, center, rows_t, v_t, rel[l], reference, xi, alpha)
        )
    return matches
