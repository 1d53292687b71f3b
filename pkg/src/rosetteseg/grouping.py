"""Grouping leaves into plant individuals: density clustering of base
points, Mahalanobis outlier assignment, and per-pixel majority voting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np

from .errors import InternalConsistencyError
from .masks import mask_from_indices
from .model import LeafInstance, PipelineConfig, PlantInstance, Point


@dataclass
class Cluster:
    id: int
    member_leaf_ids: Set[int]
    points: List[Point]
    mean: Point = (0.0, 0.0)
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    def refresh_stats(self) -> None:
        arr = np.asarray(self.points, dtype=np.float64)
        self.mean = (float(arr[:, 0].mean()), float(arr[:, 1].mean()))
        if arr.shape[0] >= 2:
            self.covariance = np.cov(arr.T, ddof=1)
        else:
            self.covariance = np.zeros((2, 2))


def _scan_order(points: Sequence[Point]) -> List[int]:
    """Deterministic processing order: sorted by (y, x, input index)."""
    return sorted(range(len(points)), key=lambda i: (points[i][1], points[i][0], i))


def dbscan(points: Sequence[Point], eps: float,
           min_pts: int) -> Tuple[List[List[int]], List[int]]:
    """Standard density-based clustering over 2D points.

    Returns (clusters, noise) as lists of input indices. Core points have
    at least min_pts points (self inclusive) within Euclidean eps; clusters
    are maximal density-connected sets; a border point joins the earliest-
    seeded cluster among those owning a neighboring core.
    """
    n = len(points)
    if n == 0:
        return [], []
    arr = np.asarray(points, dtype=np.float64)
    order = _scan_order(points)
    rank = {idx: r for r, idx in enumerate(order)}
    d2 = ((arr[:, None, :] - arr[None, :, :]) ** 2).sum(axis=2)
    neigh = d2 <= eps * eps
    counts = neigh.sum(axis=1)
    core = counts >= min_pts

    # connected components over core points, grown in scan order
    label = np.full(n, -1, dtype=int)
    clusters: List[List[int]] = []
    for idx in order:
        if not core[idx] or label[idx] != -1:
            continue
        cid = len(clusters)
        stack = [idx]
        label[idx] = cid
        members = []
        while stack:
            cur = stack.pop()
            members.append(cur)
            for nb in np.flatnonzero(neigh[cur]):
                if core[nb] and label[nb] == -1:
                    label[nb] = cid
                    stack.append(nb)
        clusters.append(members)

    noise: List[int] = []
    for idx in order:
        if core[idx]:
            continue
        core_neighbors = [nb for nb in np.flatnonzero(neigh[idx]) if core[nb]]
        if core_neighbors:
            cid = min(label[nb] for nb in core_neighbors)
            label[idx] = cid
            clusters[cid].append(idx)
        else:
            noise.append(idx)

    clusters = [sorted(c, key=lambda i: rank[i]) for c in clusters]
    noise = sorted(noise, key=lambda i: rank[i])
    return clusters, noise


def _lowest_point_key(points: Sequence[Point], members: Sequence[int]) -> Tuple[float, float]:
    return min((points[i][1], points[i][0]) for i in members)


def greedy_cluster(base_points: Dict[int, Point],
                   cfg: PipelineConfig) -> Tuple[List[Cluster], Dict[int, Point]]:
    """Iteratively peel off the largest density cluster while relaxing the
    minimum-points requirement down to a floor of 2.

    Returns the greedy-phase clusters and the leftover points as outliers
    (leaf_id -> base point).
    """
    leaf_ids = sorted(base_points)
    remaining = list(leaf_ids)
    clusters: List[Cluster] = []
    min_pts = cfg.init_min_pts
    while len(clusters) < cfg.max_clusters and remaining:
        pts = [base_points[lid] for lid in remaining]
        found, _ = dbscan(pts, cfg.eps, min_pts)
        if not found:
            if min_pts <= 2:
                break
            min_pts -= 1
            continue
        best = max(
            found,
            key=lambda c: (len(c), tuple(-v for v in _lowest_point_key(pts, c))),
        )
        member_ids = {remaining[i] for i in best}
        cluster = Cluster(
            id=len(clusters),
            member_leaf_ids=member_ids,
            points=[base_points[lid] for lid in sorted(member_ids)],
        )
        cluster.refresh_stats()
        clusters.append(cluster)
        remaining = [lid for lid in remaining if lid not in member_ids]
        if min_pts > 2:
            min_pts -= 1
    outliers = {lid: base_points[lid] for lid in remaining}
    return clusters, outliers


def mahalanobis(point: Point, mean: Point, covariance: np.ndarray, ridge: float) -> float:
    """sqrt((p - mu)^T (Sigma + ridge*I)^-1 (p - mu)); the ridge keeps the
    metric defined for clusters with fewer than 3 points."""
    diff = np.asarray(point, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    m = np.asarray(covariance, dtype=np.float64) + ridge * np.eye(2)
    return float(np.sqrt(diff @ np.linalg.solve(m, diff)))


def assign_outliers(outliers: Dict[int, Point], clusters: List[Cluster],
                    cfg: PipelineConfig) -> List[Cluster]:
    """Attach each outlier to its Mahalanobis-nearest cluster or promote it
    to a singleton plant.

    Cluster statistics are frozen at entry for the whole pass, so results do
    not depend on the processing order among pre-existing clusters; singleton
    clusters created mid-pass are visible to later outliers.
    """
    frozen: List[Tuple[Cluster, Point, np.ndarray]] = [
        (c, c.mean, c.covariance.copy()) for c in clusters
    ]
    ordered = sorted(outliers, key=lambda lid: (outliers[lid][1], outliers[lid][0], lid))
    next_id = max((c.id for c in clusters), default=-1) + 1
    for lid in ordered:
        p = outliers[lid]
        best = None
        best_d = np.inf
        for cluster, mean, cov in frozen:
            d = mahalanobis(p, mean, cov, cfg.covariance_ridge)
            if d < best_d:
                best_d = d
                best = cluster
        if best is not None and best_d < cfg.mahalanobis_threshold:
            best.member_leaf_ids.add(lid)
            best.points.append(p)
        else:
            single = Cluster(id=next_id, member_leaf_ids={lid}, points=[p])
            single.refresh_stats()
            next_id += 1
            clusters.append(single)
            frozen.append((single, single.mean, single.covariance.copy()))
    for c in clusters:
        c.refresh_stats()
    return clusters


def form_plants(clusters: Sequence[Cluster],
                leaves: Sequence[LeafInstance]) -> List[PlantInstance]:
    """Union member leaf masks per cluster and resolve contested pixels.

    A pixel claimed by several plants goes to the plant with the most member
    leaf masks covering it; ties go to the plant whose base-point mean is
    nearest, then to the lower plant id. Output masks are pairwise disjoint
    and their union equals the union of all leaf masks.
    """
    by_id = {lf.id: lf for lf in leaves}
    claimed: Set[int] = set()
    for c in clusters:
        for lid in c.member_leaf_ids:
            if lid not in by_id:
                raise InternalConsistencyError(f"cluster {c.id} references unknown leaf {lid}")
            if lid in claimed:
                raise InternalConsistencyError(f"leaf {lid} appears in multiple clusters")
            claimed.add(lid)
    missing = set(by_id) - claimed
    if missing:
        raise InternalConsistencyError(f"leaves referenced by no cluster: {sorted(missing)}")
    if not leaves:
        return []
    w = leaves[0].mask.width
    h = leaves[0].mask.height

    ordered = sorted(clusters, key=lambda c: c.id)
    plant_ids = {c.id: i for i, c in enumerate(ordered)}
    pix_parts, plant_parts, cnt_parts = [], [], []
    for c in ordered:
        member_idx = [by_id[lid].mask.foreground_indices() for lid in sorted(c.member_leaf_ids)]
        stacked = np.concatenate(member_idx)
        uniq, counts = np.unique(stacked, return_counts=True)
        pix_parts.append(uniq)
        plant_parts.append(np.full(uniq.size, plant_ids[c.id], dtype=np.int64))
        cnt_parts.append(counts)
    pix = np.concatenate(pix_parts)
    plant = np.concatenate(plant_parts)
    cnt = np.concatenate(cnt_parts)

    order = np.argsort(pix, kind="stable")
    pix, plant, cnt = pix[order], plant[order], cnt[order]
    uniq_pix, start = np.unique(pix, return_index=True)
    group_sizes = np.diff(np.append(start, pix.size))

    owner = plant[start].copy()  # correct wherever a pixel has one claimant
    contested = np.flatnonzero(group_sizes > 1)
    centers = np.asarray([c.mean for c in ordered], dtype=np.float64)
    for gi in contested:
        s, e = start[gi], start[gi] + group_sizes[gi]
        cand_plants = plant[s:e]
        cand_cnt = cnt[s:e]
        top = cand_cnt == cand_cnt.max()
        tied = cand_plants[top]
        if tied.size == 1:
            owner[gi] = tied[0]
            continue
        px = uniq_pix[gi] % w
        py = uniq_pix[gi] // w
        d = np.hypot(centers[tied, 0] - (px + 0.5), centers[tied, 1] - (py + 0.5))
        best = tied[np.lexsort((tied, d))[0]]
        owner[gi] = best

    plants: List[PlantInstance] = []
    for c in ordered:
        pid = plant_ids[c.id]
        own_pix = uniq_pix[owner == pid]
        plants.append(PlantInstance(
            id=pid,
            leaf_ids=set(c.member_leaf_ids),
            mask=mask_from_indices(own_pix, w, h),
            center=c.mean,
        ))
    return plants
