"""Unit regular simplexes, the K_N constant, and shape diagnostics for optimizer output."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as _nm_minimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, directed_hausdorff, pdist


def simplex_height(n: int) -> float:
    return float(np.sqrt((n + 1.0) / (2.0 * n)))


def simplex_circumradius(n: int) -> float:
    return float(np.sqrt(n / (2.0 * n + 2.0)))


@dataclass(frozen=True)
class Simplex:
    """Vertex set of the unit-edge regular (N+1)-gon in R^N, centered at the origin."""

    dimension: int
    vertices: np.ndarray  # (N+1, N)
    height: float
    circumradius: float


def build_simplex(n: int) -> Simplex:
    """Unit regular simplex by recursive lift.

    Delta_N is Delta_{N-1} placed in the hyperplane at height -(H_N - C_N)
    plus an apex at height C_N on the new axis, re-centered at each step.
    """
    if n < 1:
        raise ValueError("dimension must be at least 1")
    verts = np.array([[-0.5], [0.5]])
    for k in range(2, n + 1):
        h, c = simplex_height(k), simplex_circumradius(k)
        base = np.hstack([verts, np.full((k, 1), -(h - c))])
        apex = np.zeros((1, k))
        apex[0, -1] = c
        verts = np.vstack([base, apex])
        verts -= verts.mean(axis=0)
    return Simplex(n, verts, simplex_height(n), simplex_circumradius(n))


def k_constant(n: int) -> float:
    """Closed form of the simplex direction constant: 1 for N=1, 1/2 for N>=2."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    return 1.0 if n == 1 else 0.5


def _fibonacci_sphere(n: int) -> np.ndarray:
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    i = np.arange(n, dtype=float)
    theta = 2.0 * np.pi * i / golden
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def k_constant_numeric(n: int, n_directions: int = 10_000, seed: int = 0) -> float:
    """Minimum of sum_i <v, x_i - x_1>^2 over sampled unit directions, refined."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    if n_directions < 100:
        raise ValueError("need at least 100 directions")
    diffs = build_simplex(n).vertices
    diffs = diffs - diffs[0]

    def objective(v):
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.inf
        return float(((diffs @ (v / nv)) ** 2).sum())

    if n == 1:
        return objective(np.ones(1))
    if n == 3:
        dirs = _fibonacci_sphere(n_directions)
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n_directions, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = ((diffs @ dirs.T) ** 2).sum(axis=0)
    best = dirs[int(np.argmin(vals))]
    res = _nm_minimize(objective, best, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    return min(float(vals.min()), float(res.fun))


@dataclass(frozen=True)
class Cluster:
    center: np.ndarray
    diameter: float
    mass: float


@dataclass
class ClusterReport:
    """Single-linkage decomposition of a weighted point cloud."""

    clusters: list
    pairwise_center_distances: np.ndarray
    unclustered_mass: float
    total_mass: float
    link_radius: float

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.clusters])

    @property
    def masses(self) -> np.ndarray:
        return np.array([c.mass for c in self.clusters])

    @property
    def diameters(self) -> np.ndarray:
        return np.array([c.diameter for c in self.clusters])

    def to_json(self) -> str:
        return json.dumps({
            "clusters": [
                {"center": list(map(float, c.center)),
                 "diameter": c.diameter, "mass": c.mass}
                for c in self.clusters
            ],
            "pairwise_center_distances": self.pairwise_center_distances.tolist(),
            "unclustered_mass": self.unclustered_mass,
            "total_mass": self.total_mass,
            "link_radius": self.link_radius,
        })


def cluster_support(measure, link_radius: float, min_mass: float = 0.0) -> ClusterReport:
    """Single-linkage clusters of a DiscreteMeasure at the given link radius.

    Components with mass < min_mass are folded into unclustered_mass.
    Clusters are sorted by center in lexicographic order, so the report is
    deterministic in the input.
    """
    if link_radius <= 0:
        raise ValueError("link_radius must be positive")
    pts = np.asarray(measure.points, dtype=float)
    w = np.asarray(measure.weights, dtype=float)
    npts = pts.shape[0]
    pairs = cKDTree(pts).query_pairs(link_radius, output_type="ndarray")
    if pairs.size:
        adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                         shape=(npts, npts))
        _, labels = connected_components(adj, directed=False)
    else:
        labels = np.arange(npts)

    clusters = []
    unclustered = 0.0
    for lab in np.unique(labels):
        idx = np.nonzero(labels == lab)[0]
        mass = float(w[idx].sum())
        if mass < min_mass:
            unclustered += mass
            continue
        sub = pts[idx]
        center = (sub * w[idx, None]).sum(axis=0) / mass if mass > 0 else sub.mean(axis=0)
        diameter = float(pdist(sub).max()) if len(idx) > 1 else 0.0
        clusters.append(Cluster(center, diameter, mass))
    clusters.sort(key=lambda c: tuple(c.center))
    centers = np.array([c.center for c in clusters]) if clusters else np.zeros((0, pts.shape[1]))
    dmat = cdist(centers, centers) if len(clusters) else np.zeros((0, 0))
    return ClusterReport(clusters, dmat, unclustered, float(w.sum()), link_radius)


def hausdorff_distance(a, b) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("hausdorff_distance needs nonempty point sets")
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


def _kabsch(src: np.ndarray, dst: np.ndarray, allow_reflection: bool):
    sc = src - src.mean(axis=0)
    dc = dst - dst.mean(axis=0)
    u, _, vt = np.linalg.svd(sc.T @ dc)
    rot = (u @ vt).T
    if not allow_reflection and np.linalg.det(rot) < 0:
        vt[-1] *= -1.0
        rot = (u @ vt).T
    moved = sc @ rot.T + dst.mean(axis=0)
    rms = float(np.sqrt(((moved - dst) ** 2).sum(axis=1).mean()))
    return rms, rot, dst.mean(axis=0) - (rot @ src.mean(axis=0))


def align_point_sets(src, dst, allow_reflection: bool = False):
    """Best rigid alignment of src onto dst over vertex assignments.

    Exhaustive over permutations for up to 4 points, greedy nearest-neighbour
    assignment otherwise.  Returns (rms_residual, rotation, translation, perm)
    with moved = src[perm] @ rotation.T + translation.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape:
        raise ValueError("point sets must have matching shapes")
    k = src.shape[0]
    if k <= 4:
        perms = itertools.permutations(range(k))
    else:
        sc = src - src.mean(axis=0)
        dc = dst - dst.mean(axis=0)
        order = []
        free = list(range(k))
        for i in range(k):
            j = min(free, key=lambda jj: np.linalg.norm(sc[jj] - dc[i]))
            order.append(j)
            free.remove(j)
        perms = [tuple(order)]
    best = None
    for perm in perms:
        rms, rot, trans = _kabsch(src[list(perm)], dst, allow_reflection)
        if best is None or rms < best[0]:
            best = (rms, rot, trans, perm)
    return best


def align_to_simplex(report_or_points, simplex: Simplex,
                     allow_reflection: bool = False) -> float:
    """RMS residual of the best rigid fit of cluster centers to simplex vertices."""
    if isinstance(report_or_points, ClusterReport):
        pts = report_or_points.centers
    else:
        pts = np.atleast_2d(np.asarray(report_or_points, dtype=float))
    want = simplex.dimension + 1
    if pts.shape[0] != want:
        raise ValueError(f"need exactly {want} clusters to align to this simplex, "
                         f"got {pts.shape[0]}")
    return align_point_sets(pts, simplex.vertices, allow_reflection)[0]
