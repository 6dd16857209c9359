"""Energy minimizers for the three representation classes.

Measures: equal-weight particle gradient descent with Armijo backtracking,
followed by a weight-polish phase (projected gradient on the simplex for
the pair-interaction quadratic form) and a merge of near-coincident atoms.
Densities and radial profiles: projected gradient f <- P(f - tau * 2 psi)
onto the box/mass constraint set, with backtracking on the energy.

Every accepted step does not increase the energy, so traces are monotone
across all phases.  Identical seeds and options give bit-identical output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import label as _nd_label
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import HypothesisError, InfeasibleMassError
from .geometry import align_to_simplex, build_simplex, cluster_support
from .kernels import RadialKernel
from .measures import (DiscreteMeasure, GridDensity, RadialProfile,
                       project_box_mass_weighted, unit_ball_volume)
from .energy import GridKernelTable, radial_kernel_matrix

_ARMIJO = 1e-4
_MAX_BACKTRACKS = 60


@dataclass
class OptimizeOptions:
    max_iters: int = 20_000
    grad_tol: float | None = None      # None: 1e-8 (measures), 1e-7*m (densities)
    step_init: float | None = None     # None: 0.1 / Lipschitz estimate
    backtrack: float = 0.5
    seed: int = 0
    merge_radius: float = 1e-3
    log_every: int = 100
    weight_polish: bool = True
    init_noise: float = 1e-2           # relative seed noise on constant density starts

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtracking factor must lie in (0, 1)")
        for name in ("grad_tol", "step_init"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.merge_radius < 0 or self.log_every < 1:
            raise ValueError("merge_radius must be >= 0 and log_every >= 1")


@dataclass
class OptimizeTrace:
    iters: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    iterations: int = 0
    final_grad_norm: float = math.nan
    termination: str = ""

    def log(self, it, energy, grad_norm):
        self.iters.append(int(it))
        self.energies.append(float(energy))
        self.grad_norms.append(float(grad_norm))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "energy", "grad_norm"])
            for row in zip(self.iters, self.energies, self.grad_norms):
                writer.writerow([row[0], repr(row[1]), repr(row[2])])


def _lipschitz_curvature(kernel: RadialKernel, t_hi: float = 4.0) -> float:
    t = np.linspace(1e-3, t_hi, 2000)
    if kernel.has_d2:
        return float(np.abs(kernel.d2(t)).max())
    g1 = kernel.d1(t) if kernel.has_d1 else np.gradient(kernel(t), t)
    return float(np.abs(np.gradient(g1, t)).max())


def uniform_ball_positions(n_particles: int, dimension: int, seed: int,
                           radius: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n_particles, dimension))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * rng.random((n_particles, 1)) ** (1.0 / dimension)
    return u * r


def perturbed_simplex_positions(n_particles: int, dimension: int, seed: int,
                                spread: float = 0.05) -> np.ndarray:
    """Particles split round-robin over the simplex vertices plus Gaussian jitter."""
    rng = np.random.default_rng(seed)
    verts = build_simplex(dimension).vertices
    base = verts[np.arange(n_particles) % (dimension + 1)]
    return base + spread * rng.standard_normal((n_particles, dimension))


def _pair_energy(x, w, kernel):
    return float(w @ kernel(cdist(x, x)) @ w)


def _pair_energy_grad(x, w, kernel):
    d = cdist(x, x)
    energy = float(w @ kernel(d) @ w)
    np.fill_diagonal(d, 1.0)
    d = np.maximum(d, 1e-300)
    slope = kernel.d1(d)
    np.fill_diagonal(slope, 0.0)
    coef = slope / d * w[None, :]
    grad = 2.0 * w[:, None] * (coef.sum(axis=1)[:, None] * x - coef @ x)
    return energy, grad


def _polish_weights(x, w, kernel, tol=1e-13, max_iters=50_000):
    """Projected gradient for min w^T G w over {w >= 0, sum w = total}."""
    gmat = kernel(cdist(x, x))
    total = float(w.sum())
    eig_hi = float(np.linalg.norm(gmat, 2)) if len(w) > 1 else 1.0
    step = 0.5 / max(eig_hi, 1e-12)
    w = w.copy()
    energy = float(w @ gmat @ w)
    for _ in range(max_iters):
        grad = 2.0 * gmat @ w
        trial_step = step
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            wn = project_box_mass_weighted(w - trial_step * grad,
                                           np.ones_like(w), total)
            en = float(wn @ gmat @ wn)
            delta = wn - w
            if en <= energy - (_ARMIJO / max(trial_step, 1e-300)) * float(delta @ delta):
                accepted = True
                break
            trial_step *= 0.5
        if not accepted:
            break
        w, energy = wn, en
        residual = np.abs(w - project_box_mass_weighted(w - grad, np.ones_like(w),
                                                        total)).max()
        if residual <= tol:
            break
    return w, energy


def _merge_atoms(x, w, radius):
    pairs = cKDTree(x).query_pairs(radius, output_type="ndarray")
    if not len(pairs):
        return x, w, False
    parent = np.arange(len(x))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        parent[find(i)] = find(j)
    roots = np.array([find(i) for i in range(len(x))])
    labels = np.unique(roots)
    xs, ws = [], []
    for lab in labels:
        idx = roots == lab
        mass = w[idx].sum()
        center = (x[idx] * w[idx, None]).sum(axis=0) / mass if mass > 0 else x[idx].mean(axis=0)
        xs.append(center)
        ws.append(mass)
    return np.array(xs), np.array(ws), True


def minimize_measure(kernel: RadialKernel, dimension: int, n_particles: int,
                     opts: OptimizeOptions | None = None, *,
                     init_positions=None):
    """Particle descent for the probability-measure problem.

    Equal weights 1/n throughout the descent; positions follow
    x_i <- x_i - tau * grad_i E with Armijo backtracking (step halved on
    failure, doubled after 5 consecutive clean accepts).  The polish phase
    then freezes positions and minimizes the pair quadratic form over the
    weight simplex, which enforces the measure-side optimality conditions
    on the support; finally atoms within merge_radius are merged (reverted
    if that would raise the energy).
    """
    opts = opts or OptimizeOptions()
    if not kernel.grows_at_infinity:
        raise HypothesisError("kernel must be declared growing at infinity: "
                              "mass can escape otherwise")
    if n_particles < dimension + 1:
        raise ValueError("need at least dimension + 1 particles")
    x = (np.array(init_positions, dtype=float) if init_positions is not None
         else uniform_ball_positions(n_particles, dimension, opts.seed))
    if x.shape != (n_particles, dimension):
        raise ValueError("init_positions shape mismatch")
    w = np.full(n_particles, 1.0 / n_particles)
    tol = opts.grad_tol if opts.grad_tol is not None else 1e-8
    step = opts.step_init or 0.1 / max(_lipschitz_curvature(kernel), 1e-12)

    trace = OptimizeTrace()
    energy, grad = _pair_energy_grad(x, w, kernel)
    streak = 0
    termination = "max_iters"
    it = 0
    for it in range(opts.max_iters):
        gnorm = float(np.sqrt((grad ** 2).sum()))
        if it % opts.log_every == 0:
            trace.log(it, energy, gnorm)
        if gnorm <= tol:
            termination = "converged"
            break
        accepted = False
        trial = step
        for _ in range(_MAX_BACKTRACKS):
            xn = x - trial * grad
            en = _pair_energy(xn, w, kernel)
            if en <= energy - _ARMIJO * trial * gnorm ** 2:
                accepted = True
                break
            trial *= opts.backtrack
        if not accepted:
            termination = "stalled"
            break
        if trial < step:
            streak = 0
            step = trial
        else:
            streak += 1
            if streak >= 5:
                step *= 2.0
                streak = 0
        x = xn
        energy, grad = _pair_energy_grad(x, w, kernel)

    gnorm = float(np.sqrt((grad ** 2).sum()))
    trace.log(it, energy, gnorm)
    trace.iterations = it
    trace.final_grad_norm = gnorm
    trace.termination = termination

    if opts.weight_polish:
        w, energy = _polish_weights(x, w, kernel)
        keep = w > 0.0
        x, w = x[keep], w[keep]
        trace.log(it, energy, gnorm)

    if opts.merge_radius > 0 and len(x) > 1:
        xm, wm, merged = _merge_atoms(x, w, opts.merge_radius)
        if merged:
            em = _pair_energy(xm, wm, kernel)
            if em <= energy:
                x, w, energy = xm, wm, em
                if opts.weight_polish and len(x) > 1:
                    w, energy = _polish_weights(x, w, kernel)
                    keep = w > 0.0
                    x, w = x[keep], w[keep]
                trace.log(it, energy, float("nan"))

    return DiscreteMeasure(x, w), trace


def _projected_descent(values, mass, weights, potential_of, opts, tol):
    """Shared projected-gradient loop for density and radial problems.

    potential_of(values) -> psi in the same shape; the update is
    values <- P(values - tau * 2 psi) with P the box/mass projection in the
    cell-volume metric.  Returns (values, psi, trace).
    """
    def project(v):
        return project_box_mass_weighted(v, weights, mass)

    def energy_of(v, psi):
        return float((v * weights * psi).sum())

    trace = OptimizeTrace()
    f = project(values)
    psi = potential_of(f)
    energy = energy_of(f, psi)
    step = opts.step_init or 0.5 / max(np.abs(psi).max(), 1e-12)
    streak = 0
    termination = "max_iters"
    it = 0
    for it in range(opts.max_iters):
        residual = 0.5 * float(np.abs(f - project(f - 2.0 * psi)).max())
        if it % opts.log_every == 0:
            trace.log(it, energy, residual)
        if residual <= tol:
            termination = "converged"
            break
        accepted = False
        trial = step
        for _ in range(_MAX_BACKTRACKS):
            fn = project(f - trial * 2.0 * psi)
            delta = fn - f
            move = float((delta * weights * delta).sum())
            if move == 0.0:
                accepted = True
                psin, en = psi, energy
                break
            psin = potential_of(fn)
            en = energy_of(fn, psin)
            if en <= energy - (_ARMIJO / max(trial, 1e-300)) * move:
                accepted = True
                break
            trial *= opts.backtrack
        if not accepted:
            termination = "stalled"
            break
        if trial < step:
            streak = 0
            step = trial
        else:
            streak += 1
            if streak >= 5:
                step *= 2.0
                streak = 0
        f, psi, energy = fn, psin, en

    residual = 0.5 * float(np.abs(f - project(f - 2.0 * psi)).max())
    trace.log(it, energy, residual)
    trace.iterations = it
    trace.final_grad_norm = residual
    trace.termination = termination
    return f, psi, trace


def minimize_density(kernel: RadialKernel, mass: float, lo, hi, spacing: float,
                     opts: OptimizeOptions | None = None, *, init_values=None):
    """Projected gradient for the box-constrained density problem on a grid.

    Starts from the constant feasible density plus a small seeded relative
    perturbation (an exactly constant start is a fixed point of the
    grid-symmetric dynamics and descent could never break the symmetry),
    then iterates f <- P(f - tau * 2 psi_f) with backtracking on the energy.
    """
    opts = opts or OptimizeOptions()
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    dims = tuple(int(round((b - a) / spacing)) for a, b in zip(lo, hi))
    if any(d < 1 for d in dims):
        raise ValueError("grid is empty; check lo/hi/spacing")
    cell_volume = spacing ** len(dims)
    volume = cell_volume * int(np.prod(dims))
    if not 0.0 < mass <= volume * (1.0 + 1e-12):
        raise InfeasibleMassError(
            f"invalid mass: need 0 < m <= grid volume {volume:g}, got {mass:g}")

    table = GridKernelTable(kernel, dims, spacing)
    if init_values is not None:
        f0 = np.asarray(init_values, dtype=float).reshape(dims)
    else:
        rng = np.random.default_rng(opts.seed)
        base = mass / volume
        f0 = base * (1.0 + opts.init_noise * rng.standard_normal(dims))
        f0 = np.clip(f0, 0.0, 1.0)
    tol = opts.grad_tol if opts.grad_tol is not None else 1e-7 * mass
    weights = np.full(dims, cell_volume)
    f, _, trace = _projected_descent(f0, mass, weights, table.potential, opts, tol)
    return GridDensity(lo, spacing, f), trace


def minimize_radial(kernel: RadialKernel, mass: float, r_max: float,
                    n_shells: int, dimension: int = 2,
                    opts: OptimizeOptions | None = None, *,
                    init_values=None, n_quad: int = 64):
    """Projected gradient in the radial representation with shell-volume weights."""
    opts = opts or OptimizeOptions()
    radii = np.linspace(0.0, r_max, n_shells + 1)
    weights = (dimension * unit_ball_volume(dimension)
               * radii ** (dimension - 1) * (radii[1] - radii[0]))
    capacity = float(weights.sum())
    if not 0.0 < mass <= capacity * (1.0 + 1e-12):
        raise InfeasibleMassError(
            f"invalid mass: need 0 < m <= shell capacity {capacity:g}, got {mass:g}")
    gmat = radial_kernel_matrix(kernel, radii, n_quad=n_quad, dimension=dimension)

    if init_values is not None:
        f0 = np.asarray(init_values, dtype=float).ravel()
    else:
        r_ball = (mass / unit_ball_volume(dimension)) ** (1.0 / dimension)
        f0 = (radii <= r_ball).astype(float)

    def potential_of(values):
        return gmat @ (values * weights)

    tol = opts.grad_tol if opts.grad_tol is not None else 1e-7 * mass
    f, _, trace = _projected_descent(f0, mass, weights, potential_of, opts, tol)
    return RadialProfile(dimension, radii, f), trace


# ---------------------------------------------------------------------------
# diagnostics over optimizer output

def intermediate_fraction(values, measure_weights=None, tau: float = 0.01) -> float:
    """Share of the support (by measure) with values strictly between tau and 1-tau."""
    v = np.asarray(values, dtype=float).ravel()
    w = (np.ones_like(v) if measure_weights is None
         else np.asarray(measure_weights, dtype=float).ravel())
    support = float(w[v > tau].sum())
    if support == 0.0:
        return 0.0
    mid = float(w[(v > tau) & (v < 1.0 - tau)].sum())
    return mid / support


def density_components(f: GridDensity, threshold: float = 0.5):
    """Connected components of {f > threshold}; returns (count, labels array)."""
    labeled, count = _nd_label(f.values > threshold)
    return count, labeled


def _component_point_sets(f: GridDensity, threshold: float = 0.5):
    count, labeled = density_components(f, threshold)
    centers = f.cell_centers().reshape(f.dims + (f.dimension,))
    comps = []
    for lab in range(1, count + 1):
        comps.append(centers[labeled == lab])
    return comps


@dataclass
class Classification:
    shape: str
    diagnostics: dict

    def to_dict(self):
        return {"shape": self.shape, "diagnostics": self.diagnostics}


def classify_minimizer(result, link_radius: float = 0.1) -> Classification:
    """Rule-based shape classification of an optimizer output.

    Measures: N+1 single-linkage clusters at unit mutual distance (1e-2)
    are a simplex; a radial spread below 1e-2 around a common positive
    radius is a sphere.  Radial profiles: positive inner radius (beyond
    2 dr) means annulus, else ball.  Grid densities go by component count
    and by the inradius of the support about its barycenter.
    """
    if isinstance(result, DiscreteMeasure):
        report = cluster_support(result, link_radius)
        n = result.dimension
        centers = report.centers
        diag = {"n_clusters": len(report.clusters)}
        if len(report.clusters) == n + 1:
            dists = report.pairwise_center_distances[
                np.triu_indices(len(report.clusters), k=1)]
            diag["center_distances"] = dists.tolist()
            diag["cluster_masses"] = report.masses.tolist()
            diag["cluster_diameters"] = report.diameters.tolist()
            if np.all(np.abs(dists - 1.0) < 1e-2):
                diag["simplex_residual"] = align_to_simplex(report, build_simplex(n))
                return Classification("simplex", diag)
        centroid = ((result.points * result.weights[:, None]).sum(axis=0)
                    / result.total_mass)
        radii = np.linalg.norm(result.points - centroid, axis=1)
        spread = float(radii.max() - radii.min())
        radius = float((radii * result.weights).sum() / result.total_mass)
        diag.update({"radial_spread": spread, "common_radius": radius})
        if spread < 1e-2 and radius > 1e-2:
            return Classification("sphere", diag)
        return Classification("other", diag)

    if isinstance(result, RadialProfile):
        support = result.radii[result.values > 0.5]
        frac = intermediate_fraction(result.values, result.shell_weights())
        if support.size == 0:
            return Classification("other", {"intermediate_fraction": frac})
        inner, outer = float(support.min()), float(support.max())
        diag = {"inner_radius": inner, "outer_radius": outer,
                "intermediate_fraction": frac}
        return Classification("annulus" if inner > 2.0 * result.dr else "ball", diag)

    if isinstance(result, GridDensity):
        count, _ = density_components(result)
        frac = intermediate_fraction(result.values)
        diag = {"n_components": int(count), "intermediate_fraction": frac}
        support = result.cell_centers()[result.values.ravel() > 0.5]
        if support.size == 0:
            return Classification("other", diag)
        n = result.dimension
        if count == n + 1:
            comps = _component_point_sets(result)
            centers = np.array([c.mean(axis=0) for c in comps])
            dists = cdist(centers, centers)[np.triu_indices(count, k=1)]
            diag["center_distances"] = dists.tolist()
            if np.all(np.abs(dists - 1.0) < 0.2):
                return Classification("simplex", diag)
        if count == 1:
            centroid = support.mean(axis=0)
            radii = np.linalg.norm(support - centroid, axis=1)
            diag["inner_radius"] = float(radii.min())
            diag["outer_radius"] = float(radii.max())
            if radii.min() > 2.0 * result.spacing:
                return Classification("annulus", diag)
            return Classification("ball", diag)
        return Classification("other", diag)

    raise TypeError("classify_minimizer expects a DiscreteMeasure, GridDensity "
                    "or RadialProfile")


def support_epsilon(f: GridDensity, reference: DiscreteMeasure,
                    threshold: float = 0.5) -> float:
    """Smallest eps with (aligned) spt f inside the eps-fattening of spt reference.

    The density support is aligned to the reference atoms by the best rigid
    motion of component centroids before measuring, since both objects are
    only determined up to rigid motions.
    """
    from .geometry import align_point_sets

    support = f.cell_centers()[f.values.ravel() > threshold]
    if support.size == 0:
        return math.inf
    ref = reference.points[reference.weights > 0]
    comps = _component_point_sets(f, threshold)
    if len(comps) == len(ref):
        centers = np.array([c.mean(axis=0) for c in comps])
        _, rot, trans, _ = align_point_sets(centers, ref)
        support = support @ rot.T + trans
    return float(cdist(support, ref).min(axis=1).max())


def mass_sweep(kernel: RadialKernel, masses, lo, hi, spacing: float,
               dimension: int = 2, opts: OptimizeOptions | None = None,
               reference: DiscreteMeasure | None = None,
               reference_particles: int = 30) -> list:
    """minimize_density per mass with confinement diagnostics per row.

    Rows report the intermediate fraction, component count, and the
    support-confinement radius against a reference measure (computed by
    minimize_measure when not supplied).
    """
    masses = list(masses)
    if any(masses[i] > masses[i + 1] for i in range(len(masses) - 1)):
        raise ValueError("masses must be sorted ascending")
    if not masses:
        return []
    if reference is None:
        reference, _ = minimize_measure(kernel, dimension, reference_particles,
                                        opts or OptimizeOptions())
    rows = []
    for m in masses:
        f, trace = minimize_density(kernel, m, lo, hi, spacing, opts)
        count, _ = density_components(f)
        rows.append({
            "m": float(m),
            "intermediate_fraction": intermediate_fraction(f.values),
            "n_components": int(count),
            "hausdorff_to_scaled_support": support_epsilon(f, reference),
            "energy": trace.energies[-1],
            "termination": trace.termination,
        })
    return rows
