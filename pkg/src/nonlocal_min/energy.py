"""Interaction energies, potentials, Euler-Lagrange residuals, and the diameter bound.

Energies are pairwise double sums over atoms, grid cells (midpoint rule,
diagonal terms use g(0): only locally bounded kernels are admitted), or
radial shells through the sphere-averaged kernel.  Potentials come with
exact gradients and Hessians assembled from the radial/tangential split of
the second directional derivative of a radial function.

All operations are pure; sums use numpy's pairwise reduction in a fixed
order, so repeated identical calls are bit-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (HypothesisError, RegularityError, SearchHorizonError,
                     SingularPointError)
from .kernels import RadialKernel, check_definitively_nondecreasing
from .measures import (DiscreteMeasure, GridDensity, RadialProfile,
                       unit_ball_volume)

_COINCIDENT = 1e-12


# ---------------------------------------------------------------------------
# discrete (atomic) measures

def energy_cross_discrete(mu1: DiscreteMeasure, mu2: DiscreteMeasure,
                          kernel: RadialKernel) -> float:
    """Double sum over atom pairs of both measures, symmetric in its arguments."""
    if mu1.dimension != mu2.dimension:
        raise ValueError("measures live in different dimensions")
    d = cdist(mu1.points, mu2.points)
    return float(mu1.weights @ kernel(d) @ mu2.weights)


def energy_discrete(mu: DiscreteMeasure, kernel: RadialKernel) -> float:
    return energy_cross_discrete(mu, mu, kernel)


def potential_at(source, kernel: RadialKernel, x) -> float:
    """Potential of a measure or grid density at a single point."""
    x = np.asarray(x, dtype=float).ravel()
    if isinstance(source, DiscreteMeasure):
        d = np.linalg.norm(source.points - x, axis=1)
        return float(kernel(d) @ source.weights)
    if isinstance(source, GridDensity):
        d = np.linalg.norm(source.cell_centers() - x, axis=1)
        return float(kernel(d) @ source.values.ravel() * source.cell_volume)
    raise TypeError("potential_at expects a DiscreteMeasure or GridDensity")


def _split_coincident(mu: DiscreteMeasure, x):
    diff = x - mu.points
    dist = np.linalg.norm(diff, axis=1)
    on_atom = dist < _COINCIDENT
    return diff, dist, on_atom


def potential_grad(mu: DiscreteMeasure, kernel: RadialKernel, x) -> np.ndarray:
    """Gradient of the potential; needs a C1 kernel.

    Coincident atoms contribute zero provided g'(0) = 0; otherwise the
    gradient does not exist there.
    """
    if not kernel.has_d1:
        raise RegularityError("potential_grad needs a kernel with d1")
    x = np.asarray(x, dtype=float).ravel()
    diff, dist, on_atom = _split_coincident(mu, x)
    if on_atom.any() and abs(kernel.d1(0.0)) > 1e-12:
        raise SingularPointError("x coincides with an atom and g'(0) != 0")
    safe = np.where(on_atom, 1.0, dist)
    coef = np.where(on_atom, 0.0, mu.weights * kernel.d1(safe) / safe)
    return coef @ diff


def potential_hessian(mu: DiscreteMeasure, kernel: RadialKernel, x) -> np.ndarray:
    """Hessian of the potential from the radial/tangential decomposition.

    Along the radius the curvature is g''(r); transverse to it g'(r)/r.  A
    coincident atom is admitted only when g'(0) = 0, where its contribution
    degenerates to the isotropic g''(0) * I.
    """
    if not kernel.has_d2:
        raise RegularityError("potential_hessian needs a kernel with d2")
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    diff, dist, on_atom = _split_coincident(mu, x)
    if on_atom.any() and abs(kernel.d1(0.0)) > 1e-12:
        raise SingularPointError("x coincides with an atom and g'(0) != 0")
    safe = np.where(on_atom, 1.0, dist)
    g1 = kernel.d1(safe)
    g2 = kernel.d2(safe)
    u = diff / safe[:, None]
    w_rad = np.where(on_atom, 0.0, mu.weights * (g2 - g1 / safe))
    w_tan = np.where(on_atom, 0.0, mu.weights * g1 / safe)
    h = (u * w_rad[:, None]).T @ u + np.eye(n) * w_tan.sum()
    if on_atom.any():
        h += np.eye(n) * float(kernel.d2(0.0)) * mu.weights[on_atom].sum()
    return 0.5 * (h + h.T)


def hessian_positive_direction(mu: DiscreteMeasure, kernel: RadialKernel, x):
    """Largest eigenpair of the potential Hessian at x.

    A positive value certifies that some direction has strictly positive
    second derivative there.
    """
    h = potential_hessian(mu, kernel, x)
    vals, vecs = np.linalg.eigh(h)
    return {"v_best": vecs[:, -1], "value": float(vals[-1])}


# ---------------------------------------------------------------------------
# grid densities

class GridKernelTable:
    """Kernel sampled on all nonnegative integer cell offsets of a uniform grid.

    potential() accumulates the table over the support cells in row-major
    order (the fixed reduction order that makes reruns bit-identical).
    """

    def __init__(self, kernel: RadialKernel, dims, spacing: float):
        dims = tuple(int(d) for d in dims)
        axes = np.meshgrid(*[np.arange(n) * spacing for n in dims], indexing="ij")
        radius = np.sqrt(sum(a ** 2 for a in axes))
        self.table = kernel(radius) * spacing ** len(dims)
        self._abs = [np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
                     for n in dims]
        self.dims = dims
        self.spacing = float(spacing)

    def potential(self, values: np.ndarray) -> np.ndarray:
        """psi[c] = sum_c' g(|x_c - x_c'|) values[c'] h^N."""
        psi = np.zeros(values.shape)
        flat = values.ravel()
        support = np.flatnonzero(flat)
        unraveled = np.unravel_index(support, values.shape)
        for k in range(support.size):
            cell = tuple(ax[k] for ax in unraveled)
            rows = tuple(self._abs[axis][c] for axis, c in enumerate(cell))
            psi += flat[support[k]] * self.table[np.ix_(*rows)]
        return psi


def energy_density(f: GridDensity, kernel: RadialKernel,
                   table: GridKernelTable | None = None) -> float:
    """Midpoint-rule double sum including diagonal g(0) terms; O(cells^2)."""
    table = table or GridKernelTable(kernel, f.dims, f.spacing)
    psi = table.potential(f.values)
    return float((f.values * psi).sum() * f.cell_volume)


def energy_cross_density(f1: GridDensity, f2: GridDensity,
                         kernel: RadialKernel) -> float:
    """Cross energy of two densities on the same grid."""
    if (f1.dims != f2.dims or f1.spacing != f2.spacing
            or not np.array_equal(f1.origin, f2.origin)):
        raise ValueError("cross energy needs densities on the same grid")
    table = GridKernelTable(kernel, f1.dims, f1.spacing)
    psi = table.potential(f2.values)
    return float((f1.values * psi).sum() * f1.cell_volume)


# ---------------------------------------------------------------------------
# radial reduction

def _angular_rule(dimension: int, n_quad: int):
    x, w = np.polynomial.legendre.leggauss(n_quad)
    theta = 0.5 * np.pi * (x + 1.0)
    wq = 0.5 * np.pi * w * np.sin(theta) ** (dimension - 2)
    return np.cos(theta), wq / wq.sum()


def radial_reduced_kernel(kernel: RadialKernel, r, s, n_quad: int = 128,
                          dimension: int = 2):
    """Sphere average G(r, s) of g(|r e1 - s omega|); symmetric in (r, s)."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(r < 0) or np.any(s < 0):
        raise ValueError("radii must be nonnegative")
    if dimension == 1:
        out = 0.5 * (kernel(np.abs(r - s)) + kernel(r + s))
        return float(out) if np.ndim(out) == 0 else out
    cos_t, wq = _angular_rule(dimension, n_quad)
    rr, ss = np.broadcast_arrays(r, s)
    d = np.sqrt(np.maximum(
        rr[..., None] ** 2 + ss[..., None] ** 2
        - 2.0 * rr[..., None] * ss[..., None] * cos_t, 0.0))
    out = kernel(d) @ wq
    return float(out) if np.ndim(out) == 0 else out


def radial_kernel_matrix(kernel: RadialKernel, radii, n_quad: int = 128,
                         dimension: int = 2, block: int = 64) -> np.ndarray:
    """G(r_j, r_l) on the full radius grid, computed in row blocks."""
    radii = np.asarray(radii, dtype=float)
    k = radii.size
    out = np.empty((k, k))
    for lo in range(0, k, block):
        hi = min(lo + block, k)
        out[lo:hi] = radial_reduced_kernel(
            kernel, radii[lo:hi, None], radii[None, :],
            n_quad=n_quad, dimension=dimension)
    return out


def energy_radial(p: RadialProfile, kernel: RadialKernel, n_quad: int = 128,
                  gmat: np.ndarray | None = None) -> float:
    """Double shell sum f^T diag(w) G diag(w) f with shell volumes w."""
    if gmat is None:
        gmat = radial_kernel_matrix(kernel, p.radii, n_quad=n_quad,
                                    dimension=p.dimension)
    fw = p.values * p.shell_weights()
    return float(fw @ gmat @ fw)


# ---------------------------------------------------------------------------
# Euler-Lagrange residuals

@dataclass
class ELReport:
    """First-order optimality residuals.

    For densities: lambda_hat is the mass-weighted mean of the potential
    over the intermediate set {tau < f < 1-tau} (the max over {f >= 1-tau}
    when that set is empty), and the violations measure, in the potential
    scale, how far psi strays from the obstacle inequalities on each region.
    For measures: lambda_hat = E(mu)/|mu|^2, viol_support the spread of psi
    on the support, viol_off the one-sided defect at off-support probes.
    """

    kind: str
    lambda_hat: float
    tau: float | None = None
    viol_interior: float | None = None
    viol_zero: float | None = None
    viol_one: float | None = None
    viol_support: float | None = None
    viol_off: float | None = None

    @property
    def max_violation(self) -> float:
        vals = [v for v in (self.viol_interior, self.viol_zero, self.viol_one,
                            self.viol_support, self.viol_off) if v is not None]
        return max(vals) if vals else 0.0

    def to_json(self) -> str:
        payload = {"kind": self.kind, "lambda_hat": self.lambda_hat}
        for key in ("tau", "viol_interior", "viol_zero", "viol_one",
                    "viol_support", "viol_off"):
            val = getattr(self, key)
            if val is not None:
                payload[key] = val
        return json.dumps(payload)


def _el_from_potential(values, psi, masses, tau):
    interior = (values > tau) & (values < 1.0 - tau)
    zero = values <= tau
    one = values >= 1.0 - tau
    if interior.any():
        lam = float((psi[interior] * masses[interior]).sum()
                    / masses[interior].sum())
    elif one.any():
        lam = float(psi[one].max())
    else:
        lam = float(psi.min())
    v_int = float(np.abs(psi[interior] - lam).max()) if interior.any() else 0.0
    v_zero = float(np.clip(lam - psi[zero], 0.0, None).max()) if zero.any() else 0.0
    v_one = float(np.clip(psi[one] - lam, 0.0, None).max()) if one.any() else 0.0
    return lam, v_int, v_zero, v_one


def el_residual_density(f: GridDensity, kernel: RadialKernel, tau: float = 0.01,
                        table: GridKernelTable | None = None) -> ELReport:
    """Obstacle-condition residuals of a grid density."""
    if not 0.0 < tau < 0.5:
        raise ValueError("tau must lie in (0, 1/2)")
    table = table or GridKernelTable(kernel, f.dims, f.spacing)
    psi = table.potential(f.values).ravel()
    vals = f.values.ravel()
    masses = vals * f.cell_volume
    lam, v_int, v_zero, v_one = _el_from_potential(vals, psi, masses, tau)
    return ELReport("density", lam, tau=tau, viol_interior=v_int,
                    viol_zero=v_zero, viol_one=v_one)


def el_residual_radial(p: RadialProfile, kernel: RadialKernel, tau: float = 0.01,
                       gmat: np.ndarray | None = None) -> ELReport:
    """Obstacle-condition residuals of a radial profile (zero-volume shells ignored)."""
    if not 0.0 < tau < 0.5:
        raise ValueError("tau must lie in (0, 1/2)")
    if gmat is None:
        gmat = radial_kernel_matrix(kernel, p.radii, dimension=p.dimension)
    w = p.shell_weights()
    psi = gmat @ (p.values * w)
    keep = w > 0
    lam, v_int, v_zero, v_one = _el_from_potential(
        p.values[keep], psi[keep], (p.values * w)[keep], tau)
    return ELReport("radial", lam, tau=tau, viol_interior=v_int,
                    viol_zero=v_zero, viol_one=v_one)


def el_residual_measure(mu: DiscreteMeasure, kernel: RadialKernel,
                        off_support_probes=None, n_probes: int = 200,
                        seed: int = 0) -> ELReport:
    """Measure-side optimality: psi = E on the support, psi >= E off it.

    Probes default to a seeded uniform sample of the 1.5x-inflated bounding
    ball of the support; points closer than 1e-9 to an atom are discarded.
    The off-support clause is checked up to the sampled margin only.
    """
    e_mu = energy_discrete(mu, kernel)
    lam = e_mu / mu.total_mass ** 2
    psi_support = np.array([potential_at(mu, kernel, x) for x in mu.points])
    active = mu.weights > 0
    viol_support = float(np.abs(psi_support[active] - lam).max()) if active.any() else 0.0
    if off_support_probes is None:
        rng = np.random.default_rng(seed)
        centroid = (mu.points * mu.weights[:, None]).sum(axis=0) / mu.total_mass
        radius = 1.5 * float(np.linalg.norm(mu.points - centroid, axis=1).max()) + 0.5
        raw = rng.standard_normal((n_probes, mu.dimension))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        probes = centroid + raw * radius * rng.random((n_probes, 1)) ** (1.0 / mu.dimension)
    else:
        probes = np.atleast_2d(np.asarray(off_support_probes, dtype=float))
    dist_to_support = cdist(probes, mu.points).min(axis=1)
    probes = probes[dist_to_support > 1e-9]
    viol_off = 0.0
    if len(probes):
        psi_off = np.array([potential_at(mu, kernel, x) for x in probes])
        viol_off = float(np.clip(lam - psi_off, 0.0, None).max())
    return ELReport("measure", lam, viol_support=viol_support, viol_off=viol_off)


# ---------------------------------------------------------------------------
# a-priori diameter bound

@dataclass
class DiameterBoundReport:
    """Certificate constants for the support-diameter bound D = 2 R+."""

    R: float
    R_plus: float
    D: float
    C_m: float
    kappa: float
    variant: str
    shift: float  # constant added to make the working kernel nonnegative

    def to_json(self) -> str:
        return json.dumps({
            "R": self.R, "R_plus": self.R_plus, "D": self.D,
            "C_m": self.C_m, "kappa": self.kappa,
            "variant": self.variant, "shift": self.shift,
        })


def cap_fraction(dimension: int, half_angle: float = np.pi / 15.0) -> float:
    """Fraction of the unit sphere within the given half-angle of a pole."""
    if dimension == 1:
        return 0.5
    x, w = np.polynomial.legendre.leggauss(256)

    def _integral(a, b):
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        return float(0.5 * (b - a) * (np.sin(t) ** (dimension - 2) * w).sum())

    return _integral(0.0, half_angle) / _integral(0.0, np.pi)


def kappa_constant(dimension: int) -> float:
    """Geometric constant: unit-ball volume over the cone-shell piece |C|.

    The piece lives in the shell 4R <= |z| <= 5R within angle pi/15 of a
    fixed direction, so kappa = 1 / (cap_fraction * (5^N - 4^N)).
    """
    return 1.0 / (cap_fraction(dimension) * (5.0 ** dimension - 4.0 ** dimension))


def _radial_integral(kernel, shift, r_hi, dimension, n_quad=512):
    """integral over the ball B_{r_hi} of (g + shift), by Gauss-Legendre in r."""
    x, w = np.polynomial.legendre.leggauss(n_quad)
    r = 0.5 * r_hi * (x + 1.0)
    vals = (kernel(r) + shift) * r ** (dimension - 1)
    surface = dimension * unit_ball_volume(dimension)
    return float(surface * 0.5 * r_hi * (vals * w).sum())


def diameter_bound(kernel: RadialKernel, m: float, dimension: int = 2,
                   variant: str = "general", *, n_shells: int = 512,
                   grid_ratio: float = 1.05, r_cap: float = 1e6,
                   monotone_scan_max: float = 50.0) -> DiameterBoundReport:
    """Support-diameter certificate D(g, m) = 2 R+ for density minimizers.

    The kernel is shifted by its declared lower bound so the working profile
    is nonnegative; adding a constant c changes every admissible energy by
    c m^2, so minimizers are unchanged and the certificate transfers.  R is
    the smallest sampled radius that is past the monotonicity onset, holds
    at least the cone-shell volume kappa*m, and clears 5 C_m / m^2; R+ >= 50R
    additionally clears the long-range comparison (the locally_bounded
    variant replaces the ball integral by g(11R)).
    """
    if m <= 0:
        raise ValueError("mass must be positive")
    if variant not in ("general", "locally_bounded"):
        raise ValueError("variant must be 'general' or 'locally_bounded'")
    if not kernel.grows_at_infinity:
        raise HypothesisError("diameter bound needs a kernel declared to grow at infinity")
    if kernel.lower_bound is None:
        raise HypothesisError("diameter bound needs a kernel bounded from below")
    r_bar = check_definitively_nondecreasing(kernel, monotone_scan_max)
    if r_bar is None:
        raise HypothesisError("kernel has no sampled definitively-nondecreasing onset")

    shift = max(0.0, -float(kernel.lower_bound))

    def g_shifted(t):
        return kernel(t) + shift

    omega = unit_ball_volume(dimension)
    r_ball = (m / omega) ** (1.0 / dimension)
    ball = RadialProfile.ball(dimension, m, r_max=r_ball, n_shells=n_shells)
    shifted = RadialKernel(lambda t: kernel(t) + shift, name="shifted")
    c_m = energy_radial(ball, shifted, n_quad=128)
    kap = kappa_constant(dimension)

    thresh = 5.0 * c_m / m ** 2
    r = max(r_bar, 1e-3)
    while r <= r_cap:
        if omega * r ** dimension >= kap * m and g_shifted(r) > thresh:
            break
        r *= grid_ratio
    else:
        raise SearchHorizonError("no radius R satisfies the bound below the cap")

    if variant == "general":
        tail = 2.5 / m * _radial_integral(kernel, shift, 11.0 * r, dimension)
    else:
        tail = g_shifted(11.0 * r)
    rhs = 2.0 * g_shifted(6.0 * r) + tail
    r_plus = 50.0 * r
    while r_plus <= r_cap:
        if g_shifted(r_plus - r) >= rhs:
            break
        r_plus *= grid_ratio
    else:
        raise SearchHorizonError("no radius R+ satisfies the bound below the cap")

    return DiameterBoundReport(R=float(r), R_plus=float(r_plus), D=float(2.0 * r_plus),
                               C_m=float(c_m), kappa=float(kap), variant=variant,
                               shift=shift)
