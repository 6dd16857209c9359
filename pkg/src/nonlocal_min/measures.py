"""Discrete measures, box-constrained grid densities, radial profiles, and their projections.

The three classes mirror the three relaxation levels of the minimization
problem: weighted atoms, densities with values in [0, 1] on a uniform grid,
and 1-D radial profiles for spherically symmetric candidates.  Grids are
uniform and cell-centered with midpoint quadrature throughout, so every
energy is a pure pairwise sum over cell centers.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import InfeasibleMassError, ZeroMassError

_FMT = "%.17g"  # round-trips float64 exactly


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or infinite entries")


class DiscreteMeasure:
    """Weighted point cloud in R^N representing a finite positive measure."""

    def __init__(self, points, weights):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        weights = np.asarray(weights, dtype=float).ravel()
        _check_finite(points, "points")
        _check_finite(weights, "weights")
        if points.shape[0] != weights.shape[0]:
            raise ValueError("points and weights must have matching lengths")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        self.points = points
        self.weights = weights
        self.total_mass = float(weights.sum())

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path):
        n = self.dimension
        header = ",".join([f"x{i}" for i in range(n)] + ["weight"])
        data = np.column_stack([self.points, self.weights])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=_FMT)

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1])


def normalize_to_probability(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Rescale weights so the total mass is 1."""
    if mu.total_mass <= 0:
        raise ZeroMassError("cannot normalize a zero-mass measure")
    return DiscreteMeasure(mu.points, mu.weights / mu.total_mass)


class GridDensity:
    """Values in [0, 1] on a uniform cell-centered grid with spacing h.

    The mass is the midpoint-rule integral sum(values) * h^N and is computed
    at construction; pass expected_mass to assert it within 1e-10 relative.
    """

    def __init__(self, origin, spacing, values, expected_mass=None):
        values = np.asarray(values, dtype=float)
        origin = np.asarray(origin, dtype=float).ravel()
        _check_finite(values, "values")
        _check_finite(origin, "origin")
        if origin.size != values.ndim:
            raise ValueError("origin length must match grid dimensionality")
        if not spacing > 0:
            raise ValueError("spacing must be positive")
        if values.min() < -1e-12 or values.max() > 1.0 + 1e-12:
            raise ValueError("density values must lie in [0, 1]")
        self.values = np.clip(values, 0.0, 1.0)
        self.origin = origin
        self.spacing = float(spacing)
        self.mass = float(self.values.sum() * self.cell_volume)
        if expected_mass is not None:
            if abs(self.mass - expected_mass) > 1e-10 * max(abs(expected_mass), 1e-300):
                raise ValueError("grid mass differs from the declared mass")

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def dims(self) -> tuple:
        return self.values.shape

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dimension

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.values.shape[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.spacing

    def cell_centers(self) -> np.ndarray:
        """All cell centers as an (n_cells, N) array in row-major cell order."""
        axes = [self.axis_centers(k) for k in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def save(self, prefix):
        prefix = Path(prefix)
        self.values.astype(np.float64).tofile(prefix.with_suffix(".bin"))
        sidecar = {
            "origin": self.origin.tolist(),
            "spacing": self.spacing,
            "dims": list(self.values.shape),
            "mass": self.mass,
        }
        prefix.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, prefix):
        prefix = Path(prefix)
        meta = json.loads(prefix.with_suffix(".json").read_text())
        values = np.fromfile(prefix.with_suffix(".bin"), dtype=np.float64)
        values = values.reshape(meta["dims"])
        out = cls(meta["origin"], meta["spacing"], values)
        if abs(out.mass - meta["mass"]) > 1e-10 * max(abs(meta["mass"]), 1e-300):
            raise ValueError("stored mass does not match reloaded values")
        return out


class RadialProfile:
    """1-D radial density r -> f(r) in [0, 1] on a uniform radius grid from 0.

    The mass is the shell-quadrature sum
        N * omega_N * sum_k f(r_k) r_k^(N-1) dr
    computed at construction (omega_N = unit-ball volume).
    """

    def __init__(self, dimension, radii, values):
        radii = np.asarray(radii, dtype=float).ravel()
        values = np.asarray(values, dtype=float).ravel()
        _check_finite(radii, "radii")
        _check_finite(values, "values")
        if radii.size != values.size or radii.size < 2:
            raise ValueError("radii and values must match and have at least 2 entries")
        if radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
            raise ValueError("radii must start at 0 and increase strictly")
        steps = np.diff(radii)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
            raise ValueError("radius grid must be uniform")
        if values.min() < -1e-12 or values.max() > 1.0 + 1e-12:
            raise ValueError("profile values must lie in [0, 1]")
        self.dimension = int(dimension)
        self.radii = radii
        self.values = np.clip(values, 0.0, 1.0)
        self.dr = float(steps[0])
        self.mass = float((self.values * self.shell_weights()).sum())

    def shell_weights(self) -> np.ndarray:
        n = self.dimension
        return n * unit_ball_volume(n) * self.radii ** (n - 1) * self.dr

    @classmethod
    def ball(cls, dimension, volume, r_max, n_shells):
        """Indicator profile of the centered ball with the given volume."""
        radii = np.linspace(0.0, r_max, n_shells + 1)
        r_ball = (volume / unit_ball_volume(dimension)) ** (1.0 / dimension)
        if r_ball > r_max:
            raise InfeasibleMassError("ball radius exceeds the profile extent")
        return cls(dimension, radii, (radii <= r_ball).astype(float))

    @classmethod
    def annulus(cls, dimension, r_inner, r_outer, r_max, n_shells):
        if not 0.0 <= r_inner < r_outer <= r_max:
            raise ValueError("need 0 <= r_inner < r_outer <= r_max")
        radii = np.linspace(0.0, r_max, n_shells + 1)
        vals = ((radii >= r_inner) & (radii <= r_outer)).astype(float)
        return cls(dimension, radii, vals)

    def save(self, prefix):
        prefix = Path(prefix)
        np.savetxt(prefix.with_suffix(".csv"),
                   np.column_stack([self.radii, self.values]),
                   delimiter=",", header="r,value", comments="", fmt=_FMT)
        prefix.with_suffix(".json").write_text(json.dumps(
            {"dimension": self.dimension, "mass": self.mass}, indent=2))

    @classmethod
    def load(cls, prefix):
        prefix = Path(prefix)
        meta = json.loads(prefix.with_suffix(".json").read_text())
        data = np.loadtxt(prefix.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
        return cls(meta["dimension"], data[:, 0], data[:, 1])


def project_box_mass_weighted(values, weights, m, *, rel_tol=1e-13, max_iter=200):
    """Project values onto {0 <= v <= 1, sum(weights * v) = m} by clip(v - lam, 0, 1).

    The shift lam solves the monotone scalar mass equation by bisection; this
    is the Euclidean projection in the weighted L2 metric and reduces to the
    plain box-mass projection for constant weights.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    _check_finite(v, "values")
    capacity = float(w.sum())
    if not 0.0 < m <= capacity * (1.0 + 1e-12):
        raise InfeasibleMassError(
            f"invalid mass: need 0 < m <= capacity, got m={m:g}, capacity={capacity:g}")

    def mass_at(lam):
        return float((w * np.clip(v - lam, 0.0, 1.0)).sum())

    lo, hi = float(v.min()) - 1.0, float(v.max())
    lam = lo
    for _ in range(max_iter):
        lam = 0.5 * (lo + hi)
        cur = mass_at(lam)
        if abs(cur - m) <= rel_tol * m:
            break
        if cur > m:
            lo = lam
        else:
            hi = lam
        if hi - lo <= 1e-17 * max(1.0, abs(lam)):
            break
    # snap to the bracket end if it hits the mass exactly (kink solutions)
    lam = min((lo, lam, hi), key=lambda s: abs(mass_at(s) - m))
    return np.clip(v - lam, 0.0, 1.0)


def project_box_mass(values, cell_volume, m, *, rel_tol=1e-12, max_iter=200):
    """Euclidean projection onto {0 <= v <= 1, sum(v) * cell_volume = m}."""
    v = np.asarray(values, dtype=float)
    if cell_volume <= 0:
        raise ValueError("cell_volume must be positive")
    w = np.full(v.shape, float(cell_volume))
    return project_box_mass_weighted(v, w, m, rel_tol=rel_tol, max_iter=max_iter)


def measure_to_density(mu: DiscreteMeasure, m: float, bounding_box=None,
                       spacing=None) -> GridDensity:
    """Rasterize a probability measure into a density of mass m on cubes.

    Each cube Q of side ``spacing`` receives the mass m * mu(Q), spread
    uniformly, so its value is m * mu(Q) / spacing^N.  At the default
    spacing m^(1/N) the value is exactly mu(Q); larger spacings dilute it.
    """
    if m <= 0:
        raise InfeasibleMassError("invalid mass: m must be positive")
    if abs(mu.total_mass - 1.0) > 1e-9:
        raise ValueError("measure_to_density expects a probability measure")
    n = mu.dimension
    h = m ** (1.0 / n) if spacing is None else float(spacing)
    if h ** n < m * (1.0 - 1e-12):
        raise InfeasibleMassError("spacing^N must be at least m so cube values stay <= 1")
    if bounding_box is None:
        lo = mu.points.min(axis=0) - 0.5 * h
        hi = mu.points.max(axis=0) + 0.5 * h
    else:
        lo = np.asarray(bounding_box[0], dtype=float)
        hi = np.asarray(bounding_box[1], dtype=float)
    dims = np.maximum(np.ceil((hi - lo) / h - 1e-12).astype(int), 1)
    idx = np.floor((mu.points - lo) / h).astype(int)
    if np.any(idx < 0) or np.any(idx >= dims):
        raise ValueError("bounding box does not cover the support of the measure")
    cube_mass = np.zeros(dims)
    np.add.at(cube_mass, tuple(idx.T), mu.weights)
    values = m * cube_mass / h ** n
    if values.max() > 1.0 + 1e-12:
        raise InfeasibleMassError("a cube would exceed density 1; enlarge the spacing")
    return GridDensity(lo, h, values)


def radial_to_grid(profile: RadialProfile, spacing: float) -> GridDensity:
    """Sample f(|x|) at cell centers of a grid centered at the origin."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    n = profile.dimension
    r_max = float(profile.radii[-1])
    half = int(math.ceil(r_max / spacing))
    centers_1d = (np.arange(-half, half + 1)) * spacing
    mesh = np.meshgrid(*([centers_1d] * n), indexing="ij")
    radius = np.sqrt(sum(c ** 2 for c in mesh))
    values = np.interp(radius.ravel(), profile.radii, profile.values,
                       right=0.0).reshape(radius.shape)
    origin = np.full(n, centers_1d[0] - 0.5 * spacing)
    return GridDensity(origin, spacing, values)
