"""Radial interaction kernels and sampled hypothesis checkers.

A kernel here is a locally bounded radial profile g(t) of the distance
t >= 0 between two mass elements.  The interesting ones are *weakly
repulsive*: g(0) = 0, negative at short range, positive at long range, so
atomic measures carry finite energy.

Every structural check in this module is a finite-sample scan over a grid
of radii -- a *sampled certificate*, not a proof.  Sample densities default
to 1e4 points per unit interval and are user-settable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RegularityError

_REG_ORDER = {"C0": 0, "C1": 1, "C2": 2}
SAMPLES_PER_UNIT = 10_000


def _vectorized(fn):
    def wrapped(t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(fn(t), dtype=float)
        return float(out) if out.ndim == 0 else out

    return wrapped


class RadialKernel:
    """Radial profile g(t) with optional first/second derivatives.

    Parameters
    ----------
    eval_fn : callable
        Vectorized map from radii (ndarray, t >= 0) to kernel values.
    d1, d2 : callable or None
        Radial derivatives; pass None to declare them unavailable.
    regularity : {"C0", "C1", "C2"}
        Declared smoothness class.
    lower_bound : float or None
        Greatest lower bound of g if known, None means unbounded below.
    grows_at_infinity : bool
        Declared by the constructor; enables confinement-dependent
        operations (existence of minimizers needs g -> +inf).

    Instances are immutable after construction and safe to share between
    workers; evaluation is pure.
    """

    def __init__(self, eval_fn, d1=None, d2=None, *, regularity="C0",
                 lower_bound=None, grows_at_infinity=False, name="custom"):
        if regularity not in _REG_ORDER:
            raise ValueError(f"regularity must be one of {sorted(_REG_ORDER)}")
        self._eval = _vectorized(eval_fn)
        self._d1 = _vectorized(d1) if d1 is not None else None
        self._d2 = _vectorized(d2) if d2 is not None else None
        self.regularity = regularity
        self.lower_bound = lower_bound
        self.grows_at_infinity = bool(grows_at_infinity)
        self.name = name

    def __call__(self, t):
        return self._eval(t)

    @property
    def has_d1(self):
        return self._d1 is not None

    @property
    def has_d2(self):
        return self._d2 is not None

    def d1(self, t):
        if self._d1 is None:
            raise RegularityError(f"kernel {self.name!r} declares no first derivative")
        return self._d1(t)

    def d2(self, t):
        if self._d2 is None:
            raise RegularityError(f"kernel {self.name!r} declares no second derivative")
        return self._d2(t)

    def __repr__(self):
        return f"<RadialKernel {self.name} ({self.regularity})>"


class PowerLawMinusKernel(RadialKernel):
    """g(t) = t^alpha/alpha - t^beta/beta with alpha > beta > 0.

    The normalization puts the minimal pair interaction at distance 1:
    g'(1) = 0, g(1) = 1/alpha - 1/beta < 0, g''(1) = alpha - beta.
    For beta < 2 the second derivative blows up at the origin, so d2 is
    declared unavailable there and curvature-based checks refuse it.
    """

    def __init__(self, alpha: float, beta: float):
        if not (alpha > beta > 0):
            raise ValueError("need alpha > beta > 0")
        self.alpha = float(alpha)
        self.beta = float(beta)
        a, b = self.alpha, self.beta

        def ev(t):
            return t ** a / a - t ** b / b

        def d1(t):
            return t ** (a - 1.0) - t ** (b - 1.0)

        d2 = None
        if b >= 2.0:
            def d2(t):  # noqa: F811 - intentional rebind
                return (a - 1.0) * t ** (a - 2.0) - (b - 1.0) * t ** (b - 2.0)

        regularity = "C2" if b >= 2.0 else ("C1" if b >= 1.0 else "C0")
        super().__init__(
            ev, d1, d2,
            regularity=regularity,
            lower_bound=1.0 / a - 1.0 / b,
            grows_at_infinity=True,
            name=f"power_law_minus(alpha={a:g}, beta={b:g})",
        )


class TabulatedKernel(RadialKernel):
    """Kernel interpolated from a two-column (t, g) table by a cubic spline."""

    def __init__(self, radii, values, *, grows_at_infinity=False, name="tabulated"):
        from scipy.interpolate import CubicSpline

        radii = np.asarray(radii, dtype=float)
        values = np.asarray(values, dtype=float)
        if radii.ndim != 1 or radii.shape != values.shape or radii.size < 4:
            raise ValueError("need matching 1-D arrays with at least 4 samples")
        if radii[0] < 0 or np.any(np.diff(radii) <= 0):
            raise ValueError("radii must be nonnegative and strictly increasing")
        if not (np.all(np.isfinite(radii)) and np.all(np.isfinite(values))):
            raise ValueError("table contains non-finite entries")
        spline = CubicSpline(radii, values, extrapolate=True)
        dense = spline(np.linspace(radii[0], radii[-1], 4 * radii.size))
        super().__init__(
            spline, spline.derivative(1), spline.derivative(2),
            regularity="C2",
            lower_bound=float(dense.min()),
            grows_at_infinity=grows_at_infinity,
            name=name,
        )
        self.radii = radii
        self.values = values

    @classmethod
    def from_csv(cls, path, *, grows_at_infinity=False):
        table = np.loadtxt(path, delimiter=",", ndmin=2)
        if table.shape[1] != 2:
            raise ValueError("tabulated kernel CSV must have exactly two columns: t, g(t)")
        return cls(table[:, 0], table[:, 1],
                   grows_at_infinity=grows_at_infinity, name=f"tabulated({path})")


@dataclass(frozen=True)
class ConfinementHypotheses:
    """Admissible (eta, xi) window for the triangle-confinement hypotheses."""

    eta: float
    xi: float

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0 / 64.0:
            raise ValueError("eta must lie in (0, 1/64)")
        if not 0.0 < self.xi < 1.0 / 120.0:
            raise ValueError("xi must lie in (0, 1/120)")


def make_confinement_bump(eta: float = 1.0 / 100.0, xi: float = 1.0 / 150.0, *,
                          background: float = 0.05, tail_coef: float = 0.5,
                          tail_start: float = 2.0) -> RadialKernel:
    """Smooth kernel engineered to satisfy the confinement hypotheses at (eta, xi).

    Structure: a small nonnegative background a*t^2*exp(-t^2) (gives g(0)=0
    and g'' > 0 near the origin), a well centered at distance 1, and a cubic
    growth tail past ``tail_start`` so that minimizers exist and particle
    runs stay confined.

    The well is an exact parabola -depth + c*(t-1)^2 out to |t-1| = 7*xi and
    is then faded to zero by a C2 smoothstep.  The parabola is what makes
    g'' strictly positive on the whole window (1-6xi, 1+6xi): any kernel
    with g(1) = -1, g > -eta outside (1-xi, 1+xi) and nonnegative curvature
    across that window must climb to g ~ 5 right after the well, so the
    positive rim is unavoidable, not a construction artifact.

    The returned kernel carries exact derivatives; validate it with
    check_confinement_hypotheses / check_second_derivative_ratio before use.
    """
    ConfinementHypotheses(eta, xi)  # range validation
    a = float(background)
    if a <= 0:
        raise ValueError("background amplitude must be positive")
    depth = 1.0 + a * math.exp(-1.0)      # well floor rides on the background
    c = (depth - 0.5 * eta) / xi ** 2     # g(1 +- xi) >= -eta/2
    u1 = 7.0 * xi                         # parabola kept past the 6*xi check window
    u2 = 0.35                             # well support ends well inside (0.5, 1.5)
    span = u2 - u1
    ct, t0 = float(tail_coef), float(tail_start)

    def _chi(x):
        y = np.clip((x - u1) / span, 0.0, 1.0)
        return 1.0 - y ** 3 * (10.0 - 15.0 * y + 6.0 * y ** 2)

    def _chi_d1(x):
        y = np.clip((x - u1) / span, 0.0, 1.0)
        return -30.0 * y ** 2 * (1.0 - y) ** 2 / span

    def _chi_d2(x):
        y = np.clip((x - u1) / span, 0.0, 1.0)
        return -60.0 * y * (1.0 - y) * (1.0 - 2.0 * y) / span ** 2

    def _well(u):
        x = np.abs(u)
        return (c * x ** 2 - depth) * _chi(x)

    def _well_d1(u):
        x = np.abs(u)
        return np.sign(u) * (2.0 * c * x * _chi(x) + (c * x ** 2 - depth) * _chi_d1(x))

    def _well_d2(u):
        x = np.abs(u)
        return (2.0 * c * _chi(x) + 4.0 * c * x * _chi_d1(x)
                + (c * x ** 2 - depth) * _chi_d2(x))

    def ev(t):
        bg = a * t ** 2 * np.exp(-t ** 2)
        tail = ct * np.maximum(t - t0, 0.0) ** 3
        return bg + _well(t - 1.0) + tail

    def d1(t):
        bg = a * np.exp(-t ** 2) * (2.0 * t - 2.0 * t ** 3)
        tail = 3.0 * ct * np.maximum(t - t0, 0.0) ** 2
        return bg + _well_d1(t - 1.0) + tail

    def d2(t):
        bg = a * np.exp(-t ** 2) * (2.0 - 10.0 * t ** 2 + 4.0 * t ** 4)
        tail = 6.0 * ct * np.maximum(t - t0, 0.0)
        return bg + _well_d2(t - 1.0) + tail

    return RadialKernel(
        ev, d1, d2,
        regularity="C2",
        lower_bound=-1.0,
        grows_at_infinity=True,
        name=f"confinement_bump(eta={eta:g}, xi={xi:g})",
    )


def kernel_eval(kernel: RadialKernel, t):
    """Evaluate g(t) for t >= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("radii must be nonnegative")
    return kernel(t)


def _default_samples(t_max: float) -> int:
    return max(2, int(round(t_max * SAMPLES_PER_UNIT)) + 1)


def check_definitively_nondecreasing(kernel: RadialKernel, t_max: float,
                                     n_samples: int | None = None):
    """Smallest sampled radius past which the sampled values never decrease.

    Returns None when the samples still decrease at t_max (no certificate).
    Sampled certificate only: monotonicity between grid points is not checked.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    n = _default_samples(t_max) if n_samples is None else int(n_samples)
    if n < 2:
        raise ValueError("need at least 2 samples")
    t = np.linspace(0.0, t_max, n)
    diffs = np.diff(kernel(t))
    bad = np.nonzero(diffs < 0.0)[0]
    if bad.size == 0:
        return 0.0
    if bad[-1] == diffs.size - 1:
        return None
    return float(t[bad[-1] + 1])


@dataclass(frozen=True)
class WeakRepulsivityReport:
    g0_is_zero: bool
    negative_near_origin: bool
    positive_at_range: bool

    @property
    def passed(self) -> bool:
        return self.g0_is_zero and self.negative_near_origin and self.positive_at_range


def check_weak_repulsivity(kernel: RadialKernel, t_max: float,
                           n_samples: int | None = None) -> WeakRepulsivityReport:
    """Sampled verdicts on: g(0)=0, g<0 at short range, g>0 at long range."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    n = _default_samples(t_max) if n_samples is None else int(n_samples)
    t = np.linspace(0.0, t_max, n)
    v = kernel(t)
    g0_is_zero = abs(float(v[0])) <= 1e-12

    signif = np.nonzero(np.abs(v[1:]) > 1e-12)[0]
    negative_near_origin = bool(signif.size and v[1:][signif[0]] < 0.0)

    nonpos = np.nonzero(v <= 0.0)[0]
    tail_start = (nonpos[-1] + 1) if nonpos.size else 1
    positive_at_range = bool(tail_start < v.size and np.all(v[tail_start:] > 0.0))
    return WeakRepulsivityReport(g0_is_zero, negative_near_origin, positive_at_range)


@dataclass
class ConfinementCheckReport:
    """Outcome of the four confinement clauses, with every violating sample."""

    passed: bool
    origin_is_zero: bool
    unit_minimum: bool
    shallow_outside_well: bool
    positive_beyond: bool
    eta: float
    xi: float
    t_scan: float
    violations: list = field(default_factory=list)  # (clause, t, g(t)) triples

    def to_dict(self):
        return {
            "certificate": "sampled",
            "passed": self.passed,
            "origin_is_zero": self.origin_is_zero,
            "unit_minimum": self.unit_minimum,
            "shallow_outside_well": self.shallow_outside_well,
            "positive_beyond": self.positive_beyond,
            "eta": self.eta,
            "xi": self.xi,
            "t_scan": self.t_scan,
            "n_violations": len(self.violations),
            "violations": [
                {"clause": c, "t": t, "g": g} for c, t, g in self.violations[:200]
            ],
        }


def check_confinement_hypotheses(kernel: RadialKernel, hyp: ConfinementHypotheses,
                                 n_samples: int | None = None,
                                 t_scan: float = 10.0) -> ConfinementCheckReport:
    """Sampled check of the confinement hypotheses at (eta, xi).

    Clauses: g(0) = 0; g(1) = min g = -1 (sampled min within 1e-9); g > -eta
    on [0, 3/2] outside (1-xi, 1+xi); g > 0 on [3/2, t_scan].  The scan
    horizon stands in for the unbounded clause; kernels declaring
    grows_at_infinity keep the long-range clause beyond it by declaration.
    """
    if kernel.regularity not in _REG_ORDER:
        raise ValueError("kernel must be declared at least C0")
    if n_samples is not None and n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    n = _default_samples(t_scan) if n_samples is None else int(n_samples)
    eta, xi = hyp.eta, hyp.xi

    t = np.union1d(np.linspace(0.0, t_scan, n),
                   [0.0, 1.0 - xi, 1.0, 1.0 + xi, 1.5, t_scan])
    v = kernel(t)
    violations = []

    g0 = float(kernel(0.0))
    origin_is_zero = abs(g0) <= 1e-12
    if not origin_is_zero:
        violations.append(("origin_is_zero", 0.0, g0))

    g1 = float(kernel(1.0))
    vmin = float(v.min())
    unit_minimum = abs(g1 + 1.0) <= 1e-9 and vmin >= -1.0 - 1e-9
    if not unit_minimum:
        violations.append(("unit_minimum", float(t[np.argmin(v)]), vmin))

    mask3 = (t <= 1.5) & ~((t > 1.0 - xi) & (t < 1.0 + xi))
    bad3 = mask3 & (v <= -eta)
    shallow_outside_well = not bool(bad3.any())
    violations.extend(("shallow_outside_well", float(ti), float(vi))
                      for ti, vi in zip(t[bad3], v[bad3]))

    mask4 = t >= 1.5
    bad4 = mask4 & (v <= 0.0)
    positive_beyond = not bool(bad4.any())
    violations.extend(("positive_beyond", float(ti), float(vi))
                      for ti, vi in zip(t[bad4], v[bad4]))

    passed = origin_is_zero and unit_minimum and shallow_outside_well and positive_beyond
    return ConfinementCheckReport(passed, origin_is_zero, unit_minimum,
                                  shallow_outside_well, positive_beyond,
                                  eta, xi, t_scan, violations)


@dataclass(frozen=True)
class SecondDerivativeRatioReport:
    """Sampled margin of g''(t) + (7/2) g''(s) over the two curvature windows."""

    passed: bool
    margin: float
    worst_t: float
    worst_s: float
    xi: float

    def to_dict(self):
        return {"certificate": "sampled", "passed": self.passed, "margin": self.margin,
                "worst_t": self.worst_t, "worst_s": self.worst_s, "xi": self.xi}


def check_second_derivative_ratio(kernel: RadialKernel, xi: float,
                                  n_samples: int = 2000) -> SecondDerivativeRatioReport:
    """Verify g''(t) > -(7/2) g''(s) on sampled t in (0, 5 xi), s in (1-6 xi, 1+6 xi)."""
    if not 0.0 < xi < 1.0 / 120.0:
        raise ValueError("xi must lie in (0, 1/120)")
    if not kernel.has_d2:
        raise RegularityError("second-derivative ratio check needs a C2 kernel with d2")
    n = int(n_samples)
    if n < 2:
        raise ValueError("need at least 2 samples per window")
    tg = np.linspace(0.0, 5.0 * xi, n + 2)[1:-1]
    sg = np.linspace(1.0 - 6.0 * xi, 1.0 + 6.0 * xi, n + 2)[1:-1]
    d2t = kernel.d2(tg)
    d2s = kernel.d2(sg)
    it, isx = int(np.argmin(d2t)), int(np.argmin(d2s))
    margin = float(d2t[it] + 3.5 * d2s[isx])
    return SecondDerivativeRatioReport(margin > 0.0, margin,
                                       float(tg[it]), float(sg[isx]), xi)


def check_derivative_consistency(kernel: RadialKernel, t_lo=0.1, t_hi=5.0,
                                 n=100, step=1e-5, rel_tol=1e-5, seed=0) -> bool:
    """Smoke check that declared d1/d2 match centered finite differences of eval."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(t_lo, t_hi, size=n)
    ok = True
    if kernel.has_d1:
        fd = (kernel(t + step) - kernel(t - step)) / (2.0 * step)
        ok &= bool(np.all(np.abs(fd - kernel.d1(t)) <= rel_tol * (1.0 + np.abs(fd))))
    if kernel.has_d2:
        fd2 = (kernel(t + step) - 2.0 * kernel(t) + kernel(t - step)) / step ** 2
        ok &= bool(np.all(np.abs(fd2 - kernel.d2(t)) <= rel_tol * (1.0 + np.abs(fd2))))
    return ok
