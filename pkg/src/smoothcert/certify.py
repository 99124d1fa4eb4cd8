"""Certified radii for Gaussian-smoothed hard-label classifiers.

Two levels of machinery live here.  The zeroth-order closed form
``sigma * Phi^-1(q)`` needs only the smoothed top-class probability.  The
first-order machinery additionally consumes directional-derivative and
perpendicular-gradient bounds (m1, m2) and solves the worst-case problem

    integral phi(x) Phi(c(x)) dx   = q
    integral phi(x) phi(c(x)) dx   = m2
    integral x phi(x) Phi(c(x)) dx = m1,      c(x) = c0 + c1 x + c2 e^{r x}

for the dual coefficients, then reads off the worst-case probability at
scaled travel distance r as integral phi(x - r) Phi(c(x)) dx.  When the
solved slope coefficient c1 is negative the directional constraint is
invalid as a one-sided bound and the system is re-solved without it
(``ReducedNoSlope``).  When m2 = 0 the dual degenerates to an indicator of
an interval [w2, w1]; that branch is solved directly:

    Phi(w1) - Phi(w2)  = q
    phi(w2) - phi(w1)  = m1
    Phi(w1 - r) - Phi(w2 - r) = 0.5   defines the failure distance r.

Endpoint labels follow the convention validated by the halfspace limit
(w1 the upper endpoint, m1 the directional derivative bound along the
travel direction), which reproduces R = sigma * Phi^-1(q) as m1 -> -M.

All quantities here are dimensionless (travel measured in units of sigma);
entry points convert to input units exactly once on the way out.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .numerics import (
    CLAMP,
    DomainError,
    NoConvergenceError,
    SolverSettings,
    bisect_root,
    panel_nodes,
    solve_system,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)

__all__ = [
    "ThreatModel",
    "Method",
    "DualVariant",
    "LinfMode",
    "SmoothingConfig",
    "FirstOrderStats",
    "DualSolution",
    "Certificate",
    "GradientNormBounds",
    "RadiusResult",
    "InfeasibleStatsError",
    "R_CAP_DEFAULT",
    "zeroth_radius_l2",
    "zeroth_radius",
    "max_gradient_magnitude",
    "check_feasible",
    "ensure_feasible",
    "solve_dual",
    "probability_from_dual",
    "lower_bound_probability",
    "directional_radius",
    "radius_l2_first",
    "radius_l1_first",
    "radius_linf_first",
    "radius_subspace",
]

# Travel cap in sigma units; unbounded certified regions are reported as
# sigma * R_CAP_DEFAULT with the capped flag set.
R_CAP_DEFAULT = 10.0

# Below this the perpendicular-gradient information is dropped and the
# degenerate interval geometry is used instead (always conservative).
M2_DEGENERATE = 1e-8

# Relative slack accepted by the feasibility check.
FEASIBILITY_SLACK = 1e-9

# Smooth dual solves are skipped for q this close to 0.5 or travel this
# small: the exponential basis degenerates there, and the zeroth-order
# answer / linear interpolation from p(0) = q is valid and conservative.
_Q_SMOOTH_FLOOR = 5e-4
_R_SMOOTH_FLOOR = 5e-3

# m2 within this relative distance of the perpendicular boundary phi(Phi^-1(q))
# is pulled back onto it: the system degenerates toward a constant c there,
# and weakening m2 is always conservative.
_M2_PERP_MARGIN = 5e-3

# at float-level slack from the boundary the constraint set collapses to the
# single perpendicular halfspace (the linear-classifier rigidity), for which
# the worst-case probability is constant in the travel distance
_M2_SINGLETON = 1e-9

_DOMAIN_HALF_WIDTH = 12.0
_BASE_PANELS = 48

# Selftest mutation hook: the CLI selftest flips this to verify that the
# halfspace oracle actually exercises the interval system's sign convention.
_cor3_sign = 1.0


class ThreatModel(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"
    SUBSPACE_L1 = "subspace_l1"
    SUBSPACE_L2 = "subspace_l2"
    SUBSPACE_LINF = "subspace_linf"

    @property
    def is_subspace(self) -> bool:
        return self.value.startswith("subspace_")


class Method(str, enum.Enum):
    ZEROTH_ORDER = "zeroth"
    FIRST_ORDER = "first"


class DualVariant(str, enum.Enum):
    FULL = "full"
    REDUCED_NO_SLOPE = "reduced_no_slope"
    INTERVAL = "interval"


class LinfMode(str, enum.Enum):
    VIA_L1_BOUND = "via_l1"
    VIA_L2_SCALING = "via_l2"


class InfeasibleStatsError(ValueError):
    """(q, m1, m2) exceeds the gradient-magnitude feasibility boundary."""


@dataclass(frozen=True)
class SmoothingConfig:
    """Noise level sigma (input units) and input dimension."""

    sigma: float
    dim: int

    def __post_init__(self) -> None:
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma}")
        if self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim}")


@dataclass(frozen=True)
class FirstOrderStats:
    """Conservative bounds (q, m1, m2) fed to the worst-case solver.

    q lower-bounds the smoothed top-class probability; m1 lower-bounds the
    dimensionless directional derivative sigma * v^T grad; m2 lower-bounds
    the dimensionless perpendicular gradient norm.
    """

    q: float
    m1: float
    m2: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.q <= 1.0):
            raise DomainError(f"q must lie in [0, 1], got {self.q}")
        if self.m2 < 0.0:
            raise DomainError(f"m2 must be nonnegative, got {self.m2}")
        if not (math.isfinite(self.m1) and math.isfinite(self.m2)):
            raise DomainError("m1 and m2 must be finite")

    @property
    def gradient_norm(self) -> float:
        return math.hypot(self.m1, self.m2)


@dataclass(frozen=True)
class DualSolution:
    """Worst-case classifier coefficients at one travel distance.

    For the smooth variants the worst-case set is
    {(z1, z2): e^{r z1} <= a1 z1 + a2 z2 + b} with c0 = b/a2, c1 = a1/a2,
    c2 = -1/a2 (hence c2 < 0).  The degenerate ``INTERVAL`` variant stores
    the endpoints [w2, w1] of the a2 -> 0 limit instead and leaves the
    coefficients unset.
    """

    c0: Optional[float]
    c1: Optional[float]
    c2: Optional[float]
    variant: DualVariant
    travel_scale: float
    interval: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.variant is DualVariant.INTERVAL:
            if self.interval is None:
                raise DomainError("interval variant requires endpoints")
        else:
            if self.c0 is None or self.c2 is None:
                raise DomainError("smooth variants require coefficients")
            if self.c2 >= 0.0:
                raise DomainError(f"c2 must be negative, got {self.c2}")
            if self.variant is DualVariant.REDUCED_NO_SLOPE and self.c1 != 0.0:
                raise DomainError("reduced variant must have c1 = 0")


@dataclass(frozen=True)
class Certificate:
    """One certified radius under one threat model."""

    threat: ThreatModel
    radius: float
    method: Method
    alpha: float
    abstained: bool

    def __post_init__(self) -> None:
        if self.abstained and self.radius != 0.0:
            raise DomainError("abstained certificates must carry radius 0")
        if self.radius < 0.0:
            raise DomainError(f"radius must be nonnegative, got {self.radius}")


class RadiusResult(NamedTuple):
    """Radius in input units plus solver diagnostics."""

    radius: float
    capped: bool = False
    fallback_used: bool = False
    abstained: bool = False
    clamped: bool = False


@dataclass(frozen=True)
class GradientNormBounds:
    """High-confidence norm bounds on the smoothed-probability gradient.

    All fields are in units of ||y1|| (the estimators' sigma^2-scaled
    outputs divided by sigma^2 exactly once at construction).  Safe
    tightenings are applied: a valid l2 upper bound caps the linf upper
    bound, and a valid l1 upper bound caps the l2 upper bound.
    """

    l2_lower: float
    l2_upper: float
    linf_upper: float
    l1_upper: Optional[float] = None
    subspace_dual_upper: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("l2_lower", "l2_upper", "linf_upper"):
            v = getattr(self, name)
            if math.isnan(v) or v < 0.0:
                raise DomainError(f"{name} must be nonnegative, got {v}")
        if self.l1_upper is not None and self.l2_upper > self.l1_upper:
            object.__setattr__(self, "l2_upper", self.l1_upper)
        if self.linf_upper > self.l2_upper:
            object.__setattr__(self, "linf_upper", self.l2_upper)
        if self.l2_lower > self.l2_upper:
            raise DomainError(
                f"l2_lower {self.l2_lower} exceeds l2_upper {self.l2_upper}"
            )
        if self.subspace_dual_upper is not None and self.subspace_dual_upper < 0.0:
            raise DomainError("subspace_dual_upper must be nonnegative")


# ---------------------------------------------------------------------------
# zeroth order
# ---------------------------------------------------------------------------


def zeroth_radius_l2(q: float, cfg: SmoothingConfig) -> float:
    """Baseline certified l2 radius sigma * Phi^-1(q); 0 (abstain) for q <= 0.5."""
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"q must lie in [0, 1], got {q}")
    if q <= 0.5:
        return 0.0
    if q >= 1.0:
        return cfg.sigma * float(std_normal_quantile(1.0 - 1e-16))
    return cfg.sigma * float(std_normal_quantile(q))


def _threat_scale(threat: ThreatModel, cfg: SmoothingConfig,
                  subspace_dim: Optional[int]) -> float:
    if threat is ThreatModel.LINF:
        return 1.0 / math.sqrt(cfg.dim)
    if threat is ThreatModel.SUBSPACE_LINF:
        if subspace_dim is None:
            raise DomainError("subspace threat requires subspace_dim")
        return 1.0 / math.sqrt(subspace_dim)
    return 1.0


def zeroth_radius(q: float, cfg: SmoothingConfig, threat: ThreatModel,
                  subspace_dim: Optional[int] = None) -> float:
    """Zeroth-order radius under any threat model.

    The zeroth-order certified region is the l2 ball of radius
    sigma * Phi^-1(q); the inscribed l1 ball has the same radius and the
    inscribed linf ball is smaller by sqrt(d).
    """
    return zeroth_radius_l2(q, cfg) * _threat_scale(threat, cfg, subspace_dim)


def max_gradient_magnitude(q: float) -> float:
    """Largest dimensionless gradient magnitude sigma*||grad g|| given g(x) = q.

    Attained by the halfspace worst case, where it equals phi(Phi^-1(q)).
    """
    if not (0.0 < q < 1.0):
        raise DomainError(f"q must lie in (0, 1), got {q}")
    return float(std_normal_pdf(std_normal_quantile(q)))


def check_feasible(stats: FirstOrderStats) -> bool:
    """Whether (m1, m2) fits inside the gradient-magnitude disk for q."""
    if stats.q <= 0.0 or stats.q >= 1.0:
        return stats.m1 == 0.0 and stats.m2 == 0.0
    limit = max_gradient_magnitude(stats.q) * (1.0 + FEASIBILITY_SLACK)
    return stats.gradient_norm <= limit


def ensure_feasible(stats: FirstOrderStats, clamp: bool = False
                    ) -> tuple[FirstOrderStats, bool]:
    """Validate stats, optionally rescaling (m1, m2) onto the boundary.

    Radially shrinking (m1, m2) only weakens both one-sided constraints, so
    the clamped certificate stays valid; by default infeasibility raises
    since it signals a bug or a violated confidence event.
    """
    if check_feasible(stats):
        return stats, False
    if not clamp:
        raise InfeasibleStatsError(
            f"gradient stats |(m1, m2)| = {stats.gradient_norm:.6g} exceed the "
            f"feasible magnitude {max_gradient_magnitude(stats.q):.6g} at q = {stats.q}"
        )
    norm = stats.gradient_norm
    scale = max_gradient_magnitude(stats.q) / norm if norm > 0.0 else 0.0
    return replace(stats, m1=stats.m1 * scale, m2=stats.m2 * scale), True


# ---------------------------------------------------------------------------
# degenerate (m2 = 0) interval system
# ---------------------------------------------------------------------------


def _upper_endpoint(q: float, w2: float) -> float:
    mass = q + float(std_normal_cdf(w2))
    mass = min(mass, np.nextafter(1.0, 0.0))
    return float(np.clip(std_normal_quantile(mass), -CLAMP, CLAMP))


def _solve_interval(q: float, m1: float) -> tuple[float, float]:
    """Endpoints [w2, w1] of the m2 = 0 worst-case interval.

    Parametrizing w1 = Phi^-1(q + Phi(w2)) satisfies the mass equation
    identically; the remaining equation phi(w2) - phi(w1) = m1 is strictly
    increasing in w2, so bisection finds the unique root.
    """
    big_m = max_gradient_magnitude(q)
    if m1 <= -big_m * (1.0 - 1e-12):
        return -CLAMP, _upper_endpoint(q, -CLAMP)
    if m1 >= big_m * (1.0 - 1e-12):
        return float(std_normal_quantile(1.0 - q)), CLAMP

    def gap(w2: float) -> float:
        w1 = _upper_endpoint(q, w2)
        diff = float(std_normal_pdf(w2) - std_normal_pdf(w1))
        return _cor3_sign * diff - m1

    w2_max = float(std_normal_quantile(1.0 - q))
    w2 = bisect_root(gap, -CLAMP, w2_max - 1e-12, tol=1e-13)
    return w2, _upper_endpoint(q, w2)


def _interval_probability(w2: float, w1: float, r: float) -> float:
    return float(std_normal_cdf(w1 - r) - std_normal_cdf(w2 - r))


# ---------------------------------------------------------------------------
# smooth dual system
# ---------------------------------------------------------------------------


def _c_values(x: np.ndarray, c0: float, c1: float, u: float, r: float) -> np.ndarray:
    """c(x) = c0 + c1 x - e^{u + r x}, clamped for downstream Phi/phi."""
    t = np.minimum(u + r * x, 700.0)
    return np.clip(c0 + c1 * x - np.exp(t), -1e300, CLAMP)


def _c_slope(x: float, c1: float, u: float, r: float) -> float:
    t = min(u + r * x, 700.0)
    return c1 - r * math.exp(t)


def _c_roots(c0: float, c1: float, u: float, r: float,
             lo: float, hi: float) -> list[tuple[float, float]]:
    """Zero crossings of c on [lo, hi] with their local |slope|.

    c' = c1 - r e^{u + r x} has at most one zero, so c is piecewise
    monotone with at most two crossings; each monotone segment is bisected.
    Scalar math throughout: this sits on the innermost solver path.
    """

    def val(x: float) -> float:
        t = u + r * x
        return c0 + c1 * x - (math.exp(t) if t < 700.0 else 1e304)

    breaks = [lo, hi]
    if c1 > 0.0:
        x_crit = (math.log(c1 / r) - u) / r
        if lo < x_crit < hi:
            breaks = [lo, x_crit, hi]
    roots: list[tuple[float, float]] = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        fa, fb = val(a), val(b)
        if fa == 0.0:
            roots.append((a, abs(_c_slope(a, c1, u, r))))
            continue
        if (fa > 0.0) == (fb > 0.0):
            continue
        x_lo, x_hi = a, b
        positive_lo = fa > 0.0
        for _ in range(50):
            mid = 0.5 * (x_lo + x_hi)
            fm = val(mid)
            if fm == 0.0:
                x_lo = x_hi = mid
                break
            if (fm > 0.0) == positive_lo:
                x_lo = mid
            else:
                x_hi = mid
        root = 0.5 * (x_lo + x_hi)
        roots.append((root, abs(_c_slope(root, c1, u, r))))
    return roots


def _graded_edges(lo: float, hi: float,
                  roots: list[tuple[float, float]]) -> np.ndarray:
    """Uniform panels plus geometric refinement around each sigmoid transition."""
    edges = [np.linspace(lo, hi, _BASE_PANELS + 1)]
    width = (hi - lo) / _BASE_PANELS
    for root, slope in roots:
        delta = max(1.0 / max(slope, 1.0), 1e-12)
        if delta >= width:
            continue
        steps = delta * 2.0 ** np.arange(0, int(math.ceil(math.log2(2.0 * width / delta))) + 1)
        cluster = np.concatenate(([root], root + steps, root - steps))
        edges.append(cluster)
    merged = np.unique(np.clip(np.concatenate(edges), lo, hi))
    keep = np.concatenate(([True], np.diff(merged) > 1e-14 * max(1.0, abs(hi), abs(lo))))
    return merged[keep]


def _dual_grid(c0: float, c1: float, u: float, r: float,
               lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    roots = _c_roots(c0, c1, u, r, lo, hi)
    return panel_nodes(_graded_edges(lo, hi, roots))


def _dual_residual(theta: np.ndarray, stats: FirstOrderStats, r: float,
                   full: bool) -> np.ndarray:
    if full:
        c0, c1, u = float(theta[0]), float(theta[1]), float(theta[2])
    else:
        # reduced: c0 = e^v keeps the (provably positive) offset positive
        c0, c1, u = math.exp(min(float(theta[0]), 700.0)), 0.0, float(theta[1])
    x, w = _dual_grid(c0, c1, u, r, -_DOMAIN_HALF_WIDTH, _DOMAIN_HALF_WIDTH)
    c = _c_values(x, c0, c1, u, r)
    base = w * std_normal_pdf(x)
    phi_c = std_normal_pdf(c)
    cdf_c = std_normal_cdf(c)
    eq_q = float(base @ cdf_c) - stats.q
    eq_m2 = float(base @ phi_c) - stats.m2
    if not full:
        return np.array([eq_q, eq_m2])
    eq_m1 = float((base * x) @ cdf_c) - stats.m1
    return np.array([eq_q, eq_m2, eq_m1])


def _probability_from_coeffs(c0: float, c1: float, u: float, r: float) -> float:
    lo, hi = r - _DOMAIN_HALF_WIDTH, r + _DOMAIN_HALF_WIDTH
    x, w = _dual_grid(c0, c1, u, r, lo, hi)
    c = _c_values(x, c0, c1, u, r)
    p = float((w * std_normal_pdf(x - r)) @ std_normal_cdf(c))
    return min(max(p, 0.0), 1.0)


def _reduced_init(stats: FirstOrderStats, r: float) -> tuple[float, float]:
    """Closed-form start: linearize c around its crossing and match (q, m2)."""
    w0 = float(std_normal_quantile(stats.q))
    big_m = max_gradient_magnitude(stats.q)
    ratio = min(stats.m2 / big_m, 1.0 - 1e-9)
    beta = math.sqrt(max(1.0 - ratio * ratio, 1e-10))
    gamma = beta * big_m / max(stats.m2, 1e-300)
    x_star = w0 / beta
    c0 = gamma / r
    return math.log(c0), math.log(c0) - r * x_star


def _tilted_init(stats: FirstOrderStats, r: float) -> tuple[float, float, float]:
    """Start near the tilted-halfspace limit (c2 -> 0-) that matches (q, m1, m2)."""
    big_m = max_gradient_magnitude(stats.q)
    c1 = stats.m1 / max(stats.m2, 0.05 * big_m)
    scale = math.sqrt(1.0 + c1 * c1)
    c0 = float(std_normal_quantile(stats.q)) * scale
    anchor = min(8.0, abs(c0 / c1) + 2.0) if c1 != 0.0 else 4.0
    u = math.log(0.05 * (1.0 + abs(c0))) - r * anchor
    return c0, c1, u


def _log1mexp(t: float) -> float:
    """log(1 - e^{-t}) for t > 0."""
    if t > 36.0:
        return 0.0
    return math.log1p(-math.exp(-t)) if t > 1e-30 else -700.0


def _soft_interval_init(stats: FirstOrderStats, r: float
                        ) -> Optional[tuple[float, float, float]]:
    """Start from the m2 = 0 interval [w2, w1], softening its edges to m2.

    c crosses zero at both endpoints by construction; the scale u is set so
    the edge-width model phi(w2)/|c'(w2)| + phi(w1)/|c'(w1)| equals m2, which
    is exact in the sharp-edge limit.  All intermediate quantities are kept
    in log space since e^{r w1} overflows for wide intervals.
    """
    try:
        w2, w1 = _solve_interval(stats.q, stats.m1)
    except (DomainError, NoConvergenceError):
        return None
    w2 = max(w2, -CLAMP)
    w1 = min(w1, CLAMP)
    if w1 - w2 < 1e-9:
        return None
    # chord slope of e^{rx} over [w2, w1]: K = (e^{r w1} - e^{r w2}) / (w1 - w2)
    ln_k = r * w1 + _log1mexp(r * (w1 - w2)) - math.log(w1 - w2)
    log_r = math.log(r)
    # edge slopes are e^u (K - r e^{r w2}) > 0 and e^u (K - r e^{r w1}) < 0
    ln_s2 = ln_k + _log1mexp(ln_k - (log_r + r * w2))
    ln_s1 = log_r + r * w1 + _log1mexp((log_r + r * w1) - ln_k)
    ln_phi_w2 = -0.5 * w2 * w2 - 0.5 * math.log(2.0 * math.pi)
    ln_phi_w1 = -0.5 * w1 * w1 - 0.5 * math.log(2.0 * math.pi)
    ln_c = float(np.logaddexp(ln_phi_w2 - ln_s2, ln_phi_w1 - ln_s1))
    u = ln_c - math.log(stats.m2)
    c1 = math.exp(min(u + ln_k, 690.0))
    c0 = math.exp(min(u + r * w2, 690.0)) - c1 * w2
    if not all(map(math.isfinite, (c0, c1, u))):
        return None
    return c0, c1, u


def _solve_reduced(stats: FirstOrderStats, r: float, settings: SolverSettings,
                   warm: Optional[tuple[float, float]] = None) -> tuple[float, float]:
    inits = []
    if warm is not None:
        inits.append(warm)
    inits.append(_reduced_init(stats, r))
    last: Optional[NoConvergenceError] = None
    for init in inits:
        try:
            sol = solve_system(
                lambda th: _dual_residual(th, stats, r, full=False), init, settings
            )
            return math.exp(min(float(sol[0]), 700.0)), float(sol[1])
        except NoConvergenceError as err:
            last = err
    raise last  # type: ignore[misc]


def solve_dual(stats: FirstOrderStats, r: float,
               settings: SolverSettings = SolverSettings(),
               warm: Optional[DualSolution] = None,
               force_variant: Optional[DualVariant] = None) -> DualSolution:
    """Worst-case dual coefficients at scaled travel distance r > 0.

    Solves the full three-equation system; both slope signs are accepted,
    since either sign yields a worst-case set matching the constraints (the
    negative-slope branch is exactly the near-halfspace family required for
    the linear-classifier limit).  When the full solve fails, or when
    ``force_variant`` requests it, the two-equation system is solved
    instead, which drops the directional constraint and is always
    conservative.  m2 below the degeneracy floor routes to the exact
    interval geometry.
    """
    if not (r > 0.0 and math.isfinite(r)):
        raise DomainError(f"travel distance must be positive and finite, got {r}")
    if not (0.5 < stats.q < 1.0):
        raise DomainError(f"solve_dual requires q in (0.5, 1), got {stats.q}")
    stats, _ = ensure_feasible(stats, clamp=False)
    m2_cap = max_gradient_magnitude(stats.q) * (1.0 - _M2_PERP_MARGIN)
    if stats.m2 > m2_cap:
        stats = replace(stats, m2=m2_cap)

    if stats.m2 < M2_DEGENERATE or force_variant is DualVariant.INTERVAL:
        w2, w1 = _solve_interval(stats.q, stats.m1)
        return DualSolution(None, None, None, DualVariant.INTERVAL, r,
                            interval=(w2, w1))

    warm_full: Optional[tuple[float, float, float]] = None
    warm_reduced: Optional[tuple[float, float]] = None
    if warm is not None and warm.variant is DualVariant.FULL:
        warm_full = (warm.c0, warm.c1, math.log(-warm.c2))
    if warm is not None and warm.variant is DualVariant.REDUCED_NO_SLOPE:
        if warm.c0 > 0.0:
            warm_reduced = (math.log(warm.c0), math.log(-warm.c2))

    def reduced_solution() -> DualSolution:
        c0_r, u_r = _solve_reduced(stats, r, settings, warm_reduced)
        return DualSolution(c0_r, 0.0, -math.exp(max(u_r, -745.0)),
                            DualVariant.REDUCED_NO_SLOPE, r)

    if force_variant is DualVariant.REDUCED_NO_SLOPE:
        return reduced_solution()

    def try_full(init: tuple[float, float, float]) -> Optional[np.ndarray]:
        try:
            return solve_system(
                lambda th: _dual_residual(th, stats, r, full=True), init, settings
            )
        except NoConvergenceError:
            return None

    full_sol: Optional[np.ndarray] = None
    if warm_full is not None:
        full_sol = try_full(warm_full)
    if full_sol is None:
        soft = _soft_interval_init(stats, r)
        if soft is not None:
            full_sol = try_full(soft)
    if full_sol is None:
        try:
            red = _solve_reduced(stats, r, settings, warm_reduced)
            full_sol = try_full((red[0], 0.0, red[1]))
        except NoConvergenceError:
            pass
    if full_sol is None:
        full_sol = try_full(_tilted_init(stats, r))
    if full_sol is None:
        # conservative fallback: the two-equation bound is valid regardless
        return reduced_solution()

    c0, c1, u = float(full_sol[0]), float(full_sol[1]), float(full_sol[2])
    return DualSolution(c0, c1, -math.exp(max(u, -745.0)), DualVariant.FULL, r)


def probability_from_dual(dual: DualSolution) -> float:
    """Worst-case smoothed probability at the dual's travel distance."""
    r = dual.travel_scale
    if dual.variant is DualVariant.INTERVAL:
        w2, w1 = dual.interval
        return _interval_probability(w2, w1, r)
    u = math.log(-dual.c2)
    return _probability_from_coeffs(dual.c0, dual.c1, u, r)


def lower_bound_probability(stats: FirstOrderStats, r: float,
                            settings: SolverSettings = SolverSettings(),
                            warm: Optional[DualSolution] = None) -> float:
    """Worst-case smoothed probability at scaled distance r (r = 0 gives q)."""
    if r < 0.0 or not math.isfinite(r):
        raise DomainError(f"travel distance must be nonnegative, got {r}")
    if r == 0.0:
        return stats.q
    if not (0.5 < stats.q < 1.0):
        raise DomainError(f"first-order bound requires q in (0.5, 1), got {stats.q}")
    stats, _ = ensure_feasible(stats, clamp=False)
    if stats.m1 == 0.0 and stats.m2 == 0.0:
        # no usable gradient information: zeroth-order worst case (halfspace)
        return float(std_normal_cdf(std_normal_quantile(stats.q) - r))
    if stats.m2 < M2_DEGENERATE:
        w2, w1 = _solve_interval(stats.q, stats.m1)
        return _interval_probability(w2, w1, r)
    if r < _R_SMOOTH_FLOOR:
        # exponential basis degenerates as r -> 0; interpolate from p(0) = q
        p_floor = lower_bound_probability(stats, _R_SMOOTH_FLOOR, settings, warm)
        return stats.q + (p_floor - stats.q) * (r / _R_SMOOTH_FLOOR)
    return probability_from_dual(solve_dual(stats, r, settings, warm))


def directional_radius(stats: FirstOrderStats, cfg: SmoothingConfig,
                       tol: float = 1e-4,
                       r_cap: float = R_CAP_DEFAULT,
                       settings: SolverSettings = SolverSettings()) -> RadiusResult:
    """Largest certified travel distance along the encoded direction.

    Returns sigma * r* with p(r*) = 0.5 (tol is in input units), 0 with the
    abstain flag when q <= 0.5, and sigma * r_cap with the capped flag when
    the worst-case probability never falls to 0.5 before the cap.  The
    result is floored at the zeroth-order radius, which the first-order
    bound provably dominates.
    """
    q = stats.q
    if q <= 0.5:
        return RadiusResult(0.0, abstained=True)
    zeroth = zeroth_radius_l2(q, cfg)
    if stats.m1 == 0.0 and stats.m2 == 0.0:
        return RadiusResult(zeroth)
    stats, _ = ensure_feasible(stats, clamp=False)
    if stats.m2 >= max_gradient_magnitude(q) * (1.0 - _M2_SINGLETON):
        # exact perpendicular-boundary stats: the worst case is the
        # perpendicular halfspace itself, unbounded along the travel ray
        return RadiusResult(cfg.sigma * r_cap, capped=True)
    scaled_tol = max(tol / cfg.sigma, 1e-12)

    if stats.m2 < M2_DEGENERATE:
        w2, w1 = _solve_interval(q, stats.m1)
        if _interval_probability(w2, w1, r_cap) >= 0.5:
            return RadiusResult(cfg.sigma * r_cap, capped=True)
        r_star = bisect_root(
            lambda rr: _interval_probability(w2, w1, rr) - 0.5,
            0.0, r_cap, tol=min(scaled_tol, 1e-9),
        )
        return RadiusResult(max(cfg.sigma * r_star, zeroth))

    if q <= 0.5 + _Q_SMOOTH_FLOOR:
        return RadiusResult(zeroth)

    state = {"warm": None, "fallback": False}

    def gap(rr: float) -> float:
        if rr == 0.0:
            return q - 0.5
        if rr < _R_SMOOTH_FLOOR:
            return lower_bound_probability(stats, rr, settings) - 0.5
        dual = solve_dual(stats, rr, settings, warm=state["warm"])
        state["warm"] = dual
        if dual.variant is not DualVariant.FULL:
            state["fallback"] = True
        return probability_from_dual(dual) - 0.5

    if gap(r_cap) >= 0.0:
        return RadiusResult(cfg.sigma * r_cap, capped=True,
                            fallback_used=state["fallback"])
    r_star = bisect_root(gap, 0.0, r_cap, tol=scaled_tol)
    return RadiusResult(max(cfg.sigma * r_star, zeroth),
                        fallback_used=state["fallback"])


# ---------------------------------------------------------------------------
# threat-model entry points
# ---------------------------------------------------------------------------


def radius_l2_first(q: float, grad_l2_upper: float, cfg: SmoothingConfig,
                    tol: float = 1e-6) -> RadiusResult:
    """First-order l2 radius from an upper bound on ||y1||_2.

    The worst direction opposes the gradient, so the perpendicular component
    vanishes and the interval system applies with m1 = -sigma * bound.  The
    bound is capped at the feasibility maximum phi(Phi^-1(q)), itself a
    valid gradient-magnitude upper bound; at the cap the interval becomes
    the halfspace and the radius collapses to the zeroth-order value.
    """
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"q must lie in [0, 1], got {q}")
    if grad_l2_upper < 0.0:
        raise DomainError(f"gradient bound must be nonnegative, got {grad_l2_upper}")
    if q <= 0.5:
        return RadiusResult(0.0, abstained=True)
    if q >= 1.0:
        return RadiusResult(zeroth_radius_l2(q, cfg))
    m = min(cfg.sigma * grad_l2_upper, max_gradient_magnitude(q))
    return directional_radius(FirstOrderStats(q, -m, 0.0), cfg, tol)


def _perp_component(lower_sq: float, parallel_sq: float) -> float:
    return math.sqrt(max(0.0, lower_sq - parallel_sq))


def _threat_stats(q: float, m1: float, m2: float,
                  clamp_infeasible: bool) -> tuple[FirstOrderStats, bool]:
    """Repair threat-path stats (m1 <= 0) into the feasibility disk.

    Two moves are always valid because they only weaken one-sided bounds:
    flooring m1 at -sqrt(M^2 - m2^2) (the directional derivative of any
    classifier with value q and perpendicular norm >= m2 cannot be steeper),
    and never strengthening m2.  m2 > M itself cannot happen under the
    confidence event (m2 lower-bounds a quantity capped by M), so that case
    keeps the raise-by-default / opt-in clamp policy.
    """
    big_m = max_gradient_magnitude(q) * (1.0 - 1e-12)
    clamped = False
    if m2 > big_m:
        stats, clamped = ensure_feasible(FirstOrderStats(q, m1, m2),
                                         clamp_infeasible)
        m1, m2 = stats.m1, stats.m2
    floor = -_perp_component(big_m * big_m, m2 * m2)
    if m1 < floor:
        m1 = floor
        clamped = True
    return FirstOrderStats(q, m1, m2), clamped


def radius_l1_first(q: float, bounds: GradientNormBounds, cfg: SmoothingConfig,
                    tol: float = 1e-4, clamp_infeasible: bool = False) -> RadiusResult:
    """First-order l1 radius (worst basis direction; m1 from the linf bound)."""
    if q <= 0.5:
        return RadiusResult(0.0, abstained=True)
    sigma = cfg.sigma
    m1 = -sigma * bounds.linf_upper
    m2 = sigma * _perp_component(bounds.l2_lower ** 2, bounds.linf_upper ** 2)
    stats, clamped = _threat_stats(q, m1, m2, clamp_infeasible)
    res = directional_radius(stats, cfg, tol)
    return res._replace(clamped=clamped)


def radius_linf_first(q: float, bounds: GradientNormBounds, cfg: SmoothingConfig,
                      tol: float = 1e-4,
                      mode: LinfMode = LinfMode.VIA_L2_SCALING,
                      clamp_infeasible: bool = False) -> RadiusResult:
    """First-order linf radius.

    VIA_L2_SCALING divides the l2 radius by sqrt(d).  VIA_L1_BOUND travels
    along the worst diagonal using the l1-norm gradient bound; the travel
    distance along the (l2-unit) diagonal converts to an linf radius by the
    same sqrt(d) factor.
    """
    if q <= 0.5:
        return RadiusResult(0.0, abstained=True)
    root_d = math.sqrt(cfg.dim)
    if mode is LinfMode.VIA_L2_SCALING:
        res = radius_l2_first(q, bounds.l2_upper, cfg, tol)
        return res._replace(radius=res.radius / root_d)
    if bounds.l1_upper is None:
        raise DomainError("linf via the l1 bound requires l1_upper")
    sigma = cfg.sigma
    m1 = -(sigma / root_d) * bounds.l1_upper
    m2 = (sigma / root_d) * _perp_component(
        cfg.dim * bounds.l2_lower ** 2, bounds.l1_upper ** 2
    )
    stats, clamped = _threat_stats(q, m1, m2, clamp_infeasible)
    res = directional_radius(stats, cfg, tol)
    return res._replace(radius=res.radius / root_d, clamped=clamped)


def radius_subspace(q: float, bounds: GradientNormBounds, p, subspace_dim: int,
                    cfg: SmoothingConfig, tol: float = 1e-4,
                    clamp_infeasible: bool = False) -> RadiusResult:
    """First-order lp radius restricted to a subspace of dimension subspace_dim.

    ``bounds.subspace_dual_upper`` must bound the dual norm ||P_S y1||_{p'};
    for p = inf it is the projected l1 norm and the diagonal travel is
    rescaled by sqrt(subspace_dim) exactly as in the full-space case.
    """
    if bounds.subspace_dual_upper is None:
        raise DomainError("subspace radius requires subspace_dual_upper")
    if not (1 <= subspace_dim <= cfg.dim):
        raise DomainError(
            f"subspace_dim must lie in [1, {cfg.dim}], got {subspace_dim}"
        )
    if p not in (1, 2, math.inf):
        raise DomainError(f"p must be 1, 2 or inf, got {p}")
    if q <= 0.5:
        return RadiusResult(0.0, abstained=True)
    sigma = cfg.sigma
    dual = bounds.subspace_dual_upper
    if p == math.inf:
        scale = 1.0 / math.sqrt(subspace_dim)
        m1 = -sigma * scale * dual
        m2 = sigma * scale * _perp_component(
            subspace_dim * bounds.l2_lower ** 2, dual ** 2
        )
    else:
        scale = 1.0
        m1 = -sigma * dual
        m2 = sigma * _perp_component(bounds.l2_lower ** 2, dual ** 2)
    stats, clamped = _threat_stats(q, m1, m2, clamp_infeasible)
    res = directional_radius(stats, cfg, tol)
    return res._replace(radius=res.radius * scale, clamped=clamped)
