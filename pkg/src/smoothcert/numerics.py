"""Special functions, Gaussian-weighted quadrature and small nonlinear solvers.

Everything in here is pure: no module state is mutated after import, so all
functions are safe to call from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special as _sp

__all__ = [
    "DomainError",
    "NumericalError",
    "NoConvergenceError",
    "BracketError",
    "QuadratureSpec",
    "SolverSettings",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "gauss_weighted_integral",
    "panel_nodes",
    "solve_system",
    "bisect_root",
    "CLAMP",
]

# Arguments of Phi / exp(-c^2/2) are clamped to +-CLAMP before evaluation.
# Phi saturates to 0/1 far earlier, so results are unchanged to machine
# precision while exp() overflow from steep arguments is impossible.
CLAMP = 38.0

GAUSS_LEGENDRE_ORDER = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_LEGENDRE_ORDER)

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class NumericalError(ArithmeticError):
    """A computation produced or encountered a non-finite value."""


class NoConvergenceError(NumericalError):
    """Iterative solver failed to reach the requested residual tolerance."""

    def __init__(self, message: str, residual_norm: float):
        super().__init__(f"{message} (last residual max-norm {residual_norm:.3e})")
        self.residual_norm = residual_norm


class BracketError(DomainError):
    """Root bracketing endpoints do not straddle a sign change."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Truncated integration domain and accuracy target.

    The domain is expressed relative to the weight's center; [-12, 12] leaves
    Gaussian tail mass below 1e-31, far under every tolerance used here.
    """

    lower: float = -12.0
    upper: float = 12.0
    panel_count: int = 64
    abs_tolerance: float = 1e-10

    def __post_init__(self) -> None:
        if not (self.lower < self.upper):
            raise DomainError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if self.panel_count < 1:
            raise DomainError("panel_count must be a positive integer")
        if not (0.0 < self.abs_tolerance <= 1e-6):
            raise DomainError("abs_tolerance must lie in (0, 1e-6]")


@dataclass(frozen=True)
class SolverSettings:
    """Damped-Newton configuration for the small square systems solved here."""

    residual_tolerance: float = 1e-10
    max_iterations: int = 80
    jacobian_step: float = 1e-6
    damping_floor: float = 1.0 / 1024.0

    def __post_init__(self) -> None:
        if not (0.0 < self.residual_tolerance <= 1e-8):
            raise DomainError("residual_tolerance must lie in (0, 1e-8]")
        if self.max_iterations < 50:
            raise DomainError("max_iterations must be at least 50")
        if self.jacobian_step <= 0.0:
            raise DomainError("jacobian_step must be positive")
        if not (0.0 < self.damping_floor < 1.0):
            raise DomainError("damping_floor must lie in (0, 1)")


def std_normal_cdf(x):
    """Standard normal CDF, vectorized; saturates cleanly for large |x|."""
    return _sp.ndtr(np.clip(x, -CLAMP, CLAMP))


def std_normal_pdf(x):
    """Standard normal density, vectorized."""
    x = np.clip(x, -CLAMP, CLAMP)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def std_normal_quantile(p):
    """Inverse standard normal CDF on (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise DomainError(f"quantile argument must lie in (0, 1), got {p!r}")
    return _sp.ndtri(p)


def panel_nodes(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights for the cells of a sorted edge array.

    Returns flat arrays of len(edges - 1) * 16 nodes/weights; exact for
    polynomials of degree 31 on each cell.
    """
    edges = np.asarray(edges, dtype=float)
    mids = 0.5 * (edges[1:] + edges[:-1])
    halves = 0.5 * (edges[1:] - edges[:-1])
    nodes = mids[:, None] + halves[:, None] * _GL_NODES[None, :]
    weights = halves[:, None] * _GL_WEIGHTS[None, :]
    return nodes.ravel(), weights.ravel()


def _weighted_sum(integrand, center: float, edges: np.ndarray) -> float:
    x, w = panel_nodes(edges)
    values = np.asarray(integrand(x), dtype=float)
    if values.shape != x.shape:
        values = np.broadcast_to(values, x.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericalError(
            f"integrand returned a non-finite value at x={x[bad][0]!r}"
        )
    return float(np.sum(w * std_normal_pdf(x - center) * values))


def gauss_weighted_integral(
    integrand: Callable[[np.ndarray], np.ndarray],
    center: float,
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Integrate phi(x - center) * integrand(x) over the truncated domain.

    Composite fixed-order Gauss-Legendre panels, starting from
    ``spec.panel_count`` and doubling until two successive refinements agree
    to within ``spec.abs_tolerance``. The integrand must accept an ndarray.
    """
    lo = center + spec.lower
    hi = center + spec.upper
    panels = spec.panel_count
    prev = _weighted_sum(integrand, center, np.linspace(lo, hi, panels + 1))
    max_panels = max(8192, panels)
    while panels < max_panels:
        panels *= 2
        cur = _weighted_sum(integrand, center, np.linspace(lo, hi, panels + 1))
        if abs(cur - prev) <= 0.5 * spec.abs_tolerance:
            return cur
        prev = cur
    raise NumericalError(
        f"quadrature did not stabilize to {spec.abs_tolerance:g} "
        f"within {max_panels} panels"
    )


def _fd_jacobian(residual, x: np.ndarray, f0: np.ndarray, rel_step: float) -> np.ndarray:
    n = x.size
    jac = np.empty((f0.size, n), dtype=float)
    for j in range(n):
        h = rel_step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.asarray(residual(xp), dtype=float) -
                     np.asarray(residual(xm), dtype=float)) / (2.0 * h)
    return jac


def solve_system(
    residual: Callable[[np.ndarray], Sequence[float]],
    initial: Sequence[float],
    settings: SolverSettings = SolverSettings(),
) -> np.ndarray:
    """Solve residual(x) = 0 by damped Newton with a finite-difference Jacobian.

    The step is halved until the residual max-norm decreases (floor
    ``damping_floor``); central differences with relative step
    ``jacobian_step`` supply the Jacobian. Scalar problems may pass floats.
    """
    x = np.atleast_1d(np.asarray(initial, dtype=float)).copy()
    f = np.atleast_1d(np.asarray(residual(x), dtype=float))
    if f.size != x.size:
        raise DomainError(f"residual dimension {f.size} != unknown dimension {x.size}")
    norm = float(np.max(np.abs(f)))
    merit = float(np.linalg.norm(f))
    stagnant = 0
    for _ in range(settings.max_iterations):
        if not np.isfinite(norm):
            raise NoConvergenceError("residual became non-finite", norm)
        if norm <= settings.residual_tolerance:
            return x
        jac = _fd_jacobian(lambda v: np.atleast_1d(residual(v)), x, f, settings.jacobian_step)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, -f, rcond=None)
        if not np.all(np.isfinite(step)):
            raise NoConvergenceError("Newton step became non-finite", norm)
        alpha = 1.0
        improved = False
        while alpha >= settings.damping_floor:
            trial = x + alpha * step
            f_trial = np.atleast_1d(np.asarray(residual(trial), dtype=float))
            trial_merit = float(np.linalg.norm(f_trial))
            if np.isfinite(trial_merit) and trial_merit < merit:
                x, f = trial, f_trial
                norm = float(np.max(np.abs(f_trial)))
                merit = trial_merit
                improved = True
                break
            alpha *= 0.5
        if not improved:
            stagnant += 1
            if stagnant >= 3:
                raise NoConvergenceError("damped Newton stalled", norm)
            # accept the floored step; a fresh Jacobian often recovers
            x = x + settings.damping_floor * step
            f = np.atleast_1d(np.asarray(residual(x), dtype=float))
            norm = float(np.max(np.abs(f)))
            merit = float(np.linalg.norm(f))
        else:
            stagnant = 0
    if norm <= settings.residual_tolerance:
        return x
    raise NoConvergenceError("iteration cap reached", norm)


def bisect_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
) -> float:
    """Bisection root of a scalar function on a sign-changing bracket.

    Runs a fixed iteration count derived from tol, which keeps results
    deterministic and monotone under pointwise-ordered objective families.
    """
    if not (lo < hi):
        raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    f_lo = f(lo)
    f_hi = f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"no sign change on [{lo}, {hi}]: f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}"
        )
    steps = int(np.ceil(np.log2(max((hi - lo) / tol, 1.0)))) + 1
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)
