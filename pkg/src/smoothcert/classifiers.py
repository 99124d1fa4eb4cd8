"""Black-box classifiers, Gaussian label sampling, and validation oracles.

The synthetic classifiers are deterministic functions of their parameters;
the binary linear classifier doubles as an exact oracle, since both its
smoothed statistics and its certified radii have closed forms (the
certified region of a smoothed linear classifier is the halfspace itself,
so every lp radius is margin over the dual norm of the weights).

Sampling uses a counter-based generator keyed by (seed, stream_id): any
worker that owns a stream reproduces the identical draw sequence, and
batches from disjoint streams merge associatively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .certify import DualSolution, DualVariant, SmoothingConfig
from .estimate import GradientSampleBatch
from .numerics import DomainError, std_normal_cdf, std_normal_pdf

__all__ = [
    "RngSpec",
    "BlackBoxClassifier",
    "LinearClassifierSpec",
    "LinearClassifier",
    "SlabClassifier",
    "UnionOfHalfspacesClassifier",
    "SphereClassifier",
    "make_synthetic",
    "ClassConditionalSums",
    "sample_class_sums",
    "batch_for_class",
    "sample_statistics",
    "analytic_linear_stats",
    "analytic_linear_radius",
    "mc_worst_case_probability",
]

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSpec:
    """Counter-based RNG key; same (seed, stream_id) -> identical draws."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = [self.seed & _U64, self.stream_id & _U64]
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, stream_id: int) -> "RngSpec":
        return RngSpec(self.seed, stream_id)


class BlackBoxClassifier:
    """Hard-label classifier: only class labels are observable."""

    num_classes: int = 2

    def classify_batch(self, points: np.ndarray) -> np.ndarray:
        """Labels for an (n, d) array of points."""
        raise NotImplementedError

    def classify(self, point) -> int:
        return int(self.classify_batch(np.atleast_2d(np.asarray(point, dtype=float)))[0])


@dataclass(frozen=True)
class LinearClassifierSpec:
    """Binary linear classifier f(x) = 1 iff w.x + b <= 0."""

    w: np.ndarray
    b: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        if self.w.ndim != 1 or float(np.linalg.norm(self.w)) == 0.0:
            raise DomainError("w must be a 1-D vector with positive norm")


class LinearClassifier(BlackBoxClassifier):
    def __init__(self, spec: LinearClassifierSpec):
        self.spec = spec

    def classify_batch(self, points: np.ndarray) -> np.ndarray:
        margin = points @ self.spec.w + self.spec.b
        return (margin <= 0.0).astype(np.int64)


class SlabClassifier(BlackBoxClassifier):
    """Class 1 inside lo <= x[axis] <= hi, class 0 outside."""

    def __init__(self, axis: int, lo: float, hi: float):
        if not (lo < hi):
            raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
        if axis < 0:
            raise DomainError("axis must be nonnegative")
        self.axis = axis
        self.lo = lo
        self.hi = hi

    def classify_batch(self, points: np.ndarray) -> np.ndarray:
        coord = points[:, self.axis]
        return ((coord >= self.lo) & (coord <= self.hi)).astype(np.int64)


class UnionOfHalfspacesClassifier(BlackBoxClassifier):
    """Class 1 iff any w_i . x + b_i <= 0."""

    def __init__(self, ws: Sequence[Sequence[float]], bs: Sequence[float]):
        self.ws = np.asarray(ws, dtype=float)
        self.bs = np.asarray(bs, dtype=float)
        if self.ws.ndim != 2 or self.ws.shape[0] != self.bs.size or self.ws.shape[0] < 1:
            raise DomainError("need matching nonempty lists of weights and offsets")

    def classify_batch(self, points: np.ndarray) -> np.ndarray:
        margins = points @ self.ws.T + self.bs
        return np.any(margins <= 0.0, axis=1).astype(np.int64)


class SphereClassifier(BlackBoxClassifier):
    """Class 1 strictly inside the sphere; radius 0 is the constant class 0."""

    def __init__(self, center: Sequence[float], radius: float):
        if radius < 0.0:
            raise DomainError(f"radius must be nonnegative, got {radius}")
        self.center = np.asarray(center, dtype=float)
        self.radius = radius

    def classify_batch(self, points: np.ndarray) -> np.ndarray:
        dist = np.linalg.norm(points - self.center, axis=1)
        return (dist < self.radius).astype(np.int64)


def make_synthetic(kind: str, params: dict) -> BlackBoxClassifier:
    """Build a synthetic classifier from a declarative spec."""
    try:
        if kind == "linear":
            return LinearClassifier(LinearClassifierSpec(
                w=np.asarray(params["w"], dtype=float), b=float(params.get("b", 0.0))
            ))
        if kind == "slab_interval":
            return SlabClassifier(int(params["axis"]), float(params["lo"]),
                                  float(params["hi"]))
        if kind == "union_of_halfspaces":
            return UnionOfHalfspacesClassifier(params["ws"], params["bs"])
        if kind == "sphere_interior":
            return SphereClassifier(params["center"], float(params["radius"]))
    except KeyError as missing:
        raise DomainError(f"missing parameter {missing} for classifier kind {kind!r}")
    raise DomainError(f"unknown classifier kind {kind!r}")


@dataclass
class ClassConditionalSums:
    """Per-class noise sums from one sampling pass, split into two halves.

    Enough to reconstruct the gradient-statistic batch for any class c:
    z = w (1[label = c] - 1/2), so sum z = class_w_sum[c] - total_w_sum / 2.
    """

    counts: np.ndarray       # (2, num_classes)
    class_w_sum: np.ndarray  # (2, num_classes, d)
    total_w_sum: np.ndarray  # (2, d)
    n1: int
    n2: int
    sigma: float

    @property
    def total_counts(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def majority_class(self) -> int:
        # ties break toward the smaller class index
        return int(np.argmax(self.total_counts))


def sample_class_sums(f: BlackBoxClassifier, x, cfg: SmoothingConfig, n: int,
                      rng: RngSpec, chunk: int = 1 << 16,
                      dtype=np.float64) -> ClassConditionalSums:
    """One pass of n Gaussian perturbations, accumulated per class and split."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != cfg.dim:
        raise DomainError(f"point must be a vector of length {cfg.dim}")
    if n < 2:
        raise DomainError(f"need at least 2 samples, got {n}")
    n1 = (n + 1) // 2
    num_classes = f.num_classes
    d = cfg.dim
    counts = np.zeros((2, num_classes), dtype=np.int64)
    class_w_sum = np.zeros((2, num_classes, d), dtype=float)
    total_w_sum = np.zeros((2, d), dtype=float)
    gen = rng.generator()
    drawn = 0
    while drawn < n:
        m = min(chunk, n - drawn)
        w = gen.standard_normal((m, d), dtype=dtype)
        if cfg.sigma != 1.0:
            w = w * dtype(cfg.sigma) if dtype == np.float32 else w * cfg.sigma
        labels = f.classify_batch(x + w)
        # a chunk may straddle the split boundary
        boundary = min(max(n1 - drawn, 0), m)
        for split, sl in ((0, slice(0, boundary)), (1, slice(boundary, m))):
            if sl.start == sl.stop:
                continue
            w_part, lab_part = w[sl], labels[sl]
            total_w_sum[split] += w_part.sum(axis=0, dtype=np.float64)
            for c in range(num_classes):
                mask = lab_part == c
                counts[split, c] += int(mask.sum())
                if mask.any():
                    class_w_sum[split, c] += w_part[mask].sum(axis=0, dtype=np.float64)
        drawn += m
    return ClassConditionalSums(counts, class_w_sum, total_w_sum, n1, n - n1,
                                cfg.sigma)


def batch_for_class(sums: ClassConditionalSums, c: int) -> GradientSampleBatch:
    """Gradient-statistic batch for class c from a sampling pass."""
    if not (0 <= c < sums.counts.shape[1]):
        raise DomainError(f"class {c} outside [0, {sums.counts.shape[1] - 1}]")
    return GradientSampleBatch(
        x_sum=sums.class_w_sum[0, c] - 0.5 * sums.total_w_sum[0],
        y_sum=sums.class_w_sum[1, c] - 0.5 * sums.total_w_sum[1],
        n1=sums.n1,
        n2=sums.n2,
        success_count=int(sums.counts[0, c] + sums.counts[1, c]),
        sigma=sums.sigma,
    )


def sample_statistics(f: BlackBoxClassifier, x, c: int, cfg: SmoothingConfig,
                      n: int, rng: RngSpec, chunk: int = 1 << 16,
                      dtype=np.float64) -> GradientSampleBatch:
    """Draw n perturbations and accumulate the class-c gradient statistic."""
    return batch_for_class(sample_class_sums(f, x, cfg, n, rng, chunk, dtype), c)


def analytic_linear_stats(spec: LinearClassifierSpec, x,
                          cfg: SmoothingConfig) -> tuple[float, np.ndarray]:
    """Exact smoothed probability and gradient of the predicted class.

    y0 = Phi(|margin| / (sigma ||w||)); the gradient points along w,
    oriented toward the predicted class, with magnitude phi(.) / sigma.
    """
    x = np.asarray(x, dtype=float)
    margin = float(spec.w @ x + spec.b)
    norm = float(np.linalg.norm(spec.w))
    z = abs(margin) / (cfg.sigma * norm)
    y0 = float(std_normal_cdf(z))
    # predicted class is 1 on the margin <= 0 side; its probability grows
    # in the -w direction there, and in the +w direction on the other side
    orient = 1.0 if margin > 0.0 else -1.0
    y1 = (float(std_normal_pdf(z)) / cfg.sigma) * orient * spec.w / norm
    return y0, y1


_DUAL_NORM = {1: math.inf, 2: 2, math.inf: 1}


def analytic_linear_radius(spec: LinearClassifierSpec, x, p,
                           mask: Optional[Sequence[int]] = None,
                           cap: Optional[float] = None) -> float:
    """Exact lp radius of the halfspace: margin over the dual norm of w.

    ``mask`` restricts perturbations to those coordinates; a zero masked
    projection with positive margin means the region is unbounded within
    the subspace, reported as ``cap`` (or +inf when no cap is given).
    """
    if p not in _DUAL_NORM:
        raise DomainError(f"p must be 1, 2 or inf, got {p}")
    x = np.asarray(x, dtype=float)
    margin = abs(float(spec.w @ x + spec.b))
    if margin <= 0.0:
        raise DomainError("point lies on the decision boundary")
    w = spec.w
    if mask is not None:
        proj = np.zeros_like(w)
        idx = np.asarray(sorted(set(int(i) for i in mask)), dtype=int)
        proj[idx] = w[idx]
        w = proj
    dual = float(np.linalg.norm(w, ord=_DUAL_NORM[p]))
    if dual == 0.0:
        return cap if cap is not None else math.inf
    return margin / dual


def mc_worst_case_probability(dual: DualSolution, r: float, n: int,
                              rng: RngSpec) -> tuple[float, float]:
    """Monte-Carlo estimate of the worst-case set's mass at center (r, 0).

    The smooth worst-case set {e^{r z1} <= a1 z1 + a2 z2 + b} is, since
    a2 > 0, exactly {z2 >= -c(z1)}, which stays finite in the a2 -> infinity
    (c2 -> 0) limit; the degenerate interval variant is a 1-D membership
    test on z1 alone.
    """
    if n < 1:
        raise DomainError(f"need at least one draw, got {n}")
    gen = rng.generator()
    if dual.variant is DualVariant.INTERVAL:
        w2, w1 = dual.interval
        z1 = gen.standard_normal(n) + r
        hits = (z1 >= w2) & (z1 <= w1)
    else:
        z = gen.standard_normal((n, 2))
        z1 = z[:, 0] + r
        t = np.minimum(math.log(-dual.c2) + dual.travel_scale * z1, 700.0)
        c_z1 = np.clip(dual.c0 + dual.c1 * z1 - np.exp(t), -1e300, 1e300)
        hits = z[:, 1] >= -c_z1
    estimate = float(np.mean(hits))
    stderr = math.sqrt(max(estimate * (1.0 - estimate), 0.0) / n)
    return estimate, stderr
