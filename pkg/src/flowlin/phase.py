"""Asymptotic phase estimation for compact attractors.

The estimator flows a basin point forward by a horizon T, projects onto the
attractor, and flows back inside the attractor: P_T(x) = Phi_A^{-T}(proj(Phi^T(x))).
Horizons must grow geometrically: an arithmetic schedule has vanishing
successive differences on sqrt(T)-type phase drift and would misclassify the
divergent case as Cauchy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import FlowlinError
from .flows import FlowSystem, evolve

__all__ = [
    "AttractorModel",
    "GeometricSchedule",
    "PhaseEstimate",
    "ClassifierThresholds",
    "EmptyAttractor",
    "estimate_phase",
    "verify_phase_properties",
]


class EmptyAttractor(FlowlinError):
    """Attractor model carries no sample cloud."""


MIN_CLOUD_POINTS = 200


@dataclass(frozen=True, eq=False)
class AttractorModel:
    """Sampled model of a compact attractor.

    ``cloud`` is an (m, dim) sample of the attractor (m >= 200), ``restricted_flow``
    the flow on the attractor itself (invertible in time), and ``exact_projector``
    an optional closed-form nearest-point map that bypasses the cloud search.
    """

    cloud: np.ndarray
    restricted_flow: FlowSystem
    exact_projector: Callable | None = None

    def __post_init__(self):
        cloud = np.asarray(self.cloud, dtype=float)
        if cloud.ndim != 2 or cloud.shape[0] < MIN_CLOUD_POINTS:
            raise EmptyAttractor(
                f"attractor cloud needs >= {MIN_CLOUD_POINTS} points, got {cloud.shape}"
            )
        object.__setattr__(self, "cloud", cloud)

    def nearest_point(self, x) -> np.ndarray:
        """Project a basin point onto the attractor.

        Uses the exact projector when present; otherwise the best cloud point
        refined by a quadratic fit along the restricted flow.
        """
        if self.exact_projector is not None:
            return self.restricted_flow.chart.wrap(np.asarray(self.exact_projector(x), float))
        chart = self.restricted_flow.chart
        x = np.asarray(x, dtype=float)
        dists = np.array([chart.distance(x, p) for p in self.cloud])
        best = self.cloud[int(np.argmin(dists))]
        # refine along the flow: fit a parabola to d^2 at offsets {-h, 0, h},
        # with h the cloud resolution around the best point
        neighbor_gaps = [
            d for p in self.cloud if (d := chart.distance(best, p)) > 1e-12
        ]
        h = max(1e-6, min(neighbor_gaps, default=1e-3))
        pts = [evolve(self.restricted_flow, best, delta) for delta in (-h, 0.0, h)]
        d2 = np.array([chart.distance(x, p) ** 2 for p in pts])
        denom = d2[0] - 2 * d2[1] + d2[2]
        delta_star = 0.0 if denom <= 0 else 0.5 * h * (d2[0] - d2[2]) / denom
        delta_star = float(np.clip(delta_star, -h, h))
        return evolve(self.restricted_flow, best, delta_star)


@dataclass(frozen=True)
class GeometricSchedule:
    """Horizons t0 * ratio**k for k = 0..count-1; ratio must exceed 1."""

    t0: float
    ratio: float
    count: int

    def __post_init__(self):
        if self.ratio <= 1.0:
            raise ValueError("geometric schedule requires ratio > 1")
        if self.count < 2 or self.t0 <= 0:
            raise ValueError("schedule needs count >= 2 and t0 > 0")

    @property
    def horizons(self):
        return [self.t0 * self.ratio**k for k in range(self.count)]


@dataclass(frozen=True)
class ClassifierThresholds:
    """Convergence/divergence decision thresholds.

    ``ratio_floor`` treats gaps below it as converged-scale regardless of the
    gap ratio: near machine precision the successive-gap ratio is noise.
    ``diverge_floor`` marks sequences whose tail gaps stay above an absolute
    margin as divergent even when chart distances fold on a compact attractor
    (unbounded drift reduced mod the attractor diameter is not monotone).
    """

    converge_tol: float = 1e-6
    converge_ratio: float = 0.7
    ratio_floor: float = 1e-10
    diverge_gap_factor: float = 10.0
    diverge_monotone_run: int = 4
    diverge_floor: float = 1e-3


@dataclass(frozen=True)
class Classification:
    kind: str  # "converged" | "diverged" | "inconclusive"
    limit: np.ndarray | None = None
    rate: float | None = None
    drift: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PhaseEstimate:
    horizons: tuple
    estimates: np.ndarray
    classification: Classification


def _gap_ok(g_next: float, g_prev: float, th: ClassifierThresholds) -> bool:
    return g_next <= th.converge_ratio * g_prev or g_next < th.ratio_floor


def _classify(chart, estimates: np.ndarray, th: ClassifierThresholds) -> Classification:
    gaps = np.array(
        [chart.distance(estimates[i + 1], estimates[i]) for i in range(len(estimates) - 1)]
    )
    drift = {
        "gaps": gaps.tolist(),
        "first_gap": float(gaps[0]) if len(gaps) else 0.0,
        "last_gaps": gaps[-3:].tolist(),
    }
    if len(gaps) >= 3:
        last3 = gaps[-3:]
        if np.all(last3 < th.converge_tol) and all(
            _gap_ok(gaps[i + 1], gaps[i], th) for i in range(len(gaps) - 3, len(gaps) - 1)
        ):
            positive = gaps[gaps > 0]
            rate = float(np.exp(np.mean(np.diff(np.log(positive))))) if len(positive) >= 2 else 0.0
            return Classification("converged", limit=estimates[-1], rate=rate, drift=drift)

        first = gaps[0]
        big_tail = first > 0 and np.all(last3 > th.diverge_gap_factor * first)
        run = 1
        longest = 1
        for i in range(1, len(gaps)):
            run = run + 1 if gaps[i] > gaps[i - 1] else 1
            longest = max(longest, run)
        monotone = longest >= th.diverge_monotone_run
        above_floor = np.all(last3 > th.diverge_floor)
        if big_tail or monotone or above_floor:
            drift["diverged_by"] = (
                "gap_factor" if big_tail else ("monotone_growth" if monotone else "gap_floor")
            )
            return Classification("diverged", drift=drift)
    return Classification("inconclusive", drift=drift)


def estimate_phase(
    sys: FlowSystem,
    attractor: AttractorModel,
    x,
    schedule: GeometricSchedule,
    thresholds: ClassifierThresholds = ClassifierThresholds(),
) -> PhaseEstimate:
    """Estimate the asymptotic phase of a basin point over geometric horizons."""
    x = np.asarray(x, dtype=float)
    estimates = []
    for T in schedule.horizons:
        forward = evolve(sys, x, T)
        on_attractor = attractor.nearest_point(forward)
        estimates.append(evolve(attractor.restricted_flow, on_attractor, -T))
    estimates = np.array(estimates)
    classification = _classify(sys.chart, estimates, thresholds)
    return PhaseEstimate(tuple(schedule.horizons), estimates, classification)


@dataclass(frozen=True)
class PhaseReport:
    max_idempotence_violation: float
    max_restriction_violation: float
    max_equivariance_violation: float
    in_phase_decreasing: bool
    passed: bool


def verify_phase_properties(
    sys: FlowSystem,
    P: Callable,
    samples: Sequence,
    attractor_samples: Sequence,
    t_grid: Sequence[float],
    tol: float,
) -> PhaseReport:
    """Check retraction, equivariance, and the in-phase decay of a phase map.

    (i) P(P(x)) = P(x) on basin samples and P = id on attractor samples;
    (ii) P(Phi^t(x)) = Phi^t(P(x)) within tol on samples x t_grid;
    (iii) dist(Phi^t(x), Phi^t(P(x))) is eventually non-increasing along t_grid.
    """
    chart = sys.chart
    idem = 0.0
    for x in samples:
        px = np.asarray(P(x), dtype=float)
        idem = max(idem, chart.distance(P(px), px))
    restrict = 0.0
    for a in attractor_samples:
        restrict = max(restrict, chart.distance(P(a), a))

    equiv = 0.0
    decreasing = True
    for x in samples:
        px = np.asarray(P(x), dtype=float)
        gaps = []
        for t in t_grid:
            xt = evolve(sys, x, float(t))
            equiv = max(equiv, chart.distance(P(xt), evolve(sys, px, float(t))))
            gaps.append(chart.distance(xt, evolve(sys, px, float(t))))
        tail = gaps[1:]
        if any(tail[i + 1] > tail[i] + tol for i in range(len(tail) - 1)):
            decreasing = False
    passed = idem <= tol and restrict <= tol and equiv <= tol and decreasing
    return PhaseReport(idem, restrict, equiv, decreasing, passed)
