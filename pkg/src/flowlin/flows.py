"""Uniform flow abstraction over closed-form flow maps and vector fields.

A FlowSystem pairs a chart (per-coordinate wrap rules, optional quotient
identifications) with either an exact flow map or a vector field handed to
the adaptive integrator.  Angles are reduced to their canonical fundamental
domain once, after each full evolve call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import FlowlinError
from .integrate import DenseOutput, IntegrationFailure, IntegratorSettings, integrate

__all__ = [
    "ChartDescriptor",
    "FlowSystem",
    "Trajectory",
    "TimeOutOfDomain",
    "IntegrationFailure",
    "euclidean",
    "torus_angles",
    "polar_annulus",
    "product",
    "evolve",
    "sample_trajectory",
    "check_group_law",
    "export_trajectory_csv",
]

TWO_PI = 2.0 * np.pi


class TimeOutOfDomain(FlowlinError):
    """Requested time lies outside the trajectory's domain of definition."""


@dataclass(frozen=True, eq=False)
class ChartDescriptor:
    """Coordinate chart: one wrap rule per coordinate, optional identifications.

    ``wraps[i]`` is None for an unwrapped coordinate or the period (1 or 2*pi)
    of an angle.  ``identifications`` are chart isometries generating a finite
    quotient group (e.g. the antipodal map); distances are minimized over the
    orbit they generate.
    """

    kind: str
    wraps: tuple
    identifications: tuple = ()

    @property
    def dim(self) -> int:
        return len(self.wraps)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for i, period in enumerate(self.wraps):
            if period is not None:
                out[..., i] = np.mod(out[..., i], period)
        return out

    def orbit(self, x: np.ndarray) -> list[np.ndarray]:
        """Quotient orbit of a point (identity first, closure capped)."""
        reps = [self.wrap(x)]
        frontier = list(reps)
        while frontier and len(reps) < 8:
            y = frontier.pop()
            for g in self.identifications:
                z = self.wrap(g(y))
                if not any(np.allclose(z, r, atol=1e-12) for r in reps):
                    reps.append(z)
                    frontier.append(z)
        return reps

    def _coordinate_distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = np.abs(np.asarray(a, float) - np.asarray(b, float))
        for i, period in enumerate(self.wraps):
            if period is not None:
                d[..., i] = np.minimum(d[..., i] % period, period - d[..., i] % period)
        return np.sqrt(np.sum(d * d, axis=-1))

    def distance(self, a, b) -> float:
        """Min-over-wraps per coordinate, min over identification orbit."""
        a = self.wrap(a)
        best = np.inf
        for rep in self.orbit(np.asarray(b, float)):
            best = min(best, float(self._coordinate_distance(a, rep)))
        return best

    def pairwise_distances(self, states: np.ndarray) -> np.ndarray:
        """All-pairs chart distance for an (N, dim) array of states."""
        X = self.wrap(np.asarray(states, float))
        d = self._coordinate_distance(X[:, None, :], X[None, :, :])
        for g in self.identifications:
            GX = self.wrap(np.apply_along_axis(g, 1, X))
            d = np.minimum(d, self._coordinate_distance(X[:, None, :], GX[None, :, :]))
        return d


def euclidean(n: int) -> ChartDescriptor:
    return ChartDescriptor("euclidean", (None,) * n)


def torus_angles(n: int, identifications=()) -> ChartDescriptor:
    """Angles reduced mod 1."""
    return ChartDescriptor("torus_angles", (1.0,) * n, tuple(identifications))


def polar_annulus() -> ChartDescriptor:
    """(r, theta) with r > 0 unwrapped and theta reduced mod 2*pi."""
    return ChartDescriptor("polar_annulus", (None, TWO_PI))


def product(*charts: ChartDescriptor) -> ChartDescriptor:
    wraps = tuple(w for c in charts for w in c.wraps)
    if any(c.identifications for c in charts):
        raise ValueError("product of identified charts is not supported")
    return ChartDescriptor("product", wraps)


def _no_lower_bound(x) -> float:
    return -np.inf


@dataclass(frozen=True, eq=False)
class FlowSystem:
    """A flow on a chart-described state space.

    Exactly one of ``closed_form`` (map (t, x) -> x') and ``vector_field``
    (map x -> dx/dt) must be given.  ``t_min`` bounds the domain of
    definition per state for flows that are only forward-complete.
    """

    name: str
    chart: ChartDescriptor
    closed_form: Callable | None = None
    vector_field: Callable | None = None
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    t_min: Callable = _no_lower_bound

    def __post_init__(self):
        if (self.closed_form is None) == (self.vector_field is None):
            raise ValueError("provide exactly one of closed_form / vector_field")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled trajectory: strictly increasing times and matching states."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or x.shape[0] != t.shape[0]:
            raise ValueError("times and states must have matching leading length")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise ValueError("trajectory entries must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)


def _check_domain(sys: FlowSystem, x: np.ndarray, t: float) -> None:
    bound = sys.t_min(x)
    if np.isfinite(bound) and t <= bound:
        raise TimeOutOfDomain(
            f"{sys.name}: t = {t:.6g} at or below domain bound {bound:.6g}"
        )


def evolve(sys: FlowSystem, x, t: float) -> np.ndarray:
    """Flow the state forward (or backward) by time t, wrapped to the chart."""
    x = np.asarray(x, dtype=float)
    if t == 0.0:
        return sys.chart.wrap(x)
    _check_domain(sys, x, t)
    if sys.closed_form is not None:
        # extreme times may legitimately saturate to inf; callers gate on it
        with np.errstate(over="ignore", invalid="ignore"):
            return sys.chart.wrap(np.asarray(sys.closed_form(t, x), dtype=float))
    dense = integrate(sys.vector_field, x, 0.0, t, sys.settings)
    return sys.chart.wrap(dense(t))


def sample_trajectory(sys: FlowSystem, x, t_grid) -> Trajectory:
    """Sample the trajectory through x on an increasing time grid.

    Closed-form systems are evaluated pointwise; vector-field systems use a
    single adaptive pass per time direction with dense-output interpolation.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    x = np.asarray(x, dtype=float)
    for t in t_grid:
        if t != 0.0:
            _check_domain(sys, x, float(t))
    if sys.closed_form is not None:
        states = np.array([evolve(sys, x, float(t)) for t in t_grid])
        return Trajectory(t_grid, states)

    dense_fwd: DenseOutput | None = None
    dense_bwd: DenseOutput | None = None
    if np.any(t_grid > 0):
        dense_fwd = integrate(sys.vector_field, x, 0.0, float(t_grid.max()), sys.settings)
    if np.any(t_grid < 0):
        dense_bwd = integrate(sys.vector_field, x, 0.0, float(t_grid.min()), sys.settings)
    states = []
    for t in t_grid:
        if t == 0.0:
            states.append(sys.chart.wrap(x))
        elif t > 0:
            states.append(sys.chart.wrap(dense_fwd(float(t))))
        else:
            states.append(sys.chart.wrap(dense_bwd(float(t))))
    return Trajectory(t_grid, np.array(states))


@dataclass(frozen=True)
class GroupLawReport:
    max_violation: float
    n_checked: int
    failures: tuple
    passed: bool


def check_group_law(sys: FlowSystem, samples: Sequence, tol: float) -> GroupLawReport:
    """Verify evolve(evolve(x, s), t) == evolve(x, s + t) on sample triples.

    Per-sample evolve errors are collected, not raised, so one bad sample
    does not abort the batch.
    """
    worst = 0.0
    failures = []
    checked = 0
    for idx, (x, s, t) in enumerate(samples):
        try:
            two_step = evolve(sys, evolve(sys, x, s), t)
            one_step = evolve(sys, x, s + t)
        except FlowlinError as err:
            failures.append((idx, repr(err)))
            continue
        checked += 1
        worst = max(worst, sys.chart.distance(two_step, one_step))
    return GroupLawReport(
        max_violation=worst,
        n_checked=checked,
        failures=tuple(failures),
        passed=(worst <= tol and not failures),
    )


def export_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV with header t,x1,...,xn and 17 significant digits."""
    dim = traj.states.shape[1] if traj.states.ndim == 2 else 0
    header = "t" + "".join(f",x{i + 1}" for i in range(dim))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, row in zip(traj.times, traj.states):
            fh.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")
