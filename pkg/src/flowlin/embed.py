"""Constructing and verifying linearizing embeddings of attractor basins.

The topological builder assembles F(x) = (F0(P(x)), e^{tau(x)} F1(Phi^{tau(x)}(x)))
from a phase map P, an embedding F0 of the attractor, and Lyapunov level-set
data; its generator is blockdiag(B0, -I).  The smooth builder instead conjugates
a transverse equivariant map G back along the impact time.  Verification
covers the linearization residual, injectivity, immersion rank, and a
properness probe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.stats

from .errors import FlowlinError
from .flows import FlowSystem, evolve
from .linalg import LinearGenerator, as_generator, matrix_exp
from .phase import AttractorModel

__all__ = [
    "LyapunovData",
    "EmbeddingCandidate",
    "QualityOptions",
    "QualityReport",
    "OnAttractor",
    "BracketFailure",
    "PhaseMapInvalid",
    "ConditionThreeViolated",
    "TransverseData",
    "impact_time",
    "build_topological_embedding",
    "build_smooth_embedding",
    "overlap_identity_residual",
    "verify_linearization",
    "verify_embedding_quality",
]


class OnAttractor(FlowlinError):
    """The trajectory starts on the attractor and never crosses the level set."""


class BracketFailure(FlowlinError):
    """No sign change of V - c found within the search window."""


class PhaseMapInvalid(FlowlinError):
    """Supplied phase map fails the retraction/equivariance checks."""


class ConditionThreeViolated(FlowlinError):
    """Transverse map fails equivariance, spectrum, or kernel requirements."""


MAX_BRACKET = 100.0


@dataclass(frozen=True, eq=False)
class LyapunovData:
    """Lyapunov function with a fixed level set embedded in a unit sphere.

    ``V`` vanishes on the attractor and decreases along trajectories;
    ``level_set_embedding`` maps the level set {V = level} into the unit
    sphere of R^{sphere_dim}.
    """

    V: Callable
    level: float
    level_set_embedding: Callable
    sphere_dim: int

    def __post_init__(self):
        if self.level <= 0:
            raise ValueError("Lyapunov level must be positive")


@dataclass(frozen=True, eq=False)
class EmbeddingCandidate:
    """A state-to-Euclidean map paired with its claimed generator."""

    F: Callable
    B: LinearGenerator
    provenance: str  # "exact" | "built_topological" | "built_smooth" | "edmd"


def impact_time(
    sys: FlowSystem,
    V: Callable,
    c: float,
    x,
    bracket: tuple[float, float] = (-1.0, 1.0),
    tol: float = 1e-10,
    attractor_tol: float = 1e-14,
) -> float:
    """Unique time tau with V(Phi^tau(x)) = c, for V strictly decreasing in t.

    Expands the bracket geometrically up to |tau| <= 100, then bisects and
    polishes with a few Newton steps.  Satisfies the cocycle identity
    impact_time(Phi^t(x)) = impact_time(x) - t.  ``tol`` bounds |V - c| at
    the root; ``attractor_tol`` is the separate on-attractor gate (V below
    it counts as never crossing; these scales differ by orders of magnitude).
    """
    x = np.asarray(x, dtype=float)
    v0 = float(V(x))
    if v0 <= attractor_tol:
        raise OnAttractor(
            f"V(x) = {v0:.3g} <= {attractor_tol:.0e}, trajectory never crosses the level set"
        )

    def g(tau: float) -> float:
        # bracket probes may push the state to the edge of float range, where
        # V legitimately saturates to inf (still a valid sign for bisection)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return float(V(evolve(sys, x, tau))) - c

    g0 = g(0.0)
    if g0 == 0.0:
        return 0.0
    # V decreases along the flow, so g is decreasing in tau
    if g0 > 0:
        lo, hi = 0.0, max(abs(bracket[1]), 1e-3)
        while g(hi) > 0:
            hi *= 2.0
            if hi > MAX_BRACKET:
                raise BracketFailure(f"no crossing of level {c} within tau <= {MAX_BRACKET}")
    else:
        hi = 0.0
        lo = -max(abs(bracket[0]), 1e-3)
        domain = sys.t_min(x)
        while True:
            if np.isfinite(domain) and lo <= domain:
                # probe just inside the domain before giving up
                lo = domain + max(abs(domain) * 1e-9, 1e-12)
                if g(lo) < 0:
                    raise BracketFailure(
                        f"no crossing of level {c} above domain bound {domain:.6g}"
                    )
                break
            if lo < -MAX_BRACKET:
                raise BracketFailure(f"no crossing of level {c} within tau >= -{MAX_BRACKET}")
            if g(lo) >= 0:
                break
            lo *= 2.0

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14 * max(1.0, abs(lo), abs(hi)):
            break
    tau = 0.5 * (lo + hi)

    step = 1e-6
    for _ in range(3):
        val = g(tau)
        if abs(val) <= 0.1 * tol:
            break
        slope = (g(tau + step) - g(tau - step)) / (2 * step)
        if slope == 0.0:
            break
        tau -= val / slope
    if abs(g(tau)) > tol:
        raise BracketFailure(f"impact time refinement stalled at |V - c| = {abs(g(tau)):.3g}")
    return float(tau)


def _check_phase_map(sys, attractor, P, validation_states, tol=1e-8):
    from .phase import verify_phase_properties

    report = verify_phase_properties(
        sys, P, validation_states, attractor.cloud[:50], t_grid=(0.0, 0.5, 1.0, 2.0), tol=tol
    )
    if not report.passed:
        raise PhaseMapInvalid(
            f"phase map check failed: idempotence {report.max_idempotence_violation:.3g}, "
            f"equivariance {report.max_equivariance_violation:.3g}"
        )


def _attractor_residual(attractor, F0, B0, times=(0.1, 1.0, 2.0)) -> float:
    worst = 0.0
    for a in attractor.cloud[:25]:
        fa = np.asarray(F0(a), dtype=float)
        for t in times:
            lhs = np.asarray(F0(evolve(attractor.restricted_flow, a, t)), dtype=float)
            rhs = matrix_exp(B0, t) @ fa
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


def build_topological_embedding(
    sys: FlowSystem,
    attractor: AttractorModel,
    P: Callable,
    F0: tuple[Callable, LinearGenerator],
    lyap: LyapunovData,
    validation_states: Sequence,
    on_attractor_tol: float = 1e-14,
    impact_tol: float = 1e-10,
) -> EmbeddingCandidate:
    """Assemble the basin embedding from phase, attractor embedding, and level data.

    The on-attractor branch absorbs states with V below ``on_attractor_tol``;
    the neglected decay block is then at most sqrt(on_attractor_tol / level),
    which must stay inside the residual budget.
    """
    F0_map, B0 = F0[0], as_generator(F0[1])
    _check_phase_map(sys, attractor, P, validation_states)
    res0 = _attractor_residual(attractor, F0_map, B0)
    if res0 > 1e-8:
        raise PhaseMapInvalid(f"F0 fails to linearize the restricted flow: residual {res0:.3g}")
    for a in attractor.cloud[:50]:
        if float(lyap.V(a)) > 1e-12:
            raise ValueError(f"Lyapunov function does not vanish on the attractor: {lyap.V(a):.3g}")

    V, c, F1, n1 = lyap.V, lyap.level, lyap.level_set_embedding, lyap.sphere_dim
    for x in list(validation_states)[:10]:
        if float(V(x)) <= on_attractor_tol:
            continue
        hit = evolve(sys, x, impact_time(sys, V, c, x, tol=impact_tol))
        norm = float(np.linalg.norm(np.asarray(F1(hit), float)))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"level-set embedding not on the unit sphere: |F1| = {norm}")

    def F(x):
        x = np.asarray(x, dtype=float)
        if float(V(x)) <= on_attractor_tol:
            return np.concatenate([np.asarray(F0_map(x), float), np.zeros(n1)])
        tau = impact_time(sys, V, c, x, tol=impact_tol, attractor_tol=on_attractor_tol)
        hit = evolve(sys, x, tau)
        return np.concatenate(
            [np.asarray(F0_map(P(x)), float), np.exp(tau) * np.asarray(F1(hit), float)]
        )

    k0 = B0.dim
    B = np.zeros((k0 + n1, k0 + n1))
    B[:k0, :k0] = B0.entries
    B[k0:, k0:] = -np.eye(n1)
    return EmbeddingCandidate(F, LinearGenerator(B), "built_topological")


@dataclass(frozen=True, eq=False)
class TransverseData:
    """Equivariant map G: U -> R^k with strictly stable generator.

    ``in_U`` is the membership predicate of the open set U containing the
    attractor where G(Phi^t(x)) = e^{Bt} G(x) holds directly.
    """

    G: Callable
    B: LinearGenerator
    in_U: Callable


def _kernel_check(attractor, G, fd_step, tangent_tol, transverse_floor):
    """Tangent directions must be annihilated by dG at the attractor; transverse not."""
    chart = attractor.restricted_flow.chart
    for a in attractor.cloud[:50]:
        a = np.asarray(a, dtype=float)
        dim = len(a)
        J = np.empty((len(np.atleast_1d(G(a))), dim))
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = fd_step
            J[:, i] = (np.asarray(G(a + e), float) - np.asarray(G(a - e), float)) / (2 * fd_step)
        delta = 1e-4
        fwd = evolve(attractor.restricted_flow, a, delta)
        bwd = evolve(attractor.restricted_flow, a, -delta)
        tangent = (fwd - bwd) / (2 * delta)
        norm = np.linalg.norm(tangent)
        if norm < 1e-12:
            continue
        tangent /= norm
        if np.linalg.norm(J @ tangent) > tangent_tol:
            raise ConditionThreeViolated(
                f"tangent direction not annihilated: |dG v| = {np.linalg.norm(J @ tangent):.3g}"
            )
        # orthonormal complement of the tangent line within the chart
        basis = scipy.linalg.null_space(tangent[None, :])
        for col in basis.T:
            if np.linalg.norm(J @ col) < transverse_floor:
                raise ConditionThreeViolated(
                    f"transverse direction annihilated: |dG v| = {np.linalg.norm(J @ col):.3g}"
                )


def build_smooth_embedding(
    sys: FlowSystem,
    attractor: AttractorModel,
    P: Callable,
    F1A: tuple[Callable, LinearGenerator],
    transverse: TransverseData,
    V: Callable,
    c: float,
    validation_states: Sequence,
    equivariance_tol: float = 1e-8,
    fd_step: float = 1e-5,
    tangent_tol: float = 1e-5,
    transverse_floor: float = 1e-2,
) -> EmbeddingCandidate:
    """Assemble the smooth basin embedding (F1A o P, G-conjugated impact map)."""
    F1A_map, B1 = F1A[0], as_generator(F1A[1])
    G, B, in_U = transverse.G, as_generator(transverse.B), transverse.in_U

    eig = np.linalg.eigvals(B.entries)
    if np.any(eig.real >= -1e-9):
        raise ConditionThreeViolated(
            f"transverse generator must be strictly stable, max Re = {eig.real.max():.3g}"
        )
    worst = 0.0
    for x in validation_states:
        if not in_U(x):
            continue
        gx = np.asarray(G(x), dtype=float)
        for t in (0.1, 0.5, 1.0):
            lhs = np.asarray(G(evolve(sys, x, t)), dtype=float)
            worst = max(worst, float(np.linalg.norm(lhs - matrix_exp(B, t) @ gx)))
    if worst > equivariance_tol:
        raise ConditionThreeViolated(f"G equivariance residual {worst:.3g} > {equivariance_tol:.3g}")
    _kernel_check(attractor, G, fd_step, tangent_tol, transverse_floor)
    _check_phase_map(sys, attractor, P, validation_states)

    def F0(x):
        x = np.asarray(x, dtype=float)
        if in_U(x):
            return np.asarray(G(x), dtype=float)
        tau = impact_time(sys, V, c, x)
        return matrix_exp(B, -tau) @ np.asarray(G(evolve(sys, x, tau)), dtype=float)

    def F(x):
        return np.concatenate([np.asarray(F1A_map(P(x)), float), F0(x)])

    k1, k = B1.dim, B.dim
    Bfull = np.zeros((k1 + k, k1 + k))
    Bfull[:k1, :k1] = B1.entries
    Bfull[k1:, k1:] = B.entries
    return EmbeddingCandidate(F, LinearGenerator(Bfull), "built_smooth")


def overlap_identity_residual(
    sys: FlowSystem, transverse: TransverseData, V: Callable, c: float, states: Sequence
) -> float:
    """Max disagreement of G(x) and e^{-B tau} G(Phi^tau(x)) on U intersect {V > c}."""
    G, B, in_U = transverse.G, as_generator(transverse.B), transverse.in_U
    worst = 0.0
    for x in states:
        x = np.asarray(x, dtype=float)
        if not (in_U(x) and float(V(x)) > c):
            continue
        tau = impact_time(sys, V, c, x)
        direct = np.asarray(G(x), dtype=float)
        conjugated = matrix_exp(B, -tau) @ np.asarray(G(evolve(sys, x, tau)), dtype=float)
        worst = max(worst, float(np.linalg.norm(direct - conjugated)))
    return worst


def verify_linearization(cand: EmbeddingCandidate, sys: FlowSystem, grid) -> float:
    """Max over (states x times) of ||F(Phi^t(x)) - e^{Bt} F(x)||."""
    states, times = grid
    worst = 0.0
    exps = {float(t): matrix_exp(cand.B, float(t)) for t in times}
    for x in states:
        fx = np.asarray(cand.F(x), dtype=float)
        for t in times:
            lhs = np.asarray(cand.F(evolve(sys, x, float(t))), dtype=float)
            worst = max(worst, float(np.linalg.norm(lhs - exps[float(t)] @ fx)))
    return worst


@dataclass(frozen=True)
class QualityOptions:
    fd_step: float = 1e-5
    sigma_floor: float = 1e-6
    injectivity_floor: float = 1e-6
    pair_distance_cutoff: float = 1e-9
    escape_states: tuple = ()
    escape_values: tuple = ()


@dataclass(frozen=True)
class QualityReport:
    injectivity_margin: float
    injectivity_flagged: bool
    min_jacobian_sigma: float
    immersion_flagged: bool
    properness: dict


def verify_embedding_quality(
    cand: EmbeddingCandidate,
    sys: FlowSystem,
    states: np.ndarray,
    options: QualityOptions = QualityOptions(),
) -> QualityReport:
    """Sampled injectivity margin, immersion rank, and properness probe.

    The injectivity margin is min over sampled pairs of image distance over
    chart distance; quotient-identified pairs have chart distance ~0 and are
    excluded by the cutoff.  Properness is a probe, never a certificate.
    """
    states = np.asarray(states, dtype=float)
    images = np.array([np.asarray(cand.F(x), dtype=float) for x in states])

    state_d = sys.chart.pairwise_distances(states)
    image_d = np.linalg.norm(images[:, None, :] - images[None, :, :], axis=-1)
    iu = np.triu_indices(len(states), k=1)
    mask = state_d[iu] > options.pair_distance_cutoff
    ratios = image_d[iu][mask] / state_d[iu][mask]
    margin = float(ratios.min()) if ratios.size else 0.0

    sigma_min = np.inf
    h = options.fd_step
    dim = states.shape[1]
    for x in states:
        J = np.empty((images.shape[1], dim))
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = h
            J[:, i] = (
                np.asarray(cand.F(x + e), float) - np.asarray(cand.F(x - e), float)
            ) / (2 * h)
        sigma_min = min(sigma_min, float(np.linalg.svd(J, compute_uv=False)[-1]))

    properness = {"available": False}
    if len(options.escape_states) >= 4:
        norms = [float(np.linalg.norm(np.asarray(cand.F(x), float))) for x in options.escape_states]
        values = (
            list(options.escape_values)
            if len(options.escape_values) == len(norms)
            else list(range(len(norms)))
        )
        rho = float(scipy.stats.spearmanr(values, norms).statistic)
        growth = norms[-1] / max(norms[0], 1e-300)
        properness = {
            "available": True,
            "spearman_rho": rho,
            "norm_growth_ratio": growth,
            "flagged": not (rho > 0.9 and growth > 2.0),
        }

    return QualityReport(
        injectivity_margin=margin,
        injectivity_flagged=margin < options.injectivity_floor,
        min_jacobian_sigma=float(sigma_min),
        immersion_flagged=sigma_min < options.sigma_floor,
        properness=properness,
    )
