"""Dense linear-algebra primitives.

Matrix exponentials of flow generators, spectral splitting of a generator
into its center (purely oscillatory) and stable (decaying) parts, and
brute-force rational-independence certificates for frequency vectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import FlowlinError


class PositiveSpectrum(FlowlinError):
    """The generator has an eigenvalue with positive real part."""


class NonSemisimpleCenter(FlowlinError):
    """The zero-real-part block of the generator has a nilpotent part."""


class DimensionTooLarge(FlowlinError):
    """Frequency vector too long for exhaustive relation search."""


class ExpRangeError(FlowlinError):
    """exp(B*t) exceeds the representable floating-point range."""


DEFAULT_EIGEN_TOL = 1e-9
# rank / clustering tolerance for the semisimplicity test of the center block
SEMISIMPLE_TOL = 1e-8
# exhaustive search over integer relations is only feasible for short vectors
MAX_INDEPENDENCE_DIM = 4


@dataclass(frozen=True)
class LinearGenerator:
    """Real square matrix generating the linear flow t -> exp(entries * t)."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"generator must be square, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValueError("generator dimension must be >= 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("generator entries must be finite")
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class FrequencyVector:
    """Frequency components of a torus flow, one entry per angle."""

    omega: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omega, dtype=float))
        if w.ndim != 1:
            raise ValueError("frequency vector must be one-dimensional")
        if not np.all(np.isfinite(w)):
            raise ValueError("frequency entries must be finite")
        object.__setattr__(self, "omega", w)

    def __len__(self) -> int:
        return len(self.omega)


@dataclass(frozen=True)
class SpectralSplit:
    """Commuting projections onto the center and stable invariant subspaces."""

    center_projection: np.ndarray
    stable_projection: np.ndarray
    center_dim: int
    stable_dim: int
    eigen_tolerance: float


@dataclass(frozen=True)
class IndependenceResult:
    """Outcome of an integer-relation search up to a coefficient bound.

    ``independent`` is a certificate only relative to ``max_coeff``: no
    nonzero integer vector k with max|k_i| <= max_coeff satisfies
    |k . omega| < tol.  A found relation is returned sign-canonicalized
    (first nonzero entry positive) with minimal max-norm.
    """

    independent: bool
    max_coeff: int
    relation: tuple[int, ...] | None = None


def as_generator(B) -> LinearGenerator:
    if isinstance(B, LinearGenerator):
        return B
    return LinearGenerator(np.asarray(B, dtype=float))


def as_frequency_vector(omega) -> FrequencyVector:
    if isinstance(omega, FrequencyVector):
        return omega
    return FrequencyVector(np.asarray(omega, dtype=float))


def matrix_exp(B, t: float) -> np.ndarray:
    """exp(B*t) by scaling-and-squaring with a high-order Pade approximant.

    Raises ExpRangeError when the result overflows float64.
    """
    gen = as_generator(B)
    if not np.isfinite(t):
        raise ValueError("time must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        result = scipy.linalg.expm(gen.entries * t)
    if not np.all(np.isfinite(result)):
        raise ExpRangeError(
            f"exp(B*t) overflows for norm(B*t) = {np.linalg.norm(gen.entries * t, 1):.3g}"
        )
    return result


def _cluster_eigenvalues(lam: np.ndarray, tol: float) -> list[np.ndarray]:
    """Group eigenvalues whose pairwise distance is below tol (greedy chain)."""
    order = np.lexsort((lam.imag, lam.real))
    groups: list[list[int]] = []
    for idx in order:
        for g in groups:
            if any(abs(lam[idx] - lam[j]) <= tol for j in g):
                g.append(idx)
                break
        else:
            groups.append([idx])
    return [np.array(g) for g in groups]


def _check_center_semisimple(T11: np.ndarray, tol: float) -> None:
    k = T11.shape[0]
    if k <= 1:
        return
    lam = np.linalg.eigvals(T11)
    scale = max(1.0, np.linalg.norm(T11, 2))
    for group in _cluster_eigenvalues(lam, tol * scale):
        mult = len(group)
        if mult == 1:
            continue
        center = lam[group].mean()
        sv = np.linalg.svd(T11.astype(complex) - center * np.eye(k), compute_uv=False)
        rank = int(np.sum(sv > tol * scale))
        # semisimple <=> geometric multiplicity equals algebraic multiplicity
        if rank > k - mult:
            raise NonSemisimpleCenter(
                f"eigenvalue {center:.6g} has algebraic multiplicity {mult} "
                f"but rank(B_center - lambda I) = {rank} > {k - mult}"
            )


def spectral_split(B, eigen_tolerance: float = DEFAULT_EIGEN_TOL) -> SpectralSplit:
    """Split the generator into commuting center/stable spectral projections.

    The center projection maps onto the sum of eigenspaces with
    |Re(lambda)| <= eigen_tolerance, the stable projection onto the
    generalized eigenspaces with Re(lambda) < -eigen_tolerance.
    """
    gen = as_generator(B)
    A = gen.entries
    n = gen.dim
    lam = np.linalg.eigvals(A)
    worst = float(lam.real.max())
    if worst > eigen_tolerance:
        raise PositiveSpectrum(
            f"eigenvalue with real part {worst:.6g} > tolerance {eigen_tolerance:.3g}"
        )

    T, Z, k = scipy.linalg.schur(
        A, output="real", sort=lambda re, im: re >= -eigen_tolerance
    )
    _check_center_semisimple(T[:k, :k], SEMISIMPLE_TOL)

    if k == 0:
        P0 = np.zeros((n, n))
    elif k == n:
        P0 = np.eye(n)
    else:
        # spectral projector of a block-triangular matrix: solve the Sylvester
        # equation T11 Y - Y T22 = T12, then P = [[I, Y], [0, 0]] in Schur basis
        Y = scipy.linalg.solve_sylvester(T[:k, :k], -T[k:, k:], T[:k, k:])
        P = np.zeros((n, n))
        P[:k, :k] = np.eye(k)
        P[:k, k:] = Y
        P0 = Z @ P @ Z.T
    return SpectralSplit(
        center_projection=P0,
        stable_projection=np.eye(n) - P0,
        center_dim=k,
        stable_dim=n - k,
        eigen_tolerance=eigen_tolerance,
    )


def _canonical_relation(k: tuple[int, ...]) -> tuple[int, ...]:
    for entry in k:
        if entry != 0:
            return k if entry > 0 else tuple(-e for e in k)
    return k


def _relation_key(k: tuple[int, ...]) -> tuple:
    return (max(abs(e) for e in k), k)


def rational_independence(omega, max_coeff: int, tol: float = 1e-9) -> IndependenceResult:
    """Search for integer relations k . omega ~ 0 with max|k_i| <= max_coeff.

    Meet-in-the-middle over the coefficient box; exact on rational input
    whose relations are detectable at the given tolerance.
    """
    w = as_frequency_vector(omega).omega
    n = len(w)
    if n > MAX_INDEPENDENCE_DIM:
        raise DimensionTooLarge(
            f"exhaustive search supports at most {MAX_INDEPENDENCE_DIM} frequencies, got {n}"
        )
    if max_coeff < 1:
        raise ValueError("max_coeff must be >= 1")
    Q = int(max_coeff)

    # near-zero components admit the trivial unit-vector relation
    for i in range(n):
        if abs(w[i]) < tol:
            k = tuple(1 if j == i else 0 for j in range(n))
            return IndependenceResult(False, Q, k)

    if n == 1:
        return IndependenceResult(True, Q)

    split = n // 2
    left_coords, right_coords = w[:split], w[split:]
    coeff_range = np.arange(-Q, Q + 1)

    right_tuples = np.array(list(itertools.product(coeff_range, repeat=n - split)))
    right_sums = right_tuples @ right_coords
    order = np.argsort(right_sums, kind="stable")
    right_sums_sorted = right_sums[order]

    best: tuple[int, ...] | None = None
    for left in itertools.product(coeff_range, repeat=split):
        s_left = float(np.dot(left, left_coords))
        lo = np.searchsorted(right_sums_sorted, -s_left - tol, side="left")
        hi = np.searchsorted(right_sums_sorted, -s_left + tol, side="right")
        for pos in range(lo, hi):
            right = tuple(int(e) for e in right_tuples[order[pos]])
            k = tuple(int(e) for e in left) + right
            if all(e == 0 for e in k):
                continue
            if abs(float(np.dot(k, w))) >= tol:
                continue
            k = _canonical_relation(k)
            if best is None or _relation_key(k) < _relation_key(best):
                best = k
    if best is None:
        return IndependenceResult(True, Q)
    return IndependenceResult(False, Q, best)
