"""Bead-spring kinetic theory primitives.

A dilute polymer chain is modelled as ``K`` FENE springs in ``d`` space
dimensions.  Each spring connector ``q_i`` ranges over the open ball
``D_i = B(0, sqrt(b_i))`` and carries the elastic potential

    U(s) = -(b/2) * log(1 - 2 s / b),      s = |q|^2 / 2 in [0, b/2),

whose normalized Boltzmann factor is the Maxwellian

    M(q) = Z^{-1} (1 - |q|^2 / b)^{b/2},   Z = int_D exp(-U) dq.

``M`` satisfies the structural identity ``grad_q M = -M U'(|q|^2/2) q`` on
which every integration-by-parts manipulation in the coupled solver rests,
and ``-log M`` is uniformly convex with Hessian bounded below by the
identity (curvature constant ``kappa = 1``), which is what powers the
logarithmic Sobolev inequality used by the equilibration diagnostics.

The module also provides the relative-entropy integrands: the Boltzmann
function ``F(s) = s (log s - 1) + 1``, its quadratic super-linear
relaxation ``F^L`` and the two-sided ``C^2`` regularization ``F^L_delta``,
together with the cut-off functions ``beta^L(s) = min(s, L)`` and
``beta^L_delta(s) = max(min(s, L), delta) = 1 / (F^L_delta)''(s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

__all__ = [
    "ChainGeometry",
    "RouseMatrix",
    "CutoffParams",
    "fene_potential",
    "maxwellian_normalizer",
    "maxwellian_value",
    "cutoff_beta",
    "cutoff_beta_delta",
    "secant_cutoff_coefficient",
    "entropy_eval",
    "bakry_emery_kappa",
]


class DomainError(ValueError):
    """Raised when an argument leaves the mathematical domain of an operation."""


class InternalConsistencyError(RuntimeError):
    """Raised when a structural identity fails beyond tolerance at runtime."""


# --------------------------------------------------------------------------
# geometry and coupling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainGeometry:
    """Number of springs, space dimension and FENE extensibility parameters.

    Parameters
    ----------
    K : int
        Number of springs in the chain, ``K >= 1``.
    d : int
        Space dimension, 2 or 3.
    b : tuple of float
        FENE parameter per spring; each entry must exceed 2 so that the
        Maxwellian has finite relative-entropy moments (``gamma = b/2 > 1``).
    """

    K: int
    d: int
    b: Tuple[float, ...]

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"need at least one spring, got K={self.K}")
        if self.d not in (2, 3):
            raise ValueError(f"space dimension must be 2 or 3, got d={self.d}")
        if len(self.b) != self.K:
            raise ValueError(
                f"expected {self.K} extensibility parameters, got {len(self.b)}"
            )
        for bi in self.b:
            if not bi > 2.0:
                raise ValueError(
                    f"b={bi}: gamma = b/2 must exceed 1 for finite entropy moments"
                )


def _chain_rouse(K: int) -> np.ndarray:
    A = 2.0 * np.eye(K) - np.eye(K, k=1) - np.eye(K, k=-1)
    return A


@dataclass(frozen=True)
class RouseMatrix:
    """Symmetric positive definite spring-coupling matrix and its smallest eigenvalue.

    ``A = [1]`` for a single spring (dumbbell); a linear chain of ``K``
    springs uses the tridiagonal ``(-1, 2, -1)`` connectivity.  ``a0`` is the
    smallest eigenvalue of ``A`` and enters the equilibration rate
    ``gamma_0 = min(nu / C_P^2, kappa a0 / (2 lambda))``.
    """

    A: np.ndarray
    a0: float = field(init=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"coupling matrix must be square, got shape {A.shape}")
        if not np.allclose(A, A.T, atol=1e-14):
            raise ValueError("coupling matrix must be symmetric")
        eigs = np.linalg.eigvalsh(A)
        if eigs[0] <= 0.0:
            raise ValueError(f"coupling matrix must be positive definite, min eig {eigs[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a0", float(eigs[0]))

    @staticmethod
    def for_chain(K: int) -> "RouseMatrix":
        """Identity for ``K=1``; tridiagonal ``(-1, 2, -1)`` for a chain."""
        if K == 1:
            return RouseMatrix(np.array([[1.0]]))
        return RouseMatrix(_chain_rouse(K))


@dataclass(frozen=True)
class CutoffParams:
    """Cut-off pair ``0 < delta < 1 < L`` for the regularized drag and entropy."""

    L: float
    delta: float

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0 < self.L):
            raise ValueError(
                f"cut-off parameters must satisfy 0 < delta < 1 < L, got "
                f"delta={self.delta}, L={self.L}"
            )


# --------------------------------------------------------------------------
# potential and Maxwellian
# --------------------------------------------------------------------------


def fene_potential(s, b: float):
    """Evaluate the FENE potential and its derivative.

    Parameters
    ----------
    s : array_like
        Squared-half-extension ``|q|^2 / 2``; must lie in ``[0, b/2)``.
    b : float
        Extensibility parameter, ``b > 2``.

    Returns
    -------
    U, Uprime : ndarray
        ``U(s) = -(b/2) log(1 - 2s/b)`` and ``U'(s) = (1 - 2s/b)^{-1}``.
    """
    s = np.asarray(s, dtype=float)
    if not b > 2.0:
        raise DomainError(f"b={b}: gamma = b/2 must exceed 1")
    arg = 1.0 - 2.0 * s / b
    if np.any(s < 0.0) or np.any(arg <= 0.0):
        raise DomainError("s must lie in [0, b/2) for the FENE potential")
    U = -(b / 2.0) * np.log(arg)
    Uprime = 1.0 / arg
    return U, Uprime


def maxwellian_normalizer(b: float, d: int) -> float:
    """Normalizing constant ``Z = int_D (1 - |q|^2/b)^{b/2} dq`` over the ball.

    Uses the exact Beta-function reduction
    ``Z = |S^{d-1}| (b^{d/2}/2) B(d/2, b/2 + 1)`` and cross-checks the
    ``d = 2`` closed form ``Z = 2 pi b / (b + 2)``.
    """
    if d not in (2, 3):
        raise DomainError(f"space dimension must be 2 or 3, got {d}")
    if not b > 2.0:
        raise DomainError(f"b={b}: gamma = b/2 must exceed 1")
    surface = 2.0 * math.pi if d == 2 else 4.0 * math.pi
    lbeta = math.lgamma(d / 2.0) + math.lgamma(b / 2.0 + 1.0) - math.lgamma(d / 2.0 + b / 2.0 + 1.0)
    Z = surface * 0.5 * b ** (d / 2.0) * math.exp(lbeta)
    if d == 2:
        closed = 2.0 * math.pi * b / (b + 2.0)
        if abs(Z - closed) > 1e-12 * closed:
            raise InternalConsistencyError(
                f"normalizer mismatch: Beta form {Z!r} vs closed form {closed!r}"
            )
    return Z


def maxwellian_value(r, b: float, Z: float):
    """Normalized Maxwellian ``M = Z^{-1} (1 - r^2/b)^{b/2}`` at radius ``r``."""
    r = np.asarray(r, dtype=float)
    return (1.0 - r * r / b) ** (b / 2.0) / Z


# --------------------------------------------------------------------------
# cut-offs
# --------------------------------------------------------------------------


def cutoff_beta(s, L: float):
    """One-sided cut-off ``beta^L(s) = min(s, L)`` (Lipschitz constant 1)."""
    return np.minimum(np.asarray(s, dtype=float), L)


def cutoff_beta_delta(s, L: float, delta: float):
    """Two-sided cut-off ``beta^L_delta(s) = max(min(s, L), delta)``.

    Coincides with the reciprocal of ``(F^L_delta)''`` everywhere.
    """
    return np.maximum(np.minimum(np.asarray(s, dtype=float), L), delta)


def secant_cutoff_coefficient(a, c, L: float, delta: float):
    """Divided-difference form of ``beta^L_delta`` along a grid edge.

    For endpoint values ``a`` and ``c`` returns

        (c - a) / ( [F^L_delta]'(c) - [F^L_delta]'(a) ),

    which by the mean value theorem equals ``beta^L_delta`` at an
    intermediate value and therefore always lies in ``[delta, L]``.  The
    coincidence limit ``a -> c`` is ``beta^L_delta(a)``.  Using this as the
    edge coefficient of the drag term makes the discrete chain rule

        coeff * ( [F^L_delta]'(c) - [F^L_delta]'(a) ) = c - a

    exact, which is what the discrete free-energy identity needs.
    """
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    _, fa, _ = entropy_eval("FLdelta", a, L=L, delta=delta)
    _, fc, _ = entropy_eval("FLdelta", c, L=L, delta=delta)
    dnum = c - a
    dden = fc - fa
    mid = cutoff_beta_delta(0.5 * (a + c), L, delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.abs(dden) > 1e-300, dnum / np.where(dden == 0.0, 1.0, dden), mid)
    # guard the coincidence limit: tiny increments are dominated by rounding
    tiny = np.abs(dnum) <= 1e-12 * (np.abs(a) + np.abs(c) + 1.0)
    out = np.where(tiny, mid, ratio)
    return np.clip(out, delta, L)


# --------------------------------------------------------------------------
# entropy functions
# --------------------------------------------------------------------------


def _F(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise DomainError("F(s) = s(log s - 1) + 1 requires s >= 0")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = np.where(s > 0.0, s * (np.log(np.where(s > 0.0, s, 1.0)) - 1.0) + 1.0, 1.0)
        d1 = np.where(s > 0.0, np.log(np.where(s > 0.0, s, 1.0)), -np.inf)
        d2 = np.where(s > 0.0, 1.0 / np.where(s > 0.0, s, 1.0), np.inf)
    return val, d1, d2


def _FL(s, L: float):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise DomainError("F^L requires s >= 0")
    base_val, base_d1, base_d2 = _F(np.minimum(s, L))
    upper = s >= L
    val = np.where(upper, (s * s - L * L) / (2.0 * L) + s * (math.log(L) - 1.0) + 1.0, base_val)
    d1 = np.where(upper, s / L + math.log(L) - 1.0, base_d1)
    d2 = np.where(upper, 1.0 / L, base_d2)
    return val, d1, d2


def _FLdelta(s, L: float, delta: float):
    s = np.asarray(s, dtype=float)
    mid = np.clip(s, delta, L)
    val = mid * (np.log(mid) - 1.0) + 1.0
    d1 = np.log(mid)
    d2 = 1.0 / mid
    lower = s <= delta
    upper = s >= L
    val = np.where(lower, (s * s - delta * delta) / (2.0 * delta) + s * (math.log(delta) - 1.0) + 1.0, val)
    d1 = np.where(lower, s / delta + math.log(delta) - 1.0, d1)
    d2 = np.where(lower, 1.0 / delta, d2)
    val = np.where(upper, (s * s - L * L) / (2.0 * L) + s * (math.log(L) - 1.0) + 1.0, val)
    d1 = np.where(upper, s / L + math.log(L) - 1.0, d1)
    d2 = np.where(upper, 1.0 / L, d2)
    return val, d1, d2


def entropy_eval(which: str, s, L: float | None = None, delta: float | None = None):
    """Evaluate an entropy integrand and its first two derivatives.

    Parameters
    ----------
    which : {"F", "FL", "FLdelta"}
        ``F(s) = s(log s - 1) + 1`` with ``F(0) = 1``; ``F^L`` replaces the
        branch above ``L`` by its quadratic ``C^2`` continuation; and
        ``F^L_delta`` additionally regularizes below ``delta`` (defined on
        all of R).  At the branch points the closed-interval convention is
        used: both branches agree in value and first two derivatives there.
    s : array_like
        Evaluation points.  ``F`` and ``F^L`` require ``s >= 0``.
    L, delta : float, optional
        Cut-off parameters where the chosen function needs them.

    Returns
    -------
    value, d1, d2 : ndarray
        Function value and derivatives (``d1 = -inf``, ``d2 = +inf`` at the
        ``s = 0`` endpoint of ``F`` where they are undefined).
    """
    if which == "F":
        return _F(s)
    if which == "FL":
        if L is None or not L > 1.0:
            raise ValueError("F^L needs a cut-off L > 1")
        return _FL(s, L)
    if which == "FLdelta":
        if L is None or delta is None:
            raise ValueError("F^L_delta needs both L and delta")
        CutoffParams(L=L, delta=delta)
        return _FLdelta(s, L, delta)
    raise ValueError(f"unknown entropy function {which!r}")


# --------------------------------------------------------------------------
# curvature of -log M
# --------------------------------------------------------------------------


def bakry_emery_kappa(geometry: ChainGeometry, samples: int = 512, tol: float = 1e-9):
    """Curvature constant of the Maxwellian and a sampled verification.

    ``Hess(-log M) = U'(s) I + U''(s) q q^T`` has eigenvalues ``U'`` (in the
    directions orthogonal to ``q``) and ``U' + U'' |q|^2`` (along ``q``);
    for the FENE potential both are ``>= 1``, so ``kappa = 1``.

    Returns
    -------
    kappa : float
        The curvature lower bound (1 for FENE).
    min_eig : float
        Smallest Hessian eigenvalue over a radial sample of each spring's
        ball; an :class:`InternalConsistencyError` is raised if it drops
        below ``kappa - tol``.
    """
    kappa = 1.0
    min_eig = np.inf
    for b in geometry.b:
        r = np.linspace(0.0, math.sqrt(b), samples + 2)[1:-1]
        s = 0.5 * r * r
        arg = 1.0 - 2.0 * s / b
        Uprime = 1.0 / arg
        Usecond = (2.0 / b) / (arg * arg)
        radial = Uprime + Usecond * r * r
        min_eig = min(min_eig, float(np.min(Uprime)), float(np.min(radial)))
    if min_eig < kappa - tol:
        raise InternalConsistencyError(
            f"sampled Hessian eigenvalue {min_eig} fell below kappa={kappa}"
        )
    return kappa, min_eig
