"""Problem bundle, objective and potential evaluation, and the explicit
auxiliary-block formula.

The potential adds one auxiliary matrix Z that splits the bilinear product
from the measurement map.  With ``A A* = I`` and ``1/alpha + 1/beta = 1``,
plugging the stationary Z of :func:`z_star` back into the potential
reproduces the original objective exactly; tests check that identity
numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import operators
from .operators import LinearMap
from .regularizers import Regularizer


@dataclass(frozen=True)
class ProblemSpec:
    """One factorization instance: map, target vector, regularizers, lam, sizes."""

    map: LinearMap
    b: np.ndarray
    psi: Regularizer
    phi: Regularizer
    lam: float
    n: int
    r: int

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if self.r > self.n:
            raise ValueError(f"rank r={self.r} exceeds n={self.n}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.map.n != self.n:
            raise ValueError(f"map is for n={self.map.n}, spec has n={self.n}")
        if self.b.shape != (self.map.q,):
            raise ValueError(
                f"b has shape {self.b.shape}, expected ({self.map.q},)"
            )

    def check_shapes(self, X, Y):
        for name, M in (("X", X), ("Y", Y)):
            if np.shape(M) != (self.n, self.r):
                raise ValueError(
                    f"{name} has shape {np.shape(M)}, expected ({self.n}, {self.r})"
                )


@dataclass(frozen=True)
class RelaxationParams:
    """Relaxation scalars (alpha, beta, gamma, rho) with 1/alpha + 1/beta = 1."""

    alpha: float
    beta: float
    gamma: float
    rho: float

    def __post_init__(self):
        a, b = self.alpha, self.beta
        if a == 0 or b == 0 or abs(1.0 / a + 1.0 / b - 1.0) > 1e-12:
            raise ValueError(
                f"need 1/alpha + 1/beta = 1; got alpha={a}, beta={b}"
            )
        gmin = operators.gamma_min(a, b)
        if self.gamma < gmin - 1e-12:
            raise ValueError(f"gamma={self.gamma} below admissible minimum {gmin}")
        want_rho = operators.rho(a, b)
        if abs(self.rho - want_rho) > 1e-12 * max(1.0, want_rho):
            raise ValueError(f"rho={self.rho} inconsistent; expected {want_rho}")

    @classmethod
    def from_alpha(cls, alpha, gamma=None):
        """Derive beta = alpha/(alpha-1) and the default gamma and rho."""
        if alpha in (0.0, 1.0):
            raise ValueError("alpha must differ from 0 and 1")
        beta = alpha / (alpha - 1.0)
        if gamma is None:
            gamma = operators.gamma_min(alpha, beta)
        return cls(alpha=alpha, beta=beta, gamma=float(gamma),
                   rho=operators.rho(alpha, beta))


def f_lambda(spec: ProblemSpec, X, Y) -> float:
    """Objective: Psi(X) + Phi(Y) + 0.5 ||A(X Y^T) - b||^2 + lam/2 ||X - Y||_F^2."""
    spec.check_shapes(X, Y)
    reg = spec.psi.eval(X) + spec.phi.eval(Y)
    if math.isinf(reg):
        return math.inf
    resid = spec.map.apply(X @ Y.T) - spec.b
    val = reg + 0.5 * float(resid @ resid)
    if spec.lam:
        D = X - Y
        val += 0.5 * spec.lam * float(np.sum(D * D))
    return val


def theta(spec: ProblemSpec, params: RelaxationParams, X, Y, Z) -> float:
    """Potential: the objective with the bilinear term split through Z."""
    spec.check_shapes(X, Y)
    Z = np.asarray(Z)
    if Z.shape != (spec.n, spec.n):
        raise ValueError(f"Z has shape {Z.shape}, expected ({spec.n}, {spec.n})")
    reg = spec.psi.eval(X) + spec.phi.eval(Y)
    if math.isinf(reg):
        return math.inf
    S = X @ Y.T - Z
    resid = spec.map.apply(Z) - spec.b
    val = reg + 0.5 * params.alpha * float(np.sum(S * S))
    val += 0.5 * params.beta * float(resid @ resid)
    if spec.lam:
        D = X - Y
        val += 0.5 * spec.lam * float(np.sum(D * D))
    return val


def z_star(spec: ProblemSpec, params: RelaxationParams, X, Y, out=None):
    """Stationary auxiliary block:
    ``(I - beta/(alpha+beta) A* A)(X Y^T) + beta/(alpha+beta) A*(b)``.

    ``out`` may supply a reusable (n, n) buffer.
    """
    spec.check_shapes(X, Y)
    a, b = params.alpha, params.beta
    if a + b == 0:
        raise ZeroDivisionError("alpha + beta must be nonzero")
    c = b / (a + b)
    P = np.matmul(X, Y.T, out=out)
    Z = P - c * spec.map.gram_apply(P)
    Z += c * spec.map.adjoint(spec.b)
    return Z


def relobj(spec: ProblemSpec, X, Y) -> float:
    """Normalized objective ``sqrt(2 F) / ||b||``.

    When the map is the full vectorization of a target M, the denominator
    equals ||M||_F; for other maps ||b|| is the natural generalization.
    """
    f = f_lambda(spec, X, Y)
    if math.isinf(f):
        raise ValueError("objective is infinite at (X, Y)")
    bnorm = float(np.linalg.norm(spec.b))
    if bnorm == 0:
        raise ZeroDivisionError("||b|| = 0; relative objective undefined")
    return math.sqrt(max(2.0 * f, 0.0)) / bnorm


class GramCache:
    """Gram-product cache for the symmetric-NMF fast path.

    Holds the small products needed to evaluate the objective without
    forming U V^T.  ``refresh`` advances a version counter; readers must
    pass the version they expect so staleness is an error, not a silent
    wrong answer.
    """

    def __init__(self, M):
        self.M = np.asarray(M, dtype=float)
        self.normM2 = float(np.sum(self.M * self.M))
        self.version = 0
        self.UtU = None
        self.VtV = None
        self.XtU = None
        self.YtV = None
        self.MtU = None
        self.UtV = None

    def refresh(self, U, V, X=None, Y=None):
        """Recompute all products for the pair (U, V); returns the new version.

        X and Y, when given, are the previous iterates (for step-size norms).
        """
        self.UtU = U.T @ U
        self.VtV = V.T @ V
        self.MtU = self.M.T @ U
        self.UtV = U.T @ V
        self.XtU = X.T @ U if X is not None else None
        self.YtV = Y.T @ V if Y is not None else None
        self.version += 1
        return self.version


def snmf_objective_cached(cache: GramCache, spec: ProblemSpec, U, V, lam,
                          version=None) -> float:
    """Objective via the trace identity
    ``||U V^T - M||_F^2 = tr((U^T U)(V^T V)) - 2 tr((M^T U) V) + ||M||_F^2``,
    never forming U V^T.
    """
    if version is not None and version != cache.version:
        raise RuntimeError(
            f"stale GramCache: have version {cache.version}, expected {version}"
        )
    reg = spec.psi.eval(U) + spec.phi.eval(V)
    if math.isinf(reg):
        return math.inf
    fit = (
        float(np.sum(cache.UtU * cache.VtV))
        - 2.0 * float(np.sum(cache.MtU * V))
        + cache.normM2
    )
    val = reg + 0.5 * fit
    if lam:
        sym = (
            float(np.trace(cache.UtU))
            - 2.0 * float(np.trace(cache.UtV))
            + float(np.trace(cache.VtV))
        )
        val += 0.5 * lam * sym
    return val


def snmf_spec(M, r, lam, psi=None, phi=None) -> ProblemSpec:
    """Convenience constructor: full-vectorization map with b = vec(M)."""
    from .regularizers import NonnegIndicator

    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError(f"M must be square, got shape {M.shape}")
    amap = operators.FullVectorization(n)
    return ProblemSpec(
        map=amap,
        b=amap.apply(M),
        psi=psi if psi is not None else NonnegIndicator(),
        phi=phi if phi is not None else NonnegIndicator(),
        lam=float(lam),
        n=n,
        r=int(r),
    )
