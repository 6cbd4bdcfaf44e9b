"""Alternating solver with nonmonotone line search.

Each outer iteration: (1) refresh the auxiliary block Z in closed form,
(2) produce candidates (U, V) by one of three block-update schemes under
proximal parameters (mu, sigma), backtracking on those parameters until the
nonmonotone acceptance test holds, (3) commit and update the reference
value (a running convex combination by default, or a windowed max).

The backtracking caps mu at ``mu_max = (alpha + 2 gamma rho) ||Y||^2 + c``;
once the cap is hit, only sigma is escalated (with its own cap from ||U||)
and only V is recomputed.  With the caps in place the acceptance test is
guaranteed to pass within a computable inner-iteration budget; exceeding
that budget signals an implementation bug and raises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .objective import (
    GramCache,
    ProblemSpec,
    RelaxationParams,
    f_lambda,
    snmf_objective_cached,
    z_star,
)
from .operators import FullVectorization

SCHEMES = ("proximal", "prox_linear", "hierarchical")
LINE_SEARCHES = ("average", "max")
_EPS = float(np.finfo(float).eps)

STATUS_CONVERGED = "Converged"
STATUS_ITER_LIMIT = "IterLimit"
STATUS_TIME_LIMIT = "TimeLimit"


class ConfigError(ValueError):
    """An unsupported or inconsistent solver configuration."""


class AlgorithmInvariantError(RuntimeError):
    """A theoretical invariant of the method failed at runtime."""


@dataclass
class SolverConfig:
    scheme: str = "hierarchical"
    line_search: str = "average"
    p_const: float = 0.2
    window: int = 3
    mu_min: float = 1.0
    sigma_min: float = 1.0
    sigma_max0: float = 1e6
    tau: float = 4.0
    c: float = 1e-4
    p_min: float = 0.01
    tol: float = 1e-9
    consec_required: int = 3
    max_iters: int = 1_000_000
    max_time_sec: float = math.inf
    seed: int = 0
    audit: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.line_search not in LINE_SEARCHES:
            raise ConfigError(
                f"unknown line_search {self.line_search!r}; choose from {LINE_SEARCHES}"
            )
        if not (0 < self.sigma_min < self.sigma_max0):
            raise ConfigError("need 0 < sigma_min < sigma_max0")
        if self.mu_min <= 0:
            raise ConfigError("mu_min must be positive")
        if self.tau <= 1:
            raise ConfigError("tau must exceed 1")
        if self.c <= 0:
            raise ConfigError("c must be positive")
        if not (0 < self.p_min < 1):
            raise ConfigError("p_min must lie in (0, 1)")
        if self.line_search == "average" and not (
            self.p_min <= self.p_const <= 1
        ):
            raise ConfigError("need p_min <= p_const <= 1 for average line search")
        if self.line_search == "max" and self.window < 1:
            raise ConfigError("max-type window must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.consec_required < 1:
            raise ConfigError("consec_required must be >= 1")

    def p_next(self, k):
        """Averaging weight for iteration k; constant by default."""
        return self.p_const


@dataclass
class IterationRecord:
    k: int
    elapsed_sec: float
    f_value: float
    ref_value: float
    relobj: float
    sym_gap: float
    stationarity_residual: float
    mu_bar: float
    sigma_bar: float
    inner_iterations: int
    # audit-mode extras (small n only)
    mu_max: float | None = None
    sigma_max: float | None = None
    x: np.ndarray | None = None
    y: np.ndarray | None = None


@dataclass
class SolverState:
    k: int
    X: np.ndarray
    Y: np.ndarray
    R: float
    mu_bar: float
    sigma_bar: float
    f_value: float
    f_history: list = field(default_factory=list)
    # running estimate of the absolute roundoff error carried by R
    R_err: float = 0.0
    err_history: list = field(default_factory=list)
    consec_small: int = 0
    elapsed: float = 0.0


@dataclass
class SolveResult:
    X: np.ndarray
    Y: np.ndarray
    records: list
    status: str
    x0: np.ndarray
    y0: np.ndarray


def spectral_norm_sq(A, max_iters=500, tol=1e-10):
    """lambda_max(A^T A) by power iteration on the r-by-r Gram matrix.

    Deterministic start; the iteration cap is generous so the estimate is
    tight enough for the backtracking caps even with clustered spectra.
    """
    G = np.asarray(A).T @ np.asarray(A)
    r = G.shape[0]
    v = np.full(r, 1.0 / math.sqrt(r))
    lam = 0.0
    for _ in range(max_iters):
        w = G @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ (G @ v))
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            return new
        lam = new
    return lam


def reference_value_update(mode, R_k, f_new, p_next=None, history=(),
                           window=3, p_min=0.0):
    """Next reference value.

    ``average``: convex combination (1 - p) R_k + p f_new with p in
    [p_min, 1].  ``max``: max over the trailing window of objective values,
    including f_new.
    """
    if mode == "average":
        if p_next is None or not (p_min <= p_next <= 1.0):
            raise ValueError(f"p must lie in [{p_min}, 1], got {p_next}")
        return (1.0 - p_next) * R_k + p_next * f_new
    if mode == "max":
        vals = list(history)[-(window):] + [f_new]
        return max(vals)
    raise ValueError(f"unknown reference mode {mode!r}")


class _Kernel:
    """Per-solve scratch holding the block-update formulas.

    Uses the materialized Z for general maps; for the full-vectorization
    (symmetric NMF) case it works matrix-free through the target M and the
    Gram cache, never forming X Y^T or Z.
    """

    def __init__(self, spec: ProblemSpec, params: RelaxationParams,
                 config: SolverConfig, use_fast_path=True):
        self.spec = spec
        self.params = params
        self.config = config
        self.snmf = use_fast_path and isinstance(spec.map, FullVectorization)
        self.bnorm = float(np.linalg.norm(spec.b))
        self.f_err = 0.0
        a, b = params.alpha, params.beta
        self.az = a / (a + b)
        self.bz = b / (a + b)
        if self.snmf:
            self.M = spec.map.adjoint(spec.b)
            self.cache = GramCache(self.M)
            self._zbuf = None
        else:
            self.M = None
            self.cache = None
            self._zbuf = np.empty((spec.n, spec.n))
        if config.scheme == "proximal" and not (
            type(spec.psi).__name__ == "Zero" and type(spec.phi).__name__ == "Zero"
        ):
            raise ConfigError(
                "the proximal scheme has a closed form only for the zero "
                "regularizer; use prox_linear or hierarchical instead"
            )
        if config.scheme == "hierarchical" and not (
            spec.psi.column_separable and spec.phi.column_separable
        ):
            raise ConfigError("hierarchical scheme needs column-separable regularizers")

    # -- outer-iteration setup -------------------------------------------

    def begin_outer(self, X, Y, Z=None):
        self.X = X
        self.Y = Y
        self.Gy = Y.T @ Y
        if Z is not None:
            self.Z = np.asarray(Z, dtype=float)
            self.ZY = self.Z @ Y
        elif self.snmf:
            self.MY = self.M @ Y
            # Z Y without forming Z:  Z = az * X Y^T + bz * M
            self.ZY = self.az * (X @ self.Gy) + self.bz * self.MY
            self.Z = None
        else:
            self.Z = z_star(self.spec, self.params, X, Y, out=self._zbuf)
            self.ZY = self.Z @ Y
        self.ynorm2 = spectral_norm_sq(Y)

    # -- U block -----------------------------------------------------------

    def update_u(self, mu):
        scheme = self.config.scheme
        lam = self.spec.lam
        a = self.params.alpha
        X, Y = self.X, self.Y
        if scheme == "prox_linear":
            G = a * (X @ self.Gy - self.ZY)
            t = 1.0 / (lam + mu)
            return self.spec.psi.prox((lam * Y + mu * X - G) * t, t)
        if scheme == "proximal":
            A = a * self.Gy + (lam + mu) * np.eye(self.spec.r)
            rhs = a * self.ZY + lam * Y + mu * X
            return _solve_rxr(A, rhs)
        # hierarchical
        U = X.copy()
        Gy = self.Gy
        for i in range(self.spec.r):
            d = a * Gy[i, i] + lam + mu
            if d <= 0:
                raise AlgorithmInvariantError(
                    f"nonpositive column curvature {d} in hierarchical U-update"
                )
            p = self.ZY[:, i] - (U @ Gy[:, i] - U[:, i] * Gy[i, i])
            w = (a * p + lam * Y[:, i] + mu * X[:, i]) / d
            U[:, i] = self.spec.psi.prox_column(i, w, 1.0 / d)
        return U

    # -- V block -----------------------------------------------------------

    def update_v(self, U, sigma):
        scheme = self.config.scheme
        lam = self.spec.lam
        a = self.params.alpha
        Y = self.Y
        Gu = U.T @ U
        if self.snmf:
            self._XtU = self.X.T @ U
            self._MtU = self.M.T @ U
            ZtU = self.az * (Y @ self._XtU) + self.bz * self._MtU
        else:
            ZtU = self.Z.T @ U
        if scheme == "prox_linear":
            G = a * (Y @ Gu - ZtU)
            t = 1.0 / (lam + sigma)
            return self.spec.phi.prox((lam * U + sigma * Y - G) * t, t)
        if scheme == "proximal":
            A = a * Gu + (lam + sigma) * np.eye(self.spec.r)
            rhs = a * ZtU + lam * U + sigma * Y
            return _solve_rxr(A, rhs)
        V = Y.copy()
        for i in range(self.spec.r):
            d = a * Gu[i, i] + lam + sigma
            if d <= 0:
                raise AlgorithmInvariantError(
                    f"nonpositive column curvature {d} in hierarchical V-update"
                )
            q = ZtU[:, i] - (V @ Gu[:, i] - V[:, i] * Gu[i, i])
            w = (a * q + lam * U[:, i] + sigma * Y[:, i]) / d
            V[:, i] = self.spec.phi.prox_column(i, w, 1.0 / d)
        return V

    # -- objective ----------------------------------------------------------

    def objective(self, U, V):
        """Objective value plus an estimate of its absolute roundoff error.

        The Gram-trace formula cancels catastrophically near an exact
        factorization (its error floor is ~eps times the trace magnitudes),
        so once the value falls near that floor it is recomputed directly:
        the residual-based form loses accuracy only in proportion to the
        residual itself.  The line search consumes the error estimate
        (``f_err``) as its acceptance slack.
        """
        if self.snmf:
            self.cache.refresh(U, V, X=self.X, Y=self.Y)
            scale = (
                abs(float(np.sum(self.cache.UtU * self.cache.VtV)))
                + 2.0 * abs(float(np.sum(self.cache.MtU * V)))
                + self.cache.normM2
            )
            val = snmf_objective_cached(
                self.cache, self.spec, U, V, self.spec.lam,
                version=self.cache.version,
            )
            if abs(val) > 1e5 * _EPS * scale:
                self.f_err = 64.0 * _EPS * scale
                return val
            val = self._direct_objective(U, V)
        else:
            val = f_lambda(self.spec, U, V)
        if math.isinf(val):
            self.f_err = 0.0
        else:
            self.f_err = 8.0 * _EPS * (
                1.0 + abs(val) + self.bnorm * math.sqrt(2.0 * max(val, 0.0))
            )
        return val

    def _direct_objective(self, U, V):
        reg = self.spec.psi.eval(U) + self.spec.phi.eval(V)
        if math.isinf(reg):
            return math.inf
        D = U @ V.T
        D -= self.M
        val = reg + 0.5 * float(np.sum(D * D))
        if self.spec.lam:
            S = U - V
            val += 0.5 * self.spec.lam * float(np.sum(S * S))
        return val


def _solve_rxr(A, rhs):
    """Solve W A = rhs for W given a symmetric r-by-r system matrix A."""
    try:
        return np.linalg.solve(A, rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise AlgorithmInvariantError(f"singular r-by-r block system: {exc}") from exc


def update_u(scheme, spec, params, X_k, Y_k, Z_k, mu):
    """Candidate U block for one scheme, given the auxiliary block Z_k."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    kern = _Kernel(spec, params, SolverConfig(scheme=scheme), use_fast_path=False)
    kern.begin_outer(np.asarray(X_k, dtype=float), np.asarray(Y_k, dtype=float),
                     Z=Z_k)
    return kern.update_u(mu)


def update_v(scheme, spec, params, U, Y_k, Z_k, sigma):
    """Candidate V block for one scheme, given U and the auxiliary block Z_k."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    U = np.asarray(U, dtype=float)
    kern = _Kernel(spec, params, SolverConfig(scheme=scheme), use_fast_path=False)
    kern.begin_outer(U, np.asarray(Y_k, dtype=float), Z=Z_k)
    return kern.update_v(U, sigma)


def init_state(spec: ProblemSpec, config: SolverConfig, X0=None, Y0=None):
    """Build the initial solver state; entries of a missing start are drawn
    i.i.d. uniform(0, 1) from the seeded generator."""
    rng = np.random.default_rng(config.seed)
    if X0 is None:
        X0 = rng.uniform(size=(spec.n, spec.r))
    if Y0 is None:
        Y0 = rng.uniform(size=(spec.n, spec.r))
    X0 = np.asarray(X0, dtype=float)
    Y0 = np.asarray(Y0, dtype=float)
    f0 = f_lambda(spec, X0, Y0)
    if math.isinf(f0):
        raise ValueError("infeasible start: objective is infinite at (X0, Y0)")
    bnorm = float(np.linalg.norm(spec.b))
    err0 = 8.0 * _EPS * (1.0 + abs(f0) + bnorm * math.sqrt(2.0 * max(f0, 0.0)))
    return SolverState(
        k=0, X=X0, Y=Y0, R=f0, mu_bar=1.0, sigma_bar=1.0,
        f_value=f0, f_history=[f0], R_err=err0, err_history=[err0],
    )


def _work_seconds(n, r, inner):
    """Deterministic estimate of one outer iteration's solver time.

    The trace (and therefore elapsed_sec and the max_time_sec budget) must
    be a pure function of (seed, config, inputs); wall-clock measurements
    would break byte-for-byte reproducibility.  The model charges the
    dominant dense products per inner iteration plus a fixed per-call
    overhead, at a nominal 1 Gflop/s.
    """
    flops = 2.0 * n * n * r + inner * (2.0 * n * n * r + 8.0 * n * r * r)
    return 1.5e-4 * inner + flops * 1e-9


def inner_iteration_budget(mu_max, mu_min, tau):
    """Upper bound on line-search inner iterations per outer iteration."""
    n_mu = math.floor((math.log(mu_max) - math.log(mu_min)) / math.log(tau) + 2.0)
    return 2 * max(1, n_mu) + 2


def step(state: SolverState, spec: ProblemSpec, params: RelaxationParams,
         config: SolverConfig, _kernel=None):
    """Run one outer iteration in place; returns the IterationRecord."""
    from . import diagnostics

    kern = _kernel if _kernel is not None else _Kernel(spec, params, config)
    X, Y = state.X, state.Y
    kern.begin_outer(X, Y)
    coef = params.alpha + 2.0 * params.gamma * params.rho
    mu_max = coef * kern.ynorm2 + config.c
    mu = max(0.1 * state.mu_bar, config.mu_min)
    sigma = min(max(0.1 * state.sigma_bar, config.sigma_min), config.sigma_max0)
    budget = inner_iteration_budget(mu_max, config.mu_min, config.tau)
    sigma_max = math.nan
    inner = 0
    recompute_u = True
    U = None
    while True:
        if recompute_u:
            mu = min(mu, mu_max)
            U = kern.update_u(mu)
        V = kern.update_v(U, sigma)
        inner += 1
        if inner > budget:
            raise AlgorithmInvariantError(
                f"line search exceeded its inner-iteration budget ({budget}) "
                f"at outer iteration {state.k}"
            )
        f_new = kern.objective(U, V)
        dU2 = float(np.sum((U - X) ** 2))
        dV2 = float(np.sum((V - Y) ** 2))
        # slack at the roundoff floor of the two evaluations being compared:
        # near a stationary point the guaranteed decrease is below what
        # floating point resolves, and rejecting would loop to the budget
        accept_slack = state.R_err + kern.f_err + 1e-15 * (1.0 + abs(state.R))
        if not math.isinf(f_new) and (
            f_new - state.R <= -(config.c / 2.0) * (dU2 + dV2) + accept_slack
        ):
            break
        if mu == mu_max:
            sigma_max = coef * spectral_norm_sq(U) + config.c
            sigma = min(config.tau * sigma, sigma_max)
            recompute_u = False
        else:
            mu = config.tau * mu
            sigma = config.tau * sigma
            recompute_u = True

    state.X, state.Y = U, V
    state.mu_bar, state.sigma_bar = mu, sigma
    state.f_value = f_new
    state.f_history.append(f_new)
    state.err_history.append(kern.f_err)
    if len(state.f_history) > config.window + 1:
        del state.f_history[: -(config.window + 1)]
        del state.err_history[: -(config.window + 1)]
    if config.line_search == "average":
        p = config.p_next(state.k + 1)
        R_new = reference_value_update(
            "average", state.R, f_new, p_next=p, p_min=config.p_min
        )
        # average-mode monotonicity invariant: allow only rounding slack
        slack = 1e-12 * (1.0 + abs(state.R)) + accept_slack
        if R_new > state.R + slack:
            raise AlgorithmInvariantError("reference value increased in average mode")
        if f_new > R_new + slack:
            raise AlgorithmInvariantError("objective exceeded the reference value")
        state.R_err = (1.0 - p) * state.R_err + p * kern.f_err
    else:
        R_new = reference_value_update(
            "max", state.R, f_new, history=state.f_history[:-1], window=config.window
        )
        state.R_err = max(state.err_history[-(config.window + 1):])
    state.R = R_new
    state.k += 1
    state.elapsed += _work_seconds(spec.n, spec.r, inner)

    bnorm = float(np.linalg.norm(spec.b))
    rec = IterationRecord(
        k=state.k,
        elapsed_sec=state.elapsed,
        f_value=f_new,
        ref_value=R_new,
        relobj=math.sqrt(max(2.0 * f_new, 0.0)) / bnorm if bnorm else math.nan,
        sym_gap=diagnostics.symmetry_gap(U, V),
        stationarity_residual=diagnostics.stationarity_residual(spec, U, V),
        mu_bar=mu,
        sigma_bar=sigma,
        inner_iterations=inner,
    )
    if config.audit:
        rec.mu_max = mu_max
        rec.sigma_max = sigma_max
        rec.x = U.copy()
        rec.y = V.copy()
    return rec


def solve(spec: ProblemSpec, params: RelaxationParams, config: SolverConfig,
          X0=None, Y0=None) -> SolveResult:
    """Iterate :func:`step` until the relative-change rule holds for
    ``consec_required`` consecutive iterations or a budget runs out."""
    state = init_state(spec, config, X0, Y0)
    kern = _Kernel(spec, params, config)
    x0, y0 = state.X.copy(), state.Y.copy()
    records = []
    status = STATUS_ITER_LIMIT
    f_prev = state.f_value
    while True:
        if state.elapsed >= config.max_time_sec:
            status = STATUS_TIME_LIMIT
            break
        if state.k >= config.max_iters:
            status = STATUS_ITER_LIMIT
            break
        rec = step(state, spec, params, config, _kernel=kern)
        records.append(rec)
        rel_change = abs(state.f_value - f_prev) / (state.f_value + 1.0)
        f_prev = state.f_value
        if rel_change <= config.tol:
            state.consec_small += 1
        else:
            state.consec_small = 0
        if state.consec_small >= config.consec_required:
            status = STATUS_CONVERGED
            break
    return SolveResult(
        X=state.X, Y=state.Y, records=records, status=status, x0=x0, y0=y0
    )
