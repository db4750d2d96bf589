"""Nemytskii nonlinearity, taming, and the three time-stepping schemes.

All schemes march the Galerkin system

    dX + A(AX + P_N F(X)) dt = P_N dW,    F(u) = u^3 - u

in coefficient space.  The exponential schemes apply the exact semigroup
factor e^{-tau lambda^2} per mode and the integrated drift weight
(1 - e^{-tau lambda^2})/lambda; the tamed variant damps the drift by
1/(1 + tau ||P_N F(X)||).  Backward Euler solves the fully implicit system
with a simplified Newton iteration whose exactly factored diagonal linear
part is the iteration matrix.

State arrays are "full" coefficient arrays with the mean in slot 0.  The
mean slot has semigroup factor 1 and drift/noise weight 0, so the mean of
the initial data is conserved bit-exactly by every scheme.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .noise import NoisePath
from .spectral import (
    BasisSpec,
    CollocationTransform,
    SpectralField,
    default_dealias_grid,
    min_dealias_grid,
    phi_factors,
    semigroup_factors,
)

__all__ = [
    "Scheme",
    "SchemeConfig",
    "StepState",
    "SolverError",
    "Stepper",
    "DIVERGENCE_LIMIT",
    "nemytskii_F",
    "taming_factor",
    "step_tamed",
    "step_plain",
    "step_backward_euler",
    "evolve",
]

# coefficients beyond this magnitude mark a trajectory as diverged
DIVERGENCE_LIMIT = 1e150


class Scheme(enum.Enum):
    TAMED_EXP_EULER = "tamed"
    PLAIN_EXP_EULER = "plain"
    BACKWARD_EULER = "bem"


class SolverError(RuntimeError):
    """Newton non-convergence or a fatal (tamed/implicit) divergence."""

    def __init__(self, message, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SchemeConfig:
    T: float
    M: int
    scheme: Scheme = Scheme.TAMED_EXP_EULER
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    nonlinearity: bool = True
    n_grid: Optional[int] = None

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"T must be > 0, got {self.T}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if not 0 < self.newton_tol <= 1e-6:
            raise ValueError(f"newton_tol must be in (0, 1e-6], got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ValueError(f"newton_max_iter must be >= 1, got {self.newton_max_iter}")

    @property
    def tau(self) -> float:
        return self.T / self.M


@dataclass
class StepState:
    field: SpectralField
    step_index: int = 0
    diverged: bool = False
    diverged_at: Optional[int] = None


def _resolve_grid(basis: BasisSpec, n_grid: Optional[int]) -> int:
    need = min_dealias_grid(basis.N)
    if n_grid is None:
        return default_dealias_grid(basis.N)
    if n_grid < need:
        raise ValueError(
            f"n_grid={n_grid} aliases cubic products for N={basis.N}; need >= {need}"
        )
    return int(n_grid)


class Stepper:
    """Single-step maps for a fixed (basis, tau, scheme), batched over rows.

    Buffers are preallocated for ``batch`` rows; the hot path performs no
    array allocation.  States and increments are full coefficient arrays
    of shape (batch, (N+1)^dim) with the mean in slot 0 (increments carry
    0 there).
    """

    def __init__(
        self,
        basis: BasisSpec,
        tau: float,
        scheme: Scheme,
        batch: int = 1,
        *,
        nonlinearity: bool = True,
        n_grid: Optional[int] = None,
        newton_tol: float = 1e-12,
        newton_max_iter: int = 50,
    ):
        if tau <= 0:
            raise ValueError(f"tau must be > 0, got {tau}")
        self.basis = basis
        self.tau = float(tau)
        self.scheme = scheme
        self.batch = int(batch)
        self.nonlinearity = bool(nonlinearity)
        self.newton_tol = float(newton_tol)
        self.newton_max_iter = int(newton_max_iter)
        self.last_newton_iters = 0

        lam = basis.eigenvalues()
        P = 1 + basis.n_modes
        self.n_full = P
        self._lam = np.concatenate(([0.0], lam))
        self._semigroup = np.concatenate(([1.0], semigroup_factors(basis, tau)))
        self._phi = np.concatenate(([0.0], phi_factors(basis, tau)))
        self._bem_diag = np.concatenate(([1.0], 1.0 + tau * lam * lam))

        b = self.batch
        self._F = np.zeros((b, P))
        self._tmp = np.empty((b, P))
        self._nrm = np.empty(b)
        if self.nonlinearity:
            self.transform = CollocationTransform(basis, _resolve_grid(basis, n_grid))
            gshape = self.transform.grid_shape(b)
            self._vals = np.empty(gshape)
            self._cube = np.empty(gshape)
            if basis.dim == 2:
                K = basis.N + 1
                self._t2a = np.empty((b, K, self.transform.n_grid))
            else:
                self._t2a = None
        else:
            self.transform = None

    def f_full(self, S: np.ndarray) -> np.ndarray:
        """P_N P F(state) into the shared buffer; slot 0 forced to zero."""
        tr = self.transform
        v = tr.values_full(S, out=self._vals, tmp=self._t2a)
        c = self._cube
        with np.errstate(over="ignore", invalid="ignore"):
            np.multiply(v, v, out=c)
            np.multiply(c, v, out=c)
            np.subtract(c, v, out=c)
            tr.modes_full(c, out=self._F, tmp=self._t2a)
        self._F[:, 0] = 0.0
        return self._F

    def _row_norms(self, A: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            np.einsum("bk,bk->b", A, A, out=self._nrm)
            return np.sqrt(self._nrm, out=self._nrm)

    def step(self, S: np.ndarray, dW: np.ndarray) -> np.ndarray:
        if self.scheme is Scheme.TAMED_EXP_EULER:
            return self._step_exp(S, dW, tamed=True)
        if self.scheme is Scheme.PLAIN_EXP_EULER:
            return self._step_exp(S, dW, tamed=False)
        return self.step_bem(S, dW)

    def _step_exp(self, S: np.ndarray, dW: np.ndarray, tamed: bool) -> np.ndarray:
        tmp = self._tmp
        if self.nonlinearity:
            F = self.f_full(S)
            np.multiply(F, self._phi, out=tmp)
            if tamed:
                nrm = self._row_norms(F)
                with np.errstate(over="ignore", invalid="ignore"):
                    tf = 1.0 / (1.0 + self.tau * nrm)
                    tmp *= tf[:, None]
        with np.errstate(over="ignore", invalid="ignore"):
            S += dW
            S *= self._semigroup
            if self.nonlinearity:
                S -= tmp
        return S

    def _bem_residual(self, X: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        if self.nonlinearity:
            F = self.f_full(X)
            return self._bem_diag * X + (self.tau * self._lam) * F - rhs
        return self._bem_diag * X - rhs

    def _bem_iteration_matrix(self, X: np.ndarray) -> np.ndarray:
        """Diagonal simplified-Newton matrix: the exactly factored linear part
        plus the spatial average of the F-Jacobian, tau lam (3 avg(u^2) - 1)."""
        if not self.nonlinearity:
            return np.broadcast_to(self._bem_diag, X.shape)
        c0 = 3.0 * np.einsum("bk,bk->b", X, X) - 1.0
        return self._bem_diag + (self.tau * self._lam) * c0[:, None]

    def step_bem(self, S: np.ndarray, dW: np.ndarray) -> np.ndarray:
        rhs = S + dW
        X = S.copy()
        active = np.ones(len(S), dtype=bool)
        iters = 0
        R = self._bem_residual(X, rhs)
        res = np.sqrt(np.einsum("bk,bk->b", R, R))
        active &= ~(res < self.newton_tol)
        while active.any():
            if iters == self.newton_max_iter:
                raise SolverError(
                    f"backward Euler Newton iteration did not converge in "
                    f"{self.newton_max_iter} iterations "
                    f"(residual {np.max(res[active]):.3e})",
                    residual=float(np.max(res[active])),
                )
            step = R / self._bem_iteration_matrix(X)
            step[~active] = 0.0
            # simplified Newton with per-row backtracking: halve the step until
            # the residual norm decreases (monotone safeguard)
            omega = np.ones(len(S))
            for _ in range(30):
                Xt = X - omega[:, None] * step
                Rt = self._bem_residual(Xt, rhs)
                rt = np.sqrt(np.einsum("bk,bk->b", Rt, Rt))
                good = ~active | (rt <= res * (1.0 - 0.1 * omega) + self.newton_tol)
                if good.all():
                    break
                omega[~good] *= 0.5
            X = Xt
            R, res = Rt, rt
            active &= ~(res < self.newton_tol)
            iters += 1
        self.last_newton_iters = iters
        S[...] = X
        return S

    def diverged_rows(self, S: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            m = np.abs(S).max(axis=1)
        return ~np.isfinite(m) | (m > DIVERGENCE_LIMIT)


# ---------------------------------------------------------------------------
# single-field operations


def nemytskii_F(v: SpectralField, n_grid: Optional[int] = None) -> SpectralField:
    """P_N P F(v): pointwise u^3 - u on the collocation grid, mean removed,
    truncated to the basis.  Exact (alias-free) for n_grid >= 2N + 1."""
    basis = v.basis
    tr = CollocationTransform(basis, _resolve_grid(basis, n_grid))
    vals = tr.values(np.array([v.mean]), v.coeffs[None])
    with np.errstate(over="ignore", invalid="ignore"):
        f = vals * vals * vals - vals
    full = tr.modes_full(f)
    return SpectralField(basis, 0.0, full[0, 1:])


def taming_factor(Fv: SpectralField, tau: float) -> float:
    """Damping 1/(1 + tau ||P_N F||), in (0, 1]."""
    return 1.0 / (1.0 + tau * Fv.norm())


def _state_array(field: SpectralField) -> np.ndarray:
    S = np.empty((1, 1 + field.basis.n_modes))
    S[0, 0] = field.mean
    S[0, 1:] = field.coeffs
    return S


def _increment_array(dW: SpectralField) -> np.ndarray:
    if dW.mean != 0.0:
        raise ValueError("noise increments must have zero mean component")
    inc = np.empty((1, 1 + dW.basis.n_modes))
    inc[0, 0] = 0.0
    inc[0, 1:] = dW.coeffs
    return inc


def _one_step(
    state: StepState, dW: SpectralField, tau: float, scheme: Scheme, **kw
) -> StepState:
    basis = state.field.basis
    stepper = Stepper(basis, tau, scheme, batch=1, **kw)
    S = stepper.step(_state_array(state.field), _increment_array(dW))
    out = SpectralField(basis, S[0, 0], S[0, 1:].copy())
    bad = bool(stepper.diverged_rows(S)[0])
    return StepState(
        field=out,
        step_index=state.step_index + 1,
        diverged=state.diverged or bad,
        diverged_at=state.diverged_at
        if state.diverged_at is not None
        else (state.step_index + 1 if bad else None),
    )


def step_tamed(
    state: StepState,
    dW: SpectralField,
    tau: float,
    n_grid: Optional[int] = None,
    nonlinearity: bool = True,
) -> StepState:
    return _one_step(
        state, dW, tau, Scheme.TAMED_EXP_EULER, n_grid=n_grid, nonlinearity=nonlinearity
    )


def step_plain(
    state: StepState,
    dW: SpectralField,
    tau: float,
    n_grid: Optional[int] = None,
    nonlinearity: bool = True,
) -> StepState:
    """Non-tamed exponential Euler; divergence is recorded, never raised."""
    return _one_step(
        state, dW, tau, Scheme.PLAIN_EXP_EULER, n_grid=n_grid, nonlinearity=nonlinearity
    )


def step_backward_euler(
    state: StepState,
    dW: SpectralField,
    tau: float,
    n_grid: Optional[int] = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    nonlinearity: bool = True,
) -> StepState:
    """Solve (I + tau A^2)X' + tau A P_N F(X') = X + P_N dW."""
    return _one_step(
        state,
        dW,
        tau,
        Scheme.BACKWARD_EULER,
        n_grid=n_grid,
        nonlinearity=nonlinearity,
        newton_tol=tol,
        newton_max_iter=max_iter,
    )


def evolve(
    X0: SpectralField,
    path: NoisePath,
    cfg: SchemeConfig,
    record_trajectory: bool = False,
):
    """March cfg.M steps of the selected scheme along the given noise path.

    The path must refine the scheme grid (M_fine divisible by cfg.M).  A
    diverged tamed or backward Euler trajectory raises SolverError; the plain
    scheme records the first divergent step and keeps propagating (Inf/NaN
    are data for the blowup study).
    """
    basis = X0.basis
    if path.spec.basis != basis:
        raise ValueError("path basis does not match initial data")
    if abs(path.T - cfg.T) > 1e-12 * max(1.0, cfg.T):
        raise ValueError(f"path horizon {path.T} != scheme horizon {cfg.T}")
    inc = path.increment_array(cfg.M)
    stepper = Stepper(
        basis,
        cfg.tau,
        cfg.scheme,
        batch=1,
        nonlinearity=cfg.nonlinearity,
        n_grid=cfg.n_grid,
        newton_tol=cfg.newton_tol,
        newton_max_iter=cfg.newton_max_iter,
    )
    S = _state_array(X0)
    dW = np.zeros((1, stepper.n_full))
    diverged_at = None
    trajectory = [X0] if record_trajectory else None
    for m in range(cfg.M):
        dW[0, 1:] = inc[m]
        S = stepper.step(S, dW)
        if diverged_at is None and stepper.diverged_rows(S)[0]:
            diverged_at = m + 1
            if cfg.scheme is not Scheme.PLAIN_EXP_EULER:
                raise SolverError(
                    f"{cfg.scheme.value} scheme diverged at step {m + 1}"
                )
        if record_trajectory:
            trajectory.append(SpectralField(basis, S[0, 0], S[0, 1:].copy()))
    final = StepState(
        field=SpectralField(basis, S[0, 0], S[0, 1:].copy()),
        step_index=cfg.M,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
    )
    if record_trajectory:
        return final, trajectory
    return final
