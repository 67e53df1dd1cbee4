"""Multiple-shooting optimal-control data for the quadrotor tracker.

The tracking objective penalizes deviations of the stacked residual
``(state, input)`` from a 17-dim stage reference and of the terminal
state from a 13-dim terminal reference, in weighted least squares. With
this residual choice the Gauss-Newton Hessian blocks are constant
diagonal matrices, so each stage linearization only has to propagate
dynamics sensitivities through the RK4 step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .qp import OcpQp, QpStage

# stage weight: position, quaternion, body velocity, body rate, rotor speeds
DEFAULT_STATE_WEIGHT = np.array(
    [120.0, 100.0, 100.0, 1e-3, 1e-3, 1e-3, 1e-3, 0.7, 1.0, 4.0, 1e-5, 1e-5, 10.0]
)
DEFAULT_INPUT_WEIGHT = np.full(4, 6e-2)
TERMINAL_WEIGHT_FACTOR = 50.0

STAGE_REF_DIM = dyn.NX + dyn.NU


def _default_stage_weight():
    return np.concatenate([DEFAULT_STATE_WEIGHT, DEFAULT_INPUT_WEIGHT])


def _default_terminal_weight():
    return TERMINAL_WEIGHT_FACTOR * DEFAULT_STATE_WEIGHT


@dataclass
class OcpConfig:
    """Horizon, stage duration, diagonal weights, and input bounds."""

    N: int = 50
    dt: float = 0.015
    W: np.ndarray = field(default_factory=_default_stage_weight)
    W_N: np.ndarray = field(default_factory=_default_terminal_weight)
    u_lower: np.ndarray = field(default_factory=lambda: np.zeros(4))
    u_upper: np.ndarray = field(default_factory=lambda: np.full(4, 22.0))
    params: dyn.QuadrotorParams = field(default_factory=dyn.QuadrotorParams)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.W_N = np.asarray(self.W_N, dtype=float)
        self.u_lower = np.asarray(self.u_lower, dtype=float)
        self.u_upper = np.asarray(self.u_upper, dtype=float)
        if self.N < 1:
            raise ValueError("horizon length must be at least 1")
        if self.dt <= 0:
            raise ValueError("stage duration must be positive")
        if self.W.shape != (STAGE_REF_DIM,) or np.any(self.W <= 0):
            raise ValueError("stage weight must be 17 strictly positive entries")
        if self.W_N.shape != (dyn.NX,) or np.any(self.W_N <= 0):
            raise ValueError("terminal weight must be 13 strictly positive entries")
        if self.u_lower.shape != (4,) or self.u_upper.shape != (4,):
            raise ValueError("input bounds must have 4 entries")
        if np.any(self.u_lower >= self.u_upper):
            raise ValueError("input bounds must satisfy lower < upper elementwise")

    @property
    def horizon_seconds(self) -> float:
        return self.N * self.dt


@dataclass
class ReferenceWindow:
    """Per-cycle references: one 17-dim row per stage plus a 13-dim terminal."""

    stages: np.ndarray
    terminal: np.ndarray

    def __post_init__(self):
        self.stages = np.atleast_2d(np.asarray(self.stages, dtype=float))
        self.terminal = np.asarray(self.terminal, dtype=float)
        if self.stages.shape[1] != STAGE_REF_DIM or self.terminal.shape != (dyn.NX,):
            raise ValueError("reference window has wrong row dimensions")


def hover_reference_window(cfg: OcpConfig, p=(0.0, 0.0, 0.0)) -> ReferenceWindow:
    """Constant window regulating to a hover point with hover input."""
    row = np.concatenate([dyn.hover_state(p), cfg.params.hover_input()])
    return ReferenceWindow(
        stages=np.tile(row, (cfg.N, 1)), terminal=row[: dyn.NX].copy()
    )


# ---------------------------------------------------------------------------
# discrete dynamics and sensitivities
# ---------------------------------------------------------------------------


def discrete_dynamics(
    xi: np.ndarray, u: np.ndarray, dt: float, params: dyn.QuadrotorParams
) -> np.ndarray:
    """One ERK4 step of the continuous dynamics over ``dt``.

    No quaternion renormalization: the prediction model must stay a
    smooth function of the state for consistent sensitivities.
    """
    if dt <= 0:
        raise ValueError("stage duration must be positive")
    return dyn.erk4_step(lambda x: dyn.ode_rhs(x, u, params), xi, dt)


def discrete_dynamics_batch(XI, U, dt, params):
    K1 = dyn.ode_rhs_batch(XI, U, params)
    K2 = dyn.ode_rhs_batch(XI + 0.5 * dt * K1, U, params)
    K3 = dyn.ode_rhs_batch(XI + 0.5 * dt * K2, U, params)
    K4 = dyn.ode_rhs_batch(XI + dt * K3, U, params)
    return XI + (dt / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)


def discrete_jacobians_batch(XI, U, dt, params):
    """Exact sensitivities of the RK4 step, chained through its four stages.

    Returns ``(X_next, A, B)`` with shapes (B, 13), (B, 13, 13), (B, 13, 4).
    """
    I = np.eye(dyn.NX)
    h = dt

    K1 = dyn.ode_rhs_batch(XI, U, params)
    J1x, J1u = dyn.ode_jacobians_batch(XI, U, params)

    X2 = XI + 0.5 * h * K1
    K2 = dyn.ode_rhs_batch(X2, U, params)
    f2x, f2u = dyn.ode_jacobians_batch(X2, U, params)
    J2x = f2x @ (I + 0.5 * h * J1x)
    J2u = f2x @ (0.5 * h * J1u) + f2u

    X3 = XI + 0.5 * h * K2
    K3 = dyn.ode_rhs_batch(X3, U, params)
    f3x, f3u = dyn.ode_jacobians_batch(X3, U, params)
    J3x = f3x @ (I + 0.5 * h * J2x)
    J3u = f3x @ (0.5 * h * J2u) + f3u

    X4 = XI + h * K3
    K4 = dyn.ode_rhs_batch(X4, U, params)
    f4x, f4u = dyn.ode_jacobians_batch(X4, U, params)
    J4x = f4x @ (I + h * J3x)
    J4u = f4x @ (h * J3u) + f4u

    X_next = XI + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)
    A = I + (h / 6.0) * (J1x + 2 * J2x + 2 * J3x + J4x)
    B = (h / 6.0) * (J1u + 2 * J2u + 2 * J3u + J4u)
    return X_next, A, B


def discrete_jacobians(xi, u, dt, params):
    """Single-point variant of :func:`discrete_jacobians_batch`."""
    Xn, A, B = discrete_jacobians_batch(xi[None, :], u[None, :], dt, params)
    return Xn[0], A[0], B[0]


# ---------------------------------------------------------------------------
# stage linearization and QP assembly
# ---------------------------------------------------------------------------


@dataclass
class StageLinearization:
    """Affine prediction model and quadratic cost of one shooting stage.

    ``d`` is the affine constant ``F(xbar, ubar) - A xbar - B ubar`` of
    the linearized prediction model; ``x_next`` keeps the nonlinear
    prediction itself for defect bookkeeping.
    """

    A: np.ndarray
    B: np.ndarray
    d: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    q: np.ndarray
    r: np.ndarray
    g_lower: np.ndarray
    g_upper: np.ndarray
    x_next: np.ndarray


def linearize_stage(
    xbar: np.ndarray, ubar: np.ndarray, ref: np.ndarray, cfg: OcpConfig
) -> StageLinearization:
    """Linearize one stage of the tracking problem at ``(xbar, ubar)``.

    The residual is the identity in ``(state, input)``, so the Hessian
    blocks are the constant diagonal weights and the gradients are the
    weighted deviations from the stage reference.
    """
    x_next, A, B = discrete_jacobians(xbar, ubar, cfg.dt, cfg.params)
    ref = np.asarray(ref, dtype=float)
    Wx = cfg.W[: dyn.NX]
    Wu = cfg.W[dyn.NX :]
    return StageLinearization(
        A=A,
        B=B,
        d=x_next - A @ xbar - B @ ubar,
        Q=np.diag(Wx),
        R=np.diag(Wu),
        q=Wx * (xbar - ref[: dyn.NX]),
        r=Wu * (ubar - ref[dyn.NX :]),
        g_lower=cfg.u_lower - ubar,
        g_upper=cfg.u_upper - ubar,
        x_next=x_next,
    )


def build_qp(
    X: np.ndarray, U: np.ndarray, refs: ReferenceWindow, xhat: np.ndarray, cfg: OcpConfig
) -> OcpQp:
    """Assemble the banded QP for a trajectory guess ``(X, U)``.

    ``X`` holds N+1 states, ``U`` N inputs; ``xhat`` enters only through
    the initial-condition residual. Sensitivities for all stages are
    propagated in one vectorized sweep.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    N = cfg.N
    if X.shape != (N + 1, dyn.NX):
        raise ValueError(f"state guess must have shape {(N + 1, dyn.NX)}, got {X.shape}")
    if U.shape != (N, dyn.NU):
        raise ValueError(f"input guess must have shape {(N, dyn.NU)}, got {U.shape}")
    if refs.stages.shape[0] != N:
        raise ValueError("reference window does not match the horizon")
    xhat = np.asarray(xhat, dtype=float)
    if xhat.shape != (dyn.NX,):
        raise ValueError("estimated state must be 13-dim")

    X_next, A, B = discrete_jacobians_batch(X[:-1], U, cfg.dt, cfg.params)
    Wx = cfg.W[: dyn.NX]
    Wu = cfg.W[dyn.NX :]
    Qd = np.diag(Wx)
    Rd = np.diag(Wu)
    d_all = X_next - np.einsum("nij,nj->ni", A, X[:-1]) - np.einsum("nij,nj->ni", B, U)
    q_all = Wx * (X[:-1] - refs.stages[:, : dyn.NX])
    r_all = Wu * (U - refs.stages[:, dyn.NX :])

    stages = []
    for i in range(N):
        stages.append(
            QpStage(
                A=A[i],
                B=B[i],
                d=d_all[i],
                Q=Qd.copy(),
                R=Rd.copy(),
                q=q_all[i],
                r=r_all[i],
                lb=cfg.u_lower - U[i],
                ub=cfg.u_upper - U[i],
            )
        )
    return OcpQp(
        stages=stages,
        Q_N=np.diag(cfg.W_N),
        q_N=cfg.W_N * (X[N] - refs.terminal),
        x0_residual=xhat - X[0],
        xbar=X.copy(),
        ubar=[U[i].copy() for i in range(N)],
    )
