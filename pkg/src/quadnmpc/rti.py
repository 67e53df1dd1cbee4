"""Real-time-iteration controller: one SQP iteration per sampling instant.

Each control cycle splits into a preparation phase (linearize the whole
horizon at the current guess, assemble and condense the QP - nothing
that needs the new measurement) and a feedback phase (inject the
initial-condition residual, solve one QP, apply the full Newton-type
step, emit the first input, shift the guess). A run-to-convergence mode
iterates SQP steps on a fixed problem under an exact-penalty step
safeguard; trajectory generation uses it offline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .ocp import OcpConfig, ReferenceWindow, build_qp, discrete_dynamics_batch
from .qp import (
    CondensedQp,
    QpNumericalError,
    QpSolution,
    expand,
    kkt_residuals,
    partial_condense,
    solve_riccati_ipm,
    _solve_box_qp_dense,
)


class SqpConvergenceError(RuntimeError):
    """Run-to-convergence SQP hit its iteration limit; carries the residual history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class ControlOutput:
    """One feedback result: applied input, one-step-ahead prediction, diagnostics."""

    u0: np.ndarray
    x_pred: np.ndarray
    X_pred: np.ndarray
    U_pred: np.ndarray
    prep_us: float
    fb_us: float
    qp_iters: int
    qp_linalg_us: float
    kkt_stationarity: float
    step_norm: float
    degraded: bool


def _us() -> float:
    return time.perf_counter_ns() / 1000.0


def _normalize_guess_attitudes(X: np.ndarray) -> None:
    """Project the guess quaternions back onto the unit sphere, in place.

    Large Newton steps on far targets can push the linearization
    attitudes off the sphere, where the linearized thrust direction is
    meaningless; projecting keeps every linearization point physical.
    Identity at any converged iterate with unit quaternions. Degenerate
    rows fall back to level attitude.
    """
    q = X[:, 3:7]
    norms = np.linalg.norm(q, axis=1)
    bad = norms < 1e-6
    if np.any(bad):
        q[bad] = (1.0, 0.0, 0.0, 0.0)
        norms[bad] = 1.0
    q /= norms[:, None]


def _solve_condensed_dense(cond: CondensedQp, tol, max_iters) -> QpSolution:
    """Dense solve of an already fully condensed QP (single block + terminal)."""
    cqp = cond.qp
    st = cqp.stages[0]
    b0 = cqp.x0_residual
    c0 = cqp.defect(0)
    H = st.R + st.B.T @ (cqp.Q_N @ st.B)
    H = 0.5 * (H + H.T)
    g = st.r + st.S @ b0 + st.B.T @ (cqp.Q_N @ (st.A @ b0 + c0) + cqp.q_N)
    U, lam_lo, lam_hi, iters, status, linalg_us = _solve_box_qp_dense(
        H, g, st.lb, st.ub, tol, max_iters
    )
    xN = st.A @ b0 + st.B @ U + c0
    piN = cqp.Q_N @ xN + cqp.q_N
    pi0 = st.Q @ b0 + st.S.T @ U + st.q + st.A.T @ piN
    return QpSolution(
        x=np.array([b0, xN]),
        u=[U],
        pi=np.array([pi0, piN]),
        lam_lo=[lam_lo],
        lam_hi=[lam_hi],
        iters=iters,
        status=status,
        linalg_us=linalg_us,
    )


class RtiController:
    """Receding-horizon tracker performing exactly one QP solve per cycle.

    Not shareable across threads mid-cycle; preparation and feedback of
    the same cycle must run in program order.

    Parameters
    ----------
    cfg : OcpConfig
    solver : "riccati" (partial condensing, block ``block_size``) or
        "dense" (full condensing, dense Cholesky baseline).
    block_size : partial-condensing block size for the riccati pipeline.
    split : when False, ``cycle`` runs preparation and feedback as one
        timed call (identical results, all time attributed to feedback).
    """

    def __init__(
        self,
        cfg: OcpConfig,
        solver: str = "riccati",
        block_size: int = 5,
        qp_tol: float = 1e-8,
        qp_max_iters: int = 50,
        split: bool = True,
    ):
        if solver not in ("riccati", "dense"):
            raise ValueError(f"unknown solver {solver!r}")
        if not 1 <= block_size <= cfg.N:
            raise ValueError("block size must lie within [1, N]")
        self.cfg = cfg
        self.solver = solver
        self.block_size = block_size if solver == "riccati" else cfg.N
        self.qp_tol = qp_tol
        self.qp_max_iters = qp_max_iters
        self.split = split
        self.X = np.zeros((cfg.N + 1, dyn.NX))
        self.U = np.zeros((cfg.N, dyn.NU))
        self.prep_us = 0.0
        self.fb_us = 0.0
        self.qp_solve_count = 0
        self._prepared: CondensedQp | None = None
        self.reset()

    def reset(self, position=(0.0, 0.0, 0.0)) -> None:
        """Cold-start the guess at hover: the unique steady state."""
        self.X[:] = dyn.hover_state(position)
        self.U[:] = self.cfg.params.hover_input()
        self._prepared = None

    def prepare(self, refs: ReferenceWindow) -> None:
        """Linearize, assemble, and condense everything measurement-independent."""
        t0 = _us()
        qp = build_qp(self.X, self.U, refs, self.X[0], self.cfg)
        self._prepared = partial_condense(qp, self.block_size)
        self.prep_us = _us() - t0

    def feedback(self, xhat: np.ndarray) -> ControlOutput:
        """Inject the estimated state, solve the QP, step, and shift the guess."""
        if self._prepared is None:
            raise RuntimeError("feedback called without a prepared cycle")
        t0 = _us()
        cond = self._prepared
        self._prepared = None
        b0 = np.asarray(xhat, dtype=float) - self.X[0]
        cond.qp.x0_residual = b0
        cond.original.x0_residual = b0

        degraded = False
        qp_iters = 0
        qp_linalg_us = 0.0
        kkt_stat = np.nan
        step_norm = np.nan
        try:
            if self.solver == "dense":
                csol = _solve_condensed_dense(cond, self.qp_tol, self.qp_max_iters)
            else:
                csol = solve_riccati_ipm(cond.qp, self.qp_tol, self.qp_max_iters)
            sol = expand(csol, cond)
            self.qp_solve_count += 1
            qp_iters = sol.iters
            qp_linalg_us = sol.linalg_us
            kkt_stat = sol.residuals.stationarity
            dU = np.array(sol.u)
            step_norm = max(np.abs(sol.x).max(), np.abs(dU).max())
            self.X = self.X + sol.x
            self.U = self.U + dU
            _normalize_guess_attitudes(self.X)
        except QpNumericalError:
            degraded = True

        u0 = np.clip(self.U[0], self.cfg.u_lower, self.cfg.u_upper)
        x1 = self.X[1].copy()
        X_pred = self.X.copy()
        U_pred = self.U.copy()

        # warm-start shift: move every stage forward, duplicate the last
        self.X[:-1] = self.X[1:]
        self.U[:-1] = self.U[1:]

        self.fb_us = _us() - t0
        return ControlOutput(
            u0=u0,
            x_pred=x1,
            X_pred=X_pred,
            U_pred=U_pred,
            prep_us=self.prep_us,
            fb_us=self.fb_us,
            qp_iters=qp_iters,
            qp_linalg_us=qp_linalg_us,
            kkt_stationarity=kkt_stat,
            step_norm=step_norm,
            degraded=degraded,
        )

    def cycle(self, xhat: np.ndarray, refs: ReferenceWindow) -> ControlOutput:
        """One full control cycle; honors the preparation/feedback split flag."""
        if self.split:
            self.prepare(refs)
            return self.feedback(xhat)
        t0 = _us()
        self.prepare(refs)
        self.prep_us = 0.0
        out = self.feedback(xhat)
        out.prep_us = 0.0
        out.fb_us = _us() - t0
        self.fb_us = out.fb_us
        return out


@dataclass
class SqpResult:
    X: np.ndarray
    U: np.ndarray
    iterations: int
    kkt_history: list[float] = field(default_factory=list)


def solve_to_convergence(
    cfg: OcpConfig,
    refs: ReferenceWindow,
    xi0: np.ndarray,
    max_sqp_iters: int = 100,
    kkt_tol: float = 1e-6,
    block_size: int = 5,
) -> SqpResult:
    """SQP on a fixed problem, iterated until the nonlinear KKT residual
    falls below ``kkt_tol``.

    Each iteration linearizes at the current guess, solves the banded
    QP, and applies the step. The step length is unit whenever the exact
    L1-penalty merit accepts it and is backtracked otherwise; plain full
    stepping diverges on multi-second maneuvers, while near a solution
    the unit step is always accepted. Convergence is measured on
    gradient stationarity with the latest QP multipliers, shooting
    defects, the initial-condition residual, and bound complementarity.

    Raises :class:`SqpConvergenceError` with the residual history if the
    iteration limit is reached or no acceptable step exists.
    """
    xi0 = np.asarray(xi0, dtype=float)
    N = cfg.N
    X = np.tile(xi0, (N + 1, 1))
    U = np.tile(cfg.params.hover_input(), (N, 1))
    pi = np.zeros((N + 1, dyn.NX))
    lam_lo = [np.zeros(dyn.NU) for _ in range(N)]
    lam_hi = [np.zeros(dyn.NU) for _ in range(N)]

    Wx = cfg.W[: dyn.NX]
    Wu = cfg.W[dyn.NX :]
    state_refs = refs.stages[:, : dyn.NX]
    input_refs = refs.stages[:, dyn.NX :]

    def merit(X, U, sigma):
        dx = X[:N] - state_refs
        du = U - input_refs
        dN = X[N] - refs.terminal
        J = 0.5 * (np.sum(dx * dx * Wx) + np.sum(du * du * Wu) + np.sum(dN * dN * cfg.W_N))
        F = discrete_dynamics_batch(X[:N], U, cfg.dt, cfg.params)
        infeas = np.abs(F - X[1:]).sum() + np.abs(X[0] - xi0).sum()
        return J + sigma * infeas

    def residual(pi, lam_lo, lam_hi):
        qp = build_qp(X, U, refs, xi0, cfg)
        zero_step = QpSolution(
            x=np.zeros((N + 1, dyn.NX)),
            u=[np.zeros(dyn.NU) for _ in range(N)],
            pi=pi,
            lam_lo=lam_lo,
            lam_hi=lam_hi,
            iters=0,
            status="probe",
        )
        return qp, kkt_residuals(qp, zero_step)

    sigma = 1.0
    history = []
    for it in range(max_sqp_iters + 1):
        qp, res = residual(pi, lam_lo, lam_hi)
        history.append(res.max())
        if res.max() <= kkt_tol:
            return SqpResult(X=X, U=U, iterations=it, kkt_history=history)
        if it == max_sqp_iters:
            break
        cond = partial_condense(qp, min(block_size, N))
        sol = expand(solve_riccati_ipm(cond.qp, tol=1e-9, max_iters=60), cond)
        dU = np.array(sol.u)

        # exact-penalty weight must dominate the equality multipliers
        sigma = max(sigma, 2.0 * np.abs(sol.pi).max())
        phi0 = merit(X, U, sigma)
        alpha = 1.0
        accepted = False
        while alpha >= 2.0**-16:
            if merit(X + alpha * sol.x, U + alpha * dU, sigma) < phi0:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise SqpConvergenceError(
                f"line search stalled at KKT residual {res.max():.3e}", history
            )
        X = X + alpha * sol.x
        U = U + alpha * dU
        pi = pi + alpha * (sol.pi - pi)
        lam_lo = [l + alpha * (n - l) for l, n in zip(lam_lo, sol.lam_lo)]
        lam_hi = [l + alpha * (n - l) for l, n in zip(lam_hi, sol.lam_hi)]
    raise SqpConvergenceError(
        f"SQP did not reach KKT tolerance {kkt_tol:g} in {max_sqp_iters} iterations "
        f"(last residual {history[-1]:.3e})",
        history,
    )
