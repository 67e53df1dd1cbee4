"""Stage-banded optimal-control QPs and their interior-point solvers.

The problem class is

    min   sum_i  0.5 w_i' H_i w_i + h_i' w_i      w_i = (x_i, u_i), w_N = x_N
    s.t.  x_0 = b0
          x_{i+1} = A_i x_i + B_i u_i + c_i        i = 0..N-1
          lb_i <= u_i <= ub_i                      i = 0..N-1

with H_i = [[Q_i, S_i'], [S_i, R_i]] and h_i = (q_i, r_i). Two solvers are
provided: a Riccati-recursion primal-dual interior-point method whose cost
is linear in the number of stages, and a baseline that condenses the full
horizon into one dense bound-constrained QP and factorizes it with
Cholesky (cubic in horizon times input size). Partial condensing bridges
the two, eliminating intermediate states in blocks of ``M`` stages.

Each stage stores the affine prediction-model constant
``d_i = F_i - A_i xbar_i - B_i ubar_i`` together with the linearization
points, so the model reconstructs ``F_i`` exactly at ``(xbar_i, ubar_i)``.
The continuity constant in deviation variables (the shooting defect)
is derived from it:  ``c_i = d_i + A_i xbar_i + B_i ubar_i - xbar_{i+1}``,
which vanishes on a dynamically feasible linearization trajectory.

Solver calls keep all workspace local and never mutate the QP data, so
concurrent solves of distinct problem objects are safe; a single solve
is single-threaded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class QpNumericalError(RuntimeError):
    """A factorization inside the solver failed beyond recoverable regularization."""


# single Levenberg-style retry before declaring numerical failure
_REGULARIZATION = 1e-10
_FRACTION_TO_BOUNDARY = 0.995


@dataclass
class QpStage:
    A: np.ndarray
    B: np.ndarray
    d: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    q: np.ndarray
    r: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    S: np.ndarray = None

    def __post_init__(self):
        nx = self.A.shape[0]
        mu = self.B.shape[1]
        if self.S is None:
            self.S = np.zeros((mu, nx))
        if self.A.shape != (nx, nx) or self.B.shape != (nx, mu):
            raise ValueError("inconsistent stage dynamics dimensions")
        if self.Q.shape != (nx, nx) or self.R.shape != (mu, mu) or self.S.shape != (mu, nx):
            raise ValueError("inconsistent stage cost dimensions")
        if self.d.shape != (nx,) or self.q.shape != (nx,) or self.r.shape != (mu,):
            raise ValueError("inconsistent stage vector dimensions")
        if self.lb.shape != (mu,) or self.ub.shape != (mu,):
            raise ValueError("inconsistent bound dimensions")
        if np.any(self.lb >= self.ub):
            raise ValueError("lower bounds must be strictly below upper bounds")

    @property
    def nu(self) -> int:
        return self.B.shape[1]


@dataclass
class OcpQp:
    """Banded QP data over ``N`` stages plus a terminal cost.

    ``xbar``/``ubar`` are the linearization points the stage data was
    built at; for hand-built QPs they default to zero, in which case
    ``d`` is itself the continuity constant.
    """

    stages: list[QpStage]
    Q_N: np.ndarray
    q_N: np.ndarray
    x0_residual: np.ndarray
    xbar: np.ndarray = None
    ubar: list = None

    def __post_init__(self):
        nx = self.nx
        N = self.num_stages
        if self.xbar is None:
            self.xbar = np.zeros((N + 1, nx))
        if self.ubar is None:
            self.ubar = [np.zeros(st.nu) for st in self.stages]
        if self.Q_N.shape != (nx, nx) or self.q_N.shape != (nx,):
            raise ValueError("inconsistent terminal cost dimensions")
        if self.x0_residual.shape != (nx,):
            raise ValueError("inconsistent initial residual dimension")
        if self.xbar.shape != (N + 1, nx) or len(self.ubar) != N:
            raise ValueError("linearization trajectory does not match stage count")

    @property
    def nx(self) -> int:
        return self.stages[0].A.shape[0]

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def defect(self, i: int) -> np.ndarray:
        """Continuity constant of stage ``i`` in deviation variables."""
        st = self.stages[i]
        return st.d + st.A @ self.xbar[i] + st.B @ self.ubar[i] - self.xbar[i + 1]

    def defects(self) -> np.ndarray:
        return np.array([self.defect(i) for i in range(self.num_stages)])


@dataclass
class CondensedQp:
    """A partially condensed QP plus everything needed to undo the condensing."""

    qp: OcpQp
    original: OcpQp
    block_size: int
    blocks: list  # (first original stage, stage count) per condensed stage


@dataclass
class KktResiduals:
    stationarity: float
    equality: float
    inequality: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.equality, self.inequality, self.complementarity)


@dataclass
class QpSolution:
    """Primal-dual solution; residuals are recomputed from the point itself.

    ``linalg_us`` accumulates the time spent factorizing and solving the
    Newton systems (the part whose cost scales with the problem shape),
    excluding residual bookkeeping.
    """

    x: np.ndarray
    u: list
    pi: np.ndarray
    lam_lo: list
    lam_hi: list
    iters: int
    status: str
    residuals: KktResiduals = None
    linalg_us: float = 0.0


def kkt_residuals(qp: OcpQp, sol: QpSolution) -> KktResiduals:
    """Infinity norms of the four KKT residual groups at ``sol``."""
    stat = 0.0
    eq = float(np.abs(sol.x[0] - qp.x0_residual).max())
    ineq = 0.0
    compl = 0.0
    N = qp.num_stages
    for i, st in enumerate(qp.stages):
        x, u = sol.x[i], sol.u[i]
        rx = st.Q @ x + st.S.T @ u + st.q + st.A.T @ sol.pi[i + 1] - sol.pi[i]
        ru = st.R @ u + st.S @ x + st.r + st.B.T @ sol.pi[i + 1] - sol.lam_lo[i] + sol.lam_hi[i]
        stat = max(stat, np.abs(rx).max(), np.abs(ru).max())
        req = sol.x[i + 1] - st.A @ x - st.B @ u - qp.defect(i)
        eq = max(eq, np.abs(req).max())
        sl = u - st.lb
        su = st.ub - u
        ineq = max(
            ineq,
            float(np.maximum(0.0, -sl).max()),
            float(np.maximum(0.0, -su).max()),
            float(np.maximum(0.0, -sol.lam_lo[i]).max()),
            float(np.maximum(0.0, -sol.lam_hi[i]).max()),
        )
        compl = max(compl, np.abs(sol.lam_lo[i] * sl).max(), np.abs(sol.lam_hi[i] * su).max())
    rxN = qp.Q_N @ sol.x[N] + qp.q_N - sol.pi[N]
    stat = max(stat, np.abs(rxN).max())
    return KktResiduals(stat, eq, ineq, compl)


# ---------------------------------------------------------------------------
# partial condensing
# ---------------------------------------------------------------------------


def partial_condense(qp: OcpQp, M: int) -> CondensedQp:
    """Eliminate intermediate states in blocks of ``M`` stages.

    Within every block the states after the first are substituted out
    through the continuity constraints, leaving one state variable per
    block and a stacked input vector of up to ``M * nu`` components.
    ``M = 1`` is the identity transformation, ``M = num_stages`` the
    fully condensed problem. Stage costs must be separable (no
    state-input cross terms) on entry.
    """
    N = qp.num_stages
    if not 1 <= M <= N:
        raise ValueError(f"block size must be within [1, {N}], got {M}")
    for st in qp.stages:
        if np.any(st.S):
            raise ValueError("partial condensing expects a separable stage cost")

    nx = qp.nx
    blocks = [(s, min(M, N - s)) for s in range(0, N, M)]
    new_stages = []
    new_xbar = []
    new_ubar = []
    for s, L in blocks:
        mU = sum(qp.stages[s + j].nu for j in range(L))
        offs = np.cumsum([0] + [qp.stages[s + j].nu for j in range(L)])
        T = np.eye(nx)
        G = np.zeros((nx, mU))
        f = np.zeros(nx)
        Qb = np.zeros((nx, nx))
        qb = np.zeros(nx)
        Rb = np.zeros((mU, mU))
        Sb = np.zeros((mU, nx))
        rb = np.zeros(mU)
        lb = np.concatenate([qp.stages[s + j].lb for j in range(L)])
        ub = np.concatenate([qp.stages[s + j].ub for j in range(L)])
        for j in range(L):
            st = qp.stages[s + j]
            cols = slice(offs[j], offs[j + 1])
            # cost of stage s+j expressed in (x_s, U) through x = T x_s + G U + f
            QT = st.Q @ T
            Qb += T.T @ QT
            w = st.Q @ f + st.q
            qb += T.T @ w
            Rb[cols, cols] += st.R
            Rb += G.T @ (st.Q @ G)
            Sb += G.T @ QT
            rb[cols] += st.r
            rb += G.T @ w
            # advance the rollout map to x_{s+j+1}
            f = st.A @ f + qp.defect(s + j)
            G = st.A @ G
            G[:, cols] += st.B
            T = st.A @ T
        xb = qp.xbar[s]
        Ub = np.concatenate([qp.ubar[s + j] for j in range(L)])
        x_next = qp.xbar[s + L]
        d = f - (T @ xb + G @ Ub - x_next)
        new_stages.append(
            QpStage(
                A=T,
                B=G,
                d=d,
                Q=0.5 * (Qb + Qb.T),
                R=0.5 * (Rb + Rb.T),
                q=qb,
                r=rb,
                lb=lb,
                ub=ub,
                S=Sb,
            )
        )
        new_xbar.append(xb)
        new_ubar.append(Ub)
    new_xbar.append(qp.xbar[N])
    cqp = OcpQp(
        stages=new_stages,
        Q_N=qp.Q_N.copy(),
        q_N=qp.q_N.copy(),
        x0_residual=qp.x0_residual.copy(),
        xbar=np.array(new_xbar),
        ubar=new_ubar,
    )
    return CondensedQp(qp=cqp, original=qp, block_size=M, blocks=blocks)


def expand(sol: QpSolution, cond: CondensedQp) -> QpSolution:
    """Recover the solution of the original QP from a condensed one.

    Eliminated states come from forward simulation of the affine
    dynamics, eliminated equality multipliers from the backward
    stationarity recursion; input bound multipliers transfer directly.
    """
    qp = cond.original
    if len(sol.u) != len(cond.blocks) or sol.x.shape[0] != len(cond.blocks) + 1:
        raise ValueError("solution does not match the condensing metadata")
    for b, (s, L) in enumerate(cond.blocks):
        if sol.u[b].shape[0] != sum(qp.stages[s + j].nu for j in range(L)):
            raise ValueError("solution does not match the condensing metadata")

    N = qp.num_stages
    nx = qp.nx
    x = np.zeros((N + 1, nx))
    pi = np.zeros((N + 1, nx))
    u = [None] * N
    lam_lo = [None] * N
    lam_hi = [None] * N
    x[N] = sol.x[-1]
    pi[N] = sol.pi[-1]
    for b, (s, L) in enumerate(cond.blocks):
        offs = np.cumsum([0] + [qp.stages[s + j].nu for j in range(L)])
        x[s] = sol.x[b]
        pi[s] = sol.pi[b]
        for j in range(L):
            cols = slice(offs[j], offs[j + 1])
            u[s + j] = sol.u[b][cols]
            lam_lo[s + j] = sol.lam_lo[b][cols]
            lam_hi[s + j] = sol.lam_hi[b][cols]
        for j in range(L - 1):
            st = qp.stages[s + j]
            x[s + j + 1] = st.A @ x[s + j] + st.B @ u[s + j] + qp.defect(s + j)
    for s, L in cond.blocks:
        for j in range(L - 1, 0, -1):
            st = qp.stages[s + j]
            pi[s + j] = st.Q @ x[s + j] + st.q + st.A.T @ pi[s + j + 1]
    out = QpSolution(
        x=x,
        u=u,
        pi=pi,
        lam_lo=lam_lo,
        lam_hi=lam_hi,
        iters=sol.iters,
        status=sol.status,
        linalg_us=sol.linalg_us,
    )
    out.residuals = kkt_residuals(qp, out)
    return out


# ---------------------------------------------------------------------------
# Riccati-recursion primal-dual interior-point method
# ---------------------------------------------------------------------------


def _chol_with_retry(G: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(G + _REGULARIZATION * np.eye(G.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise QpNumericalError("recursion block not positive definite") from exc


def _chol_solve(L: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # solve (L L') z = rhs reusing the factor
    return sla.cho_solve((L, True), rhs, check_finite=False)


class _RiccatiSweep:
    """Backward factorization of one interior-point Newton system.

    Matrix factors depend only on the barrier-modified Hessian, so one
    sweep serves both the predictor and the corrector right-hand sides.
    """

    def __init__(self, qp: OcpQp, R_bar: list):
        N = qp.num_stages
        self.qp = qp
        self.P = [None] * (N + 1)
        self.L = [None] * N
        self.K = [None] * N
        self.H = [None] * N
        self.P[N] = qp.Q_N
        for i in range(N - 1, -1, -1):
            st = qp.stages[i]
            Pn = self.P[i + 1]
            PB = Pn @ st.B
            G = R_bar[i] + st.B.T @ PB
            H = st.S + PB.T @ st.A
            L = _chol_with_retry(0.5 * (G + G.T))
            K = -_chol_solve(L, H)
            P = st.Q + st.A.T @ (Pn @ st.A) + H.T @ K
            self.L[i] = L
            self.K[i] = K
            self.H[i] = H
            self.P[i] = 0.5 * (P + P.T)

    def solve(self, rx, ru, re):
        """Newton direction for right-hand sides (−rx, −ru, −re)."""
        qp = self.qp
        N = qp.num_stages
        p = [None] * (N + 1)
        k = [None] * N
        p[N] = rx[N]
        for i in range(N - 1, -1, -1):
            st = qp.stages[i]
            m1 = p[i + 1] - self.P[i + 1] @ re[i + 1]
            g = ru[i] + st.B.T @ m1
            k[i] = -_chol_solve(self.L[i], g)
            p[i] = rx[i] + st.A.T @ m1 + self.H[i].T @ k[i]
        dx = np.zeros((N + 1, qp.nx))
        du = [None] * N
        dpi = np.zeros((N + 1, qp.nx))
        dx[0] = -re[0]
        dpi[0] = self.P[0] @ dx[0] + p[0]
        for i in range(N):
            st = qp.stages[i]
            du[i] = self.K[i] @ dx[i] + k[i]
            dx[i + 1] = st.A @ dx[i] + st.B @ du[i] - re[i + 1]
            dpi[i + 1] = self.P[i + 1] @ dx[i + 1] + p[i + 1]
        return dx, du, dpi


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest alpha with v + alpha dv >= 0, for strictly positive v."""
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def solve_riccati_ipm(qp: OcpQp, tol: float = 1e-8, max_iters: int = 50) -> QpSolution:
    """Solve the banded QP by a Mehrotra predictor-corrector interior point.

    Every Newton system is factorized by one backward Riccati recursion
    and solved by a forward rollout, so the per-iteration cost is linear
    in the stage count and cubic in the per-stage dimensions. A single
    step length with fraction-to-boundary 0.995 is applied to all
    primal and dual variables.

    Raises :class:`QpNumericalError` if a recursion block stays
    indefinite after one shot of regularization, or if iterates go
    non-finite. Hitting ``max_iters`` is reported through ``status``
    with the best iterate, not raised.
    """
    # slack collapse on pathological data produces inf/nan that the
    # finite-residual check inside turns into QpNumericalError
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _riccati_ipm(qp, tol, max_iters)


def _riccati_ipm(qp: OcpQp, tol: float, max_iters: int) -> QpSolution:
    import time as _time

    linalg_ns = 0
    N = qp.num_stages
    nx = qp.nx
    defects = [qp.defect(i) for i in range(N)]
    lbs = [st.lb for st in qp.stages]
    ubs = [st.ub for st in qp.stages]
    n_bnd = sum(st.nu for st in qp.stages)

    # strictly interior start at the bound midpoints, rolled out feasibly
    u = [0.5 * (lo + hi) for lo, hi in zip(lbs, ubs)]
    x = np.zeros((N + 1, nx))
    x[0] = qp.x0_residual
    for i, st in enumerate(qp.stages):
        x[i + 1] = st.A @ x[i] + st.B @ u[i] + defects[i]
    pi = np.zeros((N + 1, nx))
    lam_lo = [1.0 / np.maximum(u[i] - lbs[i], 1e-2) for i in range(N)]
    lam_hi = [1.0 / np.maximum(ubs[i] - u[i], 1e-2) for i in range(N)]

    status = "max_iterations"
    iters = 0
    for iters in range(max_iters + 1):
        rx = np.zeros((N + 1, nx))
        ru = [None] * N
        re = np.zeros((N + 1, nx))
        re[0] = x[0] - qp.x0_residual
        sl = [u[i] - lbs[i] for i in range(N)]
        su = [ubs[i] - u[i] for i in range(N)]
        for i, st in enumerate(qp.stages):
            rx[i] = st.Q @ x[i] + st.S.T @ u[i] + st.q + st.A.T @ pi[i + 1] - pi[i]
            ru[i] = st.R @ u[i] + st.S @ x[i] + st.r + st.B.T @ pi[i + 1] - lam_lo[i] + lam_hi[i]
            re[i + 1] = x[i + 1] - st.A @ x[i] - st.B @ u[i] - defects[i]
        rx[N] = qp.Q_N @ x[N] + qp.q_N - pi[N]

        stat_norm = max(np.abs(rx).max(), max(np.abs(v).max() for v in ru))
        eq_norm = np.abs(re).max()
        compl_norm = max(
            max(np.abs(lam_lo[i] * sl[i]).max() for i in range(N)),
            max(np.abs(lam_hi[i] * su[i]).max() for i in range(N)),
        )
        if not np.isfinite(stat_norm + eq_norm + compl_norm):
            raise QpNumericalError("non-finite values encountered in interior-point iterate")
        if stat_norm <= tol and eq_norm <= tol and compl_norm <= tol:
            status = "converged"
            break
        if iters == max_iters:
            break

        mu = (
            sum(float(lam_lo[i] @ sl[i] + lam_hi[i] @ su[i]) for i in range(N)) / (2 * n_bnd)
        )
        R_bar = [
            qp.stages[i].R + np.diag(lam_lo[i] / sl[i] + lam_hi[i] / su[i]) for i in range(N)
        ]
        t0 = _time.perf_counter_ns()
        sweep = _RiccatiSweep(qp, R_bar)
        linalg_ns += _time.perf_counter_ns() - t0

        # predictor: pure Newton step on the unperturbed KKT system
        rcl = [lam_lo[i] * sl[i] for i in range(N)]
        rcu = [lam_hi[i] * su[i] for i in range(N)]
        ru_eff = [ru[i] + rcl[i] / sl[i] - rcu[i] / su[i] for i in range(N)]
        t0 = _time.perf_counter_ns()
        dx_a, du_a, dpi_a = sweep.solve(rx, ru_eff, re)
        linalg_ns += _time.perf_counter_ns() - t0
        dll_a = [-(rcl[i] + lam_lo[i] * du_a[i]) / sl[i] for i in range(N)]
        dlh_a = [-(rcu[i] - lam_hi[i] * du_a[i]) / su[i] for i in range(N)]

        alpha_aff = 1.0
        for i in range(N):
            alpha_aff = min(
                alpha_aff,
                _max_step(sl[i], du_a[i]),
                _max_step(su[i], -du_a[i]),
                _max_step(lam_lo[i], dll_a[i]),
                _max_step(lam_hi[i], dlh_a[i]),
            )
        mu_aff = (
            sum(
                float(
                    (lam_lo[i] + alpha_aff * dll_a[i]) @ (sl[i] + alpha_aff * du_a[i])
                    + (lam_hi[i] + alpha_aff * dlh_a[i]) @ (su[i] - alpha_aff * du_a[i])
                )
                for i in range(N)
            )
            / (2 * n_bnd)
        )
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # corrector: recentered with Mehrotra second-order terms
        rcl = [rcl[i] + du_a[i] * dll_a[i] - sigma * mu for i in range(N)]
        rcu = [rcu[i] - du_a[i] * dlh_a[i] - sigma * mu for i in range(N)]
        ru_eff = [ru[i] + rcl[i] / sl[i] - rcu[i] / su[i] for i in range(N)]
        t0 = _time.perf_counter_ns()
        dx, du, dpi = sweep.solve(rx, ru_eff, re)
        linalg_ns += _time.perf_counter_ns() - t0
        dll = [-(rcl[i] + lam_lo[i] * du[i]) / sl[i] for i in range(N)]
        dlh = [-(rcu[i] - lam_hi[i] * du[i]) / su[i] for i in range(N)]

        alpha = 1.0 / _FRACTION_TO_BOUNDARY
        for i in range(N):
            alpha = min(
                alpha,
                _max_step(sl[i], du[i]),
                _max_step(su[i], -du[i]),
                _max_step(lam_lo[i], dll[i]),
                _max_step(lam_hi[i], dlh[i]),
            )
        alpha = min(1.0, _FRACTION_TO_BOUNDARY * alpha)

        x = x + alpha * dx
        pi = pi + alpha * dpi
        for i in range(N):
            u[i] = u[i] + alpha * du[i]
            lam_lo[i] = lam_lo[i] + alpha * dll[i]
            lam_hi[i] = lam_hi[i] + alpha * dlh[i]

    sol = QpSolution(
        x=x,
        u=u,
        pi=pi,
        lam_lo=lam_lo,
        lam_hi=lam_hi,
        iters=iters,
        status=status,
        linalg_us=linalg_ns / 1000.0,
    )
    sol.residuals = kkt_residuals(qp, sol)
    return sol


# ---------------------------------------------------------------------------
# fully condensed dense baseline
# ---------------------------------------------------------------------------


def _solve_box_qp_dense(H, g, lb, ub, tol, max_iters):
    """Mehrotra interior point for ``min 0.5 z'Hz + g'z, lb <= z <= ub``.

    Dense normal equations, one Cholesky-backed solve per predictor and
    corrector step. Returns ``(z, lam_lo, lam_hi, iters, status)``.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _box_qp_dense(H, g, lb, ub, tol, max_iters)


def _box_qp_dense(H, g, lb, ub, tol, max_iters):
    import time as _time

    linalg_ns = 0
    n = H.shape[0]
    z = 0.5 * (lb + ub)
    lam_lo = 1.0 / np.maximum(z - lb, 1e-2)
    lam_hi = 1.0 / np.maximum(ub - z, 1e-2)
    status = "max_iterations"
    iters = 0
    for iters in range(max_iters + 1):
        sl = z - lb
        su = ub - z
        r = H @ z + g - lam_lo + lam_hi
        compl = max(np.abs(lam_lo * sl).max(), np.abs(lam_hi * su).max())
        if not np.isfinite(np.abs(r).max() + compl):
            raise QpNumericalError("non-finite values encountered in interior-point iterate")
        if np.abs(r).max() <= tol and compl <= tol:
            status = "converged"
            break
        if iters == max_iters:
            break
        mu = float(lam_lo @ sl + lam_hi @ su) / (2 * n)
        D = lam_lo / sl + lam_hi / su
        t0 = _time.perf_counter_ns()
        M = H.copy()
        M.flat[:: n + 1] += D
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            try:
                M.flat[:: n + 1] += _REGULARIZATION
                L = np.linalg.cholesky(M)
            except np.linalg.LinAlgError as exc:
                raise QpNumericalError("dense Newton matrix not positive definite") from exc
        linalg_ns += _time.perf_counter_ns() - t0

        rcl = lam_lo * sl
        rcu = lam_hi * su
        t0 = _time.perf_counter_ns()
        dz_a = -_chol_solve(L, r + rcl / sl - rcu / su)
        linalg_ns += _time.perf_counter_ns() - t0
        dll_a = -(rcl + lam_lo * dz_a) / sl
        dlh_a = -(rcu - lam_hi * dz_a) / su
        alpha_aff = min(
            1.0,
            _max_step(sl, dz_a),
            _max_step(su, -dz_a),
            _max_step(lam_lo, dll_a),
            _max_step(lam_hi, dlh_a),
        )
        mu_aff = (
            float(
                (lam_lo + alpha_aff * dll_a) @ (sl + alpha_aff * dz_a)
                + (lam_hi + alpha_aff * dlh_a) @ (su - alpha_aff * dz_a)
            )
            / (2 * n)
        )
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        rcl = rcl + dz_a * dll_a - sigma * mu
        rcu = rcu - dz_a * dlh_a - sigma * mu
        t0 = _time.perf_counter_ns()
        dz = -_chol_solve(L, r + rcl / sl - rcu / su)
        linalg_ns += _time.perf_counter_ns() - t0
        dll = -(rcl + lam_lo * dz) / sl
        dlh = -(rcu - lam_hi * dz) / su
        alpha = min(
            1.0,
            _FRACTION_TO_BOUNDARY
            * min(
                _max_step(sl, dz),
                _max_step(su, -dz),
                _max_step(lam_lo, dll),
                _max_step(lam_hi, dlh),
            ),
        )
        z = z + alpha * dz
        lam_lo = lam_lo + alpha * dll
        lam_hi = lam_hi + alpha * dlh
    return z, lam_lo, lam_hi, iters, status, linalg_ns / 1000.0


def solve_dense_ipm(qp: OcpQp, tol: float = 1e-8, max_iters: int = 50) -> QpSolution:
    """Condense the full horizon, solve the dense box QP, and expand back.

    The baseline pipeline: all state deviations are eliminated, the
    remaining problem in the stacked inputs is solved by a dense
    interior point with Cholesky factorizations, and the stage-wise
    solution is reconstructed.
    """
    cond = partial_condense(qp, qp.num_stages)
    cqp = cond.qp
    st = cqp.stages[0]
    b0 = cqp.x0_residual
    c0 = cqp.defect(0)
    # substitute the fixed initial state and the terminal state out
    H = st.R + st.B.T @ (cqp.Q_N @ st.B)
    H = 0.5 * (H + H.T)
    g = st.r + st.S @ b0 + st.B.T @ (cqp.Q_N @ (st.A @ b0 + c0) + cqp.q_N)
    U, lam_lo, lam_hi, iters, status, linalg_us = _solve_box_qp_dense(
        H, g, st.lb, st.ub, tol, max_iters
    )
    xN = st.A @ b0 + st.B @ U + c0
    piN = cqp.Q_N @ xN + cqp.q_N
    pi0 = st.Q @ b0 + st.S.T @ U + st.q + st.A.T @ piN
    csol = QpSolution(
        x=np.array([b0, xN]),
        u=[U],
        pi=np.array([pi0, piN]),
        lam_lo=[lam_lo],
        lam_hi=[lam_hi],
        iters=iters,
        status=status,
        linalg_us=linalg_us,
    )
    return expand(csol, cond)
