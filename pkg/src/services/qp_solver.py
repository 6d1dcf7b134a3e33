"""
Primal barrier interior-point solver for the MHE QP subproblem.

The QP couples N+1 state deviations dx_0..dx_N and N input deviations
du_0..du_{N-1} through the linearized dynamics
dx_{i+1} = f_i + A_i dx_i + B_i du_i, with box bounds on every deviation.
The bounds are replaced by log barriers, and for a short fixed schedule of
barrier weights the linearized KKT system is solved by a Riccati recursion
(forward Kalman filter, backward smoother) on 3x3 and 6x6 blocks.

All quantities here live in the solver's scaled coordinates; see
``QpWeights.from_weights`` and ``mhe.linearize``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..exceptions import (
    IllConditionedKktError,
    InfeasibleInitializationError,
    InfeasiblePointError,
    SingularMatrixError,
)
from ..models.schemas import BarrierConfig, Weights
from .smallmat import inv3, inv6_block, sym_sandwich

logger = logging.getLogger(__name__)

NX = 3
NU = 3
NY = 3

IterationHook = Callable[[int, float, float, float], None]


@dataclass
class QpData:
    """Linearized QP data for one window: stages 0..N for states, 0..N-1 for inputs."""
    A: np.ndarray  # (N, 3, 3)
    B: np.ndarray  # (N, 3, 3)
    C: np.ndarray  # (N+1, 3, 3)
    f: np.ndarray  # (N, 3)
    r_u: np.ndarray  # (N, 3)
    r_y: np.ndarray  # (N+1, 3)
    R: np.ndarray  # (N+1, 3) diagonal measurement variances
    x_lb: np.ndarray  # (N+1, 3)
    x_ub: np.ndarray
    u_lb: np.ndarray  # (N, 3)
    u_ub: np.ndarray
    r_x0: Optional[np.ndarray] = None  # (3,) arrival-cost prior relative to the first state
    P_arrival: Optional[np.ndarray] = None  # (3, 3) arrival covariance, overrides QpWeights.P

    @property
    def N(self) -> int:
        return self.C.shape[0] - 1


@dataclass(frozen=True)
class QpWeights:
    """
    Arrival-cost and process-noise matrices in scaled coordinates.

    ``q_inv_diag`` is set when Q is diagonal; the per-stage input block of
    the KKT system is then inverted elementwise.
    """
    P: np.ndarray
    Q: np.ndarray
    Q_inv: np.ndarray
    q_inv_diag: Optional[np.ndarray] = None

    @classmethod
    def from_matrices(cls, P: np.ndarray, Q: np.ndarray) -> "QpWeights":
        return cls(P=np.asarray(P, dtype=float), Q=np.asarray(Q, dtype=float), Q_inv=inv3(np.asarray(Q, dtype=float)))

    @classmethod
    def from_weights(cls, weights: Weights, scale) -> "QpWeights":
        s2 = np.asarray(scale, dtype=float) ** 2
        P = np.diag([weights.p_alpha, weights.p_w, weights.p_w]) / s2
        Q = np.diag([weights.q_alpha, weights.q_w, weights.q_w]) / s2
        q_inv_diag = 1.0 / np.diag(Q)
        return cls(P=P, Q=Q, Q_inv=np.diag(q_inv_diag), q_inv_diag=q_inv_diag)


@dataclass
class QpIterate:
    dx: np.ndarray  # (N+1, 3)
    du: np.ndarray  # (N, 3)

    @classmethod
    def zeros(cls, N: int) -> "QpIterate":
        return cls(dx=np.zeros((N + 1, NX)), du=np.zeros((N, NU)))


@dataclass
class SolverStats:
    """Per-call instrumentation record."""
    kkt_solves: int = 0
    kappas: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    rp_norms: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.steps)


@dataclass
class QpSolution:
    dx: np.ndarray
    du: np.ndarray
    stats: SolverStats


@dataclass
class KktWork:
    """Working storage for one KKT assembly and Riccati solve."""
    g_x: np.ndarray
    L_x: np.ndarray
    g_u: np.ndarray
    L_u: np.ndarray
    r_x: np.ndarray
    r_u_bar: np.ndarray
    r_y_bar: np.ndarray
    C_bar: np.ndarray
    R_bar: np.ndarray
    Q_bar: np.ndarray
    r_p: np.ndarray
    P_hat: np.ndarray
    Pi: np.ndarray
    Xi: np.ndarray
    Omega: np.ndarray
    K: np.ndarray
    P_f: np.ndarray
    dx_hat: np.ndarray
    dx_prime: np.ndarray
    du_prime: np.ndarray
    r_breve: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    dx: np.ndarray
    du: np.ndarray

    @classmethod
    def allocate(cls, N: int) -> "KktWork":
        s, n = N + 1, N
        return cls(
            g_x=np.zeros((s, NX)),
            L_x=np.zeros((s, NX)),
            g_u=np.zeros((n, NU)),
            L_u=np.zeros((n, NU)),
            r_x=np.zeros(NX),
            r_u_bar=np.zeros((n, NU)),
            r_y_bar=np.zeros((s, NY + NX)),
            C_bar=np.zeros((s, NY + NX, NX)),
            R_bar=np.zeros((s, NY + NX, NY + NX)),
            Q_bar=np.zeros((n, NU, NU)),
            r_p=np.zeros((n, NX)),
            P_hat=np.zeros((s, NX, NX)),
            Pi=np.zeros((s, NY + NX, NX)),
            Xi=np.zeros((s, NY + NX, NY + NX)),
            Omega=np.zeros((s, NX, NY + NX)),
            K=np.zeros((s, NX, NY + NX)),
            P_f=np.zeros((s, NX, NX)),
            dx_hat=np.zeros((s, NX)),
            dx_prime=np.zeros((s, NX)),
            du_prime=np.zeros((n, NU)),
            r_breve=np.zeros((s, NY + NX)),
            lam=np.zeros((n, NX)),
            xi=np.zeros((n, NX)),
            dx=np.zeros((s, NX)),
            du=np.zeros((n, NU)),
        )

    @property
    def N(self) -> int:
        return self.dx.shape[0] - 1


def barrier_terms(delta, lb, ub) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Log barrier of a box, its gradient and the square root of its
    (diagonal) Hessian, elementwise.

    Raises:
        InfeasiblePointError: if any entry is on or outside its bounds.
    """
    delta = np.asarray(delta, dtype=float)
    up = np.asarray(ub, dtype=float) - delta
    lo = delta - np.asarray(lb, dtype=float)
    if not (np.all(up > 0.0) and np.all(lo > 0.0)):
        bad = np.flatnonzero(~((up > 0.0) & (lo > 0.0)).ravel())
        raise InfeasiblePointError(f"barrier evaluated outside the strict interior at entries {bad.tolist()}")

    phi = float(-np.sum(np.log(up)) - np.sum(np.log(lo)))
    inv_up = 1.0 / up
    inv_lo = 1.0 / lo
    g = inv_up - inv_lo
    L = np.sqrt(inv_up * inv_up + inv_lo * inv_lo)
    return phi, g, L


def assemble_kkt(
    qp: QpData,
    iterate: QpIterate,
    kappa: float,
    weights: QpWeights,
    work: Optional[KktWork] = None,
) -> KktWork:
    """Populate every quantity of the linearized barrier KKT system at ``iterate``."""
    N = qp.N
    if work is None:
        work = KktWork.allocate(N)
    dx, du = iterate.dx, iterate.du
    sk = math.sqrt(kappa)

    _, work.g_x[:], work.L_x[:] = barrier_terms(dx, qp.x_lb, qp.x_ub)
    if N > 0:
        _, work.g_u[:], work.L_u[:] = barrier_terms(du, qp.u_lb, qp.u_ub)

    work.r_x[:] = -dx[0] if qp.r_x0 is None else qp.r_x0 - dx[0]

    if N > 0:
        work.r_p[:] = (
            -qp.f
            - np.einsum("nij,nj->ni", qp.A, dx[:-1])
            - np.einsum("nij,nj->ni", qp.B, du)
            + dx[1:]
        )
        work.r_u_bar[:] = (qp.r_u - du) @ weights.Q_inv.T - kappa * work.g_u
        if weights.q_inv_diag is not None:
            work.Q_bar[:] = 0.0
            iu = np.arange(NU)
            work.Q_bar[:, iu, iu] = 1.0 / (weights.q_inv_diag + kappa * work.L_u**2)
        else:
            for i in range(N):
                try:
                    inv3(weights.Q_inv + np.diag(kappa * work.L_u[i] ** 2), out=work.Q_bar[i], which="Q_bar")
                except SingularMatrixError as e:
                    raise IllConditionedKktError(i, e) from e

    work.r_y_bar[:, :NY] = qp.r_y - np.einsum("nij,nj->ni", qp.C, dx)
    work.r_y_bar[:, NY:] = -sk * work.g_x / work.L_x

    work.C_bar[:, :NY, :] = qp.C
    work.C_bar[:, NY:, :] = 0.0
    idx = np.arange(NX)
    work.C_bar[:, NY + idx, idx] = sk * work.L_x

    work.R_bar[:] = 0.0
    work.R_bar[:, idx, idx] = qp.R
    work.R_bar[:, NY + idx, NY + idx] = 1.0

    work.P_hat[0] = weights.P if qp.P_arrival is None else qp.P_arrival
    return work


def solve_kkt(work: KktWork, qp: QpData) -> tuple[np.ndarray, np.ndarray]:
    """
    Riccati solve of the equality-constrained subproblem.

    The input target of stage i is Q_bar_i @ r_u_bar_i, which makes the result
    the Newton direction of the barrier problem.

    Returns:
        (dx direction (N+1, 3), du direction (N, 3)), views into ``work``.
    """
    N = qp.N
    w = work

    # Factorization
    for i in range(N + 1):
        Cb = w.C_bar[i]
        np.matmul(Cb, w.P_hat[i], out=w.Pi[i])
        try:
            inv6_block(w.R_bar[i] + w.Pi[i] @ Cb.T, out=w.Xi[i])
        except SingularMatrixError as e:
            raise IllConditionedKktError(i, e) from e
        np.matmul(Cb.T, w.Xi[i], out=w.Omega[i])
        np.matmul(w.P_hat[i], w.Omega[i], out=w.K[i])
        w.P_f[i] = w.P_hat[i] - w.K[i] @ w.Pi[i]
        if i < N:
            w.P_hat[i + 1] = sym_sandwich(qp.A[i], w.P_f[i]) + sym_sandwich(qp.B[i], w.Q_bar[i])

    # Forward recursion
    w.dx_hat[0] = w.r_x
    for i in range(N + 1):
        w.r_breve[i] = w.r_y_bar[i] - w.C_bar[i] @ w.dx_hat[i]
        w.dx_prime[i] = w.dx_hat[i] + w.K[i] @ w.r_breve[i]
        if i < N:
            w.du_prime[i] = w.Q_bar[i] @ w.r_u_bar[i]
            w.dx_hat[i + 1] = -w.r_p[i] + qp.A[i] @ w.dx_prime[i] + qp.B[i] @ w.du_prime[i]

    # Backward recursion
    w.dx[N] = w.dx_prime[N]
    if N > 0:
        w.lam[N - 1] = -(w.Omega[N] @ w.r_breve[N])
    for i in range(N - 1, -1, -1):
        w.xi[i] = qp.A[i].T @ w.lam[i]
        w.du[i] = w.du_prime[i] - w.Q_bar[i] @ (qp.B[i].T @ w.lam[i])
        w.dx[i] = w.dx_prime[i] - w.P_f[i] @ w.xi[i]
        if i > 0:
            w.lam[i - 1] = w.xi[i] - w.Omega[i] @ (w.r_breve[i] + w.Pi[i] @ w.xi[i])

    return w.dx, w.du


def _strictly_inside(values: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> bool:
    return bool(np.all(values > lb) and np.all(values < ub))


def line_search(
    iterate: QpIterate,
    direction: tuple[np.ndarray, np.ndarray],
    qp: QpData,
    ns_max: int,
) -> float:
    """Largest s = 2^-n (n = 0..ns_max) keeping every deviation strictly inside its box, else 0."""
    ddx, ddu = direction
    s = 1.0
    for _ in range(ns_max + 1):
        if _strictly_inside(iterate.dx + s * ddx, qp.x_lb, qp.x_ub) and _strictly_inside(
            iterate.du + s * ddu, qp.u_lb, qp.u_ub
        ):
            return s
        s *= 0.5
    return 0.0


def solve_qp(
    qp: QpData,
    cfg: BarrierConfig,
    weights: QpWeights,
    hook: Optional[IterationHook] = None,
    work: Optional[KktWork] = None,
) -> QpSolution:
    """
    Fixed-cost primal barrier iterations from the zero deviation.

    Runs exactly n_kappa * n_qp KKT solves; iteration j uses
    kappa_init * kappa_decay ** (j // n_qp).

    Args:
        qp: Linearized data with bounds already shifted by the iterate.
        cfg: Barrier schedule.
        weights: Scaled arrival and process matrices.
        hook: Optional callback ``hook(j, kappa, step, rp_norm)`` per iteration.
        work: Optional preallocated working storage.

    Raises:
        InfeasibleInitializationError: if the zero deviation is not interior.
    """
    N = qp.N
    zero_x = np.zeros_like(qp.x_lb)
    zero_u = np.zeros_like(qp.u_lb)
    if not (_strictly_inside(zero_x, qp.x_lb, qp.x_ub) and _strictly_inside(zero_u, qp.u_lb, qp.u_ub)):
        raise InfeasibleInitializationError("current iterate is not strictly inside the box bounds")

    if work is None:
        work = KktWork.allocate(N)
    it = QpIterate.zeros(N)
    stats = SolverStats()

    for j in range(cfg.n_kappa * cfg.n_qp):
        kappa = cfg.kappa_init * cfg.kappa_decay ** (j // cfg.n_qp)
        assemble_kkt(qp, it, kappa, weights, work)
        ddx, ddu = solve_kkt(work, qp)
        stats.kkt_solves += 1

        s = line_search(it, (ddx, ddu), qp, cfg.ns_max)
        if s > 0.0:
            it.dx += s * ddx
            it.du += s * ddu

        rp_norm = float(np.linalg.norm(work.r_p)) if N > 0 else 0.0
        stats.kappas.append(kappa)
        stats.steps.append(s)
        stats.rp_norms.append(rp_norm)
        if hook is not None:
            hook(j, kappa, s, rp_norm)

    logger.debug(f"QP solved: steps={stats.steps} kappas={stats.kappas}")
    return QpSolution(dx=it.dx, du=it.du, stats=stats)
