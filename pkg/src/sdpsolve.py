"""
Block-PSD conic problems and an embedded primal-dual interior-point solver.

A ConicProblem reads

    min (or max)  c^T s   s.t.  A s = b,   F_k(s) = O_k + M_k s  PSD for every block k

with M_k a sparse map from s to the row-major flattened block. Equalities are
eliminated first (s = s0 + N w via an SVD), which leaves an LMI in w solved
as the dual of a standard-form SDP with Nesterov-Todd scaling and Mehrotra
predictor-corrector steps.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, sparse

from src.config import SOLVER_CONFIG

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised for malformed conic problems and exceeded size caps"""


class SolveStatus(str, Enum):
    OPTIMAL = 'optimal'
    NEAR_OPTIMAL = 'near-optimal'
    INFEASIBLE = 'infeasible-certificate'
    UNBOUNDED = 'unbounded'
    FAILURE = 'numerical-failure'


@dataclass(frozen=True, eq=False)
class PSDBlock:
    label: str
    size: int
    matrix: sparse.csr_matrix
    offset: Optional[np.ndarray] = None

    def evaluate(self, s: np.ndarray) -> np.ndarray:
        value = np.asarray(self.matrix @ s).reshape(self.size, self.size)
        if self.offset is not None:
            value = value + self.offset
        return 0.5 * (value + value.T)


@dataclass(frozen=True, eq=False)
class ConicProblem:
    A: sparse.csr_matrix
    b: np.ndarray
    c: np.ndarray
    blocks: Tuple[PSDBlock, ...]
    sense: str = 'inf'
    row_labels: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.sense not in ('inf', 'sup'):
            raise SolverError(f"Unknown sense '{self.sense}'")
        n = len(self.c)
        if self.A.shape[1] != n or self.A.shape[0] != len(self.b):
            raise SolverError(f"A has shape {self.A.shape}, expected ({len(self.b)}, {n})")
        for block in self.blocks:
            if block.matrix.shape != (block.size * block.size, n):
                raise SolverError(f"Block {block.label} map has shape {block.matrix.shape}")

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def total_psd_dimension(self) -> int:
        return sum(block.size for block in self.blocks)


@dataclass(frozen=True)
class Tolerances:
    tol_gap: float
    tol_feas: float
    tol_psd: float
    max_iter: int
    psd_cap: int
    step_fraction: float
    near_optimal_gap: float
    near_optimal_feas: float
    rank_tol: float
    fixed_psd_rel: float

    @classmethod
    def from_config(cls, **overrides) -> 'Tolerances':
        values = dict(SOLVER_CONFIG)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class SolveReport:
    status: SolveStatus
    sense: str
    primal_objective: float
    dual_objective: float
    gap: float
    residual: float
    min_eigenvalue: float
    iterations: int
    wall_time: float
    dropped_rows: int = 0
    certificate_norm: Optional[float] = None
    message: str = ''

    @property
    def is_verified(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    @property
    def bound(self) -> Optional[float]:
        """Certified bound; None unless the solve reached optimality"""
        return self.primal_objective if self.is_verified else None

    def summary(self) -> str:
        return (f"status={self.status.value} objective={self.primal_objective!r} certificate={self.dual_objective!r} "
                f"gap={self.gap:.3e} residual={self.residual:.3e} min_eig={self.min_eigenvalue:.3e} "
                f"iterations={self.iterations}")


@dataclass(frozen=True, eq=False)
class SolveResult:
    s: np.ndarray
    report: SolveReport


@dataclass(frozen=True)
class SolutionCheck:
    residual: float
    block_min_eigenvalues: Dict[str, float]
    min_eigenvalue: float
    objective: float

    def feasible(self, tol_feas: float = 1e-8, tol_psd: float = 1e-9) -> bool:
        return self.residual <= tol_feas and self.min_eigenvalue >= -tol_psd


def check_solution(problem: ConicProblem, s: Sequence[float]) -> SolutionCheck:
    """Equality residual, per-block minimum eigenvalue and objective of a candidate s"""
    s = np.asarray(s, dtype=float)
    if s.shape != (problem.n,):
        raise SolverError(f"Vector of shape {s.shape} does not match {problem.n} variables")
    residual = float(np.max(np.abs(problem.A @ s - problem.b), initial=0.0))
    eigenvalues = {}
    for block in problem.blocks:
        eigenvalues[block.label] = float(np.linalg.eigvalsh(block.evaluate(s))[0])
    return SolutionCheck(residual, eigenvalues, min(eigenvalues.values(), default=0.0), float(problem.c @ s))


# --- presolve --------------------------------------------------------------

@dataclass
class _Presolved:
    s0: np.ndarray
    N: np.ndarray
    dropped: int
    inconsistency: float
    s0_error: float = 0.0


def _presolve(problem: ConicProblem, rank_tol: float) -> _Presolved:
    n = problem.n
    if problem.m == 0:
        return _Presolved(np.zeros(n), np.eye(n), 0, 0.0)
    A = problem.A.toarray()
    # unit row norms before the SVD
    norms = np.linalg.norm(A, axis=1)
    scale = 1.0 / np.where(norms > 0, norms, 1.0)
    As = A * scale[:, None]
    bs = problem.b * scale
    U, S, Vt = np.linalg.svd(As, full_matrices=True)
    cutoff = rank_tol * (S[0] if S.size else 0.0)
    rank = int(np.sum(S > cutoff)) if S.size and S[0] > 0 else 0
    V_r, U_r, S_r = Vt[:rank].T, U[:, :rank], S[:rank]
    s0 = V_r @ ((U_r.T @ bs) / S_r)
    for _ in range(2):
        s0 = s0 + V_r @ ((U_r.T @ (bs - As @ s0)) / S_r)
    N = Vt[rank:].T
    inconsistency = float(np.max(np.abs(A @ s0 - problem.b), initial=0.0))
    condition = float(S[0] / S[rank - 1]) if rank else 1.0
    s0_error = np.finfo(float).eps * condition * max(1.0, float(np.max(np.abs(s0), initial=0.0)))
    dropped = problem.m - rank
    if dropped:
        logger.warning(f"Presolve dropped {dropped} linearly dependent equality rows (rank {rank} of {problem.m})")
    logger.debug(f"Presolve: condition {condition:.2e}, error estimate {s0_error:.2e}")
    return _Presolved(s0, N, dropped, inconsistency, s0_error)


def _fixed_block_tolerance(block: PSDBlock, C: np.ndarray, pre: _Presolved, tol: Tolerances) -> float:
    """Eigenvalue slack for a block pinned by the equalities; covers the rounding in s0"""
    spread = float(abs(block.matrix).sum(axis=1).max()) if block.matrix.nnz else 0.0
    norm = float(np.linalg.norm(C, 2)) if C.size else 0.0
    return max(tol.tol_psd, block.size * spread * pre.s0_error, tol.fixed_psd_rel * max(1.0, norm))


@dataclass
class _Block:
    label: str
    C: np.ndarray
    A: np.ndarray  # (p, n, n)

    @property
    def n(self) -> int:
        return self.C.shape[0]


def _reduce_blocks(problem: ConicProblem, pre: _Presolved) -> Tuple[List[_Block], List[Tuple[PSDBlock, np.ndarray]]]:
    """LMI data C - sum_j w_j A_j per block; blocks with no free entries are returned as constants"""
    active, constant = [], []
    p = pre.N.shape[1]
    for block in problem.blocks:
        C = block.evaluate(pre.s0)
        G = -np.asarray(block.matrix @ pre.N) if p else np.zeros((block.size ** 2, 0))
        if p == 0 or np.max(np.abs(G), initial=0.0) < 1e-14:
            constant.append((block, C))
            continue
        Ak = G.T.reshape(p, block.size, block.size)
        Ak = 0.5 * (Ak + Ak.transpose(0, 2, 1))
        active.append(_Block(block.label, C, Ak))
    return active, constant


# --- interior point --------------------------------------------------------

def _apply_A(blocks: List[_Block], X: List[np.ndarray], p: int) -> np.ndarray:
    out = np.zeros(p)
    for blk, Xk in zip(blocks, X):
        out += blk.A.reshape(p, -1) @ Xk.ravel()
    return out


def _apply_At(blocks: List[_Block], y: np.ndarray) -> List[np.ndarray]:
    return [np.tensordot(y, blk.A, axes=1) for blk in blocks]


def _inner(U: List[np.ndarray], V: List[np.ndarray]) -> float:
    return float(sum(np.vdot(a, b) for a, b in zip(U, V)))


def _fro(U: List[np.ndarray]) -> float:
    return float(np.sqrt(sum(np.vdot(a, a) for a in U)))


def _max_step(L: np.ndarray, D: np.ndarray) -> float:
    """Largest alpha with L L^T + alpha D PSD"""
    Li = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    T = Li @ D @ Li.T
    lam = np.linalg.eigvalsh(0.5 * (T + T.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


@dataclass
class _Iterate:
    y: np.ndarray
    X: List[np.ndarray]
    Z: List[np.ndarray]


@dataclass
class _Scaling:
    G: List[np.ndarray]
    Gi: List[np.ndarray]
    W: List[np.ndarray]
    lam: List[np.ndarray]
    LX: List[np.ndarray]
    LZ: List[np.ndarray]


def _nt_scaling(X: List[np.ndarray], Z: List[np.ndarray]) -> _Scaling:
    G, Gi, W, lams, LX, LZ = [], [], [], [], [], []
    for Xk, Zk in zip(X, Z):
        L = np.linalg.cholesky(Xk)
        R = np.linalg.cholesky(Zk)
        U, lam, Vt = np.linalg.svd(R.T @ L)
        Gk = L @ Vt.T / np.sqrt(lam)[None, :]
        Gik = (np.sqrt(lam)[:, None] * U.T) @ R.T / lam[:, None]
        G.append(Gk)
        Gi.append(Gik)
        W.append(Gk @ Gk.T)
        lams.append(lam)
        LX.append(L)
        LZ.append(R)
    return _Scaling(G, Gi, W, lams, LX, LZ)


def _schur(blocks: List[_Block], W: List[np.ndarray], p: int) -> np.ndarray:
    M = np.zeros((p, p))
    for blk, Wk in zip(blocks, W):
        T = np.matmul(np.matmul(Wk, blk.A), Wk)
        M += blk.A.reshape(p, -1) @ T.reshape(p, -1).T
    return 0.5 * (M + M.T)


def _factor(M: np.ndarray):
    scale = max(1.0, float(np.max(np.abs(np.diag(M)), initial=0.0)))
    for reg in (0.0, 1e-14, 1e-12, 1e-10):
        try:
            return linalg.cho_factor(M + reg * scale * np.eye(M.shape[0]))
        except linalg.LinAlgError:
            continue
    return None


def _solve_schur(factor, M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if factor is not None:
        return linalg.cho_solve(factor, rhs)
    return linalg.lstsq(M, rhs)[0]


def _direction(blocks, factor, M, W, rp, Rd, Rc, p):
    WRdW = [Wk @ R @ Wk for Wk, R in zip(W, Rd)]
    rhs = rp - _apply_A(blocks, Rc, p) + _apply_A(blocks, WRdW, p)
    dy = _solve_schur(factor, M, rhs)
    Aty = _apply_At(blocks, dy)
    dZ = [R - a for R, a in zip(Rd, Aty)]
    dX = [Rc_k - Wk @ dZk @ Wk for Rc_k, Wk, dZk in zip(Rc, W, dZ)]
    dX = [0.5 * (d + d.T) for d in dX]
    dZ = [0.5 * (d + d.T) for d in dZ]
    return dy, dX, dZ


def _step_lengths(sc: _Scaling, dX, dZ) -> Tuple[float, float]:
    ap = min(_max_step(L, D) for L, D in zip(sc.LX, dX))
    ad = min(_max_step(R, D) for R, D in zip(sc.LZ, dZ))
    return ap, ad


def _starting_point(blocks: List[_Block], bt: np.ndarray, p: int) -> _Iterate:
    X, Z = [], []
    for blk in blocks:
        n = blk.n
        normA = np.sqrt(np.sum(blk.A.reshape(p, -1) ** 2, axis=1))
        xi = max(10.0, np.sqrt(n), n * float(np.max((1.0 + np.abs(bt)) / (1.0 + normA), initial=0.0)))
        eta = max(10.0, np.sqrt(n), float(np.linalg.norm(blk.C)), float(np.max(normA, initial=0.0)))
        X.append(xi * np.eye(n))
        Z.append(eta * np.eye(n))
    return _Iterate(np.zeros(p), X, Z)


@dataclass
class _Outcome:
    it: _Iterate
    status: SolveStatus
    iterations: int
    relgap: float
    pinf: float
    dinf: float
    certificate_norm: Optional[float] = None
    message: str = ''


def _interior_point(blocks: List[_Block], bt: np.ndarray, tol: Tolerances, min_eig_of=None) -> _Outcome:
    p = len(bt)
    n_total = sum(blk.n for blk in blocks)
    C = [blk.C for blk in blocks]
    normC = _fro(C)
    normb = float(np.linalg.norm(bt))
    it = _starting_point(blocks, bt, p)
    best: Optional[_Outcome] = None
    best_score = np.inf
    best_iter = 0

    for k in range(tol.max_iter):
        AX = _apply_A(blocks, it.X, p)
        rp = bt - AX
        Aty = _apply_At(blocks, it.y)
        Rd = [Ck - a - Zk for Ck, a, Zk in zip(C, Aty, it.Z)]
        pobj = _inner(C, it.X)
        dobj = float(bt @ it.y)
        mu = _inner(it.X, it.Z) / n_total
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(rp)) / (1.0 + normb)
        dinf = _fro(Rd) / (1.0 + normC)
        logger.debug(f"IPM it {k}: pobj={pobj:.10e} dobj={dobj:.10e} gap={relgap:.2e} "
                     f"pinf={pinf:.2e} dinf={dinf:.2e} mu={mu:.2e}")

        score = max(relgap, pinf, dinf)
        if score < best_score:
            best_score = score
            best_iter = k
            best = _Outcome(_Iterate(it.y.copy(), [x.copy() for x in it.X], [z.copy() for z in it.Z]),
                            SolveStatus.FAILURE, k, relgap, pinf, dinf)
        if relgap <= tol.tol_gap and pinf <= tol.tol_feas and dinf <= tol.tol_feas:
            if min_eig_of is None or min_eig_of(it.y) >= -tol.tol_psd:
                return _Outcome(it, SolveStatus.OPTIMAL, k, relgap, pinf, dinf)

        if k >= 3:
            normAX = float(np.linalg.norm(AX))
            if pobj < 0 and normAX / -pobj < 1e-8:
                return _Outcome(it, SolveStatus.INFEASIBLE, k, relgap, pinf, dinf,
                                certificate_norm=normAX / -pobj,
                                message="primal certificate: the moment constraints admit no PSD point")
            Rd_norm = _fro([Ck - R for Ck, R in zip(C, Rd)])
            if dobj > 0 and Rd_norm / dobj < 1e-8:
                return _Outcome(it, SolveStatus.UNBOUNDED, k, relgap, pinf, dinf,
                                certificate_norm=Rd_norm / dobj,
                                message="improving ray: the moment relaxation is unbounded")
        if k - best_iter > 15:
            break

        try:
            sc = _nt_scaling(it.X, it.Z)
        except np.linalg.LinAlgError:
            logger.debug("IPM: iterate lost definiteness")
            break
        M = _schur(blocks, sc.W, p)
        factor = _factor(M)

        # predictor
        Rc = [-Xk for Xk in it.X]
        dy_a, dX_a, dZ_a = _direction(blocks, factor, M, sc.W, rp, Rd, Rc, p)
        ap, ad = _step_lengths(sc, dX_a, dZ_a)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = _inner([x + ap * d for x, d in zip(it.X, dX_a)], [z + ad * d for z, d in zip(it.Z, dZ_a)]) / n_total
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # corrector
        Rc = []
        for Gk, Gik, lam, dXk, dZk in zip(sc.G, sc.Gi, sc.lam, dX_a, dZ_a):
            dXs = Gik @ dXk @ Gik.T
            dZs = Gk.T @ dZk @ Gk
            cross = dXs @ dZs
            H = sigma * mu * np.eye(len(lam)) - np.diag(lam ** 2) - 0.5 * (cross + cross.T)
            D = 2.0 * H / (lam[:, None] + lam[None, :])
            Rc.append(Gk @ D @ Gk.T)
        dy, dX, dZ = _direction(blocks, factor, M, sc.W, rp, Rd, Rc, p)
        ap, ad = _step_lengths(sc, dX, dZ)
        ap = min(1.0, tol.step_fraction * ap)
        ad = min(1.0, tol.step_fraction * ad)
        if max(ap, ad) < 1e-10:
            logger.debug("IPM: step length collapsed")
            break
        it = _Iterate(it.y + ad * dy, [x + ap * d for x, d in zip(it.X, dX)],
                      [z + ad * d for z, d in zip(it.Z, dZ)])
        it.X = [0.5 * (x + x.T) for x in it.X]
        it.Z = [0.5 * (z + z.T) for z in it.Z]

    best = best or _Outcome(it, SolveStatus.FAILURE, tol.max_iter, np.inf, np.inf, np.inf)
    if best.relgap <= tol.near_optimal_gap and max(best.pinf, best.dinf) <= tol.near_optimal_feas:
        best.status = SolveStatus.NEAR_OPTIMAL
        best.message = "gap stalled above tolerance with feasible iterates"
        logger.warning(f"IPM stalled: near-optimal with relative gap {best.relgap:.2e}")
    else:
        best.message = "iteration limit or stall"
        logger.warning(f"IPM failed: relative gap {best.relgap:.2e}, pinf {best.pinf:.2e}, dinf {best.dinf:.2e}")
    return best


def solve(problem: ConicProblem, tol: Optional[Tolerances] = None) -> SolveResult:
    """Solve a conic problem; the report carries status and diagnostics"""
    tol = tol or Tolerances.from_config()
    start = time.perf_counter()
    if problem.total_psd_dimension > tol.psd_cap:
        raise SolverError(f"Total PSD dimension {problem.total_psd_dimension} exceeds the cap {tol.psd_cap}")
    sign = 1.0 if problem.sense == 'inf' else -1.0
    pre = _presolve(problem, tol.rank_tol)

    def finish(s, status, iterations, certificate, gap=0.0, cert_norm=None, message=''):
        check = check_solution(problem, s)
        report = SolveReport(status, problem.sense, check.objective, certificate, gap, check.residual,
                             check.min_eigenvalue, iterations, time.perf_counter() - start, pre.dropped,
                             cert_norm, message)
        logger.info(f"Solve finished: {report.summary()}")
        return SolveResult(np.asarray(s, dtype=float), report)

    if pre.inconsistency > tol.tol_feas * (1.0 + float(np.max(np.abs(problem.b), initial=0.0))):
        return finish(pre.s0, SolveStatus.INFEASIBLE, 0, np.nan, np.inf, pre.inconsistency,
                      "equality constraints are inconsistent")

    blocks, constant = _reduce_blocks(problem, pre)
    for fixed, Ck in constant:
        lam = float(np.linalg.eigvalsh(Ck)[0]) if Ck.size else 0.0
        slack = _fixed_block_tolerance(fixed, Ck, pre, tol)
        if lam < -slack:
            return finish(pre.s0, SolveStatus.INFEASIBLE, 0, np.nan, np.inf, -lam,
                          f"block {fixed.label} is fixed by the equalities and not PSD")
        if lam < -tol.tol_psd:
            logger.warning(f"Block {fixed.label} is fixed by the equalities with eigenvalue {lam:.2e}, "
                           f"within the rounding slack {slack:.2e}")
    p = pre.N.shape[1]
    bt = -sign * (pre.N.T @ problem.c) if p else np.zeros(0)
    base = float(problem.c @ pre.s0)
    logger.info(f"Solving {problem.sense} SDP: {problem.n} moments, {problem.m} equalities, "
                f"{p} free directions, {len(blocks)} active blocks (total size {sum(b.n for b in blocks)})")

    if not blocks:
        if p and np.linalg.norm(bt) > tol.tol_feas:
            return finish(pre.s0, SolveStatus.UNBOUNDED, 0, np.nan, np.inf, None, "no PSD block bounds the objective")
        return finish(pre.s0, SolveStatus.OPTIMAL, 0, base)

    def s_of(y: np.ndarray) -> np.ndarray:
        return pre.s0 + pre.N @ y

    active = {blk.label for blk in blocks}

    def min_eig_of(y: np.ndarray) -> float:
        eigenvalues = check_solution(problem, s_of(y)).block_min_eigenvalues
        return min(v for label, v in eigenvalues.items() if label in active)

    outcome = _interior_point(blocks, bt, tol, min_eig_of)
    s = s_of(outcome.it.y)
    certificate = base - sign * _inner([blk.C for blk in blocks], outcome.it.X)
    objective = float(problem.c @ s)
    return finish(s, outcome.status, outcome.iterations, certificate, abs(objective - certificate),
                  outcome.certificate_norm, outcome.message)
