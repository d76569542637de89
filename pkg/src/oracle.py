"""
Graph-moment oracle: moments of the occupation, boundary and control measures
generated by a known closed-form solution y(x).

The solution is given in physical coordinates; moments are produced in the
coordinates of the assembled SDP (unit box, scaled derivatives, normalised
inputs) so that ``sdp.A @ s - sdp.b`` measures how far the candidate is from
satisfying the relaxation.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy

from src.assembly import AssembledSDP
from src.moments import MeasureRole, MomentVector
from src.polyalg import PolynomialError, VariableSpace, parse_expression
from src.quadrature import QuadratureError, converged_moments

logger = logging.getLogger(__name__)


class OracleError(ValueError):
    """Raised when a candidate solution cannot be turned into moments"""


def _vectorise(expr: sympy.Expr, symbols: Sequence[sympy.Symbol]) -> Callable[[np.ndarray], np.ndarray]:
    func = sympy.lambdify(symbols, expr, modules='numpy')

    def evaluate(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        values = func(*[pts[:, i] for i in range(pts.shape[1])])
        return np.broadcast_to(np.asarray(values, dtype=float), (pts.shape[0],)).copy()

    return evaluate


@dataclass(frozen=True, eq=False)
class GraphSolution:
    """Candidate solution y(x) with optional input laws, all in physical coordinates"""

    texts: Tuple[str, ...]
    exprs: Tuple[sympy.Expr, ...]
    gradients: Tuple[Tuple[sympy.Expr, ...], ...]
    controls: Tuple[sympy.Expr, ...] = ()
    boundary_controls: Mapping[int, Tuple[sympy.Expr, ...]] = field(default_factory=dict)
    _symbols: Tuple[sympy.Symbol, ...] = ()
    _compiled: Dict[int, Callable[[np.ndarray], np.ndarray]] = field(default_factory=dict, repr=False)

    def _evaluator(self, expr: sympy.Expr) -> Callable[[np.ndarray], np.ndarray]:
        key = id(expr)
        if key not in self._compiled:
            self._compiled[key] = _vectorise(expr, self._symbols)
        return self._compiled[key]

    @classmethod
    def from_expressions(cls, texts: Sequence[str], n: int, controls: Sequence[str] = (),
                         boundary_controls: Optional[Mapping[int, Sequence[str]]] = None) -> 'GraphSolution':
        xspace = VariableSpace.standard(n)
        symbols = tuple(sympy.Symbol(name, real=True) for name in xspace.names)
        try:
            exprs = tuple(parse_expression(str(t), xspace) for t in texts)
            laws = tuple(parse_expression(str(t), xspace) for t in controls)
            blaws = {int(piece): tuple(parse_expression(str(t), xspace) for t in values)
                     for piece, values in (boundary_controls or {}).items()}
        except PolynomialError as e:
            raise OracleError(str(e)) from e
        gradients = tuple(tuple(sympy.diff(e, s) for s in symbols) for e in exprs)
        return cls(tuple(str(t) for t in texts), exprs, gradients, laws, blaws, symbols)

    @property
    def n_y(self) -> int:
        return len(self.exprs)

    def values(self, x: np.ndarray) -> np.ndarray:
        """y at physical points, shape (npts, n_y)"""
        return np.stack([self._evaluator(e)(x) for e in self.exprs], axis=1) if self.exprs \
            else np.zeros((len(x), 0))

    def derivatives(self, x: np.ndarray) -> np.ndarray:
        """dy_k/dx_j at physical points, shape (npts, n_y, n)"""
        out = np.zeros((len(x), self.n_y, len(self._symbols)))
        for k, row in enumerate(self.gradients):
            for j, g in enumerate(row):
                out[:, k, j] = self._evaluator(g)(x)
        return out

    def control(self, k: int, x: np.ndarray, piece: Optional[int] = None) -> np.ndarray:
        laws = self.controls if piece is None else self.boundary_controls.get(piece, ())
        if k > len(laws):
            where = 'interior' if piece is None else f"piece {piece}"
            raise OracleError(f"No input law for channel {k} on the {where}")
        return self._evaluator(laws[k - 1])(x)


def _field(sdp: AssembledSDP, solution: GraphSolution, space: VariableSpace, fixed: Mapping[str, float]):
    problem = sdp.problem
    scaling = problem.scaling
    x_names = problem.x_names
    free = [v for v in x_names if v not in fixed]

    def full_t(points: np.ndarray) -> np.ndarray:
        t = np.zeros((len(points), len(x_names)))
        for j, name in enumerate(x_names):
            t[:, j] = fixed[name] if name in fixed else points[:, free.index(name)]
        return t

    def field_values(points: np.ndarray) -> np.ndarray:
        t = full_t(points)
        x = scaling.to_physical(t)
        y = solution.values(x)
        needs_z = bool(space.block('z'))
        dz = solution.derivatives(x) if needs_z else None
        columns = []
        for name in space.names:
            block = space.block_of(name)
            if block == 'x':
                columns.append(t[:, x_names.index(name)])
            elif block == 'y':
                columns.append(y[:, int(name[1:]) - 1])
            else:
                k, j = (int(v) for v in name[1:].split('_'))
                columns.append(dz[:, k - 1, j - 1] * scaling.length[j - 1])
        return np.stack(columns, axis=1) if columns else np.zeros((len(points), 0))

    def physical(points: np.ndarray) -> np.ndarray:
        return scaling.to_physical(full_t(points))

    return field_values, physical, free


def graph_moments(sdp: AssembledSDP, solution: GraphSolution, tol: Optional[float] = None) -> np.ndarray:
    """Stacked moment vector of every measure of ``sdp`` generated by the solution"""
    problem = sdp.problem
    if problem.scaling is None or not problem.geometry.is_box:
        raise OracleError("Graph moments are only available for box domains")
    if solution.n_y != problem.n_y:
        raise OracleError(f"Solution has {solution.n_y} components, the problem has {problem.n_y} unknowns")
    vectors = {}
    for decl in sdp.measures:
        basis = sdp.layout.bases[decl.name]
        fixed = sdp.layout.fixed[decl.name]
        field_values, physical, free = _field(sdp, solution, decl.space, fixed)
        lo, hi = [0.0] * len(free), [1.0] * len(free)
        weight = None
        if decl.role in (MeasureRole.CONTROL, MeasureRole.SLACK):
            bounds = (problem.physical_input_bounds if decl.piece is None
                      else problem.condition_for(decl.piece).physical_input_bounds)
            u_lo, u_hi = bounds[decl.channel - 1]
            k, piece = decl.channel, decl.piece

            def normalised(points, k=k, piece=piece, u_lo=u_lo, u_hi=u_hi):
                return (solution.control(k, physical(points), piece) - u_lo) / (u_hi - u_lo)

            def remainder(points, f=normalised):
                return 1.0 - f(points)

            weight = normalised if decl.role is MeasureRole.CONTROL else remainder
        try:
            vectors[decl.name] = converged_moments(field_values, lo, hi, basis.monomials, weight=weight, tol=tol)
        except QuadratureError as e:
            raise OracleError(f"Moments of {decl.name}: {e}") from e
        logger.debug(f"Graph moments of {decl.name}: mass {vectors[decl.name][0]:.6g}")
    logger.info(f"Computed graph moments for {len(vectors)} measures of '{problem.name}'")
    return sdp.stack(vectors)


def graph_moment_vectors(sdp: AssembledSDP, solution: GraphSolution) -> Dict[str, MomentVector]:
    return sdp.split(graph_moments(sdp, solution))

