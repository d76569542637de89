"""
Moment-constraint assembly: PDEProblem -> AssembledSDP.

A problem is first prepared (inputs normalised to [0, 1], box rescaled to the
unit box, linearly appearing derivatives eliminated). Constraints are then
generated family by family. A family is a list of terms

    (measure, multiplier q, optional derivative variable v, optional x-map h)

and contributes, for every test monomial phi of the family's test degree, the
row  sum_terms  integral of  D_v(phi o h) * q  d(measure)  =  rhs(phi).
Parts of an occupation-measure integrand that are linear in an input u_k are
routed to the control measure nu{k}.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from src.moments import (MeasureDecl, MeasureRole, MomentBasis, MomentError, MomentVector, describe_monomial,
                         localizing_map)
from src.polyalg import (MultiIndex, Polynomial, PolynomialError, VariableSpace, mono_basis, poly_diff,
                         poly_embed, poly_restrict, poly_substitute)
from src.problem import BoundaryKind, PDEProblem, normalize_inputs, rescale_to_unit_box
from src.quadrature import converged_moments
from src.sdpsolve import ConicProblem, PSDBlock, SolveResult, Tolerances
from src.sdpsolve import solve as solve_conic
from src.semialg import (BoundaryPiece, GeometryError, SemialgebraicSet, check_measure_preserving, interval_set,
                         lebesgue_moments, surface_integral, surface_moments)

logger = logging.getLogger(__name__)

MU = 'mu'
ZERO_TOL = 1e-13


class AssemblyError(ValueError):
    """Raised for inconsistent problems, degree overflow and invalid reductions"""


def boundary_measure(piece: int) -> str:
    return f"mu_d{piece}"


def control_measure(k: int, piece: Optional[int] = None, slack: bool = False) -> str:
    prefix = 'nuhat' if slack else 'nu'
    return f"{prefix}{k}" if piece is None else f"{prefix}_d{piece}_{k}"


def _has_z(p: Optional[Polynomial]) -> bool:
    return p is not None and any(p.space.block_of(v) == 'z' for v in p.variables())


def _clean(p: Polynomial) -> Polynomial:
    return Polynomial(p.space, {a: c for a, c in p.terms.items() if abs(c) > ZERO_TOL})


# --- problem preparation ---------------------------------------------------

def n_var(problem: PDEProblem) -> int:
    """Number of variables of the occupation measure: n + n_y + number of z columns"""
    return problem.n + problem.n_y + len(problem.z_names)


def _z_usage(problem: PDEProblem) -> set:
    used = set()
    polys = list(problem.F) + [problem.L] + list(problem.substitutions.values())
    for bc in problem.boundary:
        polys += list(bc.G) + [bc.L]
    for p in polys:
        if p is not None:
            used.update(v for v in p.variables() if problem.space.block_of(v) == 'z')
    for entry in problem.B:
        used.add(f"z{entry.unknown}_{entry.i}")
        for k, y in enumerate(problem.y_names, start=1):
            if not poly_diff(entry.coefficient, y).is_zero():
                used.add(f"z{k}_{entry.j}")
    return used


def reduce_linear_derivatives(problem: PDEProblem) -> PDEProblem:
    """Eliminate substituted derivatives and drop z columns no constraint needs"""
    if problem.reduced:
        return problem
    subs = dict(problem.substitutions)
    for name, expr in subs.items():
        clash = sorted(set(expr.variables()) & set(subs))
        if clash:
            raise AssemblyError(f"Substitution for {name} references eliminated derivatives {clash}")
    used = _z_usage(problem)
    excluded = set(problem.exclude_from_test)
    kept = []
    dropped = []
    for name in problem.z_names:
        if name in subs:
            continue
        k, m = (int(v) for v in name[1:].split('_'))
        if not used or (name not in used and f"y{k}" in excluded):
            dropped.append(name)
            continue
        kept.append((k, m))
    if not subs and not dropped:
        return problem

    space = VariableSpace.standard(problem.n, problem.n_y, z=kept, n_u=problem.n_u)

    def convert(p: Optional[Polynomial]) -> Optional[Polynomial]:
        if p is None:
            return None
        try:
            return poly_embed(poly_substitute(p, subs) if subs else p, space)
        except PolynomialError as e:
            raise AssemblyError(f"Cannot reduce {p}: {e}") from e

    derivatives = {name: convert(expr) for name, expr in subs.items()}
    for k, m in kept:
        derivatives[f"z{k}_{m}"] = Polynomial.variable(space, f"z{k}_{m}")
    kept_names = set(space.block('z'))

    boundary = []
    for bc in problem.boundary:
        boundary.append(replace(
            bc, G=tuple(convert(g) for g in bc.G), C=tuple(tuple(convert(c) for c in row) for row in bc.C),
            L=convert(bc.L), L_u=tuple(convert(p) for p in bc.L_u),
            z_bounds=None if bc.z_bounds is None else {n: b for n, b in bc.z_bounds.items() if n in kept_names}))
    reduced = replace(
        problem, space=space, F=tuple(convert(f) for f in problem.F),
        B=tuple(replace(e, coefficient=convert(e.coefficient)) for e in problem.B),
        C=tuple(tuple(convert(c) for c in row) for row in problem.C), boundary=tuple(boundary),
        L=convert(problem.L), L_u=tuple(convert(p) for p in problem.L_u),
        z_bounds={n: b for n, b in problem.z_bounds.items() if n in kept_names},
        substitutions={}, derivatives=derivatives, reduced=True)
    logger.info(f"Reduced '{problem.name}': eliminated {sorted(subs)}, dropped {dropped}, "
                f"n_var {n_var(problem)} -> {n_var(reduced)}")
    return reduced


def prepare_problem(problem: PDEProblem) -> PDEProblem:
    """Normalise inputs, rescale to the unit box and apply declared reductions"""
    return reduce_linear_derivatives(rescale_to_unit_box(normalize_inputs(problem)))


# --- measures --------------------------------------------------------------

@dataclass(frozen=True)
class MeasureLayout:
    measures: Tuple[MeasureDecl, ...]
    bases: Mapping[str, MomentBasis]
    offsets: Mapping[str, int]
    fixed: Mapping[str, Mapping[str, float]]
    convergence_guaranteed: bool

    @property
    def n_columns(self) -> int:
        return sum(len(b) for b in self.bases.values())

    def measure(self, name: str) -> MeasureDecl:
        for decl in self.measures:
            if decl.name == name:
                return decl
        raise AssemblyError(f"Unknown measure '{name}'")

    def columns(self, name: str) -> slice:
        start = self.offsets[name]
        return slice(start, start + len(self.bases[name]))


def _block_constraints(space: VariableSpace, names: Sequence[str], bounds: Mapping
                       ) -> Tuple[List[Polynomial], bool]:
    if not names:
        return [], True
    sub = space.subspace(names)
    box = interval_set(sub, {n: bounds.get(n, (None, None)) for n in names})
    bounded = not box.is_unbounded
    return [poly_embed(g, space) for g in box.constraints()], bounded


def _boundary_needs_z(problem: PDEProblem, piece: BoundaryPiece) -> bool:
    if not problem.z_names:
        return False
    bc = problem.condition_for(piece.index)
    if bc is not None and (any(_has_z(g) for g in bc.G) or _has_z(bc.L)):
        return True
    for entry in problem.B:
        if piece.normal_component(entry.j).is_zero():
            continue
        if _has_z(entry.coefficient * problem.derivative(entry.unknown, entry.i)):
            return True
    return False


def _piece_x_constraints(problem: PDEProblem, piece: BoundaryPiece, space: VariableSpace) -> List[Polynomial]:
    free = piece.free_coordinates()
    if piece.is_box_face:
        bounds = {name: piece.extent[int(name[1:]) - 1] for name in free}
        constraints, _ = _block_constraints(space, free, bounds)
        return constraints
    xs = list(problem.geometry.omega.constraints()) + list(piece.inequalities) + [piece.h, -piece.h]
    return [poly_embed(g, space) for g in xs]


def declare_measures(problem: PDEProblem, d: int, d_tilde: Optional[int] = None) -> MeasureLayout:
    """Measures in column order: mu, boundary measures, controls, then slacks"""
    ambient = problem.space
    y_names = problem.y_names
    z_names = problem.z_names
    decls = []
    fixed = {}
    guaranteed = True

    mu_space = ambient.subspace([v for v in ambient.names if ambient.block_of(v) != 'u'])
    inequalities = [poly_embed(g, mu_space) for g in problem.geometry.omega.constraints()]
    y_cons, y_bounded = _block_constraints(mu_space, y_names, problem.y_bounds)
    z_cons, z_bounded = _block_constraints(mu_space, z_names, problem.z_bounds)
    guaranteed &= y_bounded and z_bounded
    decls.append(MeasureDecl(MU, SemialgebraicSet(mu_space, tuple(inequalities + y_cons + z_cons)),
                             MeasureRole.OCCUPATION))
    fixed[MU] = {}

    piece_spaces = {}
    for piece in problem.geometry.pieces:
        bc = problem.condition_for(piece.index)
        y_bounds = bc.y_bounds if bc is not None and bc.y_bounds is not None else problem.y_bounds
        z_bounds = bc.z_bounds if bc is not None and bc.z_bounds is not None else problem.z_bounds
        free = piece.free_coordinates()
        zs = z_names if _boundary_needs_z(problem, piece) else ()
        space = ambient.subspace(list(free) + list(y_names) + list(zs))
        xy_space = ambient.subspace(list(free) + list(y_names))
        y_cons, y_bounded = _block_constraints(space, y_names, y_bounds)
        z_cons, z_bounded = _block_constraints(space, zs, z_bounds)
        guaranteed &= y_bounded and z_bounded
        x_cons = _piece_x_constraints(problem, piece, space)
        name = boundary_measure(piece.index)
        decls.append(MeasureDecl(name, SemialgebraicSet(space, tuple(x_cons + y_cons + z_cons)),
                                 MeasureRole.BOUNDARY, piece=piece.index))
        fixed[name] = piece.fixed_map()
        xy_cons = _piece_x_constraints(problem, piece, xy_space)
        xy_cons += _block_constraints(xy_space, y_names, y_bounds)[0]
        piece_spaces[piece.index] = (xy_space, xy_cons)

    xy_space = ambient.subspace(list(problem.x_names) + list(y_names))
    xy_cons = [poly_embed(g, xy_space) for g in problem.geometry.omega.constraints()]
    xy_cons += _block_constraints(xy_space, y_names, problem.y_bounds)[0]
    for slack in (False, True):
        role = MeasureRole.SLACK if slack else MeasureRole.CONTROL
        for k in range(1, problem.n_u + 1):
            name = control_measure(k, slack=slack)
            decls.append(MeasureDecl(name, SemialgebraicSet(xy_space, tuple(xy_cons)), role, channel=k))
            fixed[name] = {}
        for bc in problem.boundary:
            space, cons = piece_spaces[bc.piece]
            for k in range(1, bc.n_u + 1):
                name = control_measure(k, bc.piece, slack)
                decls.append(MeasureDecl(name, SemialgebraicSet(space, tuple(cons)), role, piece=bc.piece, channel=k))
                fixed[name] = problem.geometry.piece(bc.piece).fixed_map()

    cap = d_tilde if d_tilde is not None and d_tilde < d else None
    bases = {}
    offsets = {}
    position = 0
    for decl in decls:
        basis = MomentBasis(decl.space, d, cap if decl.space.block('z') else None)
        bases[decl.name] = basis
        offsets[decl.name] = position
        position += len(basis)
    if not guaranteed:
        logger.warning(f"Y or Z is unbounded in '{problem.name}'; convergence of the hierarchy is not guaranteed")
    return MeasureLayout(tuple(decls), bases, offsets, fixed, guaranteed)


# --- constraint families ---------------------------------------------------

@dataclass(frozen=True)
class FamilyTerm:
    measure: str
    multiplier: Polynomial
    derivative: Optional[str] = None
    xmap: Optional[Mapping[str, Polynomial]] = field(default=None, compare=False, hash=False)


@dataclass(frozen=True)
class ConstraintFamily:
    label: str
    kind: str
    test_space: VariableSpace
    terms: Tuple[FamilyTerm, ...]
    rhs: Optional[Callable[[Sequence[MultiIndex]], np.ndarray]] = field(default=None, compare=False, hash=False)

    def inflation(self) -> int:
        """Largest degree a term adds to the test monomial (inputs excluded)"""
        inflation = None
        for term in self.terms:
            space = term.multiplier.space
            names = [v for v in space.names if space.block_of(v) != 'u']
            delta = term.multiplier.degree_in(names) - (1 if term.derivative else 0)
            inflation = delta if inflation is None else max(inflation, delta)
        return 0 if inflation is None else inflation

    def test_degree(self, d: int) -> int:
        return min(d, d - self.inflation())


def _family(label: str, kind: str, test_space: VariableSpace, terms: Iterable[FamilyTerm],
            rhs=None) -> Optional[ConstraintFamily]:
    kept = []
    for term in terms:
        multiplier = _clean(term.multiplier)
        if not multiplier.is_zero():
            kept.append(replace(term, multiplier=multiplier))
    if not kept:
        logger.debug(f"Family {label} vanishes and is skipped")
        return None
    return ConstraintFamily(label, kind, test_space, tuple(kept), rhs)


def _test_y(problem: PDEProblem, columns: Iterable[int] = ()) -> List[str]:
    excluded = set(problem.exclude_from_test)
    columns = list(columns)
    names = []
    for k, y in enumerate(problem.y_names, start=1):
        if y in excluded:
            continue
        if all(problem.has_derivative(k, m) for m in columns):
            names.append(y)
    return names


def _embed_x(problem: PDEProblem, p: Polynomial) -> Polynomial:
    return poly_embed(p, problem.space)


def stokes_families(problem: PDEProblem) -> List[ConstraintFamily]:
    ambient = problem.space
    one = Polynomial.constant(ambient, 1.0)
    families = []
    for m in range(1, problem.n + 1):
        test_y = _test_y(problem, [m])
        test_space = ambient.subspace(list(problem.x_names) + test_y)
        terms = [FamilyTerm(MU, one, derivative=f"x{m}")]
        for y in test_y:
            terms.append(FamilyTerm(MU, problem.derivative(int(y[1:]), m), derivative=y))
        for piece in problem.geometry.pieces:
            terms.append(FamilyTerm(boundary_measure(piece.index), -_embed_x(problem, piece.normal_component(m))))
        family = _family(f"stokes[x{m}]", 'stokes', test_space, terms)
        if family is not None:
            families.append(family)
    return families


def interior_families(problem: PDEProblem) -> List[ConstraintFamily]:
    ambient = problem.space
    families = []
    for r, F in enumerate(problem.F, start=1):
        integrand = F
        for k, name in enumerate(problem.u_names):
            if problem.C:
                integrand = integrand - problem.C[r - 1][k] * Polynomial.variable(ambient, name)
        entries = [e for e in problem.B if e.row == r]
        test_y = _test_y(problem, [e.j for e in entries])
        test_space = ambient.subspace(list(problem.x_names) + test_y)
        terms = [FamilyTerm(MU, integrand)]
        for entry in entries:
            b = entry.coefficient
            z_li = problem.derivative(entry.unknown, entry.i)
            total = poly_diff(b, f"x{entry.j}")
            for k, y in enumerate(problem.y_names, start=1):
                db = poly_diff(b, y)
                if not db.is_zero():
                    total = total + db * problem.derivative(k, entry.j)
            terms.append(FamilyTerm(MU, -(total * z_li)))
            terms.append(FamilyTerm(MU, -(b * z_li), derivative=f"x{entry.j}"))
            for y in test_y:
                terms.append(FamilyTerm(MU, -(b * z_li * problem.derivative(int(y[1:]), entry.j)), derivative=y))
            for piece in problem.geometry.pieces:
                normal = _embed_x(problem, piece.normal_component(entry.j))
                terms.append(FamilyTerm(boundary_measure(piece.index), b * z_li * normal))
        family = _family(f"interior[F{r}]", 'interior', test_space, terms)
        if family is not None:
            families.append(family)
    return families


def _dirichlet_rhs(problem: PDEProblem, piece: BoundaryPiece, values, test_space: VariableSpace):
    xspace = problem.geometry.omega.space
    test_y = [v for v in test_space.names if test_space.block_of(v) == 'y']
    components = {y: values[int(y[1:]) - 1] for y in test_y}
    if all(c.polynomial is not None for c in components.values()):
        images = {y: c.polynomial for y, c in components.items()}

        def polynomial_rhs(monomials: Sequence[MultiIndex]) -> np.ndarray:
            out = []
            for alpha in monomials:
                phi = Polynomial(test_space, {alpha: 1.0})
                out.append(surface_integral(piece, poly_substitute(phi, images, target=xspace)))
            return np.array(out)

        return polynomial_rhs
    if not piece.is_box_face:
        raise AssemblyError(f"Non-polynomial Dirichlet data on '{piece.name}' needs a box face")
    free = piece.free_coordinates()
    lo = [piece.extent[int(v[1:]) - 1][0] for v in free]
    hi = [piece.extent[int(v[1:]) - 1][1] for v in free]
    pinned = piece.fixed_map()

    def graph(points: np.ndarray) -> np.ndarray:
        full = np.empty((points.shape[0], problem.n))
        for j, name in enumerate(xspace.names):
            full[:, j] = pinned[name] if name in pinned else points[:, free.index(name)]
        columns = []
        for name in test_space.names:
            columns.append(components[name].evaluate(full) if name in components else full[:, int(name[1:]) - 1])
        return np.column_stack(columns) if columns else np.ones((points.shape[0], 0))

    def quadrature_rhs(monomials: Sequence[MultiIndex]) -> np.ndarray:
        return converged_moments(graph, lo, hi, monomials)

    return quadrature_rhs


def _marginal_rhs(piece: BoundaryPiece, test_space: VariableSpace, n: int):
    positions = [int(v[1:]) - 1 for v in test_space.names]

    def rhs(monomials: Sequence[MultiIndex]) -> np.ndarray:
        out = []
        for alpha in monomials:
            full = [0] * n
            for pos, e in zip(positions, alpha):
                full[pos] = e
            out.append(surface_moments(piece, tuple(full)))
        return np.array(out)

    return rhs


def _lebesgue_rhs(problem: PDEProblem):
    def rhs(monomials: Sequence[MultiIndex]) -> np.ndarray:
        return np.array([lebesgue_moments(problem.geometry, alpha) for alpha in monomials])

    return rhs


def _covered_pieces(problem: PDEProblem) -> None:
    covered = set()
    for bc in problem.boundary:
        covered.add(bc.piece)
        if bc.kind is BoundaryKind.PERIODIC:
            covered.add(bc.target)
    missing = [p.name for p in problem.geometry.pieces if p.index not in covered]
    if missing:
        raise AssemblyError(f"Boundary pieces {missing} have neither a condition nor a free marker")


def check_periodic_maps(problem: PDEProblem, d: int) -> None:
    geometry = problem.geometry
    for bc in problem.boundary:
        if bc.kind is BoundaryKind.PERIODIC:
            try:
                check_measure_preserving(geometry.piece(bc.piece), geometry.piece(bc.target), bc.hmap, d)
            except GeometryError as e:
                raise AssemblyError(str(e)) from e


def boundary_families(problem: PDEProblem) -> List[ConstraintFamily]:
    _covered_pieces(problem)
    ambient = problem.space
    geometry = problem.geometry
    one = Polynomial.constant(ambient, 1.0)
    test_y = _test_y(problem)
    families = []
    for bc in problem.boundary:
        piece = geometry.piece(bc.piece)
        name = boundary_measure(piece.index)
        test_space = ambient.subspace(list(piece.free_coordinates()) + test_y)
        family = None
        if bc.kind is BoundaryKind.GENERAL:
            for g, G in enumerate(bc.G):
                terms = [FamilyTerm(name, G)]
                terms += [FamilyTerm(control_measure(k + 1, piece.index), -bc.C[g][k]) for k in range(bc.n_u)]
                family = _family(f"boundary[{piece.name}:G{g + 1}]", 'boundary', test_space, terms)
                if family is not None:
                    families.append(family)
            continue
        if bc.kind is BoundaryKind.DIRICHLET:
            family = _family(f"dirichlet[{piece.name}]", 'dirichlet', test_space, [FamilyTerm(name, one)],
                             _dirichlet_rhs(problem, piece, bc.values, test_space))
        elif bc.kind is BoundaryKind.PERIODIC:
            target = geometry.piece(bc.target)
            images = {x: _embed_x(problem, h) for x, h in zip(problem.x_names, bc.hmap)}
            test_space = ambient.subspace(list(target.free_coordinates()) + test_y)
            family = _family(f"periodic[{piece.name}->{target.name}]", 'periodic', test_space,
                             [FamilyTerm(boundary_measure(target.index), one), FamilyTerm(name, -one, xmap=images)])
        if family is not None:
            families.append(family)
    return families


def marginal_families(problem: PDEProblem) -> List[ConstraintFamily]:
    one = Polynomial.constant(problem.space, 1.0)
    families = []
    for piece in problem.geometry.pieces:
        test_space = problem.space.subspace(piece.free_coordinates())
        families.append(_family(f"marginal[{piece.name}]", 'marginal', test_space,
                                [FamilyTerm(boundary_measure(piece.index), one)],
                                _marginal_rhs(piece, test_space, problem.n)))
    if problem.geometry.is_box:
        test_space = problem.space.subspace(list(problem.x_names))
        families.append(_family(f"marginal[{MU}]", 'marginal', test_space, [FamilyTerm(MU, one)],
                                _lebesgue_rhs(problem)))
    return families


def slack_families(problem: PDEProblem) -> List[ConstraintFamily]:
    ambient = problem.space
    one = Polynomial.constant(ambient, 1.0)
    families = []
    test_space = ambient.subspace(list(problem.x_names) + list(problem.y_names))
    for k in range(1, problem.n_u + 1):
        families.append(_family(f"slack[u{k}]", 'slack', test_space, [
            FamilyTerm(control_measure(k), one), FamilyTerm(control_measure(k, slack=True), one),
            FamilyTerm(MU, -one)]))
    for bc in problem.boundary:
        piece = problem.geometry.piece(bc.piece)
        test_space = ambient.subspace(list(piece.free_coordinates()) + list(problem.y_names))
        for k in range(1, bc.n_u + 1):
            families.append(_family(f"slack[{piece.name}:u{k}]", 'slack', test_space, [
                FamilyTerm(control_measure(k, piece.index), one),
                FamilyTerm(control_measure(k, piece.index, slack=True), one),
                FamilyTerm(boundary_measure(piece.index), -one)]))
    return families


def all_families(problem: PDEProblem) -> List[ConstraintFamily]:
    return (stokes_families(problem) + interior_families(problem) + boundary_families(problem)
            + marginal_families(problem) + slack_families(problem))


def family_test_degrees(problem: PDEProblem, d: int) -> Dict[str, int]:
    """Per-family test degree d' (largest test degree keeping every integrand within d)"""
    prepared = prepare_problem(problem)
    return {family.label: family.test_degree(d) for family in all_families(prepared)}


def test_degree(problem: PDEProblem, d: int) -> int:
    degrees = family_test_degrees(problem, d)
    d_prime = min(degrees.values(), default=d)
    if d_prime < 0:
        worst = min(degrees, key=degrees.get)
        raise AssemblyError(f"Relaxation degree {d} is too small: family {worst} has test degree {d_prime}")
    return d_prime


# --- row emission ----------------------------------------------------------

@dataclass(frozen=True)
class RowTag:
    family: str
    monomial: str

    def __str__(self):
        return f"{self.family}:{self.monomial}"


@dataclass(frozen=True)
class MomentRow:
    tag: RowTag
    coefficients: Mapping[str, Mapping[int, float]]
    rhs: float


def _integrand(phi: Polynomial, term: FamilyTerm) -> Polynomial:
    base = poly_diff(phi, term.derivative) if term.derivative else phi
    if term.xmap:
        base = poly_substitute(base, term.xmap)
    return base * term.multiplier


def _split_inputs(p: Polynomial) -> Dict[Optional[int], Polynomial]:
    """Separate the input-free part from the parts linear in each u_k (with u stripped)"""
    u_positions = p.space.block_indices('u')
    parts = {}
    for alpha, coef in p.terms.items():
        powers = [alpha[i] for i in u_positions]
        if not any(powers):
            key = None
        elif sum(powers) == 1:
            key = powers.index(1) + 1
        else:
            raise AssemblyError(f"Integrand {p} is nonlinear in the inputs")
        stripped = list(alpha)
        for i in u_positions:
            stripped[i] = 0
        bucket = parts.setdefault(key, {})
        bucket[tuple(stripped)] = bucket.get(tuple(stripped), 0.0) + coef
    return {key: Polynomial(p.space, terms) for key, terms in parts.items()}


def _accumulate(coefficients: Dict[str, Dict[int, float]], integrand: Polynomial, measure: str,
                layout: MeasureLayout) -> bool:
    """Add the Riesz coefficients of an integrand; False when the z-degree cap cuts it"""
    for channel, part in _split_inputs(integrand).items():
        target = measure
        if channel is not None:
            if measure != MU:
                raise AssemblyError(f"Interior inputs cannot enter integrals against {measure}")
            target = control_measure(channel)
        basis = layout.bases[target]
        try:
            restricted = poly_restrict(part, basis.space, layout.fixed[target])
        except PolynomialError as e:
            raise AssemblyError(f"Integrand {part} cannot be integrated against {target}: {e}") from e
        bucket = coefficients.setdefault(target, {})
        for beta, coef in restricted.terms.items():
            position = basis.index.get(beta)
            if position is None:
                if sum(beta) > basis.d:
                    raise AssemblyError(f"Integrand degree {sum(beta)} against {target} exceeds d={basis.d}")
                return False
            bucket[position] = bucket.get(position, 0.0) + coef
    return True


def emit_rows(problem: PDEProblem, families: Sequence[ConstraintFamily], d: int,
              layout: MeasureLayout) -> Tuple[List[MomentRow], int]:
    """Rows for every family and test monomial; also returns the number of rows cut by the z cap"""
    rows = []
    capped = 0
    for family in families:
        d_prime = family.test_degree(d)
        if d_prime < 0:
            raise AssemblyError(f"Relaxation degree {d} is too small for family {family.label}")
        monomials = mono_basis(family.test_space, d_prime)
        rhs = family.rhs(monomials) if family.rhs is not None else np.zeros(len(monomials))
        for alpha, value in zip(monomials, rhs):
            phi = poly_embed(Polynomial(family.test_space, {alpha: 1.0}), problem.space)
            coefficients = {}
            if all(_accumulate(coefficients, _integrand(phi, term), term.measure, layout) for term in family.terms):
                rows.append(MomentRow(RowTag(family.label, describe_monomial(family.test_space, alpha)),
                                      coefficients, float(value)))
            else:
                capped += 1
        logger.debug(f"Family {family.label}: test degree {d_prime}, {len(monomials)} test monomials")
    return rows, capped


def _rows_for(problem: PDEProblem, d: int, layout: Optional[MeasureLayout], make) -> List[MomentRow]:
    prepared = prepare_problem(problem)
    layout = layout or declare_measures(prepared, d, prepared.d_tilde)
    return emit_rows(prepared, make(prepared), d, layout)[0]


def assemble_stokes(problem: PDEProblem, d: int, layout: Optional[MeasureLayout] = None) -> List[MomentRow]:
    return _rows_for(problem, d, layout, stokes_families)


def assemble_interior(problem: PDEProblem, d: int, layout: Optional[MeasureLayout] = None) -> List[MomentRow]:
    return _rows_for(problem, d, layout, interior_families)


def assemble_boundary(problem: PDEProblem, d: int, layout: Optional[MeasureLayout] = None) -> List[MomentRow]:
    check_periodic_maps(prepare_problem(problem), d)
    return _rows_for(problem, d, layout, boundary_families)


def assemble_marginals(problem: PDEProblem, d: int, layout: Optional[MeasureLayout] = None) -> List[MomentRow]:
    return _rows_for(problem, d, layout, marginal_families)


def assemble_slack(problem: PDEProblem, d: int, layout: Optional[MeasureLayout] = None) -> List[MomentRow]:
    return _rows_for(problem, d, layout, slack_families)


def assemble_objective(problem: PDEProblem, d: int, layout: Optional[MeasureLayout] = None) -> np.ndarray:
    """Objective vector c over the layout's columns"""
    prepared = prepare_problem(problem)
    layout = layout or declare_measures(prepared, d, prepared.d_tilde)
    pieces = []
    if prepared.L is not None:
        pieces.append((MU, prepared.L))
    pieces += [(control_measure(k), p) for k, p in enumerate(prepared.L_u, start=1)]
    for bc in prepared.boundary:
        if bc.L is not None:
            pieces.append((boundary_measure(bc.piece), bc.L))
        pieces += [(control_measure(k, bc.piece), p) for k, p in enumerate(bc.L_u, start=1)]
    coefficients = {}
    for measure, p in pieces:
        if not _accumulate(coefficients, p, measure, layout):
            raise AssemblyError(f"Objective term {p} exceeds the z-degree cap")
    c = np.zeros(layout.n_columns)
    for measure, bucket in coefficients.items():
        offset = layout.offsets[measure]
        for position, value in bucket.items():
            c[offset + position] += value
    return c


# --- SDP -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockSpec:
    label: str
    measure: str
    weight: Optional[Polynomial]
    size: int
    matrix: sparse.csr_matrix


@dataclass(frozen=True, eq=False)
class AssembledSDP:
    problem: PDEProblem
    layout: MeasureLayout
    A: sparse.csr_matrix
    b: np.ndarray
    c: np.ndarray
    tags: Tuple[RowTag, ...]
    blocks: Tuple[BlockSpec, ...]
    d: int
    d_prime: int
    family_degrees: Mapping[str, int]
    d_tilde: int
    duplicates_removed: int = 0
    capped_rows: int = 0

    @property
    def measures(self) -> Tuple[MeasureDecl, ...]:
        return self.layout.measures

    @property
    def convergence_guaranteed(self) -> bool:
        return self.layout.convergence_guaranteed

    @property
    def n_columns(self) -> int:
        return self.layout.n_columns

    @property
    def largest_block(self) -> int:
        return max((block.size for block in self.blocks), default=0)

    @property
    def total_psd_dimension(self) -> int:
        return sum(block.size for block in self.blocks)

    def split(self, s: Sequence[float]) -> Dict[str, MomentVector]:
        s = np.asarray(s, dtype=float)
        return {decl.name: MomentVector(self.layout.bases[decl.name], s[self.layout.columns(decl.name)])
                for decl in self.measures}

    def stack(self, vectors: Mapping[str, Sequence[float]]) -> np.ndarray:
        s = np.zeros(self.n_columns)
        for name, values in vectors.items():
            s[self.layout.columns(name)] = values.s if isinstance(values, MomentVector) else values
        return s

    def conic(self, sense: str = 'inf') -> ConicProblem:
        blocks = tuple(PSDBlock(block.label, block.size, block.matrix) for block in self.blocks)
        return ConicProblem(self.A, self.b, self.c, blocks, sense, tuple(str(t) for t in self.tags))

    def solve(self, sense: str = 'inf', tol: Optional[Tolerances] = None) -> Tuple[Dict[str, MomentVector], SolveResult]:
        """Solve for one objective sense; returns the moment vectors per measure and the raw result"""
        result = solve_conic(self.conic(sense), tol)
        return self.split(result.s), result

    def residuals(self, s: Sequence[float]) -> Dict[str, float]:
        """Largest equality residual per constraint family"""
        r = np.abs(self.A @ np.asarray(s, dtype=float) - self.b)
        out = {}
        for tag, value in zip(self.tags, r):
            out[tag.family] = max(out.get(tag.family, 0.0), float(value))
        return out

    def mass_identities(self, s: Sequence[float]) -> Dict[str, Tuple[float, float]]:
        """(mass, expected) for mu (box domains) and every boundary measure"""
        vectors = self.split(s)
        geometry = self.problem.geometry
        out = {}
        if geometry.is_box:
            out[MU] = (vectors[MU].mass, geometry.volume)
        for piece in geometry.pieces:
            name = boundary_measure(piece.index)
            out[name] = (vectors[name].mass, surface_moments(piece, (0,) * geometry.n))
        return out


def _stack_rows(rows: Sequence[MomentRow], layout: MeasureLayout
                ) -> Tuple[sparse.csr_matrix, np.ndarray, Tuple[RowTag, ...], int]:
    seen = {}
    data, row_ids, col_ids, b, tags = [], [], [], [], []
    duplicates = 0
    for row in rows:
        entries = []
        for measure, bucket in row.coefficients.items():
            offset = layout.offsets[measure]
            entries += [(offset + pos, val) for pos, val in bucket.items() if abs(val) > ZERO_TOL]
        entries.sort()
        if not entries:
            if abs(row.rhs) > 1e-12:
                raise AssemblyError(f"Constraint {row.tag} reads 0 = {row.rhs}; the problem is inconsistent")
            continue
        key = tuple(entries)
        if key in seen:
            if abs(seen[key] - row.rhs) > 1e-9 * max(1.0, abs(row.rhs)):
                logger.warning(f"Duplicate constraint {row.tag} has right-hand side {row.rhs} vs {seen[key]}")
            duplicates += 1
            continue
        seen[key] = row.rhs
        index = len(b)
        for col, val in entries:
            row_ids.append(index)
            col_ids.append(col)
            data.append(val)
        b.append(row.rhs)
        tags.append(row.tag)
    A = sparse.csr_matrix((data, (row_ids, col_ids)), shape=(len(b), layout.n_columns))
    return A, np.array(b, dtype=float), tuple(tags), duplicates


def _psd_blocks(layout: MeasureLayout, d: int) -> Tuple[BlockSpec, ...]:
    blocks = []
    n = layout.n_columns
    for decl in layout.measures:
        basis = layout.bases[decl.name]
        offset = layout.offsets[decl.name]
        weights = [None] + list(decl.support.inequalities)
        for i, g in enumerate(weights):
            if g is not None and g.degree > d:
                logger.warning(f"Support constraint {g} of {decl.name} exceeds degree {d}; skipped")
                continue
            try:
                size, local = localizing_map(basis, g, d)
            except MomentError as e:
                logger.warning(f"Support constraint {g} of {decl.name} skipped: {e}")
                continue
            if size == 0:
                continue
            coo = local.tocoo()
            matrix = sparse.csr_matrix((coo.data, (coo.row, coo.col + offset)), shape=(size * size, n))
            label = f"{decl.name}:moment" if g is None else f"{decl.name}:g{i}"
            blocks.append(BlockSpec(label, decl.name, g, size, matrix))
    return tuple(blocks)


def build_sdp(problem: PDEProblem, d: Optional[int] = None, d_tilde: Optional[int] = None) -> AssembledSDP:
    """Assemble the degree-d moment relaxation of a problem"""
    prepared = prepare_problem(problem)
    d = prepared.d if d is None else d
    if d is None:
        raise AssemblyError("No relaxation degree given")
    if d < 0 or d % 2:
        raise AssemblyError(f"Relaxation degree must be even and nonnegative, got {d}")
    if d < prepared.data_degree():
        raise AssemblyError(f"Relaxation degree {d} is below the data degree {prepared.data_degree()}")
    d_tilde = prepared.d_tilde if d_tilde is None else d_tilde
    d_tilde = d if d_tilde is None else d_tilde
    check_periodic_maps(prepared, d)

    layout = declare_measures(prepared, d, d_tilde)
    families = all_families(prepared)
    degrees = {family.label: family.test_degree(d) for family in families}
    d_prime = min(degrees.values(), default=d)
    if d_prime < 0:
        raise AssemblyError(f"Relaxation degree {d} is too small: test degree {d_prime}")
    rows, capped = emit_rows(prepared, families, d, layout)
    A, b, tags, duplicates = _stack_rows(rows, layout)
    c = assemble_objective(prepared, d, layout)
    blocks = _psd_blocks(layout, d)
    sdp = AssembledSDP(prepared, layout, A, b, c, tags, blocks, d, d_prime, degrees, d_tilde,
                       duplicates, capped)
    logger.info(f"Assembled '{prepared.name}' at d={d}: {A.shape[0]} rows x {A.shape[1]} moments, "
                f"{len(blocks)} PSD blocks (largest {sdp.largest_block}), d'={d_prime}, "
                f"{duplicates} duplicate and {capped} capped rows removed")
    return sdp
