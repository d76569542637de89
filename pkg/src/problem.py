"""
PDEProblem data model, problem-file parser and unit-box rescaling.

A problem file is a JSON document with the sections ``name``, ``domain``,
``unknowns``, ``pde``, ``boundary``, ``controls``, ``objective``,
``bounds``, ``reductions``, ``relaxation`` and ``sense``. Unknown keys are
rejected with the offending field path. See README.md for the schema.
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.polyalg import (Polynomial, PolynomialError, VariableSpace, is_polynomial_text, lambdify_expression,
                         parse_polynomial, poly_affine_substitute, poly_embed, poly_eval)
from src.semialg import (BoundaryPiece, DomainGeometry, GeometryError, SemialgebraicSet, box_domain,
                         general_domain, read_sigma_table)

logger = logging.getLogger(__name__)

Bounds = Tuple[Optional[float], Optional[float]]


class ProblemFileError(ValueError):
    """Raised for malformed problem files; carries the field path and line when known"""

    def __init__(self, message: str, path: str = '', line: Optional[int] = None):
        self.field_path = path
        self.line = line
        location = path or '<root>'
        if line is not None:
            location = f"line {line}"
        super().__init__(f"{location}: {message}")


class Sense(str, Enum):
    INF = 'inf'
    SUP = 'sup'
    BOTH = 'both'


class BoundaryKind(str, Enum):
    GENERAL = 'general'
    DIRICHLET = 'dirichlet'
    PERIODIC = 'periodic'
    FREE = 'free'


@dataclass(frozen=True)
class DirichletComponent:
    """Boundary value of one unknown: an x-polynomial or a vectorised callable"""

    text: str
    polynomial: Optional[Polynomial] = None
    function: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False, hash=False)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        if self.polynomial is not None:
            return np.asarray(poly_eval(self.polynomial, np.atleast_2d(points)))
        return self.function(points)


@dataclass(frozen=True)
class BoundaryCondition:
    piece: int
    kind: BoundaryKind
    G: Tuple[Polynomial, ...] = ()
    C: Tuple[Tuple[Polynomial, ...], ...] = ()
    n_u: int = 0
    input_bounds: Tuple[Bounds, ...] = ()
    physical_input_bounds: Tuple[Bounds, ...] = ()
    values: Tuple[DirichletComponent, ...] = ()
    target: Optional[int] = None
    hmap: Tuple[Polynomial, ...] = ()
    L: Optional[Polynomial] = None
    L_u: Tuple[Polynomial, ...] = ()
    y_bounds: Optional[Mapping[str, Bounds]] = field(default=None, compare=False, hash=False)
    z_bounds: Optional[Mapping[str, Bounds]] = field(default=None, compare=False, hash=False)


@dataclass(frozen=True)
class BEntry:
    """Coefficient of the second derivative of unknown ``unknown`` in x_i, x_j in F row ``row``"""

    row: int
    unknown: int
    i: int
    j: int
    coefficient: Polynomial


@dataclass(frozen=True)
class BoxScaling:
    lo: Tuple[float, ...]
    length: Tuple[float, ...]

    @property
    def volume(self) -> float:
        return float(np.prod(self.length))

    def face_factor(self, piece: BoundaryPiece) -> float:
        factor = self.volume
        for name, _ in piece.fixed:
            factor /= self.length[int(name[1:]) - 1]
        return factor

    def to_physical(self, t: np.ndarray) -> np.ndarray:
        return np.asarray(self.lo) + np.asarray(self.length) * np.asarray(t)


@dataclass(frozen=True, eq=False)
class PDEProblem:
    name: str
    geometry: DomainGeometry
    n_y: int
    space: VariableSpace
    F: Tuple[Polynomial, ...]
    B: Tuple[BEntry, ...] = ()
    C: Tuple[Tuple[Polynomial, ...], ...] = ()
    n_u: int = 0
    input_bounds: Tuple[Bounds, ...] = ()
    physical_input_bounds: Tuple[Bounds, ...] = ()
    boundary: Tuple[BoundaryCondition, ...] = ()
    L: Optional[Polynomial] = None
    L_u: Tuple[Polynomial, ...] = ()
    y_bounds: Mapping[str, Bounds] = field(default_factory=dict)
    z_bounds: Mapping[str, Bounds] = field(default_factory=dict)
    substitutions: Mapping[str, Polynomial] = field(default_factory=dict)
    exclude_from_test: Tuple[str, ...] = ()
    d: Optional[int] = None
    d_tilde: Optional[int] = None
    sense: Sense = Sense.BOTH
    scaling: Optional[BoxScaling] = None
    reduced: bool = False
    derivatives: Mapping[str, Polynomial] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.geometry.n

    @property
    def x_names(self) -> Tuple[str, ...]:
        return self.space.block('x')

    @property
    def y_names(self) -> Tuple[str, ...]:
        return self.space.block('y')

    @property
    def z_names(self) -> Tuple[str, ...]:
        return self.space.block('z')

    @property
    def u_names(self) -> Tuple[str, ...]:
        return self.space.block('u')

    @property
    def is_controlled(self) -> bool:
        return self.n_u > 0 or any(bc.n_u for bc in self.boundary)

    @property
    def objective(self) -> Polynomial:
        return self.L if self.L is not None else Polynomial.zero(self.space)

    def derivative(self, k: int, m: int) -> Polynomial:
        """Expression standing for dy_k/dx_m: the z variable or its substitution"""
        name = f"z{k}_{m}"
        if name in self.derivatives:
            return self.derivatives[name]
        if name in self.substitutions:
            return self.substitutions[name]
        if name in self.space:
            return Polynomial.variable(self.space, name)
        raise PolynomialError(f"Derivative {name} was dropped from the problem")

    def has_derivative(self, k: int, m: int) -> bool:
        name = f"z{k}_{m}"
        return name in self.derivatives or name in self.substitutions or name in self.space

    def condition_for(self, piece: int) -> Optional[BoundaryCondition]:
        for bc in self.boundary:
            if bc.piece == piece:
                return bc
        return None

    def data_degree(self) -> int:
        polys = list(self.F) + [self.objective] + list(self.L_u)
        polys += [e.coefficient for e in self.B]
        for bc in self.boundary:
            polys += list(bc.G) + list(bc.L_u)
            if bc.L is not None:
                polys.append(bc.L)
        return max((p.degree for p in polys), default=0)


def z_name(k: int, j: int) -> str:
    return f"z{k}_{j}"


# --- parsing ---------------------------------------------------------------

_TOP_KEYS = {'name', 'domain', 'unknowns', 'pde', 'boundary', 'controls', 'objective', 'bounds',
             'reductions', 'relaxation', 'sense'}


def _check_keys(obj: Any, allowed: set, path: str, required: Sequence[str] = ()) -> Dict[str, Any]:
    if not isinstance(obj, dict):
        raise ProblemFileError(f"expected an object, got {type(obj).__name__}", path)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ProblemFileError(f"unknown keys {unknown}; allowed: {sorted(allowed)}", path)
    for key in required:
        if key not in obj:
            raise ProblemFileError(f"missing required key '{key}'", path)
    return obj


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _list(obj: Any, path: str, length: Optional[int] = None) -> List[Any]:
    if not isinstance(obj, list):
        raise ProblemFileError(f"expected a list, got {type(obj).__name__}", path)
    if length is not None and len(obj) != length:
        raise ProblemFileError(f"expected {length} entries, got {len(obj)}", path)
    return obj


def _int(obj: Any, path: str, minimum: int = 0) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int) or obj < minimum:
        raise ProblemFileError(f"expected an integer >= {minimum}, got {obj!r}", path)
    return obj


def _number(obj: Any, path: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ProblemFileError(f"expected a number, got {obj!r}", path)
    return float(obj)


def _poly(text: Any, parse_space: VariableSpace, target: VariableSpace, path: str) -> Polynomial:
    if not isinstance(text, (str, int, float)) or isinstance(text, bool):
        raise ProblemFileError(f"expected a polynomial string, got {text!r}", path)
    try:
        return poly_embed(parse_polynomial(text, parse_space), target)
    except PolynomialError as e:
        raise ProblemFileError(str(e), path) from e


def _bounds_pair(obj: Any, path: str, require_both: bool = False) -> Bounds:
    if obj is None:
        if require_both:
            raise ProblemFileError("bounds are required", path)
        return (None, None)
    pair = _list(obj, path, 2)
    lo = None if pair[0] is None else _number(pair[0], _join(path, 0))
    hi = None if pair[1] is None else _number(pair[1], _join(path, 1))
    if require_both and (lo is None or hi is None):
        raise ProblemFileError("both bounds are required", path)
    if lo is not None and hi is not None and not lo < hi:
        raise ProblemFileError(f"empty interval [{lo}, {hi}]", path)
    return (lo, hi)


def _parse_domain(obj: Any, path: str, base_dir: str) -> DomainGeometry:
    obj = _check_keys(obj, {'box', 'semialgebraic'}, path)
    if len(obj) != 1:
        raise ProblemFileError("exactly one of 'box' or 'semialgebraic' is required", path)
    if 'box' in obj:
        box = _check_keys(obj['box'], {'lo', 'hi'}, _join(path, 'box'), required=('lo', 'hi'))
        lo = [_number(v, _join(_join(path, 'box.lo'), i)) for i, v in enumerate(_list(box['lo'], _join(path, 'box.lo')))]
        hi = [_number(v, _join(_join(path, 'box.hi'), i)) for i, v in enumerate(_list(box['hi'], _join(path, 'box.hi')))]
        try:
            return box_domain(lo, hi)
        except GeometryError as e:
            raise ProblemFileError(str(e), _join(path, 'box')) from e
    spath = _join(path, 'semialgebraic')
    domain_obj = _check_keys(obj['semialgebraic'], {'n', 'inequalities', 'ball_radius', 'pieces', 'sigma_moments'},
                             spath, required=('n', 'pieces', 'sigma_moments'))
    n = _int(domain_obj['n'], _join(spath, 'n'), 1)
    xspace = VariableSpace.standard(n)
    inequalities = tuple(_poly(g, xspace, xspace, _join(_join(spath, 'inequalities'), i))
                         for i, g in enumerate(_list(domain_obj.get('inequalities', []), _join(spath, 'inequalities'))))
    radius = domain_obj.get('ball_radius')
    omega = SemialgebraicSet(xspace, inequalities,
                             None if radius is None else _number(radius, _join(spath, 'ball_radius')),
                             compact=radius is not None)
    table_path = domain_obj['sigma_moments']
    if not os.path.isabs(table_path):
        table_path = os.path.join(base_dir, table_path)
    try:
        table = read_sigma_table(table_path, n)
    except (OSError, GeometryError) as e:
        raise ProblemFileError(str(e), _join(spath, 'sigma_moments')) from e
    pieces = []
    for i, entry in enumerate(_list(domain_obj['pieces'], _join(spath, 'pieces'))):
        ppath = _join(_join(spath, 'pieces'), i)
        entry = _check_keys(entry, {'name', 'h', 'inequalities', 'unit_normal'}, ppath, required=('h',))
        h = _poly(entry['h'], xspace, xspace, _join(ppath, 'h'))
        gs = [_poly(g, xspace, xspace, _join(_join(ppath, 'inequalities'), j))
              for j, g in enumerate(_list(entry.get('inequalities', []), _join(ppath, 'inequalities')))]
        pieces.append(BoundaryPiece.from_polynomial(
            i + 1, entry.get('name', f"piece{i + 1}"), h, gs, bool(entry.get('unit_normal', False)),
            sigma_moments=table.get(i + 1)))
    return general_domain(omega, pieces)


def _parse_bounds(obj: Any, path: str, y_names: Sequence[str], z_names: Sequence[str]
                  ) -> Tuple[Dict[str, Bounds], Dict[str, Bounds]]:
    obj = _check_keys(obj, {'y', 'z'}, path)
    y_bounds = {}
    if 'y' in obj:
        for k, pair in enumerate(_list(obj['y'], _join(path, 'y'), len(y_names))):
            y_bounds[y_names[k]] = _bounds_pair(pair, _join(_join(path, 'y'), k))
    z_bounds = {}
    if 'z' in obj:
        zobj = obj['z']
        if not isinstance(zobj, dict):
            raise ProblemFileError("expected an object mapping z names to bounds", _join(path, 'z'))
        for name, pair in zobj.items():
            if name not in z_names:
                raise ProblemFileError(f"unknown derivative variable '{name}'", _join(path, 'z'))
            z_bounds[name] = _bounds_pair(pair, _join(_join(path, 'z'), name))
    return y_bounds, z_bounds


def _parse_controls(obj: Any, path: str, rows: int, xy_space: VariableSpace, target: VariableSpace
                    ) -> Tuple[int, Tuple[Tuple[Polynomial, ...], ...], Tuple[Bounds, ...]]:
    obj = _check_keys(obj, {'n_u', 'C', 'bounds'}, path, required=('n_u', 'C'))
    n_u = _int(obj['n_u'], _join(path, 'n_u'), 1)
    matrix = []
    for r, row in enumerate(_list(obj['C'], _join(path, 'C'), rows)):
        rpath = _join(_join(path, 'C'), r)
        matrix.append(tuple(_poly(entry, xy_space, target, _join(rpath, k))
                            for k, entry in enumerate(_list(row, rpath, n_u))))
    bounds = tuple(_bounds_pair(pair, _join(_join(path, 'bounds'), k), require_both=True)
                   for k, pair in enumerate(_list(obj.get('bounds', [[0, 1]] * n_u), _join(path, 'bounds'), n_u)))
    return n_u, tuple(matrix), bounds


def _parse_objective(obj: Any, path: str, poly_space: VariableSpace, xy_space: VariableSpace,
                     target: VariableSpace, n_u: int) -> Tuple[Optional[Polynomial], Tuple[Polynomial, ...]]:
    obj = _check_keys(obj, {'L', 'L_u'}, path)
    L = _poly(obj['L'], poly_space, target, _join(path, 'L')) if 'L' in obj else None
    L_u = ()
    if 'L_u' in obj:
        L_u = tuple(_poly(e, xy_space, target, _join(_join(path, 'L_u'), k))
                    for k, e in enumerate(_list(obj['L_u'], _join(path, 'L_u'), n_u)))
    return L, L_u


def problem_from_dict(data: Mapping[str, Any], base_dir: str = '.') -> PDEProblem:
    """Build a PDEProblem from a parsed problem document"""
    data = _check_keys(data, _TOP_KEYS, '', required=('domain', 'unknowns'))
    geometry = _parse_domain(data['domain'], 'domain', base_dir)
    n = geometry.n
    unknowns = _check_keys(data['unknowns'], {'n_y'}, 'unknowns', required=('n_y',))
    n_y = _int(unknowns['n_y'], 'unknowns.n_y', 0)

    n_u = 0
    if 'controls' in data and data['controls'] is not None:
        n_u = _int(_check_keys(data['controls'], {'n_u', 'C', 'bounds'}, 'controls', required=('n_u',))['n_u'],
                   'controls.n_u', 1)
    space = VariableSpace.standard(n, n_y, n_u=n_u)
    xspace = VariableSpace.standard(n)
    xy_space = VariableSpace.standard(n, n_y, z=[])
    xyz_space = VariableSpace.standard(n, n_y)

    pde = _check_keys(data.get('pde', {}), {'F', 'B'}, 'pde')
    F = tuple(_poly(f, xyz_space, space, _join('pde.F', r)) for r, f in enumerate(_list(pde.get('F', []), 'pde.F')))
    B = []
    for e, entry in enumerate(_list(pde.get('B', []), 'pde.B')):
        epath = _join('pde.B', e)
        entry = _check_keys(entry, {'row', 'unknown', 'i', 'j', 'coefficient'}, epath,
                            required=('row', 'unknown', 'i', 'j', 'coefficient'))
        row = _int(entry['row'], _join(epath, 'row'), 1)
        unknown = _int(entry['unknown'], _join(epath, 'unknown'), 1)
        i = _int(entry['i'], _join(epath, 'i'), 1)
        j = _int(entry['j'], _join(epath, 'j'), 1)
        if row > len(F) or unknown > n_y or i > n or j > n:
            raise ProblemFileError("index out of range", epath)
        B.append(BEntry(row, unknown, i, j, _poly(entry['coefficient'], xy_space, space, _join(epath, 'coefficient'))))

    C: Tuple[Tuple[Polynomial, ...], ...] = ()
    input_bounds: Tuple[Bounds, ...] = ()
    if n_u:
        n_u, C, input_bounds = _parse_controls(data['controls'], 'controls', len(F), xy_space, space)

    L, L_u = _parse_objective(data.get('objective', {}), 'objective', xyz_space, xy_space, space, n_u)

    y_names = space.block('y')
    z_names = space.block('z')
    y_bounds, z_bounds = _parse_bounds(data.get('bounds', {}), 'bounds', y_names, z_names)

    boundary = []
    covered = {}
    for b, entry in enumerate(_list(data.get('boundary', []), 'boundary')):
        bpath = _join('boundary', b)
        entry = _check_keys(entry, {'piece', 'type', 'G', 'controls', 'value', 'target', 'map', 'objective',
                                    'bounds'}, bpath, required=('piece', 'type'))
        try:
            piece = geometry.piece(entry['piece'])
            kind = BoundaryKind(entry['type'])
        except (GeometryError, ValueError) as e:
            raise ProblemFileError(str(e), bpath) from e
        if piece.index in covered:
            raise ProblemFileError(f"piece '{piece.name}' already has a condition ({covered[piece.index]})", bpath)
        covered[piece.index] = kind.value
        fields = {'piece': piece.index, 'kind': kind}
        allowed = {BoundaryKind.GENERAL: {'G', 'controls'}, BoundaryKind.DIRICHLET: {'value'},
                   BoundaryKind.PERIODIC: {'target', 'map'}, BoundaryKind.FREE: set()}[kind]
        misplaced = sorted({'G', 'controls', 'value', 'target', 'map'} & set(entry) - allowed)
        if misplaced:
            raise ProblemFileError(f"keys {misplaced} do not apply to a {kind.value} condition", bpath)
        if kind is BoundaryKind.GENERAL:
            G = tuple(_poly(g, xyz_space, space, _join(_join(bpath, 'G'), r))
                      for r, g in enumerate(_list(entry.get('G', []), _join(bpath, 'G'))))
            fields['G'] = G
            if entry.get('controls') is not None:
                nb, Cb, bb = _parse_controls(entry['controls'], _join(bpath, 'controls'), len(G), xy_space, space)
                fields.update(n_u=nb, C=Cb, input_bounds=bb)
        elif kind is BoundaryKind.DIRICHLET:
            values = []
            for k, text in enumerate(_list(entry.get('value'), _join(bpath, 'value'), n_y)):
                vpath = _join(_join(bpath, 'value'), k)
                try:
                    if is_polynomial_text(str(text), xspace):
                        values.append(DirichletComponent(str(text), parse_polynomial(str(text), xspace)))
                    else:
                        values.append(DirichletComponent(str(text), function=lambdify_expression(str(text), xspace)))
                except PolynomialError as e:
                    raise ProblemFileError(str(e), vpath) from e
            fields['values'] = tuple(values)
        elif kind is BoundaryKind.PERIODIC:
            if 'target' not in entry or 'map' not in entry:
                raise ProblemFileError("periodic conditions need 'target' and 'map'", bpath)
            try:
                target = geometry.piece(entry['target'])
            except GeometryError as e:
                raise ProblemFileError(str(e), _join(bpath, 'target')) from e
            hmap = []
            for j, text in enumerate(_list(entry['map'], _join(bpath, 'map'), n)):
                h = _poly(text, xspace, xspace, _join(_join(bpath, 'map'), j))
                if h.degree > 1:
                    raise ProblemFileError("periodic maps must be affine", _join(_join(bpath, 'map'), j))
                hmap.append(h)
            fields.update(target=target.index, hmap=tuple(hmap))
        nb = fields.get('n_u', 0)
        if 'objective' in entry:
            Lb, Lub = _parse_objective(entry['objective'], _join(bpath, 'objective'), xyz_space, xy_space, space, nb)
            fields.update(L=Lb, L_u=Lub)
        if 'bounds' in entry:
            yb, zb = _parse_bounds(entry['bounds'], _join(bpath, 'bounds'), y_names, z_names)
            fields.update(y_bounds=yb, z_bounds=zb)
        boundary.append(BoundaryCondition(**fields))

    for bc in boundary:
        if bc.kind is BoundaryKind.PERIODIC:
            if bc.target in covered:
                raise ProblemFileError(
                    f"periodic target piece {bc.target} already has a condition ({covered[bc.target]})", 'boundary')
            covered[bc.target] = 'periodic-target'
    missing = [p.name for p in geometry.pieces if p.index not in covered]
    if missing:
        raise ProblemFileError(f"pieces {missing} have no condition; mark them 'free' explicitly", 'boundary')

    reductions = _check_keys(data.get('reductions', {}), {'substitutions', 'exclude_from_test'}, 'reductions')
    substitutions = {}
    subs = reductions.get('substitutions', {})
    if not isinstance(subs, dict):
        raise ProblemFileError("expected an object", 'reductions.substitutions')
    for name, text in subs.items():
        if name not in z_names:
            raise ProblemFileError(f"'{name}' is not a derivative variable", 'reductions.substitutions')
        substitutions[name] = _poly(text, space, space, _join('reductions.substitutions', name))
    exclude = tuple(_list(reductions.get('exclude_from_test', []), 'reductions.exclude_from_test'))
    for name in exclude:
        if name not in y_names:
            raise ProblemFileError(f"'{name}' is not an unknown", 'reductions.exclude_from_test')

    relaxation = _check_keys(data.get('relaxation', {}), {'d', 'd_tilde'}, 'relaxation')
    d = relaxation.get('d')
    if d is not None:
        d = _int(d, 'relaxation.d', 0)
        if d % 2:
            raise ProblemFileError(f"relaxation degree must be even, got {d}", 'relaxation.d')
    d_tilde = relaxation.get('d_tilde')
    if d_tilde is not None:
        d_tilde = _int(d_tilde, 'relaxation.d_tilde', 0)

    controlled = n_u > 0 or any(bc.n_u for bc in boundary)
    try:
        sense = Sense(data.get('sense', 'inf' if controlled else 'both'))
    except ValueError as e:
        raise ProblemFileError(str(e), 'sense') from e
    if controlled and sense is not Sense.INF:
        raise ProblemFileError("control problems are minimisations; sense must be 'inf'", 'sense')

    problem = PDEProblem(
        name=str(data.get('name', 'problem')), geometry=geometry, n_y=n_y, space=space, F=F, B=tuple(B),
        C=C, n_u=n_u, input_bounds=input_bounds, boundary=tuple(boundary), L=L, L_u=L_u,
        y_bounds=y_bounds, z_bounds=z_bounds, substitutions=substitutions, exclude_from_test=exclude,
        d=d, d_tilde=d_tilde, sense=sense)
    logger.info(f"Parsed problem '{problem.name}': n={n}, n_y={n_y}, n_u={n_u}, "
                f"{len(F)} PDE rows, {len(boundary)} boundary conditions")
    return problem


def load_problem(path: str) -> PDEProblem:
    """Read and parse a problem file"""
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except json.JSONDecodeError as e:
        raise ProblemFileError(e.msg, line=e.lineno) from e
    except OSError as e:
        raise ProblemFileError(f"cannot read problem file: {e}") from e
    return problem_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


# --- rescaling -------------------------------------------------------------

def rescale_to_unit_box(problem: PDEProblem) -> PDEProblem:
    """Map a box problem onto [0,1]^n; objectives absorb the Jacobian so values stay physical"""
    if problem.scaling is not None or not problem.geometry.is_box:
        return problem
    geometry = problem.geometry
    lo = geometry.lo
    length = tuple(h - l for l, h in zip(geometry.lo, geometry.hi))
    scaling = BoxScaling(lo, length)
    space = problem.space

    images = {}
    for j, name in enumerate(problem.x_names):
        images[name] = Polynomial.constant(space, lo[j]) + length[j] * Polynomial.variable(space, name)
    for name in problem.z_names:
        j = int(name.split('_')[1]) - 1
        images[name] = Polynomial.variable(space, name) / length[j]

    def sub(p: Optional[Polynomial]) -> Optional[Polynomial]:
        return None if p is None else poly_affine_substitute(p, images)

    xspace = geometry.omega.space
    x_images = {name: Polynomial.constant(xspace, lo[j]) + length[j] * Polynomial.variable(xspace, name)
                for j, name in enumerate(xspace.names)}

    def xsub(p: Polynomial) -> Polynomial:
        return poly_affine_substitute(p, x_images)

    new_geometry = box_domain([0.0] * len(lo), [1.0] * len(lo))

    boundary = []
    for bc in problem.boundary:
        piece = geometry.piece(bc.piece)
        factor = scaling.face_factor(piece)
        values = []
        for comp in bc.values:
            if comp.polynomial is not None:
                values.append(replace(comp, polynomial=xsub(comp.polynomial)))
            else:
                values.append(replace(comp, function=_physical_function(comp.function, scaling)))
        hmap = tuple((xsub(h) - lo[j]) / length[j] for j, h in enumerate(bc.hmap))
        boundary.append(replace(
            bc, G=tuple(sub(g) for g in bc.G), C=tuple(tuple(sub(c) for c in row) for row in bc.C),
            values=tuple(values), hmap=hmap,
            L=None if bc.L is None else factor * sub(bc.L),
            L_u=tuple(factor * sub(p) for p in bc.L_u),
            z_bounds=None if bc.z_bounds is None else _scale_z_bounds(bc.z_bounds, length)))

    substitutions = {}
    for name, expr in problem.substitutions.items():
        j = int(name.split('_')[1]) - 1
        substitutions[name] = length[j] * sub(expr)

    B = tuple(replace(e, coefficient=sub(e.coefficient) / (length[e.i - 1] * length[e.j - 1])) for e in problem.B)
    logger.info(f"Rescaled '{problem.name}' to the unit box (lengths {length}, volume {scaling.volume})")
    return replace(
        problem, geometry=new_geometry, F=tuple(sub(f) for f in problem.F), B=B,
        C=tuple(tuple(sub(c) for c in row) for row in problem.C), boundary=tuple(boundary),
        L=None if problem.L is None else scaling.volume * sub(problem.L),
        L_u=tuple(scaling.volume * sub(p) for p in problem.L_u),
        z_bounds=_scale_z_bounds(problem.z_bounds, length), substitutions=substitutions, scaling=scaling)


def _physical_function(function: Callable[[np.ndarray], np.ndarray], scaling: BoxScaling):
    def scaled(points: np.ndarray) -> np.ndarray:
        return function(scaling.to_physical(np.atleast_2d(points)))
    return scaled


def _scale_z_bounds(bounds: Mapping[str, Bounds], length: Sequence[float]) -> Dict[str, Bounds]:
    scaled = {}
    for name, (lo, hi) in bounds.items():
        factor = length[int(name.split('_')[1]) - 1]
        scaled[name] = (None if lo is None else lo * factor, None if hi is None else hi * factor)
    return scaled


def normalize_inputs(problem: PDEProblem) -> PDEProblem:
    """Shift and scale every input channel onto [0, 1]"""
    if not problem.is_controlled:
        return problem
    if problem.physical_input_bounds or any(bc.physical_input_bounds for bc in problem.boundary):
        return problem

    def shift_rows(rows, C, bounds):
        new_rows, new_C = [], []
        for r, row in enumerate(C):
            offset = sum((C[r][k] * bounds[k][0] for k in range(len(bounds))), Polynomial.zero(rows[r].space))
            new_rows.append(rows[r] - offset)
            new_C.append(tuple(C[r][k] * (bounds[k][1] - bounds[k][0]) for k in range(len(bounds))))
        return tuple(new_rows), tuple(new_C)

    F, C = problem.F, problem.C
    L, L_u = problem.L, problem.L_u
    substitutions = dict(problem.substitutions)
    if problem.n_u:
        F, C = shift_rows(problem.F, problem.C, problem.input_bounds)
        u_images = {}
        for k, (lo, hi) in enumerate(problem.input_bounds):
            name = problem.u_names[k]
            u_images[name] = Polynomial.constant(problem.space, lo) + (hi - lo) * Polynomial.variable(problem.space, name)
        substitutions = {name: poly_affine_substitute(expr, u_images) for name, expr in substitutions.items()}
        if L_u:
            # cost of u = lo + (hi - lo) v moves a constant share onto the occupation measure
            extra = sum((p * lo for p, (lo, _) in zip(L_u, problem.input_bounds)), Polynomial.zero(problem.space))
            L = (L if L is not None else Polynomial.zero(problem.space)) + extra
            L_u = tuple(p * (hi - lo) for p, (lo, hi) in zip(L_u, problem.input_bounds))
    boundary = []
    for bc in problem.boundary:
        if bc.n_u:
            G, Cb = shift_rows(bc.G, bc.C, bc.input_bounds)
            Lb, Lub = bc.L, bc.L_u
            if Lub:
                extra = sum((p * lo for p, (lo, _) in zip(Lub, bc.input_bounds)), Polynomial.zero(problem.space))
                Lb = (Lb if Lb is not None else Polynomial.zero(problem.space)) + extra
                Lub = tuple(p * (hi - lo) for p, (lo, hi) in zip(Lub, bc.input_bounds))
            bc = replace(bc, G=G, C=Cb, L=Lb, L_u=Lub, input_bounds=((0.0, 1.0),) * bc.n_u,
                         physical_input_bounds=bc.input_bounds)
        boundary.append(bc)
    logger.info(f"Normalised input channels of '{problem.name}' to the unit box")
    return replace(problem, F=F, C=C, L=L, L_u=L_u, substitutions=substitutions, boundary=tuple(boundary),
                   input_bounds=((0.0, 1.0),) * problem.n_u, physical_input_bounds=problem.input_bounds)
