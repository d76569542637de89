"""
Sparse multivariate polynomials over named variable blocks.

Variables are grouped in blocks (``x``, ``y``, ``z``, ``u``) and named
``x<i>``, ``y<k>``, ``z<k>_<j>`` and ``u<k>``. Exponent tuples follow the
declaration order of the variables and every ordered monomial list in the
package uses the graded lexicographic order produced by ``mono_basis``.
"""

import logging
import re
from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import comb
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from sympy.parsing.sympy_parser import TokenError

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]

MAX_DIMENSION = 32
MAX_DEGREE = 32

_NAME_PATTERN = re.compile(r'^[A-Za-z][A-Za-z0-9_]*$')


class PolynomialError(ValueError):
    """Raised for malformed polynomials, space mismatches and parse failures"""


@dataclass(frozen=True)
class VariableSpace:
    """Ordered named blocks of variables, e.g. (("x", ("x1", "x2")), ("y", ("y1",)))"""

    blocks: Tuple[Tuple[str, Tuple[str, ...]], ...]

    def __post_init__(self):
        block_names = [name for name, _ in self.blocks]
        if len(set(block_names)) != len(block_names):
            raise PolynomialError(f"Duplicate block names in {block_names}")
        names = [v for _, members in self.blocks for v in members]
        if len(set(names)) != len(names):
            raise PolynomialError(f"Duplicate variable names in {names}")
        for name in names:
            if not _NAME_PATTERN.match(name):
                raise PolynomialError(f"Invalid variable name '{name}'")
        if len(names) > MAX_DIMENSION:
            raise PolynomialError(f"Variable space of dimension {len(names)} exceeds {MAX_DIMENSION}")

    @classmethod
    def standard(cls, n: int, n_y: int = 0, z: Optional[Iterable[Tuple[int, int]]] = None,
                 n_u: int = 0) -> 'VariableSpace':
        """Build the (x, y, z, u) space; z defaults to all n_y*n derivative variables"""
        if z is None:
            z = [(k, j) for k in range(1, n_y + 1) for j in range(1, n + 1)]
        blocks = [('x', tuple(f"x{i}" for i in range(1, n + 1)))]
        if n_y:
            blocks.append(('y', tuple(f"y{k}" for k in range(1, n_y + 1))))
        z_names = tuple(f"z{k}_{j}" for k, j in z)
        if z_names:
            blocks.append(('z', z_names))
        if n_u:
            blocks.append(('u', tuple(f"u{k}" for k in range(1, n_u + 1))))
        return cls(tuple(blocks))

    @cached_property
    def names(self) -> Tuple[str, ...]:
        return tuple(v for _, members in self.blocks for v in members)

    @cached_property
    def _positions(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._positions[name]
        except KeyError:
            raise PolynomialError(f"Variable '{name}' is not in space {self.names}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._positions

    def block(self, block_name: str) -> Tuple[str, ...]:
        for name, members in self.blocks:
            if name == block_name:
                return members
        return ()

    def block_indices(self, block_name: str) -> Tuple[int, ...]:
        return tuple(self._positions[v] for v in self.block(block_name))

    def block_of(self, name: str) -> str:
        for block_name, members in self.blocks:
            if name in members:
                return block_name
        raise PolynomialError(f"Variable '{name}' is not in space {self.names}")

    def subspace(self, names: Iterable[str]) -> 'VariableSpace':
        """Keep only the given variables, preserving block structure and order"""
        keep = set(names)
        missing = keep - set(self.names)
        if missing:
            raise PolynomialError(f"Variables {sorted(missing)} are not in space {self.names}")
        blocks = []
        for block_name, members in self.blocks:
            kept = tuple(v for v in members if v in keep)
            if kept:
                blocks.append((block_name, kept))
        return VariableSpace(tuple(blocks))

    def union(self, other: 'VariableSpace') -> 'VariableSpace':
        """Merge two spaces block by block, keeping this space's order first"""
        merged = {}
        for block_name, members in list(self.blocks) + list(other.blocks):
            current = merged.setdefault(block_name, [])
            current.extend(v for v in members if v not in current)
        return VariableSpace(tuple((name, tuple(members)) for name, members in merged.items()))


def _grlex_key(alpha: MultiIndex) -> Tuple:
    return (sum(alpha), tuple(-a for a in alpha))


def _compositions(total: int, parts: int):
    """Exponent tuples of given total degree in descending lexicographic order"""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _mono_basis(dim: int, d: int) -> Tuple[MultiIndex, ...]:
    return tuple(alpha for degree in range(d + 1) for alpha in _compositions(degree, dim))


def mono_basis(space: Union[VariableSpace, int], d: int) -> Tuple[MultiIndex, ...]:
    """All multi-indices of total degree <= d in graded lexicographic order"""
    if d < 0:
        raise PolynomialError(f"Degree must be nonnegative, got {d}")
    if d > MAX_DEGREE:
        raise PolynomialError(f"Degree {d} exceeds {MAX_DEGREE}")
    dim = space.dim if isinstance(space, VariableSpace) else int(space)
    return _mono_basis(dim, d)


@lru_cache(maxsize=None)
def mono_index(dim: int, d: int) -> Dict[MultiIndex, int]:
    return {alpha: i for i, alpha in enumerate(_mono_basis(dim, d))}


def basis_size(dim: int, d: int) -> int:
    return comb(dim + d, d)


def grlex_compare(alpha: MultiIndex, beta: MultiIndex) -> int:
    """-1, 0 or 1 as alpha precedes, equals or follows beta in the basis order"""
    ka, kb = _grlex_key(alpha), _grlex_key(beta)
    return (ka > kb) - (ka < kb)


class Polynomial:
    """Immutable sparse polynomial: map from exponent tuple to float coefficient"""

    __slots__ = ('space', 'terms')

    def __init__(self, space: VariableSpace, terms: Optional[Mapping[MultiIndex, float]] = None):
        cleaned = {}
        for alpha, coef in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != space.dim:
                raise PolynomialError(f"Exponent {alpha} does not match space dimension {space.dim}")
            if any(a < 0 for a in alpha):
                raise PolynomialError(f"Negative exponent in {alpha}")
            coef = float(coef)
            if coef != 0.0:
                cleaned[alpha] = cleaned.get(alpha, 0.0) + coef
        object.__setattr__(self, 'space', space)
        object.__setattr__(self, 'terms', {a: c for a, c in cleaned.items() if c != 0.0})

    def __setattr__(self, key, value):
        raise AttributeError("Polynomial is immutable")

    @classmethod
    def zero(cls, space: VariableSpace) -> 'Polynomial':
        return cls(space)

    @classmethod
    def constant(cls, space: VariableSpace, value: float) -> 'Polynomial':
        return cls(space, {(0,) * space.dim: value})

    @classmethod
    def variable(cls, space: VariableSpace, name: str) -> 'Polynomial':
        alpha = [0] * space.dim
        alpha[space.index(name)] = 1
        return cls(space, {tuple(alpha): 1.0})

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0"""
        return max((sum(alpha) for alpha in self.terms), default=0)

    def degree_in(self, names: Iterable[str]) -> int:
        idx = [self.space.index(v) for v in names]
        return max((sum(alpha[i] for i in idx) for alpha in self.terms), default=0)

    def variables(self) -> Tuple[str, ...]:
        used = set()
        for alpha in self.terms:
            used.update(i for i, a in enumerate(alpha) if a)
        return tuple(self.space.names[i] for i in sorted(used))

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(sum(alpha) == 0 for alpha in self.terms)

    def constant_term(self) -> float:
        return self.terms.get((0,) * self.space.dim, 0.0)

    def coefficient(self, alpha: MultiIndex) -> float:
        return self.terms.get(tuple(alpha), 0.0)

    def sorted_terms(self) -> List[Tuple[MultiIndex, float]]:
        """Terms in graded lexicographic order"""
        return sorted(self.terms.items(), key=lambda item: _grlex_key(item[0]))

    def _check_space(self, other: 'Polynomial'):
        if self.space != other.space:
            raise PolynomialError(f"Space mismatch: {self.space.names} vs {other.space.names}")

    def _coerce(self, other) -> 'Polynomial':
        if isinstance(other, Polynomial):
            self._check_space(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.space, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self.terms)
        for alpha, coef in other.terms.items():
            terms[alpha] = terms.get(alpha, 0.0) + coef
        return Polynomial(self.space, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.space, {a: -c for a, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return poly_mul(self, other)
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self.space, {a: c * float(other) for a, c in self.terms.items()})
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self * (1.0 / float(other))
        return NotImplemented

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise PolynomialError(f"Only nonnegative integer powers are supported, got {k}")
        result = Polynomial.constant(self.space, 1.0)
        base = self
        while k:
            if k & 1:
                result = poly_mul(result, base)
            k >>= 1
            if k:
                base = poly_mul(base, base)
        return result

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.space == other.space and self.terms == other.terms

    def __hash__(self):
        return hash((self.space, frozenset(self.terms.items())))

    def almost_equal(self, other: 'Polynomial', tol: float = 1e-12) -> bool:
        self._check_space(other)
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.coefficient(k) - other.coefficient(k)) <= tol for k in keys)

    def __str__(self):
        return format_polynomial(self)

    def __repr__(self):
        return f"Polynomial({format_polynomial(self)!r})"


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    if p.space != q.space:
        raise PolynomialError(f"Space mismatch: {p.space.names} vs {q.space.names}")
    terms = {}
    for a, ca in p.terms.items():
        for b, cb in q.terms.items():
            key = tuple(x + y for x, y in zip(a, b))
            terms[key] = terms.get(key, 0.0) + ca * cb
    return Polynomial(p.space, terms)


def poly_diff(p: Polynomial, v: Union[int, str]) -> Polynomial:
    """Formal partial derivative with respect to a variable index or name"""
    i = p.space.index(v) if isinstance(v, str) else int(v)
    if not 0 <= i < p.space.dim:
        raise PolynomialError(f"Variable index {i} outside space of dimension {p.space.dim}")
    terms = {}
    for alpha, coef in p.terms.items():
        if alpha[i]:
            beta = alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]
            terms[beta] = terms.get(beta, 0.0) + coef * alpha[i]
    return Polynomial(p.space, terms)


def poly_substitute(p: Polynomial, images: Mapping[str, Polynomial],
                    target: Optional[VariableSpace] = None) -> Polynomial:
    """Compose p with polynomial images of its variables.

    Variables without an image are carried over by name into ``target``
    (default: the space of p).
    """
    target = target or p.space
    for name, image in images.items():
        if name not in p.space:
            raise PolynomialError(f"Substituted variable '{name}' is not in space {p.space.names}")
        if image.space != target:
            raise PolynomialError(f"Image of '{name}' lives in {image.space.names}, expected {target.names}")
    factors = []
    for name in p.space.names:
        if name in images:
            factors.append(images[name])
        elif name in target:
            factors.append(Polynomial.variable(target, name))
        else:
            factors.append(None)
    powers = {}

    def power(i: int, e: int) -> Polynomial:
        key = (i, e)
        if key not in powers:
            if factors[i] is None:
                raise PolynomialError(
                    f"Variable '{p.space.names[i]}' has no image in target space {target.names}")
            powers[key] = factors[i] ** e
        return powers[key]

    result = {}
    for alpha, coef in p.terms.items():
        term = Polynomial.constant(target, coef)
        for i, e in enumerate(alpha):
            if e:
                term = poly_mul(term, power(i, e))
        for beta, c in term.terms.items():
            result[beta] = result.get(beta, 0.0) + c
    return Polynomial(target, result)


def poly_affine_substitute(p: Polynomial, images: Mapping[str, Polynomial],
                           target: Optional[VariableSpace] = None) -> Polynomial:
    """Compose p with an affine change of variables"""
    for name, image in images.items():
        if image.degree > 1:
            raise PolynomialError(f"Image of '{name}' has degree {image.degree}; an affine map is required")
    return poly_substitute(p, images, target)


def poly_embed(p: Polynomial, target: VariableSpace) -> Polynomial:
    """Re-express p in a space that contains all of its variables"""
    if p.space == target:
        return p
    positions = []
    for name in p.space.names:
        positions.append(target.index(name) if name in target else None)
    terms = {}
    for alpha, coef in p.terms.items():
        beta = [0] * target.dim
        for i, e in enumerate(alpha):
            if e:
                if positions[i] is None:
                    raise PolynomialError(
                        f"Variable '{p.space.names[i]}' is not in target space {target.names}")
                beta[positions[i]] = e
        beta = tuple(beta)
        terms[beta] = terms.get(beta, 0.0) + coef
    return Polynomial(target, terms)


def poly_restrict(p: Polynomial, target: VariableSpace, fixed: Mapping[str, float]) -> Polynomial:
    """Pin some variables to constants and re-express the rest in ``target``"""
    positions = []
    for name in p.space.names:
        if name in fixed:
            positions.append(('fixed', float(fixed[name])))
        elif name in target:
            positions.append(('var', target.index(name)))
        else:
            positions.append(('missing', name))
    terms = {}
    for alpha, coef in p.terms.items():
        beta = [0] * target.dim
        for (kind, value), e in zip(positions, alpha):
            if not e:
                continue
            if kind == 'fixed':
                coef *= value ** e
            elif kind == 'var':
                beta[value] = e
            else:
                raise PolynomialError(f"Variable '{value}' is neither fixed nor in {target.names}")
        if coef != 0.0:
            beta = tuple(beta)
            terms[beta] = terms.get(beta, 0.0) + coef
    return Polynomial(target, terms)


def poly_eval(p: Polynomial, point) -> Union[float, np.ndarray]:
    """Evaluate at one point of shape (dim,) or at many points of shape (npts, dim)"""
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != p.space.dim:
        raise PolynomialError(f"Point dimension {pts.shape[1]} does not match space dimension {p.space.dim}")
    if not p.terms:
        values = np.zeros(pts.shape[0])
    else:
        exps = np.array(list(p.terms.keys()), dtype=int)
        coefs = np.array(list(p.terms.values()))
        monomials = np.prod(pts[:, None, :] ** exps[None, :, :], axis=2)
        values = monomials @ coefs
    return float(values[0]) if single else values


def format_polynomial(p: Polynomial) -> str:
    """Render in problem-file syntax, e.g. ``3.0*x1^2*y1*z1_2 - 1.0``"""
    if not p.terms:
        return "0"
    pieces = []
    for alpha, coef in reversed(p.sorted_terms()):
        factors = []
        for name, e in zip(p.space.names, alpha):
            if e == 1:
                factors.append(name)
            elif e > 1:
                factors.append(f"{name}^{e}")
        magnitude = repr(abs(coef))
        body = "*".join([magnitude] + factors)
        sign = "-" if coef < 0 else "+"
        pieces.append((sign, body))
    first_sign, first_body = pieces[0]
    text = ("-" if first_sign == "-" else "") + first_body
    for sign, body in pieces[1:]:
        text += f" {sign} {body}"
    return text


def _sympy_symbols(space: VariableSpace) -> Dict[str, sympy.Symbol]:
    return {name: sympy.Symbol(name, real=True) for name in space.names}


def parse_expression(text: str, space: VariableSpace) -> sympy.Expr:
    """Parse text into a sympy expression over the variables of ``space``"""
    symbols = _sympy_symbols(space)
    local = dict(symbols)
    local.update({'pi': sympy.pi, 'E': sympy.E})
    try:
        expr = sympy.parse_expr(str(text).replace('^', '**'), local_dict=local)
    except (sympy.SympifyError, SyntaxError, TypeError, TokenError) as e:
        raise PolynomialError(f"Cannot parse expression '{text}': {e}") from e
    unknown = {str(s) for s in expr.free_symbols} - set(space.names)
    if unknown:
        raise PolynomialError(f"Unknown variables {sorted(unknown)} in '{text}'; allowed: {space.names}")
    return expr


def from_sympy(expr: sympy.Expr, space: VariableSpace) -> Polynomial:
    """Convert a polynomial sympy expression to a Polynomial over ``space``"""
    gens = [sympy.Symbol(name, real=True) for name in space.names]
    expr = sympy.sympify(expr)
    if not gens:
        if expr.free_symbols:
            raise PolynomialError(f"Expression '{expr}' is not a constant")
        return Polynomial.constant(space, float(expr))
    if not expr.is_polynomial(*gens):
        raise PolynomialError(f"Expression '{expr}' is not a polynomial in {space.names}")
    poly = sympy.Poly(sympy.expand(expr), *gens)
    return Polynomial(space, {tuple(alpha): float(c) for alpha, c in poly.terms()})


def parse_polynomial(text: Union[str, int, float], space: VariableSpace) -> Polynomial:
    """Parse problem-file syntax like ``3*x1^2*y1*z1_2`` into a Polynomial"""
    if isinstance(text, (int, float)):
        return Polynomial.constant(space, float(text))
    return from_sympy(parse_expression(text, space), space)


def is_polynomial_text(text: str, space: VariableSpace) -> bool:
    expr = parse_expression(text, space)
    gens = [sympy.Symbol(name, real=True) for name in space.names]
    return bool(expr.is_polynomial(*gens)) if gens else not expr.free_symbols


def lambdify_expression(text: str, space: VariableSpace):
    """Vectorised numeric evaluator for an expression: f(points (npts, dim)) -> (npts,)"""
    expr = parse_expression(text, space)
    gens = [sympy.Symbol(name, real=True) for name in space.names]
    func = sympy.lambdify(gens, expr, modules='numpy')

    def evaluate(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        values = func(*[pts[:, i] for i in range(pts.shape[1])])
        return np.broadcast_to(np.asarray(values, dtype=float), (pts.shape[0],)).copy()

    return evaluate


def complexity_N(n_var: int, d: int) -> int:
    """Size C(n_var + d/2, n_var) of the largest moment matrix at relaxation degree d"""
    return comb(n_var + d // 2, n_var)


def polynomial_from_coefficients(space: VariableSpace, coefficients: Sequence[float]) -> Polynomial:
    """Inverse of riesz_coeffs: coefficient vector in basis order back to a Polynomial"""
    coefficients = list(coefficients)
    d = 0
    while basis_size(space.dim, d) < len(coefficients):
        d += 1
    if basis_size(space.dim, d) != len(coefficients):
        raise PolynomialError(f"{len(coefficients)} coefficients do not fill a basis of dimension {space.dim}")
    return Polynomial(space, dict(zip(mono_basis(space, d), coefficients)))
