"""
Truncated moment sequences, the Riesz functional and moment/localizing matrices.

Moment and localizing matrices are built as sparse linear maps from the
moment vector to the row-major flattened matrix. The maps are cached per
(basis, weight polynomial, degree) and reused by the assembler and the
direct ``moment_matrix``/``localizing_matrix`` helpers.
"""

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from src.polyalg import MultiIndex, Polynomial, PolynomialError, VariableSpace, format_polynomial, mono_basis
from src.semialg import SemialgebraicSet

logger = logging.getLogger(__name__)


class MomentError(ValueError):
    """Raised for degree overflow and mismatched moment layouts"""


class MeasureRole(str, Enum):
    OCCUPATION = 'occupation'
    BOUNDARY = 'boundary'
    CONTROL = 'control'
    SLACK = 'slack'


@dataclass(frozen=True)
class MomentBasis:
    """Monomials of degree <= d over a space, optionally capped in z-degree"""

    space: VariableSpace
    d: int
    z_cap: Optional[int] = None

    @cached_property
    def _z_positions(self) -> Tuple[int, ...]:
        return self.space.block_indices('z')

    def z_degree(self, alpha: MultiIndex) -> int:
        return sum(alpha[i] for i in self._z_positions)

    def _admissible(self, alpha: MultiIndex, cap: Optional[int]) -> bool:
        return cap is None or self.z_degree(alpha) <= cap

    @cached_property
    def monomials(self) -> Tuple[MultiIndex, ...]:
        return tuple(a for a in mono_basis(self.space, self.d) if self._admissible(a, self.z_cap))

    @cached_property
    def index(self) -> Dict[MultiIndex, int]:
        return {alpha: i for i, alpha in enumerate(self.monomials)}

    def __len__(self) -> int:
        return len(self.monomials)

    def rows(self, degree: int, z_budget: Optional[int] = None) -> Tuple[MultiIndex, ...]:
        """Row monomials of degree <= ``degree`` whose pairwise products stay inside the cap"""
        cap = self.z_cap if z_budget is None else z_budget
        half = None if cap is None else cap // 2
        return tuple(a for a in mono_basis(self.space, degree) if self._admissible(a, half))


@dataclass(frozen=True)
class MeasureDecl:
    name: str
    support: SemialgebraicSet
    role: MeasureRole
    piece: Optional[int] = None
    channel: Optional[int] = None

    def __post_init__(self):
        has_z = bool(self.support.space.block('z'))
        if self.role in (MeasureRole.CONTROL, MeasureRole.SLACK) and has_z:
            raise MomentError(f"Measure '{self.name}' with role {self.role.value} cannot carry z variables")
        if self.support.space.block('u'):
            raise MomentError(f"Measure '{self.name}' cannot carry input variables")

    @property
    def space(self) -> VariableSpace:
        return self.support.space


class MomentVector:
    """Moments s_alpha of one measure, indexed by a MomentBasis"""

    def __init__(self, basis: MomentBasis, s: Sequence[float]):
        s = np.asarray(s, dtype=float)
        if s.shape != (len(basis),):
            raise MomentError(f"Moment vector of length {s.shape} does not match basis of size {len(basis)}")
        self.basis = basis
        self.s = s
        self.s.setflags(write=False)

    @classmethod
    def from_function(cls, basis: MomentBasis, moment) -> 'MomentVector':
        return cls(basis, [moment(alpha) for alpha in basis.monomials])

    @property
    def space(self) -> VariableSpace:
        return self.basis.space

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def mass(self) -> float:
        return float(self.s[0])

    def value(self, alpha: MultiIndex) -> float:
        try:
            return float(self.s[self.basis.index[tuple(alpha)]])
        except KeyError:
            raise MomentError(f"Moment {alpha} is outside the truncation") from None

    def marginal(self, space: VariableSpace, d: Optional[int] = None) -> 'MomentVector':
        """Moments of the marginal on a subset of the variables (matched by name)"""
        d = self.d if d is None else d
        positions = [self.space.index(name) for name in space.names]
        target = MomentBasis(space, d)
        values = []
        for alpha in target.monomials:
            full = [0] * self.space.dim
            for pos, e in zip(positions, alpha):
                full[pos] = e
            values.append(self.value(tuple(full)))
        return MomentVector(target, values)

    def scaled(self, factor: float) -> 'MomentVector':
        return MomentVector(self.basis, self.s * factor)

    def to_csv(self, path: str) -> None:
        """Write ``alpha...,value`` rows in graded lexicographic order"""
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle)
            writer.writerow(list(self.space.names) + ['value'])
            for alpha, value in zip(self.basis.monomials, self.s):
                writer.writerow(list(alpha) + [repr(float(value))])


def _as_basis(space: VariableSpace, d: Union[int, MomentBasis]) -> MomentBasis:
    return d if isinstance(d, MomentBasis) else MomentBasis(space, int(d))


def riesz_coeffs(p: Polynomial, d: Union[int, MomentBasis]) -> np.ndarray:
    """Coefficient vector c with riesz(s, p) = c @ s"""
    basis = _as_basis(p.space, d)
    if basis.space != p.space:
        raise MomentError(f"Polynomial over {p.space.names} does not match basis over {basis.space.names}")
    c = np.zeros(len(basis))
    for alpha, coef in p.terms.items():
        position = basis.index.get(alpha)
        if position is None:
            raise MomentError(f"Monomial {alpha} of degree {sum(alpha)} exceeds the truncation d={basis.d}")
        c[position] += coef
    return c


def riesz(s: MomentVector, p: Polynomial) -> float:
    """Riesz functional l_s(p)"""
    if p.degree > s.d:
        raise MomentError(f"Polynomial degree {p.degree} exceeds moment truncation {s.d}")
    return float(riesz_coeffs(p, s.basis) @ s.s)


@lru_cache(maxsize=None)
def localizing_map(basis: MomentBasis, g: Optional[Polynomial], d: int) -> Tuple[int, sparse.csr_matrix]:
    """(size, map) with map @ s the row-major flattened localizing matrix of g at degree d"""
    if g is None:
        g = Polynomial.constant(basis.space, 1.0)
    if g.space != basis.space:
        raise MomentError(f"Weight over {g.space.names} does not match basis over {basis.space.names}")
    half = (d - g.degree) // 2
    if half < 0:
        raise MomentError(f"Weight of degree {g.degree} exceeds degree {d}")
    budget = None if basis.z_cap is None else basis.z_cap - max(
        (basis.z_degree(gamma) for gamma in g.terms), default=0)
    if budget is not None and budget < 0:
        raise MomentError(f"Weight exceeds the z-degree cap {basis.z_cap}")
    rows = basis.rows(half, budget)
    size = len(rows)
    data = []
    row_ids = []
    col_ids = []
    for i, a in enumerate(rows):
        for j, b in enumerate(rows):
            for gamma, coef in g.terms.items():
                key = tuple(x + y + z for x, y, z in zip(a, b, gamma))
                position = basis.index.get(key)
                if position is None:
                    raise MomentError(f"Moment {key} needed by the matrix is outside the basis")
                row_ids.append(i * size + j)
                col_ids.append(position)
                data.append(coef)
    matrix = sparse.csr_matrix((data, (row_ids, col_ids)), shape=(size * size, len(basis)))
    matrix.sum_duplicates()
    return size, matrix


def moment_matrix(s: MomentVector, d: Optional[int] = None) -> np.ndarray:
    """Hankel matrix l_s(beta beta^T) over monomials of degree <= d/2"""
    d = s.d if d is None else d
    if d % 2:
        raise MomentError(f"Moment matrix degree must be even, got {d}")
    if d > s.d:
        raise MomentError(f"Degree {d} exceeds moment truncation {s.d}")
    size, matrix = localizing_map(s.basis, None, d)
    return (matrix @ s.s).reshape(size, size)


def localizing_matrix(s: MomentVector, g: Polynomial, d: Optional[int] = None) -> np.ndarray:
    """l_s(beta beta^T g) over monomials of degree <= floor((d - deg g)/2)"""
    d = s.d if d is None else d
    if d > s.d:
        raise MomentError(f"Degree {d} exceeds moment truncation {s.d}")
    size, matrix = localizing_map(s.basis, g, d)
    return (matrix @ s.s).reshape(size, size)


def min_eigenvalue(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0])


def describe_monomial(space: VariableSpace, alpha: MultiIndex) -> str:
    return format_polynomial(Polynomial(space, {tuple(alpha): 1.0})).replace('1.0*', '', 1) \
        if any(alpha) else '1'
