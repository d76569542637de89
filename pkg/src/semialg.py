"""
Semialgebraic sets, domain geometry and analytic moments.

Boxes are handled natively: each face is a BoundaryPiece with an affine
defining polynomial whose gradient is the outward unit normal. General
domains need user-supplied surface-moment tables.
"""

import logging
from dataclasses import dataclass, field
from math import sqrt
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.polyalg import (MultiIndex, Polynomial, PolynomialError, VariableSpace, mono_basis,
                         poly_diff, poly_embed, poly_eval, poly_substitute)

logger = logging.getLogger(__name__)


class GeometryError(ValueError):
    """Raised for degenerate domains, missing surface moments and bad boundary maps"""


@dataclass(frozen=True)
class SemialgebraicSet:
    """{v : g_i(v) >= 0 for all i}, optionally with a redundant ball constraint"""

    space: VariableSpace
    inequalities: Tuple[Polynomial, ...] = ()
    ball_radius: Optional[float] = None
    compact: bool = False

    def __post_init__(self):
        for g in self.inequalities:
            if g.space != self.space:
                raise GeometryError(f"Inequality {g} is not over {self.space.names}")
        if self.compact and self.ball_radius is None:
            raise GeometryError("A compact set needs a ball radius for the Archimedean constraint")

    def constraints(self) -> Tuple[Polynomial, ...]:
        """Inequalities plus the ball constraint N^2 - |v|^2 >= 0 when a radius is set"""
        if self.ball_radius is None:
            return self.inequalities
        ball = Polynomial.constant(self.space, self.ball_radius ** 2)
        for name in self.space.names:
            v = Polynomial.variable(self.space, name)
            ball = ball - v * v
        return self.inequalities + (ball,)

    def contains(self, point, tol: float = 1e-12) -> bool:
        return all(poly_eval(g, point) >= -tol for g in self.constraints())

    def lifted(self, target: VariableSpace) -> 'SemialgebraicSet':
        return SemialgebraicSet(target, tuple(poly_embed(g, target) for g in self.inequalities))

    @property
    def is_unbounded(self) -> bool:
        return not self.compact


def interval_set(space: VariableSpace, bounds: Mapping[str, Tuple[Optional[float], Optional[float]]],
                 ball: bool = True) -> SemialgebraicSet:
    """Product of intervals; one-sided or missing bounds leave the variable unbounded"""
    inequalities = []
    bounded = True
    radius_sq = 0.0
    for name in space.names:
        lo, hi = bounds.get(name, (None, None))
        v = Polynomial.variable(space, name)
        if lo is not None and hi is not None:
            if not lo < hi:
                raise GeometryError(f"Empty interval [{lo}, {hi}] for {name}")
            inequalities.append((v - lo) * (hi - v))
            radius_sq += max(lo * lo, hi * hi)
        else:
            bounded = False
            if lo is not None:
                inequalities.append(v - lo)
            if hi is not None:
                inequalities.append(hi - v)
    if bounded and space.dim and ball:
        return SemialgebraicSet(space, tuple(inequalities), sqrt(radius_sq), compact=True)
    return SemialgebraicSet(space, tuple(inequalities))


@dataclass(frozen=True)
class BoundaryPiece:
    """Piece of the boundary {h = 0} cut out by inequalities, with normal gradient of h"""

    index: int
    name: str
    h: Polynomial
    inequalities: Tuple[Polynomial, ...]
    normal_gradient: Tuple[Polynomial, ...]
    is_normal_unit: bool
    fixed: Tuple[Tuple[str, float], ...] = ()
    extent: Optional[Tuple[Tuple[float, float], ...]] = None
    sigma_moments: Optional[Mapping[MultiIndex, float]] = field(default=None, compare=False, hash=False)

    @classmethod
    def from_polynomial(cls, index: int, name: str, h: Polynomial, inequalities: Sequence[Polynomial],
                        is_normal_unit: bool = False,
                        sigma_moments: Optional[Mapping[MultiIndex, float]] = None) -> 'BoundaryPiece':
        gradient = tuple(poly_diff(h, v) for v in h.space.names)
        return cls(index, name, h, tuple(inequalities), gradient, is_normal_unit,
                   sigma_moments=sigma_moments)

    @property
    def is_box_face(self) -> bool:
        return self.extent is not None

    def normal_component(self, m: int) -> Polynomial:
        """m-th component (1-based) of the normal gradient"""
        return self.normal_gradient[m - 1]

    def fixed_map(self) -> Dict[str, float]:
        return dict(self.fixed)

    def free_coordinates(self) -> Tuple[str, ...]:
        pinned = self.fixed_map()
        return tuple(v for v in self.h.space.names if v not in pinned)

    def check_normal(self, samples: np.ndarray, tol: float = 1e-12) -> bool:
        """True when the normal gradient does not vanish on the sample points"""
        norms = np.zeros(len(samples))
        for g in self.normal_gradient:
            norms += np.asarray(poly_eval(g, samples)) ** 2
        return bool(np.all(np.sqrt(norms) > tol))


@dataclass(frozen=True)
class DomainGeometry:
    omega: SemialgebraicSet
    pieces: Tuple[BoundaryPiece, ...]
    lo: Optional[Tuple[float, ...]] = None
    hi: Optional[Tuple[float, ...]] = None

    @property
    def is_box(self) -> bool:
        return self.lo is not None

    @property
    def n(self) -> int:
        return self.omega.space.dim

    @property
    def volume(self) -> float:
        if not self.is_box:
            raise GeometryError("Volume is only available for box domains")
        return float(np.prod([h - l for l, h in zip(self.lo, self.hi)]))

    def piece(self, key) -> BoundaryPiece:
        """Look a piece up by 1-based index or by name such as 'x1=lo'"""
        for p in self.pieces:
            if p.index == key or p.name == key:
                return p
        raise GeometryError(f"Unknown boundary piece '{key}'; available: {[p.name for p in self.pieces]}")


def box_domain(lo: Sequence[float], hi: Sequence[float]) -> DomainGeometry:
    """Box with its 2n faces, ordered x1=lo, x1=hi, x2=lo, ..."""
    lo = tuple(float(v) for v in lo)
    hi = tuple(float(v) for v in hi)
    if len(lo) != len(hi) or not lo:
        raise GeometryError(f"Box bounds must be nonempty and of equal length, got {lo} and {hi}")
    if any(not l < h for l, h in zip(lo, hi)):
        raise GeometryError(f"Degenerate box: lo={lo}, hi={hi}")
    n = len(lo)
    space = VariableSpace.standard(n)
    omega = interval_set(space, {f"x{j + 1}": (lo[j], hi[j]) for j in range(n)})
    pieces = []
    for j in range(n):
        name = f"x{j + 1}"
        v = Polynomial.variable(space, name)
        others = [k for k in range(n) if k != j]
        inequalities = tuple(
            (Polynomial.variable(space, f"x{k + 1}") - lo[k]) * (hi[k] - Polynomial.variable(space, f"x{k + 1}"))
            for k in others)
        for side, value, h in (('lo', lo[j], lo[j] - v), ('hi', hi[j], v - hi[j])):
            extent = tuple((value, value) if k == j else (lo[k], hi[k]) for k in range(n))
            gradient = tuple(poly_diff(h, w) for w in space.names)
            pieces.append(BoundaryPiece(
                index=len(pieces) + 1,
                name=f"{name}={side}",
                h=h,
                inequalities=inequalities,
                normal_gradient=gradient,
                is_normal_unit=True,
                fixed=((name, value),),
                extent=extent,
            ))
    return DomainGeometry(omega, tuple(pieces), lo, hi)


def general_domain(omega: SemialgebraicSet, pieces: Sequence[BoundaryPiece]) -> DomainGeometry:
    if not pieces:
        raise GeometryError("A domain needs at least one boundary piece")
    return DomainGeometry(omega, tuple(pieces))


def _interval_moment(lo: float, hi: float, k: int) -> float:
    return (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)


def lebesgue_moments(geometry: DomainGeometry, alpha: MultiIndex) -> float:
    """Integral of x^alpha over the box"""
    if not geometry.is_box:
        raise GeometryError("Lebesgue moments are only available for box domains")
    if len(alpha) != geometry.n:
        raise GeometryError(f"Multi-index {alpha} does not match dimension {geometry.n}")
    value = 1.0
    for a, l, h in zip(alpha, geometry.lo, geometry.hi):
        value *= _interval_moment(l, h, a)
    return value


def surface_moments(piece: BoundaryPiece, alpha: MultiIndex) -> float:
    """Integral of x^alpha against the surface measure of the piece"""
    if piece.extent is not None:
        if len(alpha) != len(piece.extent):
            raise GeometryError(f"Multi-index {alpha} does not match dimension {len(piece.extent)}")
        value = 1.0
        for a, (l, h) in zip(alpha, piece.extent):
            value *= l ** a if l == h else _interval_moment(l, h, a)
        return value
    if piece.sigma_moments is None:
        raise GeometryError(f"Piece '{piece.name}' is not a box face and has no surface-moment table")
    alpha = tuple(alpha)
    if alpha not in piece.sigma_moments:
        raise GeometryError(f"Surface moment {alpha} of piece '{piece.name}' missing from the table")
    return float(piece.sigma_moments[alpha])


def surface_integral(piece: BoundaryPiece, p: Polynomial) -> float:
    """Integral of an x-polynomial over the piece"""
    return sum(coef * surface_moments(piece, alpha) for alpha, coef in p.terms.items())


def lebesgue_integral(geometry: DomainGeometry, p: Polynomial) -> float:
    return sum(coef * lebesgue_moments(geometry, alpha) for alpha, coef in p.terms.items())


def read_sigma_table(path: str, n: int) -> Dict[int, Dict[MultiIndex, float]]:
    """Parse lines ``piece_index alpha_1 ... alpha_n value``; '#' starts a comment"""
    table = {}
    with open(path, 'r', encoding='utf-8') as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != n + 2:
                raise GeometryError(f"{path}:{lineno}: expected {n + 2} fields, got {len(fields)}")
            try:
                piece = int(fields[0])
                alpha = tuple(int(a) for a in fields[1:n + 1])
                value = float(fields[n + 1])
            except ValueError as e:
                raise GeometryError(f"{path}:{lineno}: {e}") from e
            table.setdefault(piece, {})[alpha] = value
    logger.info(f"Read surface moments for {len(table)} pieces from {path}")
    return table


def pushforward_surface_moment(source: BoundaryPiece, hmap: Sequence[Polynomial], alpha: MultiIndex) -> float:
    """Integral of (h(x))^alpha against the surface measure of the source piece"""
    space = hmap[0].space
    monomial = Polynomial(space, {tuple(alpha): 1.0})
    composed = poly_substitute(monomial, dict(zip(space.names, hmap)))
    return surface_integral(source, composed)


def check_measure_preserving(source: BoundaryPiece, target: BoundaryPiece, hmap: Sequence[Polynomial],
                             d: int, tol: float = 1e-12) -> None:
    """Raise unless h pushes sigma on the source piece onto sigma on the target, up to degree d"""
    n = len(hmap)
    for alpha in mono_basis(n, d):
        pushed = pushforward_surface_moment(source, hmap, alpha)
        expected = surface_moments(target, alpha)
        if abs(pushed - expected) > tol * max(1.0, abs(expected)):
            raise GeometryError(
                f"Periodic map from '{source.name}' to '{target.name}' does not preserve the surface "
                f"measure: moment {alpha} is {pushed} instead of {expected}")


def stokes_defect(geometry: DomainGeometry, p: Polynomial, m: int) -> float:
    """Sum over pieces of the integral of p*eta_m minus the integral of dp/dx_m over the domain"""
    boundary = 0.0
    for piece in geometry.pieces:
        boundary += surface_integral(piece, p * piece.normal_component(m))
    try:
        interior = lebesgue_integral(geometry, poly_diff(p, m - 1))
    except PolynomialError as e:
        raise GeometryError(str(e)) from e
    return boundary - interior
