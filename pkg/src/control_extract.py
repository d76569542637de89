"""
Polynomial feedback laws from solved control relaxations.

The control measure nu_k has density kappa_k with respect to the (x, y)
marginal of its source measure, so the moments satisfy M(s_mu) c = s_nu on
the monomials of degree <= d/2. The system is solved with an eigenvalue
truncated pseudoinverse.
"""

import csv
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.config import EXTRACTION_CUTOFF
from src.moments import MeasureRole, MomentError, MomentVector, moment_matrix
from src.polyalg import (Polynomial, VariableSpace, basis_size, format_polynomial, mono_basis,
                         parse_polynomial, poly_affine_substitute, poly_eval, polynomial_from_coefficients)

logger = logging.getLogger(__name__)


class ExtractionError(ValueError):
    """Raised for mismatched or degenerate moment data"""


@dataclass(frozen=True)
class ControllerPolynomial:
    kappa: Polynomial
    degree: int
    source: str
    residual: float
    condition: float
    channel: int = 1
    piece: Optional[int] = None
    bounds: Tuple[float, float] = (0.0, 1.0)

    @property
    def space(self) -> VariableSpace:
        return self.kappa.space

    @property
    def label(self) -> str:
        return f"u{self.channel}" if self.piece is None else f"d{self.piece}_u{self.channel}"

    def coefficients(self) -> np.ndarray:
        basis = mono_basis(self.space, self.degree)
        return np.array([self.kappa.coefficient(alpha) for alpha in basis])

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(poly_eval(self.kappa, np.atleast_2d(points)))


def extract(s_mu: MomentVector, s_nu: MomentVector, d: int, degree: Optional[int] = None,
            cutoff: Optional[float] = None, source: str = 'mu', channel: int = 1,
            piece: Optional[int] = None) -> ControllerPolynomial:
    """Solve M(s_mu) c = s_nu in the least-squares sense; kappa = sum c_alpha v^alpha"""
    if d % 2:
        raise ExtractionError(f"Relaxation degree must be even, got {d}")
    cutoff = EXTRACTION_CUTOFF if cutoff is None else cutoff
    half = d // 2 if degree is None else degree
    if half < 0 or half > d // 2:
        raise ExtractionError(f"Controller degree {half} must lie in [0, {d // 2}]")
    space = s_nu.space
    missing = [v for v in space.names if v not in s_mu.space]
    if missing:
        raise ExtractionError(f"Control moments use {missing}, absent from the source measure {s_mu.space.names}")
    try:
        marginal = s_mu.marginal(space, 2 * half)
        M = moment_matrix(marginal, 2 * half)
    except MomentError as e:
        raise ExtractionError(str(e)) from e
    size = basis_size(space.dim, half)
    if len(s_nu.s) < size:
        raise ExtractionError(f"Control moments of degree {s_nu.d} cannot determine a degree-{half} controller")
    if not np.any(marginal.s):
        raise ExtractionError("The source measure has no mass; the controller is undetermined")
    rhs = s_nu.s[:size]

    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    lam_max = float(lam[-1])
    if lam_max <= 0:
        raise ExtractionError("The moment matrix of the source measure is not positive")
    keep = lam > cutoff * lam_max
    coefficients = V[:, keep] @ ((V[:, keep].T @ rhs) / lam[keep])
    residual = float(np.linalg.norm(M @ coefficients - rhs))
    condition = lam_max / float(lam[keep][0])
    dropped = int(np.sum(~keep))
    if dropped:
        logger.warning(f"Controller {source}->{channel}: {dropped} eigenvalues below cutoff, residual {residual:.2e}")
    kappa = polynomial_from_coefficients(space, coefficients)
    logger.info(f"Extracted degree-{half} controller for channel {channel} from {source} "
                f"(residual {residual:.2e}, condition {condition:.2e})")
    return ControllerPolynomial(kappa, half, source, residual, condition, channel, piece)


def extract_controllers(sdp, vectors: Dict[str, MomentVector], degree: Optional[int] = None,
                        cutoff: Optional[float] = None) -> List[ControllerPolynomial]:
    """One controller per control measure of an assembled SDP, mapped back to physical units"""
    problem = sdp.problem
    controllers = []
    for decl in sdp.measures:
        if decl.role is not MeasureRole.CONTROL:
            continue
        source = 'mu' if decl.piece is None else f"mu_d{decl.piece}"
        bounds = (problem.physical_input_bounds if decl.piece is None
                  else problem.condition_for(decl.piece).physical_input_bounds)
        normalised = extract(vectors[source], vectors[decl.name], sdp.d, degree, cutoff,
                             source, decl.channel, decl.piece)
        controllers.append(to_physical(normalised, problem.scaling, bounds[decl.channel - 1]))
    return controllers


def to_physical(controller: ControllerPolynomial, scaling, bounds: Tuple[float, float]) -> ControllerPolynomial:
    """kappa_phys(x, y) = lo + (hi - lo) * kappa((x - x_lo) / L, y)"""
    lo, hi = bounds
    space = controller.space
    kappa = controller.kappa
    if scaling is not None:
        images = {}
        for name in space.block('x'):
            j = int(name[1:]) - 1
            images[name] = (Polynomial.variable(space, name) - scaling.lo[j]) / scaling.length[j]
        kappa = poly_affine_substitute(kappa, images)
    kappa = lo + (hi - lo) * kappa
    return ControllerPolynomial(kappa, controller.degree, controller.source, controller.residual,
                                controller.condition, controller.channel, controller.piece, (lo, hi))


class SaturatedController:
    """Pointwise clamp of a controller to its input box; reported coefficients stay raw"""

    def __init__(self, controller: ControllerPolynomial, box: Optional[Tuple[float, float]] = None):
        self.controller = controller
        self.lo, self.hi = controller.bounds if box is None else box
        self.raw_range = [np.inf, -np.inf]
        self.clamped_range = [np.inf, -np.inf]

    def raw(self, points: np.ndarray) -> np.ndarray:
        return self.controller(points)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        raw = self.raw(points)
        clamped = np.clip(raw, self.lo, self.hi)
        if raw.size:
            self.raw_range = [min(self.raw_range[0], float(raw.min())), max(self.raw_range[1], float(raw.max()))]
            self.clamped_range = [min(self.clamped_range[0], float(clamped.min())),
                                  max(self.clamped_range[1], float(clamped.max()))]
        return clamped


def saturate(controller: ControllerPolynomial, box: Optional[Tuple[float, float]] = None) -> SaturatedController:
    return SaturatedController(controller, box)


def write_controller(controller: ControllerPolynomial, out_dir: str) -> Tuple[str, str]:
    """Plain-text polynomial plus a CSV coefficient table"""
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, f"controller_{controller.label}")
    with open(f"{stem}.txt", 'w', encoding='utf-8') as handle:
        handle.write(f"# variables: {' '.join(controller.space.names)}\n")
        handle.write(f"# source: {controller.source}\n")
        handle.write(f"# degree: {controller.degree}\n")
        handle.write(f"# bounds: {controller.bounds[0]!r} {controller.bounds[1]!r}\n")
        handle.write(f"# residual: {controller.residual!r}\n")
        handle.write(f"# condition: {controller.condition!r}\n")
        handle.write(format_polynomial(controller.kappa) + '\n')
    with open(f"{stem}.csv", 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(list(controller.space.names) + ['coefficient'])
        for alpha, value in zip(mono_basis(controller.space, controller.degree), controller.coefficients()):
            writer.writerow(list(alpha) + [repr(float(value))])
    logger.info(f"Wrote controller {controller.label} to {stem}.txt and {stem}.csv")
    return f"{stem}.txt", f"{stem}.csv"


def read_controller(path: str) -> ControllerPolynomial:
    """Read a controller text file written by write_controller"""
    header = {}
    body = []
    with open(path, 'r', encoding='utf-8') as handle:
        for line in handle:
            line = line.strip()
            if line.startswith('#'):
                key, _, value = line[1:].partition(':')
                header[key.strip()] = value.strip()
            elif line:
                body.append(line)
    if 'variables' not in header or len(body) != 1:
        raise ExtractionError(f"{path} is not a controller file")
    names = header['variables'].split()
    blocks = [(block, tuple(v for v in names if v.startswith(block))) for block in ('x', 'y')]
    space = VariableSpace(tuple((block, members) for block, members in blocks if members))
    lo, hi = (float(v) for v in header.get('bounds', '0 1').split())
    kappa = parse_polynomial(body[0], space)
    return ControllerPolynomial(kappa, int(header.get('degree', kappa.degree)), header.get('source', 'mu'),
                                float(header.get('residual', 'nan')), float(header.get('condition', 'nan')),
                                bounds=(lo, hi))
