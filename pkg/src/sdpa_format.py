"""
SDPA sparse format (.dat-s) export and import for ConicProblem.

SDPA reads  min c^T x  s.t.  sum_i F_i x_i - F_0  PSD.  Each PSD block k of a
ConicProblem becomes one SDPA block with F_0 = -offset. The equalities
a_j^T s = b_j are written as a diagonal (LP) block of size 2m holding the pair
a_j^T s - b_j >= 0 and -a_j^T s + b_j >= 0 at positions 2j-1 and 2j.
A maximisation is exported with a negated cost vector and flagged in the
'* sense:' header comment so that import can restore it.
"""

import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from scipy import sparse

from src.sdpsolve import ConicProblem, PSDBlock

logger = logging.getLogger(__name__)

PAIR_TOL = 1e-12


class SDPAFormatError(ValueError):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def _entries(problem: ConicProblem) -> List[Tuple[int, int, int, int, float]]:
    """(matno, block, i, j) entries, upper triangle, 1-based"""
    out = defaultdict(float)
    for k, block in enumerate(problem.blocks, start=1):
        n = block.size
        coo = block.matrix.tocoo()
        for flat, var, val in zip(coo.row, coo.col, coo.data):
            i, j = divmod(int(flat), n)
            if i <= j:
                out[(int(var) + 1, k, i + 1, j + 1)] += float(val)
        if block.offset is not None:
            for i in range(n):
                for j in range(i, n):
                    if block.offset[i, j] != 0.0:
                        out[(0, k, i + 1, j + 1)] -= float(block.offset[i, j])
    lp = len(problem.blocks) + 1
    A = problem.A.tocoo()
    for row, var, val in zip(A.row, A.col, A.data):
        out[(int(var) + 1, lp, 2 * row + 1, 2 * row + 1)] += float(val)
        out[(int(var) + 1, lp, 2 * row + 2, 2 * row + 2)] -= float(val)
    for row, value in enumerate(problem.b):
        if value != 0.0:
            out[(0, lp, 2 * row + 1, 2 * row + 1)] += float(value)
            out[(0, lp, 2 * row + 2, 2 * row + 2)] -= float(value)
    return sorted((key + (value,) for key, value in out.items() if value != 0.0))


def export_sdpa(problem: ConicProblem, path: Union[str, Path]) -> Path:
    """Write a conic problem as an SDPA sparse file"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sense_note = 'inf' if problem.sense == 'inf' else 'sup (objective negated)'
    lines = [f"* sense: {sense_note}"]
    if problem.n == 0:
        lines += ['0', '0', '', '']
        path.write_text('\n'.join(lines) + '\n')
        logger.info(f"Exported empty SDP to {path}")
        return path
    structure = [str(block.size) for block in problem.blocks]
    if problem.m:
        structure.append(str(-2 * problem.m))
    c = problem.c if problem.sense == 'inf' else -problem.c
    lines.append(str(problem.n))
    lines.append(str(len(structure)))
    lines.append(' '.join(structure))
    lines.append(' '.join(repr(float(v)) for v in c))
    lines += [f"{m} {k} {i} {j} {v!r}" for m, k, i, j, v in _entries(problem)]
    path.write_text('\n'.join(lines) + '\n')
    logger.info(f"Exported SDP with {problem.n} variables and {len(structure)} blocks to {path}")
    return path


def _tokens(line: str) -> List[str]:
    return line.replace(',', ' ').replace('{', ' ').replace('}', ' ').replace('(', ' ').replace(')', ' ').split()


def import_sdpa(path: Union[str, Path]) -> ConicProblem:
    """Read an SDPA sparse file; LP pairs with opposite data become equalities"""
    path = Path(path)
    sense = 'inf'
    body = []
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith('*') or stripped.startswith('"'):
            if stripped.startswith('* sense:') and stripped.split(':', 1)[1].split()[0] == 'sup':
                sense = 'sup'
            continue
        body.append((number, stripped))
    if len(body) < 2:
        raise SDPAFormatError("missing header lines")
    try:
        n = int(_tokens(body[0][1])[0])
        n_blocks = int(_tokens(body[1][1])[0])
    except (IndexError, ValueError) as e:
        raise SDPAFormatError(f"malformed header: {e}", body[0][0])
    if n == 0:
        return ConicProblem(sparse.csr_matrix((0, 0)), np.zeros(0), np.zeros(0), (), sense)
    try:
        structure = [int(t) for t in _tokens(body[2][1])[:n_blocks]]
        c = np.array([float(t) for t in _tokens(body[3][1])[:n]])
    except (IndexError, ValueError) as e:
        raise SDPAFormatError(f"malformed block structure or cost vector: {e}", body[2][0] if len(body) > 2 else 0)
    if len(structure) != n_blocks or len(c) != n:
        raise SDPAFormatError("block structure or cost vector is too short", body[2][0])
    if sense == 'sup':
        c = -c

    data = defaultdict(dict)
    for number, line in body[4:]:
        if not line:
            continue
        parts = _tokens(line)
        try:
            m, k, i, j = (int(t) for t in parts[:4])
            value = float(parts[4])
        except (IndexError, ValueError):
            raise SDPAFormatError(f"malformed entry '{line}'", number)
        if not (0 <= m <= n and 1 <= k <= n_blocks):
            raise SDPAFormatError(f"entry '{line}' is out of range", number)
        size = abs(structure[k - 1])
        if not (1 <= i <= size and 1 <= j <= size):
            raise SDPAFormatError(f"entry '{line}' exceeds block size {size}", number)
        if structure[k - 1] < 0 and i != j:
            raise SDPAFormatError(f"off-diagonal entry in diagonal block {k}", number)
        i, j = min(i, j), max(i, j)
        data[k][(m, i, j)] = data[k].get((m, i, j), 0.0) + value

    blocks = []
    eq_rows = []
    b = []
    for k, size in enumerate(structure, start=1):
        entries = data.get(k, {})
        if size > 0:
            blocks.append(_psd_block(f"block{k}", size, entries, n))
            continue
        diag = {}
        for i in range(1, -size + 1):
            diag[i] = ({m - 1: v for (m, ii, _), v in entries.items() if ii == i and m > 0},
                       entries.get((0, i, i), 0.0))
        i = 1
        while i <= -size:
            row, f0 = diag[i]
            if i < -size and _is_negated_pair(diag[i], diag[i + 1]):
                eq_rows.append(row)
                b.append(f0)
                i += 2
                continue
            lp_entries = {(m + 1, 1, 1): v for m, v in row.items()}
            if f0:
                lp_entries[(0, 1, 1)] = f0
            blocks.append(_psd_block(f"block{k}[{i}]", 1, lp_entries, n))
            i += 1

    rows, cols, vals = [], [], []
    for r, row in enumerate(eq_rows):
        for col, val in row.items():
            rows.append(r)
            cols.append(col)
            vals.append(val)
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(eq_rows), n))
    logger.info(f"Imported SDP from {path}: {n} variables, {len(eq_rows)} equalities, {len(blocks)} PSD blocks")
    return ConicProblem(A, np.array(b, dtype=float), c, tuple(blocks), sense)


def _is_negated_pair(first: Tuple[Dict[int, float], float], second: Tuple[Dict[int, float], float]) -> bool:
    row_a, f_a = first
    row_b, f_b = second
    if abs(f_a + f_b) > PAIR_TOL or set(row_a) != set(row_b):
        return False
    return all(abs(row_a[m] + row_b[m]) <= PAIR_TOL for m in row_a)


def _psd_block(label: str, size: int, entries: Dict[Tuple[int, int, int], float], n: int) -> PSDBlock:
    rows, cols, vals = [], [], []
    offset = np.zeros((size, size))
    for (m, i, j), value in entries.items():
        positions = {((i - 1) * size + (j - 1)), ((j - 1) * size + (i - 1))}
        if m == 0:
            offset[i - 1, j - 1] = -value
            offset[j - 1, i - 1] = -value
            continue
        for flat in positions:
            rows.append(flat)
            cols.append(m - 1)
            vals.append(value)
    matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(size * size, n))
    return PSDBlock(label, size, matrix, offset if np.any(offset) else None)
