"""Cell-wise energy measures of harmonic and piecewise-harmonic functions.

The energy measure of a function distributes twice its energy over the set;
for harmonic pieces the mass of a cell is computable exactly from the cell's
boundary values.  Measures are represented only through their values on cells
(additive over subdivision, atomless), never through densities.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np

from .harmonic import HarmonicStructure, renorm_products
from .structure import LevelGraph, Word, _word_to_str

FEASIBILITY_RTOL = 1e-9


@dataclass(frozen=True)
class HarmonicTuple:
    """A tuple of harmonic functions given by their boundary-value rows.

    ``alphas`` has shape ``[N, q]``; component ``j`` is the harmonic function
    with boundary values ``alphas[j]``.
    """

    alphas: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        if a.ndim != 2 or a.shape[0] < 1:
            raise ValueError("expected a nonempty [N, q] array of boundary rows")
        object.__setattr__(self, "alphas", a)
        if np.max(np.abs(a - a.mean(axis=1, keepdims=True))) < 1e-15:
            warnings.warn("all components are constant: every induced cell "
                          "measure vanishes and distances collapse to zero",
                          stacklevel=2)

    @property
    def n_components(self) -> int:
        return self.alphas.shape[0]


def default_tuple(hs: HarmonicStructure) -> HarmonicTuple:
    """Canonical mean-zero tuple: project the first ``q-1`` unit vectors off
    the constants and orthonormalize them in the boundary energy product."""
    q = hs.spec.boundary
    P = np.eye(q) - np.ones((q, q)) / q
    rows = []
    for a in range(q - 1):
        v = P[:, a].copy()
        for w in rows:
            v -= hs.energy0(w, v) * w
        norm = hs.energy0(v, v)
        if norm <= 1e-24:
            continue
        rows.append(v / np.sqrt(norm))
    return HarmonicTuple(np.stack(rows))


def cell_boundary_values(hs: HarmonicStructure, h: HarmonicTuple, n: int) -> np.ndarray:
    """Boundary values of every component on every level-``n`` cell.

    Returns ``C`` of shape ``[k**n, q, N]`` in big-endian cell-code order:
    ``C[w, :, j]`` are the values of component ``j`` along the corners of cell
    ``w``.  Built by the one-letter recursion ``C[prefix*k + i] = A_i @ C[prefix]``.
    """
    k = hs.spec.letters
    C = h.alphas.T[None, :, :].astype(float)
    for _ in range(n):
        prev = C
        C = np.empty((prev.shape[0] * k, prev.shape[1], prev.shape[2]))
        view = C.reshape(prev.shape[0], k, prev.shape[1], prev.shape[2])
        for i in range(k):
            view[:, i] = hs.A[i] @ prev
    return C


def _word_weight(hs: HarmonicStructure, word: Word) -> float:
    w = 1.0
    for letter in word:
        w *= float(hs.r[letter])
    return w


def harmonic_cell_measure(hs: HarmonicStructure, h: HarmonicTuple, word: Word) -> float:
    """Measure of cell ``word`` under the tuple's summed energy measure:
    ``sum_j (2 / r_w) * E0(values of h_j on the cell)``."""
    vals = h.alphas.T.astype(float)  # [q, N]
    for letter in word:
        vals = hs.A[letter] @ vals
    rw = _word_weight(hs, word)
    return float((2.0 / rw) * np.einsum("qj,qp,pj->", vals, -hs.D, vals))


def tuple_cell_measures(hs: HarmonicStructure, h: HarmonicTuple, n: int) -> np.ndarray:
    """Vector of measures of all level-``n`` cells (big-endian code order)."""
    C = cell_boundary_values(hs, h, n)
    rw = np.ones(1)
    for _ in range(n):
        rw = (rw[:, None] * hs.r[None, :]).ravel()
    return (2.0 / rw) * np.einsum("cqj,qp,cpj->c", C, -hs.D, C)


def cell_energies(hs: HarmonicStructure, lg: LevelGraph, f: np.ndarray) -> np.ndarray:
    """Per-cell measure of the piecewise-harmonic interpolant of ``f``:
    ``(2 / r_w) * E0(f restricted to the cell)`` for every level cell."""
    F = np.asarray(f, dtype=float)[lg.cells]
    rw = renorm_products(hs.r, lg)
    return (2.0 / rw) * np.einsum("cq,qp,cp->c", F, -hs.D, F)


def piecewise_cell_measure(hs: HarmonicStructure, lg: LevelGraph,
                           f: np.ndarray, word: Word) -> float:
    """Measure of cell ``word`` for the level-``lg.level`` harmonic
    interpolant of vertex values ``f``; ``len(word) <= lg.level``."""
    m = len(word)
    if m > lg.level:
        raise ValueError(f"cell word of length {m} is deeper than level {lg.level}")
    k = hs.spec.letters
    e = cell_energies(hs, lg, f)
    code = lg.cell_code(word)
    span = k ** (lg.level - m)
    return float(e[code * span:(code + 1) * span].sum())


def trace_coefficients(hs: HarmonicStructure, word: Word) -> np.ndarray:
    """Pairwise conductances across a cell: ``b[p, q] = 2 * D[p, q] / r_w``
    (symmetric, nonnegative off-diagonal, zero diagonal)."""
    rw = _word_weight(hs, word)
    b = 2.0 * np.asarray(hs.D, dtype=float) / rw
    np.fill_diagonal(b, 0.0)
    return b


@dataclass
class CellMeasureTable:
    """Measures of all cells down to a depth bound; ``values[m]`` is indexed
    by big-endian cell code at depth ``m``."""

    spec_letters: int
    values: list[np.ndarray]

    @property
    def depth(self) -> int:
        return len(self.values) - 1

    def value(self, word: Word) -> float:
        code = 0
        for w in word:
            code = code * self.spec_letters + w
        return float(self.values[len(word)][code])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("word,depth,value\n")
        for m, vals in enumerate(self.values):
            for code, val in enumerate(vals):
                word = _decode_word(code, m, self.spec_letters)
                out.write(f"{_word_to_str(word)},{m},{val:.17g}\n")
        return out.getvalue()


@dataclass
class SlackTable:
    """Per-cell domination slack ``mu_h(cell) - mu_f(cell)`` down to a depth.

    Feasibility means every checked slack is above ``-tol * mu_h(whole set)``;
    only the recorded depth range was checked.
    """

    spec_letters: int
    slack: list[np.ndarray]
    scale: float
    tolerance: float

    @property
    def checked_depth(self) -> int:
        return len(self.slack) - 1

    @property
    def min_slack(self) -> float:
        return min(float(s.min()) for s in self.slack)

    @property
    def feasible(self) -> bool:
        return self.min_slack >= -self.tolerance * self.scale

    def value(self, word: Word) -> float:
        code = 0
        for w in word:
            code = code * self.spec_letters + w
        return float(self.slack[len(word)][code])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("word,depth,slack\n")
        for m, vals in enumerate(self.slack):
            for code, val in enumerate(vals):
                word = _decode_word(code, m, self.spec_letters)
                out.write(f"{_word_to_str(word)},{m},{val:.17g}\n")
        return out.getvalue()


def _decode_word(code: int, length: int, k: int) -> Word:
    digits = []
    for _ in range(length):
        code, d = divmod(code, k)
        digits.append(d)
    return tuple(reversed(digits))


def cell_measure_table(hs: HarmonicStructure, h: HarmonicTuple, depth: int) -> CellMeasureTable:
    """Tabulate the tuple's cell measures for all words up to ``depth``."""
    deepest = tuple_cell_measures(hs, h, depth)
    k = hs.spec.letters
    values = [deepest]
    cur = deepest
    for m in range(depth - 1, -1, -1):
        cur = cur.reshape(k ** m, k).sum(axis=1)
        values.append(cur)
    values.reverse()
    return CellMeasureTable(k, values)


def check_domination(hs: HarmonicStructure, lg: LevelGraph, f: np.ndarray,
                     h: HarmonicTuple, m_max: int | None = None, *,
                     tolerance: float = FEASIBILITY_RTOL) -> SlackTable:
    """Slack table of the cell-domination constraints for vertex values ``f``.

    For every word with ``len(word) <= m_max`` the slack is the tuple's cell
    measure minus the piecewise-harmonic interpolant's cell measure; the
    deepest level is computed directly and coarser levels by subtree sums.
    """
    n = lg.level
    if m_max is None:
        m_max = n
    if m_max > n:
        raise ValueError(f"m_max={m_max} exceeds the graph level {n}")
    k = hs.spec.letters
    mu = tuple_cell_measures(hs, h, n)
    e = cell_energies(hs, lg, f)
    scale = float(mu.sum())
    slack_deepest = mu - e
    per_depth = {n: slack_deepest}
    cur = slack_deepest
    for m in range(n - 1, -1, -1):
        cur = cur.reshape(k ** m, k).sum(axis=1)
        per_depth[m] = cur
    slack = [per_depth[m] for m in range(m_max + 1)]
    return SlackTable(k, slack, scale, tolerance)
