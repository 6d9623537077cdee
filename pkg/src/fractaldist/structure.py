"""Combinatorial self-similar structures and their vertex hierarchies.

A fractal here is described purely combinatorially: ``k`` cells (letters),
``q`` boundary points (labels), a fixed letter per boundary label (the cell
whose contraction fixes that point), and glue rules identifying cell corners.
Points of the level-``n`` vertex set are addressed as ``(word, label)`` pairs,
meaning "corner `label` of the cell named by `word`".  Addresses are
canonicalized to the lexicographically smallest member of their glue orbit.
"""

from __future__ import annotations

import cmath
import math
import string
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidParameterError,
    ResourceLimitError,
    SpecValidationError,
)

Word = tuple[int, ...]

_DIGITS = string.digits + string.ascii_lowercase

DEFAULT_MAX_ADDRESSES = 80_000_000


def _word_to_str(word: Word) -> str:
    if not word:
        return "-"
    return "".join(_DIGITS[w] for w in word)


def _word_from_str(text: str) -> Word:
    if text == "-" or text == "":
        return ()
    try:
        return tuple(_DIGITS.index(c) for c in text)
    except ValueError:
        raise ValueError(f"bad word digit string {text!r}") from None


@dataclass(frozen=True, order=True)
class VertexRef:
    """Address ``(word, label)`` of a vertex: corner `label` of cell `word`."""

    word: Word
    label: int

    @property
    def level(self) -> int:
        return len(self.word)

    def __str__(self) -> str:
        return f"{_word_to_str(self.word)}:{self.label}"

    @classmethod
    def parse(cls, text: str) -> "VertexRef":
        """Parse ``word:label`` with the word as a digit string ('-' = empty)."""
        try:
            wtxt, ltxt = text.rsplit(":", 1)
            return cls(_word_from_str(wtxt), int(ltxt))
        except (ValueError, TypeError):
            raise ValueError(f"bad vertex ref {text!r}; expected 'word:label'") from None


@dataclass(frozen=True)
class FractalSpec:
    """Combinatorial description of a finitely ramified self-similar set.

    ``fixed_letters[a]`` is the cell whose map fixes boundary point ``a``;
    every boundary point must be such a fixed point.  ``glue`` holds unordered
    corner identifications ``(i, a, j, b)`` meaning corner ``a`` of cell ``i``
    coincides with corner ``b`` of cell ``j``.
    """

    name: str
    letters: int
    boundary: int
    fixed_letters: tuple[int, ...]
    glue: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        k, q = self.letters, self.boundary
        if k < 2:
            raise SpecValidationError(f"need at least 2 cells, got {k}")
        if q < 2:
            raise SpecValidationError(f"need at least 2 boundary points, got {q}")
        if len(self.fixed_letters) != q:
            raise SpecValidationError(
                f"fixed_letters must list one cell per boundary label "
                f"(got {len(self.fixed_letters)}, boundary={q})")
        for a, i in enumerate(self.fixed_letters):
            if not 0 <= i < k:
                raise SpecValidationError(f"fixed_letters[{a}]={i} out of range")
        if len(set(self.fixed_letters)) != q:
            raise SpecValidationError("fixed_letters must be injective")
        for idx, (i, a, j, b) in enumerate(self.glue):
            if i == j:
                raise SpecValidationError(f"glue[{idx}]={(i, a, j, b)} joins a cell to itself")
            if not (0 <= i < k and 0 <= j < k and 0 <= a < q and 0 <= b < q):
                raise SpecValidationError(f"glue[{idx}]={(i, a, j, b)} out of range")
        # the level-1 cell contact graph must be one piece
        parent = list(range(k))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, _, j, _ in self.glue:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        roots = {find(i) for i in range(k)}
        if len(roots) != 1:
            raise SpecValidationError(
                f"level-1 cell contact graph is disconnected ({len(roots)} components)")

    def fixed_letter(self, label: int) -> int:
        return self.fixed_letters[label]

    @property
    def boundary_cells(self) -> tuple[int, ...]:
        """Cells that fix a boundary point, in boundary-label order."""
        return self.fixed_letters

    def label_of_fixed_cell(self, letter: int) -> int:
        try:
            return self.fixed_letters.index(letter)
        except ValueError:
            raise ValueError(f"cell {letter} does not fix a boundary point") from None

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "letters": self.letters,
            "boundary": self.boundary,
            "fixed_letters": list(self.fixed_letters),
            "glue": [list(rule) for rule in self.glue],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "FractalSpec":
        try:
            name = str(data["name"])
            letters = int(data["letters"])
            boundary = int(data["boundary"])
            fixed = tuple(int(x) for x in data["fixed_letters"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecValidationError(f"bad spec file field: {exc}") from None
        glue = []
        for idx, rule in enumerate(data.get("glue", [])):
            if not isinstance(rule, (list, tuple)) or len(rule) != 4:
                raise SpecValidationError(
                    f"glue[{idx}] must be a quadruple [i,a,j,b], got {rule!r}")
            try:
                glue.append(tuple(int(x) for x in rule))
            except (TypeError, ValueError):
                raise SpecValidationError(f"glue[{idx}] has non-integer entry: {rule!r}")
        return cls(name, letters, boundary, fixed, _normalize_glue(glue))


def _normalize_glue(rules: Iterable[Sequence[int]]) -> tuple[tuple[int, int, int, int], ...]:
    out = set()
    for i, a, j, b in rules:
        if (j, b) < (i, a):
            i, a, j, b = j, b, i, a
        out.add((i, a, j, b))
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# builtin generators
# ---------------------------------------------------------------------------

def _gasket_spec(side: int) -> FractalSpec:
    """Level-``side`` triangular gasket from exact barycentric coordinates.

    Cells are the upward subtriangles of the side-``side`` subdivision; all
    contact detection is integer arithmetic, so the glue rules are exact.
    """
    if side < 2:
        raise InvalidParameterError(f"gasket level must be >= 2, got {side}")
    origins = sorted(
        ((a, b, side - 1 - a - b) for a in range(side) for b in range(side - a)),
        key=lambda t: (-t[0], -t[1]),
    )
    cells = [((a + 1, b, c), (a, b + 1, c), (a, b, c + 1)) for (a, b, c) in origins]
    corners = [(side, 0, 0), (0, side, 0), (0, 0, side)]
    fixed = []
    for pt in corners:
        owner = [(i, cell.index(pt)) for i, cell in enumerate(cells) if pt in cell]
        assert len(owner) == 1 and owner[0][1] == corners.index(pt)
        fixed.append(owner[0][0])
    by_point: dict[tuple, list[tuple[int, int]]] = {}
    for i, cell in enumerate(cells):
        for a, pt in enumerate(cell):
            by_point.setdefault(pt, []).append((i, a))
    rules = []
    for pt in sorted(by_point):
        addrs = by_point[pt]
        for s in range(len(addrs)):
            for t in range(s + 1, len(addrs)):
                rules.append((*addrs[s], *addrs[t]))
    return FractalSpec(f"gasket:{side}", len(cells), 3, tuple(fixed), _normalize_glue(rules))


def _polygasket_spec(n: int) -> FractalSpec:
    """n-cell polygasket (n = 6 or 9) with three boundary points.

    The cells sit at the n-th roots of unity with contraction ratio
    ``2 / (3 + sqrt(3) * cot(pi/n))``, chosen so that adjacent cells touch in
    exactly one point.  The three cells at angles 0, 2*pi/3 and 4*pi/3 use a
    rotation-free parametrization so that each fixes its boundary point; the
    remaining cells keep the rotating parametrization that makes the contact
    points land on images of the three boundary points.
    """
    if n not in (6, 9):
        raise InvalidParameterError(f"polygasket supports 6 or 9 cells, got {n}")
    beta = 2.0 / (3.0 + math.sqrt(3.0) / math.tan(math.pi / n))
    p = [cmath.exp(2j * math.pi * kk / n) for kk in range(n)]
    boundary_cells = (0, n // 3, 2 * n // 3)
    corners = [p[c] for c in boundary_cells]

    def apply_map(cell: int, z: complex) -> complex:
        if cell in boundary_cells:
            return beta * z + (1.0 - beta) * p[cell]
        return p[cell] * (beta * (z - 1.0) + 1.0)

    points: list[tuple[complex, list[tuple[int, int]]]] = []
    for i in range(n):
        for a in range(3):
            z = apply_map(i, corners[a])
            for zz, addrs in points:
                if abs(zz - z) < 1e-9:
                    addrs.append((i, a))
                    break
            else:
                points.append((z, [(i, a)]))
    rules = []
    for _, addrs in points:
        for s in range(len(addrs)):
            for t in range(s + 1, len(addrs)):
                rules.append((*addrs[s], *addrs[t]))
    if len(rules) != n:
        raise InvalidParameterError(
            f"polygasket:{n} contact detection produced {len(rules)} rules, expected {n}")
    for a in range(3):
        z = apply_map(boundary_cells[a], corners[a])
        assert abs(z - corners[a]) < 1e-12
    return FractalSpec(f"polygasket:{n}", n, 3, boundary_cells, _normalize_glue(rules))


def generate_spec(kind: str, param: int) -> FractalSpec:
    """Builtin spec generator.  ``kind`` is 'gasket' (param = side >= 2) or
    'polygasket' (param in {6, 9})."""
    if kind == "gasket":
        return _gasket_spec(param)
    if kind == "polygasket":
        return _polygasket_spec(param)
    raise InvalidParameterError(f"unknown generator kind {kind!r}")


# ---------------------------------------------------------------------------
# addresses
# ---------------------------------------------------------------------------

def lift(spec: FractalSpec, ref: VertexRef, n: int) -> VertexRef:
    """Re-address ``ref`` at level ``n`` by appending its fixed letter."""
    if n < ref.level:
        raise ValueError(f"cannot lift level-{ref.level} ref down to level {n}")
    tail = (spec.fixed_letter(ref.label),) * (n - ref.level)
    return VertexRef(ref.word + tail, ref.label)


def canonicalize(spec: FractalSpec, ref: VertexRef) -> VertexRef:
    """Lexicographically smallest address equivalent to ``ref`` at its level.

    Two addresses of the same level are equivalent when they are connected by
    rewriting steps of the form ``u + (i,) + (f_a,)*r : a  ->  u + (j,) + (f_b,)*r : b``
    for a glue rule identifying corner ``a`` of cell ``i`` with corner ``b``
    of cell ``j``.
    """
    if not 0 <= ref.label < spec.boundary:
        raise ValueError(f"label {ref.label} out of range")
    for w in ref.word:
        if not 0 <= w < spec.letters:
            raise ValueError(f"letter {w} out of range")
    by_corner: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for i, a, j, b in spec.glue:
        by_corner.setdefault((i, a), []).append((j, b))
        by_corner.setdefault((j, b), []).append((i, a))
    n = ref.level
    start = (ref.word, ref.label)
    seen = {start}
    queue = deque([start])
    while queue:
        word, label = queue.popleft()
        fa = spec.fixed_letter(label)
        for m in range(n - 1, -1, -1):
            # positions m+1..n-1 must all carry the fixed letter of `label`
            if m < n - 1 and word[m + 1] != fa:
                break
            for j, b in by_corner.get((word[m], label), ()):
                cand = (word[:m] + (j,) + (spec.fixed_letter(b),) * (n - 1 - m), b)
                if cand not in seen:
                    seen.add(cand)
                    queue.append(cand)
    word, label = min(seen)
    return VertexRef(word, label)


# ---------------------------------------------------------------------------
# level graphs
# ---------------------------------------------------------------------------

@dataclass
class _LevelMerge:
    """Identification data for one refinement step.

    Candidates at level m are ``i * nv_prev + v`` for a first letter ``i`` and
    a level-(m-1) vertex ``v``.  ``nonroots`` lists (sorted) the candidates
    merged away into ``targets``; every other candidate keeps rank order.
    """

    nv_prev: int
    nonroots: np.ndarray
    targets: np.ndarray

    def apply(self, cand: np.ndarray) -> np.ndarray:
        c = np.asarray(cand, dtype=np.int64)
        if self.nonroots.size:
            pos = np.searchsorted(self.nonroots, c)
            pos_c = np.minimum(pos, self.nonroots.size - 1)
            hit = self.nonroots[pos_c] == c
            c = np.where(hit, self.targets[pos_c], c)
            c = c - np.searchsorted(self.nonroots, c, side="right")
        return c


class LevelGraph:
    """Canonicalized vertex set of one refinement level.

    Holds the per-cell corner tuples (``cells``), the ids of the lifted
    boundary points, and (optionally) the canonical address of every vertex.
    Construction is incremental over levels; instances are immutable after
    construction and safe for concurrent reads.
    """

    def __init__(self, spec: FractalSpec, level: int, num_vertices: int,
                 cells: np.ndarray, boundary_ids: list[int],
                 merges: list[_LevelMerge],
                 addr_words: np.ndarray | None, addr_labels: np.ndarray | None):
        self.spec = spec
        self.level = level
        self.num_vertices = num_vertices
        self.cells = cells
        self.boundary_ids = boundary_ids
        self._merges = merges
        self._addr_words = addr_words
        self._addr_labels = addr_labels

    @property
    def num_cells(self) -> int:
        return self.spec.letters ** self.level

    @property
    def has_addresses(self) -> bool:
        return self._addr_words is not None

    def cell_word(self, code: int) -> Word:
        """Decode a big-endian cell code into its letter sequence."""
        k = self.spec.letters
        digits = []
        for _ in range(self.level):
            code, d = divmod(code, k)
            digits.append(d)
        return tuple(reversed(digits))

    def cell_code(self, word: Word) -> int:
        k = self.spec.letters
        code = 0
        for w in word:
            code = code * k + w
        return code

    def address(self, vertex_id: int) -> VertexRef:
        """Canonical (lexicographically smallest) address of a vertex."""
        if self._addr_words is None:
            raise RuntimeError("level graph was built without address tables")
        word = self.cell_word(int(self._addr_words[vertex_id])) if self.level else ()
        return VertexRef(word, int(self._addr_labels[vertex_id]))

    def vertex_id(self, ref: VertexRef) -> int:
        """Canonical id of a vertex given by any equivalent address."""
        lifted = lift(self.spec, ref, self.level)
        ids = self.vertex_ids(
            np.array([self.cell_code(lifted.word)], dtype=np.int64),
            np.array([lifted.label], dtype=np.int64))
        return int(ids[0])

    def vertex_ids(self, word_codes: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Vectorized address resolution (level-``n`` addresses only)."""
        k = self.spec.letters
        digits = []
        codes = np.asarray(word_codes, dtype=np.int64).copy()
        for _ in range(self.level):
            codes, d = np.divmod(codes, k)
            digits.append(d)
        ids = np.asarray(labels, dtype=np.int64).copy()
        for m, merge in enumerate(self._merges, start=1):
            first = digits[m - 1]  # letter w_{n-m+1}: innermost suffix first
            ids = merge.apply(first * merge.nv_prev + ids)
        return ids

    def embed_into(self, finer: "LevelGraph") -> np.ndarray:
        """Ids in ``finer`` of every vertex of this graph (lift embedding)."""
        if finer.level < self.level:
            raise ValueError("target graph must be at least as deep")
        if self._addr_words is None:
            raise RuntimeError("embedding requires address tables")
        k = self.spec.letters
        codes = self._addr_words.astype(np.int64)
        labels = self._addr_labels.astype(np.int64)
        fixed = np.asarray(self.spec.fixed_letters, dtype=np.int64)
        for _ in range(finer.level - self.level):
            codes = codes * k + fixed[labels]
        return finer.vertex_ids(codes, labels)


def build_level(spec: FractalSpec, n: int, *, with_addresses: bool | None = None,
                max_addresses: int = DEFAULT_MAX_ADDRESSES) -> LevelGraph:
    """Vertex hierarchy of ``spec`` at level ``n``.

    Vertices are equivalence classes of addresses under the glue rules applied
    inside every coarser cell.  Ids are deterministic: classes are ordered by
    their smallest candidate index at each refinement step.
    """
    if n < 0:
        raise ValueError(f"level must be nonnegative, got {n}")
    k, q = spec.letters, spec.boundary
    total = q * k ** n if n else q
    if total > max_addresses:
        raise ResourceLimitError(
            f"level {n} needs {total} addresses (limit {max_addresses})", total)
    if with_addresses is None:
        with_addresses = total <= 20_000_000

    nv = q
    boundary_ids = list(range(q))
    cells = None
    merges: list[_LevelMerge] = []
    words = np.zeros(q, dtype=np.int64) if with_addresses else None
    labels = np.arange(q, dtype=np.int64) if with_addresses else None

    for m in range(1, n + 1):
        # tiny union-find over only the candidates touched by glue rules
        parent: dict[int, int] = {}

        def find(x: int) -> int:
            root = x
            while parent.get(root, root) != root:
                root = parent[root]
            while parent.get(x, x) != x:
                parent[x], x = root, parent[x]
            return root

        for i, a, j, b in spec.glue:
            ca = i * nv + boundary_ids[a]
            cb = j * nv + boundary_ids[b]
            ra, rb = find(ca), find(cb)
            if ra != rb:
                lo, hi = min(ra, rb), max(ra, rb)
                parent[hi] = lo
        pairs = sorted((x, find(x)) for x in parent if find(x) != x)
        nonroots = np.array([x for x, _ in pairs], dtype=np.int64)
        targets = np.array([t for _, t in pairs], dtype=np.int64)
        merge = _LevelMerge(nv_prev=nv, nonroots=nonroots, targets=targets)
        merges.append(merge)
        nv_new = k * nv - len(nonroots)

        km1 = k ** (m - 1)
        cells_new = np.empty((k * km1, q), dtype=np.int32)
        for i in range(k):
            block = (i * nv + (cells.astype(np.int64) if cells is not None
                               else np.arange(q, dtype=np.int64)[None, :]))
            cells_new[i * km1:(i + 1) * km1] = merge.apply(block)
        if with_addresses:
            words_new = np.empty(nv_new, dtype=np.int64)
            labels_new = np.empty(nv_new, dtype=np.int64)
            for i in range(k):
                cand = i * nv + np.arange(nv, dtype=np.int64)
                root_mask = np.ones(nv, dtype=bool)
                if nonroots.size:
                    pos = np.searchsorted(nonroots, cand)
                    pos_c = np.minimum(pos, nonroots.size - 1)
                    root_mask &= nonroots[pos_c] != cand
                ids = merge.apply(cand[root_mask])
                words_new[ids] = i * km1 + words[root_mask]
                labels_new[ids] = labels[root_mask]
            for x, t in pairs:  # merged-away addresses may be lexicographically smaller
                i, v = divmod(x, nv)
                vid = int(merge.apply(np.array([t]))[0])
                cand_key = (i * km1 + int(words[v]), int(labels[v]))
                if cand_key < (int(words_new[vid]), int(labels_new[vid])):
                    words_new[vid], labels_new[vid] = cand_key
            words, labels = words_new, labels_new

        boundary_ids = [int(merge.apply(np.array([spec.fixed_letters[a] * nv
                                                  + boundary_ids[a]]))[0])
                        for a in range(q)]
        nv = nv_new
        cells = cells_new

    if cells is None:
        cells = np.arange(q, dtype=np.int32)[None, :]  # level 0: the whole set
    else:
        for a in range(q):
            for b in range(a + 1, q):
                if np.any(cells[:, a] == cells[:, b]):
                    raise SpecValidationError(
                        f"level {n}: a cell has coincident corners {a} and {b}")
    return LevelGraph(spec, n, nv, cells, boundary_ids, merges, words, labels)
