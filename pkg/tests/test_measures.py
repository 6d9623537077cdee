"""Cell measures: additivity, trace coefficients, domination slack."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractaldist.measures import (
    HarmonicTuple,
    cell_boundary_values,
    cell_measure_table,
    check_domination,
    default_tuple,
    harmonic_cell_measure,
    piecewise_cell_measure,
    trace_coefficients,
    tuple_cell_measures,
)
from fractaldist.structure import VertexRef, build_level

from conftest import UNIT_TRIANGLE_D


def random_tuple(rng, n_components=2):
    return HarmonicTuple(rng.normal(size=(n_components, 3)))


def test_constant_tuple_measures_vanish(sg2_hs):
    with pytest.warns(UserWarning):
        h = HarmonicTuple(np.ones((1, 3)))
    for word in [(), (0,), (1, 2), (0, 1, 2)]:
        assert harmonic_cell_measure(sg2_hs, h, word) == 0.0


def test_whole_set_measure_single_component(sg2_hs):
    h = HarmonicTuple(np.array([[1.0, 0.0, 0.0]]))
    # boundary energy of (1,0,0) is 2, measure of the whole set is twice that
    assert abs(harmonic_cell_measure(sg2_hs, h, ()) - 4.0) < 1e-14


def test_additivity_brute_force(sg2_hs):
    rng = np.random.default_rng(10)
    spec = sg2_hs.spec
    for _ in range(5):
        h = random_tuple(rng)
        words = [(), (0,), (2,), (0, 1), (1, 2, 0)]
        for w in words:
            total = harmonic_cell_measure(sg2_hs, h, w)
            parts = sum(harmonic_cell_measure(sg2_hs, h, w + (i,))
                        for i in range(spec.letters))
            scale = harmonic_cell_measure(sg2_hs, h, ())
            assert abs(total - parts) <= 1e-10 * scale


def test_additivity_deep_tables(sg2_hs, hexa_hs):
    # each depth is computed directly from its own cell boundary values, so
    # parent-vs-children comparisons test the one-step measure identity
    rng = np.random.default_rng(11)
    for hs, depth in [(sg2_hs, 8), (hexa_hs, 5)]:
        h = random_tuple(rng)
        k = hs.spec.letters
        per_level = [tuple_cell_measures(hs, h, m) for m in range(depth + 1)]
        scale = float(per_level[0][0])
        for m in range(depth):
            children = per_level[m + 1].reshape(k ** m, k).sum(axis=1)
            assert np.max(np.abs(per_level[m] - children)) <= 1e-10 * scale
        assert all(v.min() >= -1e-12 * scale for v in per_level)


def test_measure_table_consistent_with_direct_values(sg2_hs):
    rng = np.random.default_rng(15)
    h = random_tuple(rng)
    table = cell_measure_table(sg2_hs, h, 4)
    scale = table.value(())
    for word in [(), (0,), (1, 2), (2, 0, 1), (0, 0, 0, 0)]:
        assert abs(table.value(word) - harmonic_cell_measure(sg2_hs, h, word)) \
            <= 1e-10 * scale


def test_scaling_covariance(sg2_hs):
    rng = np.random.default_rng(12)
    h = random_tuple(rng)
    c = 3.25
    h_scaled = HarmonicTuple(c * h.alphas)
    for w in [(), (1,), (0, 2)]:
        assert np.isclose(harmonic_cell_measure(sg2_hs, h_scaled, w),
                          c * c * harmonic_cell_measure(sg2_hs, h, w), rtol=1e-12)


def test_piecewise_matches_harmonic_on_restrictions(sg2_ctx):
    hs = sg2_ctx.hs
    n = 4
    lg = sg2_ctx.level(n).lg
    coords = sg2_ctx.coords(n)
    scale = harmonic_cell_measure(hs, sg2_ctx.h, ())
    for j in range(sg2_ctx.n_components):
        h_j = HarmonicTuple(sg2_ctx.h.alphas[j:j + 1])
        f = coords[:, j]
        for w in [(), (0,), (1, 2), (2, 2, 0), (0, 1, 2, 1)]:
            direct = harmonic_cell_measure(hs, h_j, w)
            interp = piecewise_cell_measure(hs, lg, f, w)
            assert abs(direct - interp) <= 1e-10 * scale


def test_piecewise_constant_zero(sg2_ctx):
    lg = sg2_ctx.level(3).lg
    f = np.full(lg.num_vertices, 1.23)
    assert piecewise_cell_measure(sg2_ctx.hs, lg, f, ()) < 1e-12


def test_piecewise_rejects_deep_word(sg2_ctx):
    lg = sg2_ctx.level(2).lg
    with pytest.raises(ValueError):
        piecewise_cell_measure(sg2_ctx.hs, lg, np.zeros(lg.num_vertices), (0, 1, 2))


def test_reharmonization_decreases_cell_measures(sg2_ctx):
    # replacing vertex values by the coarse-level minimizer cannot increase
    # any coarse cell's measure
    hs = sg2_ctx.hs
    rng = np.random.default_rng(13)
    n, m = 5, 3
    fine = sg2_ctx.level(n).lg
    coarse = sg2_ctx.level(m).lg
    emb = coarse.embed_into(fine)
    for _ in range(5):
        f = rng.normal(size=fine.num_vertices)
        f_coarse = f[emb]
        for w in [(), (0,), (1, 0), (2, 1, 0)]:
            fine_val = piecewise_cell_measure(hs, fine, f, w)
            coarse_val = piecewise_cell_measure(hs, coarse, f_coarse, w)
            assert coarse_val <= fine_val + 1e-10


def test_trace_coefficients_values(sg2_hs):
    b = trace_coefficients(sg2_hs, ())
    assert np.allclose(b - np.diag(np.diag(b)), 2.0 * (np.ones((3, 3)) - np.eye(3)))
    assert np.allclose(np.diag(b), 0.0)
    b1 = trace_coefficients(sg2_hs, (0,))
    assert np.allclose(b1[0, 1], 2.0 / 0.6)
    assert np.allclose(b1, b1.T)
    assert (b1 - np.diag(np.diag(b1))).min() >= 0.0


def test_trace_coefficients_reconstruct_cell_measure(sg2_ctx):
    hs = sg2_ctx.hs
    rng = np.random.default_rng(14)
    n = 3
    lg = sg2_ctx.level(n).lg
    f = rng.normal(size=lg.num_vertices)
    for code in [0, 5, 11, 26]:
        word = lg.cell_word(code)
        b = trace_coefficients(hs, word)
        vals = f[lg.cells[code]]
        quad = 0.5 * sum(b[p, q] * (vals[p] - vals[q]) ** 2
                         for p in range(3) for q in range(3) if p != q)
        assert abs(quad - piecewise_cell_measure(hs, lg, f, word)) < 1e-12


def test_domination_equality_case(sg2_ctx):
    hs = sg2_ctx.hs
    n = 4
    lg = sg2_ctx.level(n).lg
    h1 = HarmonicTuple(sg2_ctx.h.alphas[:1])
    f = sg2_ctx.coords(n)[:, 0]
    table = check_domination(hs, lg, f, h1, m_max=n)
    assert table.feasible
    assert abs(table.min_slack) <= 1e-12 * table.scale
    assert table.checked_depth == n


def test_domination_quadratic_scaling_infeasible(sg2_ctx):
    hs = sg2_ctx.hs
    n = 3
    lg = sg2_ctx.level(n).lg
    h1 = HarmonicTuple(sg2_ctx.h.alphas[:1])
    f = 2.0 * sg2_ctx.coords(n)[:, 0]
    table = check_domination(hs, lg, f, h1, m_max=n)
    assert not table.feasible
    # doubling f quadruples every cell measure: slack = -3 * measure everywhere
    deepest = tuple_cell_measures(hs, h1, n)
    assert np.allclose(table.slack[n], -3.0 * deepest, rtol=1e-12)
    assert np.isclose(table.min_slack, -3.0 * table.scale, rtol=1e-12)


def test_slack_csv_headers(sg2_ctx):
    lg = sg2_ctx.level(1).lg
    f = np.zeros(lg.num_vertices)
    table = check_domination(sg2_ctx.hs, lg, f, sg2_ctx.h, m_max=1)
    text = table.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "word,depth,slack"
    assert lines[1].startswith("-,0,")
    assert len(lines) == 1 + 1 + 3


def test_cell_boundary_values_layout(sg2_ctx):
    hs = sg2_ctx.hs
    C = cell_boundary_values(hs, sg2_ctx.h, 2)
    lg = sg2_ctx.level(2).lg
    # C[cell, corner, component] must equal the harmonic value at that corner
    from fractaldist.harmonic import harmonic_eval
    for code in [0, 3, 8]:
        word = lg.cell_word(code)
        for corner in range(3):
            for j in range(sg2_ctx.n_components):
                expected = harmonic_eval(hs, sg2_ctx.h.alphas[j],
                                         VertexRef(word, corner))
                assert abs(C[code, corner, j] - expected) < 1e-12


def test_default_tuple_orthonormal(sg2_hs, hexa_hs):
    for hs in (sg2_hs, hexa_hs):
        h = default_tuple(hs)
        assert h.n_components == 2
        for j in range(2):
            assert abs(h.alphas[j].sum()) < 1e-12
            for l in range(2):
                expect = 1.0 if j == l else 0.0
                assert abs(hs.energy0(h.alphas[j], h.alphas[l]) - expect) < 1e-12
