import math

import numpy as np
import pytest

from oracles import brute_suffix_sup, random_queries, ranking_loss_oracle
from tsrisk import _kernels_py
from tsrisk._backend import BACKEND, kernels
from tsrisk.core import LossTable1, LossTable2, ParameterGrid
from tsrisk.retrieval import (
    DocRecord, QueryBatch, QueryRecord, R0Config, ValidationError, build_c1, build_c2, build_loss_tables,
    empty_target_counts, monotonize1, monotonize2, ranking_loss, retrieval_loss,
)


def q(*docs, qid="q"):
    return QueryRecord(qid, tuple(DocRecord(f"d{i}", *d) for i, d in enumerate(docs)))


def test_build_c1_examples():
    query = q((0, 0.3, 0.0), (1, 0.6, 0.0), (2, 0.9, 0.0))
    assert build_c1(query, 0.5) == {"d1", "d2"}
    assert build_c1(query, 1.0) == {"d0", "d1", "d2"}
    assert build_c1(query, 0.0) == set()
    assert build_c1(q((0, 1.0, 0.0)), 0.0) == {"d0"}


def test_build_c2_examples():
    # retrieval passes d0, d1; rank passes d1, d2
    query = q((0, 0.9, 0.1), (0, 0.9, 0.9), (0, 0.1, 0.9))
    assert build_c2(query, 0.5, 0.5) == {"d1"}
    assert build_c2(query, 1.0, 1.0) == {"d0", "d1", "d2"}
    assert build_c2(query, 1.0, 0.0) == set()


def test_retrieval_loss_examples():
    query = q((1, 0.9, 0), (1, 0.8, 0), (2, 0.7, 0), (1, 0.1, 0), (0, 0.95, 0))
    assert retrieval_loss(query, 0.5) == 0.25
    assert retrieval_loss(query, 1.0) == 0.0
    assert retrieval_loss(q((0, 0.2, 0.2), (0, 0.3, 0.3)), 0.1) == 0.0


def hand_case():
    # Z sorted: d0 (grade 3), d1 (grade 2), d2 (grade 1); d1 falls outside C2
    return q((3, 0.9, 0.9), (2, 0.9, 0.1), (1, 0.9, 0.9), (0, 0.9, 0.9))


def test_ranking_loss_hand_value():
    expected = 1 - (1 / math.log(2) + 1 / math.log(4)) / (1 / math.log(2) + 1 / math.log(3) + 1 / math.log(4))
    assert ranking_loss(hand_case(), 0.5, 0.5) == pytest.approx(expected, abs=1e-15)
    assert ranking_loss(hand_case(), 0.5, 0.5) == pytest.approx(0.29607, abs=1e-4)
    assert ranking_loss(hand_case(), 0.5, 0.5, log_base=2) == pytest.approx(0.29607, abs=1e-4)


def test_ranking_loss_trivial_cases():
    assert ranking_loss(hand_case(), 1.0, 1.0) == 0.0
    assert ranking_loss(hand_case(), 0.0, 0.0) == 1.0
    assert ranking_loss(q((0, 0.5, 0.5)), 0.1, 0.1) == 0.0
    # with r0=3 only d0 counts, and it is inside
    assert ranking_loss(hand_case(), 0.5, 0.5, r0=R0Config(3)) == 0.0


def test_ties_use_input_order():
    # two grade-1 docs; only the second is in C2, so it sits at position 2
    query = q((1, 0.9, 0.1), (1, 0.9, 0.9))
    want = 1 - (1 / math.log(3)) / (1 / math.log(2) + 1 / math.log(3))
    assert ranking_loss(query, 1.0, 0.5) == pytest.approx(want, abs=1e-15)


def test_log_base_invariance(rng):
    for query in random_queries(rng, 200, max_docs=15):
        lam, gam = rng.random(2)
        for r0 in (1, 2):
            a = ranking_loss(query, lam, gam, r0)
            assert abs(a - ranking_loss(query, lam, gam, r0, log_base=2)) <= 1e-12
            assert abs(a - ranking_loss_oracle(query, lam, gam, r0)) <= 1e-12


def test_normalisation_on_random_queries(rng):
    for query in random_queries(rng, 300):
        assert retrieval_loss(query, 1.0) == 0.0
        assert ranking_loss(query, 1.0, 1.0, 2) == 0.0


def test_record_validation():
    with pytest.raises(ValidationError):
        DocRecord("d", 1, 1.2, 0.5)
    with pytest.raises(ValidationError):
        DocRecord("d", -1, 0.2, 0.5)
    with pytest.raises(ValidationError):
        QueryRecord("q", ())
    with pytest.raises(ValidationError):
        QueryRecord("q", (DocRecord("a", 1, 0.1, 0.1), DocRecord("a", 0, 0.1, 0.1)))
    with pytest.raises(ValueError):
        R0Config(0)
    with pytest.raises(ValueError):
        R0Config(3, max_relevance=2)


def test_tables_match_scalar_losses(rng):
    queries = random_queries(rng, 40, round_scores=True)
    gl, gg = ParameterGrid.uniform(10), ParameterGrid([0.3, 0.5, 0.9, 1.0])
    for r0 in (1, 2):
        t1, t2 = build_loss_tables(queries, gl, gg, r0)
        assert t1.monotone and t2.monotone
        for i, query in enumerate(queries):
            for a, lam in enumerate(gl):
                assert t1.entries[i, a] == retrieval_loss(query, lam)
                for b, gam in enumerate(gg):
                    assert t2.entries[i, a, b] == ranking_loss(query, lam, gam, r0)


def test_single_query_two_point_grid():
    query = hand_case()
    g = ParameterGrid([0.5, 1.0])
    t1, t2 = build_loss_tables([query], g, g)
    assert t1.entries[0].tolist() == [retrieval_loss(query, 0.5), 0.0]
    assert t2.entries[0].tolist() == [[ranking_loss(query, a, b) for b in g] for a in g]


def test_all_scores_one_gives_zero_tables(rng):
    queries = [q(*[(int(rng.integers(0, 4)), 1.0, 1.0) for _ in range(5)], qid=i) for i in range(6)]
    g = ParameterGrid.uniform(5)
    t1, t2 = build_loss_tables(queries, g, g)
    assert not t1.entries.any() and not t2.entries.any()


def test_empty_target_counts():
    queries = [q((0, 0.1, 0.1)), q((1, 0.1, 0.1)), q((2, 0.1, 0.1))]
    assert empty_target_counts(queries, 2) == {"no_relevant": 1, "no_ranked_targets": 2}


def test_batch_take_matches_rebuild(rng):
    queries = random_queries(rng, 12)
    idx = [5, 0, 11, 3]
    a = QueryBatch.from_queries(queries).take(idx)
    b = QueryBatch.from_queries([queries[i] for i in idx])
    for name in ("offsets", "relevance", "score_retrieval", "score_rank"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.query_ids == b.query_ids


def test_kernel_backends_agree(rng):
    if BACKEND != "compiled":
        pytest.skip("compiled extension not built")
    b = QueryBatch.from_queries(random_queries(rng, 200, max_docs=30, round_scores=False))
    lam, gam = np.linspace(0, 1, 17), np.linspace(0.2, 1, 9)
    w = 1.0 / np.log(np.arange(2, 40))
    for r0 in (1, 2, 3):
        c1, c2 = kernels.loss_tables(b.offsets, b.relevance, b.score_retrieval, b.score_rank, lam, gam, r0, w)
        p1, p2 = _kernels_py.loss_tables(b.offsets, b.relevance, b.score_retrieval, b.score_rank, lam, gam, r0, w)
        assert np.array_equal(c1, p1) and np.array_equal(c2, p2)
    assert all(np.array_equal(x, y) for x, y in zip(kernels.set_size_totals(b.score_retrieval, b.score_rank, lam, gam),
                                                     _kernels_py.set_size_totals(b.score_retrieval, b.score_rank, lam, gam)))
    x = rng.random((500, 7)) * 10.0 ** rng.integers(-12, 2, (500, 7))
    assert np.array_equal(kernels.neumaier_colsum(x), _kernels_py.neumaier_colsum(x))


def test_monotonize_examples():
    g = ParameterGrid([0.3, 0.6, 1.0])
    t = monotonize1(LossTable1(np.array([[0.2, 0.5, 0.1], [0.0, 0.0, 0.0]]), g))
    assert t.entries.tolist() == [[0.5, 0.5, 0.1], [0.0, 0.0, 0.0]] and t.monotone
    g2 = ParameterGrid([0.5, 1.0])
    t2 = monotonize2(LossTable2(np.array([[[0.1, 0.0], [0.4, 0.2]]]), g2, g2))
    assert t2.entries.tolist() == [[[0.4, 0.2], [0.4, 0.2]]] and t2.monotone


def test_monotonize_matches_quadrant_sup(rng):
    g = ParameterGrid.uniform(5)
    for _ in range(100):
        e = rng.random((3, 5, 5)) * (rng.random((3, 5, 5)) < 0.6)
        m = monotonize2(LossTable2(e, g, g))
        for i in range(3):
            assert np.array_equal(m.entries[i], brute_suffix_sup(e[i]))
        assert np.array_equal(monotonize2(m).entries, m.entries)
        assert np.all(m.entries >= e)
        row = monotonize1(LossTable1(e[:, 0, :], g))
        assert np.all(row.entries >= e[:, 0, :])
        assert np.array_equal(monotonize1(row).entries, row.entries)


def test_monotonize_keeps_monotone_tables(rng):
    queries = random_queries(rng, 20)
    g = ParameterGrid.uniform(6)
    t1, t2 = build_loss_tables(queries, g, g, 1)
    assert np.array_equal(monotonize1(t1).entries, t1.entries)
    assert np.array_equal(monotonize2(t2).entries, t2.entries)
