import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_ltt_set, hb_oracle, random_monotone_tables
from tsrisk.core import LossTable1, LossTable2, ParameterGrid, RiskLevels
from tsrisk.ltt import (
    PROCEDURES, LttConfig, PValueFamilies, compute_pvalue_families, level_table, ltt_appendix1, ltt_appendix2,
    ltt_appendix3, ltt_calibrate, ltt_main, run_procedure,
)
from tsrisk.pvalue import P_FLOOR


def one_based(fs):
    return {(a + 1, b + 1) for a, b in fs.pairs}


def test_main_hand_trace():
    p1 = [0.05, 0.2, 0.01]
    p2 = np.array([[0.09, 0.04, 0.01], [1.0, 1.0, 1.0], [0.5, 0.08, 0.02]])
    fs = ltt_main(PValueFamilies(p1, p2), LttConfig(0.3, "main"))
    assert one_based(fs) == {(1, 1), (1, 2), (1, 3), (3, 2), (3, 3)}
    assert fs.provenance == "ltt:main"


@pytest.mark.parametrize("proc, w", [("main", None), ("appendix1", 0.5), ("appendix2", None), ("appendix3", 0.5)])
def test_all_ones_and_all_zeros(proc, w):
    cfg = LttConfig(0.1, proc, w)
    assert len(run_procedure(PValueFamilies(np.ones(4), np.ones((4, 3))), cfg)) == 0
    assert len(run_procedure(PValueFamilies(np.zeros(4), np.zeros((4, 3))), cfg)) == 12


def test_appendix1_hand_trace():
    lv = level_table(LttConfig(0.2, "appendix1", 0.5), 2, 2)
    assert lv.stage1.tolist() == [0.1, 0.2]
    fs = ltt_appendix1(PValueFamilies([0.04, 0.15], np.zeros((2, 2))), LttConfig(0.2, "appendix1", 0.5))
    assert {a for a, _ in one_based(fs)} == {1, 2}


def test_appendix1_stops_at_first_failure():
    fs = ltt_appendix1(PValueFamilies([0.0, 0.25], np.zeros((2, 2))), LttConfig(0.2, "appendix1", 0.5))
    assert len(fs) == 0


def test_appendix2_hand_trace():
    p2 = np.array([[0.05, 0.2], [1.0, 1.0]])
    fs = ltt_appendix2(PValueFamilies([0.1, 0.3], p2), LttConfig(0.4, "appendix2"))
    assert one_based(fs) == {(1, 1)}


def test_appendix3_level():
    lv = level_table(LttConfig(0.4, "appendix3", 0.5), 2, 2)
    assert lv.stage2[1] == pytest.approx(0.1, rel=1e-15)


def test_procedure_names_are_checked():
    fam = PValueFamilies(np.zeros(2), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ltt_main(fam, LttConfig(0.1, "appendix2"))
    with pytest.raises(ValueError):
        ltt_appendix3(fam, LttConfig(0.1, "main"))
    ltt_appendix2(fam, LttConfig(0.1, "appendix2"))


@pytest.mark.parametrize("kw", [dict(delta=0.0), dict(delta=1.0), dict(procedure="x"),
                                dict(procedure="appendix1"), dict(procedure="appendix3", w=1.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        LttConfig(**kw)


def test_geometric_levels_for_large_grids():
    lv = level_table(LttConfig(0.01, "appendix1", 0.5), 51, 51)
    assert lv.stage1[0] == 0.5**50 * 0.01 > 0
    assert lv.stage1[-1] == 0.01


def test_pvalue_families_examples():
    g = ParameterGrid([0.5, 1.0])
    z1, z2 = LossTable1(np.zeros((10, 2)), g), LossTable2(np.zeros((10, 2, 2)), g, g)
    fam = compute_pvalue_families(z1, z2, RiskLevels(0.1, 0.1))
    assert np.allclose(fam.stage1, 0.9**10, rtol=1e-12) and np.allclose(fam.stage2, 0.9**10, rtol=1e-12)
    o1, o2 = LossTable1(np.ones((10, 2)), g), LossTable2(np.ones((10, 2, 2)), g, g)
    fam = compute_pvalue_families(o1, o2, RiskLevels(0.1, 0.1))
    assert np.all(fam.stage1 == 1.0) and np.all(fam.stage2 == 1.0)


def test_pvalue_families_cellwise_oracle(rng):
    t1, t2 = random_monotone_tables(rng, 17, 5, 4)
    fam = compute_pvalue_families(t1, t2, RiskLevels(0.2, 0.3))
    for a in range(5):
        assert fam.stage1[a] == pytest.approx(max(hb_oracle(sum(t1.entries[:, a]), 17, 0.2), P_FLOOR), rel=1e-10)
        for b in range(4):
            ref = hb_oracle(sum(t2.entries[:, a, b]), 17, 0.3)
            assert fam.stage2[a, b] == pytest.approx(max(ref, P_FLOOR), rel=1e-10)


def test_monotone_tables_give_monotone_pvalues(rng):
    for _ in range(50):
        t1, t2 = random_monotone_tables(rng, 30, 6, 6)
        fam = compute_pvalue_families(t1, t2, RiskLevels(0.3, 0.3))
        assert np.all(np.diff(fam.stage1) <= 0)
        assert np.all(np.diff(fam.stage2, axis=1) <= 0)
        fs = ltt_main(fam, LttConfig(0.2, "main"))
        for a in {a for a, _ in fs.pairs}:
            js = sorted(b for a2, b in fs.pairs if a2 == a)
            assert js == list(range(js[0], 6))  # a suffix


@settings(max_examples=80)
@given(st.integers(0, 2**32 - 1), st.sampled_from(PROCEDURES), st.floats(0.01, 0.5), st.floats(0.1, 1.0))
def test_smaller_delta_gives_subset(seed, proc, delta, shrink):
    rng = np.random.default_rng(seed)
    m1, m2 = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    fam = PValueFamilies(rng.random(m1) * 0.2, rng.random((m1, m2)) * 0.2)
    w = 0.5 if proc in ("appendix1", "appendix3") else None
    big = run_procedure(fam, LttConfig(delta, proc, w))
    small = run_procedure(fam, LttConfig(delta * shrink, proc, w))
    assert small.pairs <= big.pairs


@pytest.mark.parametrize("proc", PROCEDURES)
def test_random_families_match_enumeration(proc, rng):
    w = 0.6 if proc in ("appendix1", "appendix3") else None
    for _ in range(200):
        m1, m2 = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        delta = float(rng.uniform(0.05, 0.5))
        p1 = np.sort(rng.random(m1) * 0.3)[::-1].copy()
        p2 = rng.random((m1, m2)) * 0.3
        fs = run_procedure(PValueFamilies(p1, p2), LttConfig(delta, proc, w))
        assert fs.pairs == brute_ltt_set(p1, p2, proc, delta, w)


def test_unequal_grids_use_their_own_sizes():
    lv = level_table(LttConfig(0.12, "appendix2"), 3, 4)
    assert lv.stage1[0] == 0.12 / 3
    assert lv.stage2[0] == 0.12 / 12


def test_ltt_calibrate_requires_monotone():
    g = ParameterGrid([0.5, 1.0])
    t1 = LossTable1(np.zeros((3, 2)), g)
    t2 = LossTable2(np.zeros((3, 2, 2)), g, g)
    with pytest.raises(ValueError):
        ltt_calibrate(t1, t2, RiskLevels(0.1, 0.1), LttConfig())
