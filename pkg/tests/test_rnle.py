import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from liftrisk import rnle
from liftrisk.rnle import (
    Coupling,
    CouplingMode,
    Duration,
    FrequencyOutOfRange,
    NioshInput,
    Rounding,
    asymmetry_multiplier,
    coupling_multiplier,
    distance_multiplier,
    dump_tables,
    frequency_multiplier,
    horizontal_multiplier,
    lifting_index,
    lifting_index_series,
    round2,
    rwl,
    vertical_multiplier,
)

# reference lifts: (payload, H0, H1, V0, V1, D), multipliers (HM0, HM1, VM0, VM1, DM0, DM1),
# (RWL0, RWL1), (LI0, LI1)
TABLE = [
    (3, 47, 63, 8, 68, 60, (0.53, 0.40, 0.80, 0.98, 0.90, 0.90), (5.84, 5.40), (0.51, 0.56)),
    (7, 47, 63, 8, 80, 72, (0.53, 0.40, 0.80, 0.99, 0.88, 0.88), (5.71, 5.33), (1.23, 1.31)),
    (10, 47, 63, 8, 92, 83, (0.53, 0.40, 0.80, 0.95, 0.87, 0.87), (5.64, 5.06), (1.77, 1.98)),
]


@pytest.mark.parametrize("row", TABLE, ids=["task1", "task2", "task3"])
def test_table_rows(row):
    payload, h0, h1, v0, v1, d, mults, rwls, lis = row
    for (h, v), r_ref, li_ref, k in (((h0, v0), rwls[0], lis[0], 0), ((h1, v1), rwls[1], lis[1], 1)):
        res = rwl(NioshInput(h, v, d, payload=payload), Rounding.TABLE_PARITY)
        assert (res.HM, res.VM, res.DM) == (mults[k], mults[2 + k], mults[4 + k])
        assert res.AM == 1.0 and res.FM == 0.70 and res.CM == 0.95
        assert res.RWL == pytest.approx(r_ref, abs=0.01)
        assert res.LI == pytest.approx(li_ref, abs=0.01)
        exact = rwl(NioshInput(h, v, d, payload=payload))
        assert abs(exact.RWL - res.RWL) < 0.15


@pytest.mark.parametrize("H,ref", [(47, 0.5319), (25, 1.0), (63, 0.3968), (10, 1.0), (64, 0.0)])
def test_horizontal(H, ref):
    assert horizontal_multiplier(H) == pytest.approx(ref, abs=1e-4)


@pytest.mark.parametrize("V,ref", [(75, 1.0), (8, 0.799), (92, 0.949), (175, 0.7), (176, 0.0)])
def test_vertical(V, ref):
    assert vertical_multiplier(V) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("D,ref", [(60, 0.895), (10, 1.0), (72, 0.8825), (175, 0.82 + 4.5 / 175),
                                   (176, 0.0)])
def test_distance(D, ref):
    assert distance_multiplier(D) == pytest.approx(ref, abs=1e-12)


def test_asymmetry_frequency_coupling():
    assert asymmetry_multiplier(0) == 1.0
    assert asymmetry_multiplier(90) == pytest.approx(0.712)
    assert asymmetry_multiplier(136) == 0.0
    assert frequency_multiplier(7, Duration.SHORT, 8) == 0.70
    assert frequency_multiplier(7, Duration.LONG, 80) == 0.22
    assert frequency_multiplier(13, "1h", 30) == 0.0 and frequency_multiplier(13, "1h", 80) == 0.34
    # between tabulated rows the value is interpolated linearly
    assert frequency_multiplier(1.5, Duration.SHORT, 0) == pytest.approx((0.94 + 0.91) / 2)
    for v in (0, 50, 80, 150):
        assert coupling_multiplier(Coupling.FAIR, v) == 0.95
    assert coupling_multiplier("fair", 80, CouplingMode.NIOSH_STANDARD) == 1.0
    assert coupling_multiplier("fair", 50, "niosh-standard") == 0.95
    assert coupling_multiplier("poor", 80) == 0.90 and coupling_multiplier("good", 0) == 1.0


def test_frequency_above_table_clamps_with_flag():
    with pytest.warns(FrequencyOutOfRange):
        fm, flagged = frequency_multiplier(20, Duration.SHORT, 80, return_flag=True)
    assert flagged and fm == 0.28
    with pytest.warns(FrequencyOutOfRange):
        res = rwl(NioshInput(40, 80, 30, F=20))
    assert res.frequency_clamped
    with pytest.raises(ValueError):
        frequency_multiplier(-1)


def test_round_half_up():
    assert round2(0.985) == 0.99 and round2(0.8825) == 0.88 and round2(0.5319) == 0.53
    assert round2(0.395) == 0.40


def test_lifting_index_sentinels():
    assert lifting_index(3, 5.84) == pytest.approx(0.5137, abs=1e-4)
    assert lifting_index(10, 5.06) == pytest.approx(1.976, abs=1e-3)
    assert lifting_index(0, 0.0) == 0.0 and lifting_index(0, 5.0) == 0.0
    assert lifting_index(5, 0.0) == np.inf


def test_zero_multiplier_annihilates():
    res = rwl(NioshInput(70, 50, 40, payload=5))
    assert res.HM == 0.0 and res.RWL == 0.0 and res.LI == np.inf


def test_input_validation():
    with pytest.raises(ValueError):
        NioshInput(-1, 10, 10)
    with pytest.raises(ValueError):
        NioshInput(30, 10, 10, coupling="sticky")


nonneg = st.floats(0, 300, allow_nan=False)


@given(nonneg, nonneg, nonneg, st.floats(0, 200), st.floats(0, 15))
def test_multipliers_in_unit_interval(H, V, D, A, F):
    for m in (horizontal_multiplier(H), vertical_multiplier(V), distance_multiplier(D),
              asymmetry_multiplier(A), frequency_multiplier(F, Duration.MODERATE, V)):
        assert 0.0 <= m <= 1.0
    assert rwl(NioshInput(H, V, D, A, F)).RWL <= rnle.LOAD_CONSTANT


@given(st.floats(25, 200), st.floats(25, 200), st.floats(0, 175), st.floats(0, 175))
def test_rwl_monotone(h1, h2, d1, v1):
    lo, hi = sorted((h1, h2))
    assert rwl(NioshInput(hi, 75, 30)).RWL <= rwl(NioshInput(lo, 75, 30)).RWL
    dlo, dhi = sorted((h1, h2))
    assert rwl(NioshInput(40, 75, dhi)).RWL <= rwl(NioshInput(40, 75, dlo)).RWL
    near, far = sorted((abs(v1 - 75), abs(d1 - 75)))
    assert rwl(NioshInput(40, 75 + far, 30)).RWL <= rwl(NioshInput(40, 75 + near, 30)).RWL


@given(st.floats(26, 60), st.floats(0, 170), st.floats(26, 170), st.floats(0.1, 30), st.floats(0.1, 5))
def test_li_linear_in_payload(H, V, D, payload, k):
    a = rwl(NioshInput(H, V, D, payload=payload)).LI
    b = rwl(NioshInput(H, V, D, payload=k * payload)).LI
    assert b == pytest.approx(k * a, rel=1e-12)


@given(st.lists(st.tuples(nonneg, nonneg, nonneg), min_size=1, max_size=20),
       st.sampled_from(list(Rounding)), st.sampled_from(list(CouplingMode)))
def test_series_equals_scalar_path_exactly(rows, rounding, mode):
    H, V, D = (np.array(c) for c in zip(*rows))
    series_rwl, series_li = lifting_index_series(H, V, D, 7.0, rounding=rounding, coupling_mode=mode)
    for k, (h, v, d) in enumerate(rows):
        res = rwl(NioshInput(h, v, d, payload=7.0), rounding, mode)
        assert series_rwl[k] == res.RWL and series_li[k] == res.LI


def test_tables_dump():
    doc = dump_tables()
    assert doc["version"] == rnle.TABLES_VERSION and doc["load_constant_kg"] == 23.0
    assert len(doc["frequency"]["1h"]) == len(doc["frequency"]["lifts_per_min"])
    assert doc["coupling"]["fair"] == [0.95, 1.0]
