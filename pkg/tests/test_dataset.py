import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camest.dataset import (
    CamError,
    IngestError,
    MaskedDataset,
    Pattern,
    PatternCompatibilityError,
    group_by_pattern,
    ingest_csv,
    project,
    select_adjustment_set,
)


def test_ingest_basic_masking():
    csv = "x1,x2,y\n1.5,NA,0.3\nNA,NA,1.0\n2.0,3.0,0.5\n"
    ds = ingest_csv(csv, response="y")
    assert ds.n == 3 and ds.d == 2
    assert ds.x[0, 0] == 1.5 and np.isnan(ds.x[0, 1])
    assert list(ds.observed[0]) == [True, False]
    assert list(ds.observed[1]) == [False, False]
    assert ds.y.tolist() == [0.3, 1.0, 0.5]
    assert ds.pattern_of(0) == Pattern((0, 1))
    assert ds.pattern_of(1).d_m == 0


def test_ingest_missing_response_rejected_with_row():
    with pytest.raises(IngestError, match="row 2"):
        ingest_csv("x1,x2,y\n1.0,2.0,3.0\n1.0,2.0,NA\n", response="y")


def test_ingest_non_numeric_cell_names_row_and_column():
    with pytest.raises(IngestError, match="row 1.*'x2'"):
        ingest_csv("x1,x2,y\n1.0,abc,3.0\n", response="y")


def test_ingest_custom_na_markers_and_feature_subset():
    csv = "a,b,y\n?,2.0,1.0\n1.0,?,2.0\n"
    ds = ingest_csv(csv, response="y", features=["a"], na_markers=("?",))
    assert ds.d == 1
    assert np.isnan(ds.x[0, 0]) and ds.x[1, 0] == 1.0


def test_ingest_requires_header_and_known_columns():
    with pytest.raises(IngestError):
        ingest_csv("", response="y")
    with pytest.raises(IngestError, match="response"):
        ingest_csv("a,b\n1,2\n", response="y")


def test_group_by_pattern_partition():
    # masks (present bits) {11, 11, 01} on d=2: two complete rows, one missing
    # the first feature
    x = np.array([[1.0, 2.0], [3.0, 4.0], [np.nan, 5.0]])
    ds = MaskedDataset.from_arrays(x, np.zeros(3))
    groups = group_by_pattern(ds)
    assert groups.complete.tolist() == [0, 1]
    assert groups.groups[Pattern((1, 0))].tolist() == [2]
    assert sum(idx.shape[0] for idx in groups.groups.values()) == 3


def test_group_by_pattern_all_complete_and_none_complete():
    ds = MaskedDataset.from_arrays(np.ones((4, 2)), np.zeros(4))
    groups = group_by_pattern(ds)
    assert len(groups.groups) == 1 and groups.n0 == 4

    ds2 = MaskedDataset.from_arrays(np.full((3, 1), np.nan), np.zeros(3))
    groups2 = group_by_pattern(ds2)
    assert groups2.n0 == 0
    with pytest.raises(CamError, match="complete"):
        select_adjustment_set(groups2)


def _dataset_with_counts(counts: dict) -> MaskedDataset:
    """counts: pattern-string -> row count."""
    d = len(next(iter(counts)))
    blocks = []
    for bits, k in counts.items():
        row = np.arange(d, dtype=float) + 1.0
        block = np.tile(row, (k, 1))
        for j, b in enumerate(bits):
            if b == "1":
                block[:, j] = np.nan
        blocks.append(block)
    x = np.vstack(blocks)
    return MaskedDataset.from_arrays(x, np.zeros(x.shape[0]))


def test_select_adjustment_threshold_rule():
    ds = _dataset_with_counts({"000": 50, "101": 30, "110": 10})
    adj = select_adjustment_set(group_by_pattern(ds), min_count=20)
    assert [str(m) for m in adj.patterns] == ["101"]
    assert adj.size(Pattern.from_string("101")) == 30


def test_select_adjustment_integration_unions_the_poset():
    ds = _dataset_with_counts({"00": 25, "10": 30, "11": 15})
    groups = group_by_pattern(ds)
    adj = select_adjustment_set(groups, min_count=20, integrate=True)
    m11 = Pattern.from_string("11")
    assert m11 in adj.effective
    assert adj.size(m11) == 45  # rows with pattern 10 observe everything 11 needs
    assert adj.size(Pattern.from_string("10")) == 30
    assert not set(adj.indices(m11)) & set(groups.complete)


def test_select_adjustment_min_count_one():
    ds = _dataset_with_counts({"00": 3, "10": 5})
    adj = select_adjustment_set(group_by_pattern(ds), min_count=1)
    assert [str(m) for m in adj.patterns] == ["10"]
    assert adj.size(Pattern.from_string("10")) == 5


def test_project_complete_rows_under_marginal_pattern():
    x = np.array([[1.0, 10.0], [2.0, 20.0], [np.nan, 30.0]])
    ds = MaskedDataset.from_arrays(x, np.array([0.1, 0.2, 0.3]))
    groups = group_by_pattern(ds)
    sample = project(ds, groups.complete, Pattern((1, 0)))
    assert sample.x.tolist() == [[10.0], [20.0]]
    assert sample.y.tolist() == [0.1, 0.2]


def test_project_response_only_pattern():
    ds = MaskedDataset.from_arrays(np.array([[1.0], [2.0]]), np.array([5.0, 6.0]))
    sample = project(ds, [0, 1], Pattern((1,)))
    assert sample.x.shape == (2, 0)
    assert sample.y.tolist() == [5.0, 6.0]


def test_project_incompatible_row_is_named():
    x = np.array([[1.0, 1.0], [1.0, np.nan]])
    ds = MaskedDataset.from_arrays(x, np.zeros(2))
    with pytest.raises(PatternCompatibilityError, match="row 2"):
        project(ds, [0, 1], Pattern((1, 0)))


def test_project_never_fails_on_own_groups():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n, d = 30, 4
        x = rng.standard_normal((n, d))
        x[rng.random((n, d)) < 0.35] = np.nan
        ds = MaskedDataset.from_arrays(x, rng.standard_normal(n))
        groups = group_by_pattern(ds)
        for m, idx in groups.groups.items():
            sample = project(ds, idx, m)
            assert sample.n == idx.shape[0]
            assert np.all(np.isfinite(sample.x))


@given(st.integers(1, 16), st.data())
@settings(max_examples=60, deadline=None)
def test_pattern_string_round_trip(d, data):
    bits = data.draw(st.lists(st.integers(0, 1), min_size=d, max_size=d))
    m = Pattern(tuple(bits))
    assert Pattern.from_string(str(m)) == m


def test_pattern_round_trip_exhaustive_small_d():
    for d in range(1, 17):
        for code in range(2**d):
            s = format(code, f"0{d}b")
            assert str(Pattern.from_string(s)) == s


@given(st.integers(2, 5), st.data())
@settings(max_examples=40, deadline=None)
def test_integration_sets_monotone_in_poset(d, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 10**6)))
    n = 40
    x = rng.standard_normal((n, d))
    x[rng.random((n, d)) < 0.4] = np.nan
    keep = np.isfinite(x).any(axis=1) | True
    ds = MaskedDataset.from_arrays(x[keep], np.zeros(int(keep.sum())))
    groups = group_by_pattern(ds)
    if groups.n0 == 0:
        return
    patterns = [m for m in groups.patterns() if not m.is_complete]
    for m1 in patterns:
        for m2 in patterns:
            if m2.subsumes(m1):
                s1 = set(groups.incomplete_rows_subsumed_by(m1).tolist())
                s2 = set(groups.incomplete_rows_subsumed_by(m2).tolist())
                assert s1 <= s2


def test_masked_dataset_validation():
    with pytest.raises(ValueError, match="finite"):
        MaskedDataset.from_arrays(np.array([[1.0]]), np.array([np.nan]))
    with pytest.raises(ValueError, match="NaN"):
        MaskedDataset(
            x=np.array([[1.0]]), y=np.array([0.0]), observed=np.array([[False]])
        )


def test_pattern_helpers():
    m1, m2 = Pattern.from_string("101"), Pattern.from_string("011")
    assert m1.pmin(m2) == Pattern.from_string("001")
    assert m1.pmax(m2) == Pattern.from_string("111")
    assert m1.observed == (1,)
    assert m1.d_m == 1
    assert Pattern.from_string("111").subsumes(m1)
    assert not m1.subsumes(m2)
    assert Pattern.from_string("100").projected_index(2) == 1
    with pytest.raises(PatternCompatibilityError):
        m1.projected_index(0)
