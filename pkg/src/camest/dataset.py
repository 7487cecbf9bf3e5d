"""Masked data model: ingestion, missingness patterns, grouping, projections.

Feature vectors live in ``R^d`` and may be partially missing; the response is
always observed.  A missingness pattern is a d-bit vector with bit j = 1
meaning feature j is MISSING.  Rows sharing a pattern m form the group A_m;
the complete cases are A_0.  Estimators read projected views: for an index
set A and a pattern m, the projection keeps the coordinates observed under m.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


class CamError(Exception):
    """Base class for data and estimation errors raised by this package."""


class IngestError(CamError):
    """Raised when a CSV cell cannot be turned into a masked observation."""


class PatternCompatibilityError(CamError):
    """Raised when a row does not observe every coordinate a pattern needs."""


class CamWarning(UserWarning):
    """Non-fatal numerical or configuration conditions."""


@dataclass(frozen=True, order=True)
class Pattern:
    """A missingness pattern m in {0,1}^d; bit j = 1 means feature j missing.

    The canonical string form writes feature 1 first, e.g. "101" for d = 3
    with features 1 and 3 missing.  Ordering is lexicographic on that string
    so vector/matrix coordinates derived from pattern lists are reproducible.
    """

    bits: tuple[int, ...]

    def __post_init__(self):
        if not self.bits or any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"pattern bits must be a nonempty 0/1 tuple, got {self.bits!r}")

    @classmethod
    def from_string(cls, s: str) -> "Pattern":
        if not s or any(c not in "01" for c in s):
            raise ValueError(f"pattern string must be nonempty over {{0,1}}, got {s!r}")
        return cls(tuple(int(c) for c in s))

    @classmethod
    def complete(cls, d: int) -> "Pattern":
        return cls((0,) * d)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)

    @property
    def d(self) -> int:
        return len(self.bits)

    @property
    def d_m(self) -> int:
        """Number of observed coordinates."""
        return self.d - sum(self.bits)

    @property
    def is_complete(self) -> bool:
        return not any(self.bits)

    @property
    def observed(self) -> tuple[int, ...]:
        """0-based indices of the observed coordinates, increasing."""
        return tuple(j for j, b in enumerate(self.bits) if b == 0)

    @property
    def missing(self) -> tuple[int, ...]:
        return tuple(j for j, b in enumerate(self.bits) if b == 1)

    def subsumes(self, other: "Pattern") -> bool:
        """True when ``other <= self`` in the missing-set-inclusion order.

        A row with pattern ``other`` then observes every coordinate needed
        under ``self``.
        """
        if other.d != self.d:
            raise ValueError("patterns of different dimension are not comparable")
        return all(o <= s for o, s in zip(other.bits, self.bits))

    def pmin(self, other: "Pattern") -> "Pattern":
        """Entrywise minimum: missing only where both patterns are missing."""
        return Pattern(tuple(min(a, b) for a, b in zip(self.bits, other.bits)))

    def pmax(self, other: "Pattern") -> "Pattern":
        """Entrywise maximum: missing where either pattern is missing."""
        return Pattern(tuple(max(a, b) for a, b in zip(self.bits, other.bits)))

    def projected_index(self, feature: int) -> int:
        """Column of 0-based ``feature`` inside the projected x^m block."""
        if self.bits[feature]:
            raise PatternCompatibilityError(
                f"feature {feature + 1} is missing under pattern {self}"
            )
        return self.observed.index(feature)


@dataclass(frozen=True)
class MaskedDataset:
    """n observations of d optionally-missing features plus a response.

    ``x`` is (n, d) float with NaN in unobserved cells, ``observed`` is the
    (n, d) boolean presence mask (True = observed) and ``y`` is (n,) float.
    Instances are immutable; all estimators share them freely.
    """

    x: np.ndarray
    y: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        obs = np.asarray(self.observed, dtype=bool)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ValueError("x must be (n, d) with d >= 1")
        if y.shape != (x.shape[0],):
            raise ValueError("y must be (n,)")
        if obs.shape != x.shape:
            raise ValueError("observed mask must match x's shape")
        if not np.all(np.isfinite(y)):
            raise ValueError("every response must be observed and finite")
        if np.any(~np.isfinite(x) & obs):
            raise ValueError("observed cells must hold finite values")
        if np.any(np.isfinite(x) & ~obs):
            raise ValueError("unobserved cells must be NaN")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "observed", obs)
        x.setflags(write=False)
        y.setflags(write=False)
        obs.setflags(write=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def pattern_of(self, i: int) -> Pattern:
        """Missingness pattern of (0-based) row i."""
        return Pattern(tuple(int(not b) for b in self.observed[i]))

    @classmethod
    def from_arrays(cls, x, y) -> "MaskedDataset":
        """Build from an (n, d) array with NaN marking missing cells."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return cls(x=x, y=np.asarray(y, dtype=float), observed=np.isfinite(x))


@dataclass(frozen=True)
class ProjectedSample:
    """|A| records (x^m, y) for one pattern m, in A's row order."""

    x: np.ndarray          # (|A|, d_m)
    y: np.ndarray          # (|A|,)
    pattern: Pattern
    indices: np.ndarray    # 0-based rows in the source dataset

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d_m(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class PatternGroups:
    """The partition {A_m} of row indices by missingness pattern."""

    d: int
    groups: dict  # Pattern -> np.ndarray of 0-based row indices

    @property
    def complete_pattern(self) -> Pattern:
        return Pattern.complete(self.d)

    @property
    def complete(self) -> np.ndarray:
        """A_0, possibly empty."""
        return self.groups.get(self.complete_pattern, np.empty(0, dtype=np.intp))

    @property
    def n0(self) -> int:
        return self.complete.shape[0]

    def count(self, m: Pattern) -> int:
        return self.groups[m].shape[0] if m in self.groups else 0

    def patterns(self) -> list[Pattern]:
        """All observed patterns in canonical (lexicographic) order."""
        return sorted(self.groups)

    def incomplete_rows_subsumed_by(self, m: Pattern) -> np.ndarray:
        """The data-integration set: incomplete rows whose own missing set
        is contained in m's, i.e. rows observing every coordinate m needs."""
        parts = [
            idx
            for pat, idx in sorted(self.groups.items())
            if not pat.is_complete and m.subsumes(pat)
        ]
        if not parts:
            return np.empty(0, dtype=np.intp)
        return np.concatenate(parts)


@dataclass(frozen=True)
class AdjustmentSet:
    """The ordered pattern set M with one effective index set per pattern.

    Patterns are kept in lexicographic order of their bit strings; without
    data integration the effective set of m is A_m, with integration it is
    the union of A_{m'} over observed incomplete patterns m' <= m.  Effective
    sets never intersect A_0.
    """

    patterns: tuple[Pattern, ...]
    effective: dict = field(repr=False)  # Pattern -> np.ndarray
    integrate: bool = False

    def __post_init__(self):
        for m in self.patterns:
            if m.is_complete:
                raise ValueError("the complete pattern cannot enter the adjustment set")

    def __len__(self) -> int:
        return len(self.patterns)

    def indices(self, m: Pattern) -> np.ndarray:
        if m not in self.effective:
            raise KeyError(f"pattern {m} is not in the adjustment set")
        return self.effective[m]

    def size(self, m: Pattern) -> int:
        return self.indices(m).shape[0]


def ingest_csv(stream, response: str, features=None, na_markers=("NA", "")) -> MaskedDataset:
    """Read an RFC-4180-style CSV with a header row into a MaskedDataset.

    Parameters
    ----------
    stream : text or binary file object, or str of CSV content
    response : name of the response column (must never be missing)
    features : optional list of feature column names; default is every
        non-response column, in header order
    na_markers : cell values treated as missing (exact string match after
        stripping surrounding whitespace)
    """
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    elif isinstance(stream, io.BufferedIOBase) or (
        hasattr(stream, "read") and isinstance(stream.read(0), bytes)
    ):
        stream = io.TextIOWrapper(stream, encoding="utf-8")

    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty input: a header row is required") from None
    header = [h.strip() for h in header]
    if response not in header:
        raise IngestError(f"response column {response!r} not found in header {header}")
    if features is None:
        features = [h for h in header if h != response]
    missing_cols = [f for f in features if f not in header]
    if missing_cols:
        raise IngestError(f"feature columns not in header: {missing_cols}")
    if not features:
        raise IngestError("at least one feature column is required")

    na = {m.strip() for m in na_markers}
    fcols = [header.index(f) for f in features]
    ycol = header.index(response)

    xs, ys = [], []
    for rownum, row in enumerate(reader, start=1):
        if len(row) != len(header):
            raise IngestError(f"row {rownum}: expected {len(header)} cells, got {len(row)}")
        ycell = row[ycol].strip()
        if ycell in na:
            raise IngestError(f"row {rownum}: missing response value")
        try:
            ys.append(float(ycell))
        except ValueError:
            raise IngestError(
                f"row {rownum}, column {response!r}: non-numeric cell {ycell!r}"
            ) from None
        xrow = []
        for f, c in zip(features, fcols):
            cell = row[c].strip()
            if cell in na:
                xrow.append(np.nan)
                continue
            try:
                xrow.append(float(cell))
            except ValueError:
                raise IngestError(
                    f"row {rownum}, column {f!r}: non-numeric cell {cell!r}"
                ) from None
        xs.append(xrow)

    if not xs:
        raise IngestError("no data rows")
    return MaskedDataset.from_arrays(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))


def group_by_pattern(ds: MaskedDataset) -> PatternGroups:
    """Partition row indices by missingness pattern."""
    # Integer-encode each row's pattern so grouping is a single unique() pass.
    weights = 1 << np.arange(ds.d, dtype=np.int64)
    codes = (~ds.observed).astype(np.int64) @ weights
    order = np.argsort(codes, kind="stable")
    sorted_codes = codes[order]
    uniq, starts = np.unique(sorted_codes, return_index=True)
    groups = {}
    bounds = np.append(starts, codes.shape[0])
    for k, code in enumerate(uniq):
        bits = tuple(int((code >> j) & 1) for j in range(ds.d))
        idx = np.sort(order[bounds[k]:bounds[k + 1]])
        idx.setflags(write=False)
        groups[Pattern(bits)] = idx
    return PatternGroups(d=ds.d, groups=groups)


def select_adjustment_set(
    groups: PatternGroups, min_count: int = 20, integrate: bool = False
) -> AdjustmentSet:
    """Choose the pattern set M and the effective index set per pattern.

    Without integration, M = {m != 0 : n_m >= min_count} and the effective
    set of m is A_m.  With integration, the effective set is the union of the
    observed groups A_{m'} with m' <= m (missing-set inclusion), and m is
    kept when that union has at least ``min_count`` rows.
    """
    if groups.n0 == 0:
        raise CamError("no complete cases: the complete-case estimator is undefined")
    chosen, effective = [], {}
    for m in groups.patterns():
        if m.is_complete:
            continue
        idx = groups.incomplete_rows_subsumed_by(m) if integrate else groups.groups[m]
        if idx.shape[0] >= min_count:
            chosen.append(m)
            effective[m] = idx
    return AdjustmentSet(patterns=tuple(chosen), effective=effective, integrate=integrate)


def project(ds: MaskedDataset, indices, m: Pattern) -> ProjectedSample:
    """Extract the records (x^m, y) for the given rows.

    Every row must observe each coordinate with m^j = 0; a violating row is
    reported with its 1-based index.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if m.d != ds.d:
        raise ValueError(f"pattern dimension {m.d} != dataset dimension {ds.d}")
    cols = list(m.observed)
    if cols:
        ok = ds.observed[np.ix_(idx, cols)].all(axis=1)
        if not np.all(ok):
            bad = int(idx[np.argmin(ok)])
            raise PatternCompatibilityError(
                f"row {bad + 1} does not observe every feature required by pattern {m}"
            )
        x = ds.x[np.ix_(idx, cols)]
    else:
        x = np.empty((idx.shape[0], 0))
    return ProjectedSample(x=x, y=ds.y[idx], pattern=m, indices=idx)
