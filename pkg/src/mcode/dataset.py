"""Multi-label datasets: data model, ARFF/CSV ingestion and resampling."""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError, ParseError, ValidationError

_logger = logging.getLogger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """A feature matrix paired with a binary label matrix.

    Attributes
    ----------
    features : ndarray of shape (n, m)
        Real-valued context variables.
    labels : ndarray of shape (n, d)
        Binary response variables stored as ``int8``.
    feature_names, label_names : tuple of str
    name : str
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple = ()
    label_names: tuple = ()
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        Y = np.asarray(self.labels)
        if X.ndim != 2 or Y.ndim != 2:
            raise ValidationError("features and labels must be 2-D matrices")
        if X.shape[0] != Y.shape[0]:
            raise ValidationError(
                f"row count mismatch: {X.shape[0]} feature rows vs {Y.shape[0]} label rows"
            )
        if X.shape[0] < 1:
            raise ValidationError("dataset must have at least one instance")
        if Y.shape[1] < 1:
            raise ValidationError("dataset must have at least one label")
        if not np.all((Y == 0) | (Y == 1)):
            raise ValidationError("label cells must be exactly 0 or 1")
        if not np.all(np.isfinite(X)):
            raise ValidationError("features must be finite")
        fnames = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        lnames = tuple(self.label_names) or tuple(f"y{j}" for j in range(Y.shape[1]))
        if len(fnames) != X.shape[1] or len(lnames) != Y.shape[1]:
            raise ValidationError("name lists must match matrix widths")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(Y.astype(np.int8)))
        object.__setattr__(self, "feature_names", fnames)
        object.__setattr__(self, "label_names", lnames)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.labels.shape[1]

    def take(self, idx, name: str | None = None) -> "Dataset":
        """Row subset (indices may repeat)."""
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.feature_names,
            self.label_names,
            name or self.name,
        )

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.features, labels, self.feature_names, self.label_names, self.name)


def summary(ds: Dataset) -> dict:
    """Dataset statistics: size, dimensions, label cardinality, distinct label sets."""
    distinct = len({row.tobytes() for row in np.ascontiguousarray(ds.labels)})
    return {
        "name": ds.name,
        "N": ds.n,
        "m": ds.m,
        "d": ds.d,
        "label_cardinality": float(ds.labels.sum(axis=1).mean()),
        "distinct_label_sets": distinct,
    }


def format_summary(ds: Dataset) -> str:
    info = summary(ds)
    lines = []
    for key, value in info.items():
        if isinstance(value, float):
            value = f"{value:.4f}"
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# ARFF

_ATTR_RE = re.compile(r"@attribute\s+", re.IGNORECASE)


@dataclass
class _Attribute:
    name: str
    kind: str  # numeric | nominal | string
    values: list = field(default_factory=list)


def _split_name(rest: str, lineno: int) -> tuple[str, str]:
    rest = rest.strip()
    if not rest:
        raise ParseError("attribute declaration without a name", lineno)
    if rest[0] in "'\"":
        quote = rest[0]
        end = rest.find(quote, 1)
        while end > 0 and rest[end - 1] == "\\":
            end = rest.find(quote, end + 1)
        if end < 0:
            raise ParseError("unterminated quoted attribute name", lineno)
        return rest[1:end].replace("\\" + quote, quote), rest[end + 1:].strip()
    parts = rest.split(None, 1)
    if len(parts) < 2:
        raise ParseError(f"attribute {parts[0]!r} has no type", lineno)
    return parts[0], parts[1].strip()


def _unquote(token: str) -> str:
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        return token[1:-1]
    return token


def _parse_attribute(line: str, lineno: int) -> _Attribute:
    name, typ = _split_name(_ATTR_RE.sub("", line, count=1), lineno)
    if typ.startswith("{"):
        if not typ.endswith("}"):
            raise ParseError(f"unterminated nominal specification for {name!r}", lineno)
        values = [_unquote(v) for v in next(csv.reader([typ[1:-1]], skipinitialspace=True, quotechar="'"))]
        return _Attribute(name, "nominal", values)
    low = typ.split()[0].lower()
    if low in ("numeric", "real", "integer"):
        return _Attribute(name, "numeric")
    if low == "string":
        return _Attribute(name, "string")
    raise ParseError(f"unsupported attribute type {typ!r} for {name!r}", lineno)


def _split_row(line: str) -> list[str]:
    if "'" in line or '"' in line:
        quote = "'" if "'" in line else '"'
        return next(csv.reader([line], skipinitialspace=True, quotechar=quote))
    return line.split(",")


def load_arff(path, label_count: int) -> Dataset:
    """Read a Mulan-style ARFF file whose last ``label_count`` attributes are labels.

    Dense and sparse (``{index value, ...}``) data rows are both accepted.
    String attributes among the features are treated as instance identifiers
    and dropped. Two-valued nominal features are encoded by their declaration
    index; any other nominal feature is rejected.
    """
    path = Path(path)
    if label_count < 1:
        raise ArgumentError("label_count must be >= 1")
    attrs: list[_Attribute] = []
    relation = path.stem
    rows: list[list[float]] = []
    in_data = False
    label_start = None
    keep: list[int] = []
    encoders: list = []

    with path.open("r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if not in_data:
                low = line.lower()
                if low.startswith("@relation"):
                    relation = _unquote(line[len("@relation"):].strip()) or relation
                elif low.startswith("@attribute"):
                    attrs.append(_parse_attribute(line, lineno))
                elif low.startswith("@data"):
                    if not attrs:
                        raise ParseError("data section reached with no attributes declared", lineno)
                    if label_count > len(attrs):
                        raise ArgumentError(
                            f"label_count={label_count} exceeds the {len(attrs)} declared attributes"
                        )
                    label_start = len(attrs) - label_count
                    keep, encoders = _plan_columns(attrs, label_start, lineno)
                    in_data = True
                else:
                    raise ParseError(f"unexpected header line {line[:40]!r}", lineno)
                continue
            rows.append(_parse_data_row(line, attrs, encoders, lineno))

    if not in_data:
        raise ParseError("no @data section found", None)
    if not rows:
        raise ParseError("data section is empty", None)
    table = np.asarray(rows, dtype=float)
    feature_cols = [j for j in keep if j < label_start]
    label_cols = list(range(label_start, len(attrs)))
    features = table[:, feature_cols]
    labels = table[:, label_cols]
    bad = ~((labels == 0) | (labels == 1))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(
            f"non-binary value {labels[r, c]!r} for label {attrs[label_cols[c]].name!r} in data row {r + 1}"
        )
    return Dataset(
        features,
        labels.astype(np.int8),
        [attrs[j].name for j in feature_cols],
        [attrs[j].name for j in label_cols],
        relation,
    )


def _plan_columns(attrs, label_start, lineno):
    keep = []
    encoders = []
    for j, a in enumerate(attrs):
        if a.kind == "numeric":
            encoders.append(float)
            keep.append(j)
        elif a.kind == "nominal":
            is_label = j >= label_start
            if is_label and set(a.values) <= {"0", "1"}:
                encoders.append(float)
            elif len(a.values) == 2 or (is_label and len(a.values) <= 2):
                lookup = {v: float(i) for i, v in enumerate(a.values)}
                encoders.append(lookup)
            else:
                raise ParseError(
                    f"nominal attribute {a.name!r} with {len(a.values)} values is not supported",
                    lineno,
                )
            keep.append(j)
        else:
            if j >= label_start:
                raise ParseError(f"label attribute {a.name!r} has string type", lineno)
            _logger.info("dropping string attribute %r", a.name)
            encoders.append(None)
    return keep, encoders


def _encode(value: str, enc, attr: _Attribute, lineno: int) -> float:
    value = _unquote(value)
    if value == "?":
        raise ParseError(f"missing value for {attr.name!r} (imputation is not supported)", lineno)
    if enc is None:
        return math.nan
    if enc is float:
        try:
            return float(value)
        except ValueError:
            raise ParseError(f"non-numeric value {value!r} for {attr.name!r}", lineno) from None
    try:
        return enc[value]
    except KeyError:
        raise ParseError(f"value {value!r} not declared for {attr.name!r}", lineno) from None


def _parse_data_row(line, attrs, encoders, lineno) -> list[float]:
    width = len(attrs)
    if line.startswith("{"):
        if not line.endswith("}"):
            raise ParseError("unterminated sparse row", lineno)
        row = [0.0] * width
        body = line[1:-1].strip()
        if body:
            for item in _split_row(body):
                parts = item.strip().split(None, 1)
                if len(parts) != 2:
                    raise ParseError(f"malformed sparse entry {item!r}", lineno)
                try:
                    j = int(parts[0])
                except ValueError:
                    raise ParseError(f"bad sparse index {parts[0]!r}", lineno) from None
                if not 0 <= j < width:
                    raise ParseError(f"sparse index {j} out of range", lineno)
                row[j] = _encode(parts[1], encoders[j], attrs[j], lineno)
        return row
    values = _split_row(line)
    if len(values) != width:
        raise ParseError(f"expected {width} values, found {len(values)}", lineno)
    return [_encode(v, encoders[j], attrs[j], lineno) for j, v in enumerate(values)]


def _quote_name(name: str) -> str:
    if re.fullmatch(r"[A-Za-z0-9_.\-]+", name):
        return name
    return "'" + name.replace("'", "\\'") + "'"


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) or abs(v) >= 1e16 else str(int(v))


def save_arff(ds: Dataset, path, sparse: bool = False) -> None:
    """Write ``ds`` as ARFF with features first and labels last."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"@relation {_quote_name(ds.name)}\n\n")
        for name in ds.feature_names:
            fh.write(f"@attribute {_quote_name(name)} numeric\n")
        for name in ds.label_names:
            fh.write(f"@attribute {_quote_name(name)} {{0,1}}\n")
        fh.write("\n@data\n")
        table = np.hstack([ds.features, ds.labels.astype(float)])
        for row in table:
            if sparse:
                items = [f"{j} {_fmt(v)}" for j, v in enumerate(row) if v != 0]
                fh.write("{" + ",".join(items) + "}\n")
            else:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# CSV

def load_csv(path, label_count: int) -> Dataset:
    """Read a CSV file with a header row; the last ``label_count`` columns are labels."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV file", 1) from None
        if label_count < 1 or label_count >= len(header) + 1:
            raise ArgumentError(f"label_count={label_count} invalid for {len(header)} columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    if not rows:
        raise ParseError("CSV has a header but no data rows", None)
    table = np.asarray(rows)
    split = len(header) - label_count
    labels = table[:, split:]
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("label columns must contain only 0 and 1")
    return Dataset(table[:, :split], labels.astype(np.int8), header[:split], header[split:], path.stem)


def save_csv(ds: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + list(ds.label_names))
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(v) for v in y])


def load_dataset(path, label_count: int) -> Dataset:
    """Dispatch on file suffix (``.arff`` or ``.csv``)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".arff":
        return load_arff(path, label_count)
    if suffix == ".csv":
        return load_csv(path, label_count)
    raise ArgumentError(f"unsupported dataset format {suffix!r}")


# ---------------------------------------------------------------------------
# resampling

def bootstrap_sample(ds: Dataset, size: int, seed: int) -> Dataset:
    """Draw ``size`` rows uniformly with replacement."""
    if size < 1:
        raise ArgumentError("bootstrap size must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, ds.n, size=size)
    return ds.take(idx)


@dataclass(frozen=True)
class FoldPlan:
    n: int
    k: int
    repeats: int
    assignment: tuple  # one int array of fold ids per repeat
    seed: int

    def test_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment[repeat] == fold)

    def train_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment[repeat] != fold)

    def folds(self):
        """Yield ``(repeat, fold, train_idx, test_idx)`` in a fixed order."""
        for r in range(self.repeats):
            for f in range(self.k):
                yield r, f, self.train_indices(r, f), self.test_indices(r, f)


def make_fold_plan(n: int, k: int, repeats: int, seed: int) -> FoldPlan:
    """Repeated k-fold partition; fold sizes differ by at most one."""
    if k < 2 or k > n:
        raise ArgumentError(f"need 2 <= k <= n, got k={k}, n={n}")
    if repeats < 1:
        raise ArgumentError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    assignment = []
    for _ in range(repeats):
        perm = rng.permutation(n)
        ids = np.empty(n, dtype=np.intp)
        ids[perm] = np.arange(n) % k
        ids.setflags(write=False)
        assignment.append(ids)
    return FoldPlan(n, k, repeats, tuple(assignment), seed)


def split_half(ds: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint split into sizes ceil(n/2) and floor(n/2)."""
    if ds.n < 2:
        raise ArgumentError("split_half needs at least two instances")
    perm = np.random.default_rng(seed).permutation(ds.n)
    cut = (ds.n + 1) // 2
    return ds.take(np.sort(perm[:cut])), ds.take(np.sort(perm[cut:]))


def concat_rows(parts: Sequence[Dataset]) -> Dataset:
    first = parts[0]
    return Dataset(
        np.vstack([p.features for p in parts]),
        np.vstack([p.labels for p in parts]),
        first.feature_names,
        first.label_names,
        first.name,
    )
