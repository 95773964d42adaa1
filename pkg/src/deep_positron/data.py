"""CSV ingestion for the three UCI classification sets.

The vendored copies live in ``deep_positron/datasets``:

* ``iris.csv`` -- 150 rows, 4 numeric features, 3 classes
* ``breast_cancer_wisconsin.csv`` -- original 9-feature set, the 16 rows
  with a missing ``bare_nuclei`` value already removed (683 rows)
* ``breast_cancer_diagnostic.csv`` -- the 30-feature diagnostic variant
  (569 rows), available as ``breast_cancer_diagnostic``
* ``mushroom.csv`` -- 22 categorical attributes; the copy available offline
  already excludes the rows whose ``stalk-root`` was missing (5644 rows)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, SchemaError


@dataclass(frozen=True)
class CsvSchema:
    label: str
    categorical: tuple[str, ...] = ()
    delimiter: str = ","
    missing_marker: str = "?"
    # "drop_rows" removes incomplete rows, "drop_columns" removes the column
    missing: str = "drop_rows"
    ignore: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> CsvSchema:
        try:
            return cls(
                label=d["label"],
                categorical=tuple(d.get("categorical", ())),
                delimiter=d.get("delimiter", ","),
                missing_marker=d.get("missing_marker", "?"),
                missing=d.get("missing", "drop_rows"),
                ignore=tuple(d.get("ignore", ())),
            )
        except KeyError as exc:
            raise ConfigError(f"schema is missing {exc}") from None


@dataclass
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    class_names: list[str]
    train_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[self.train_idx], self.labels[self.train_idx]

    @property
    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[self.test_idx], self.labels[self.test_idx]


BUILTIN_SCHEMAS = {
    "iris": ("iris.csv", CsvSchema(label="species")),
    "breast_cancer": ("breast_cancer_wisconsin.csv", CsvSchema(label="class")),
    "breast_cancer_diagnostic": ("breast_cancer_diagnostic.csv", CsvSchema(label="diagnosis")),
    "mushroom": (
        "mushroom.csv",
        CsvSchema(
            label="class",
            categorical=(
                "cap-shape", "cap-surface", "cap-color", "bruises", "odor",
                "gill-attachment", "gill-spacing", "gill-size", "gill-color",
                "stalk-shape", "stalk-root", "stalk-surface-above-ring",
                "stalk-surface-below-ring", "stalk-color-above-ring",
                "stalk-color-below-ring", "veil-type", "veil-color", "ring-number",
                "ring-type", "spore-print-color", "population", "habitat",
            ),
            missing="drop_columns",
        ),
    ),
}

# test-set sizes of the published comparison
CANONICAL_TEST_SIZES = {
    "breast_cancer": 190, "breast_cancer_diagnostic": 190, "iris": 50, "mushroom": 2708,
}


def load_csv(path: str | Path, schema: CsvSchema, name: Optional[str] = None) -> Dataset:
    """Read a headed CSV into a numeric Dataset.

    Categorical columns are one-hot encoded (categories in sorted order);
    the label column becomes class indices in sorted class-name order.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh, delimiter=schema.delimiter))
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if schema.label not in header:
        raise SchemaError(f"{path}: label column {schema.label!r} not in header")
    for col in schema.categorical:
        if col not in header:
            raise SchemaError(f"{path}: categorical column {col!r} not in header")
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise SchemaError(f"{path}: row {i} has {len(r)} columns, header has {len(header)}")
    cells = [[c.strip() for c in r] for r in body]

    label_col = header.index(schema.label)
    marker = schema.missing_marker
    feature_cols = [j for j, h in enumerate(header) if j != label_col and h not in schema.ignore]
    if schema.missing == "drop_columns":
        feature_cols = [j for j in feature_cols if not any(r[j] == marker for r in cells)]
        cells = [r for r in cells if r[label_col] != marker]
    elif schema.missing == "drop_rows":
        cells = [r for r in cells if all(r[j] != marker for j in feature_cols + [label_col])]
    else:
        raise ConfigError(f"unknown missing-value policy {schema.missing!r}")
    if not cells:
        raise SchemaError(f"{path}: no complete rows")

    columns: list[np.ndarray] = []
    names: list[str] = []
    for j in feature_cols:
        col = [r[j] for r in cells]
        if header[j] in schema.categorical:
            levels = sorted(set(col))
            for level in levels:
                columns.append(np.array([float(v == level) for v in col]))
                names.append(f"{header[j]}={level}")
        else:
            try:
                columns.append(np.array([float(v) for v in col]))
            except ValueError:
                bad = next(i for i, v in enumerate(col) if not _is_float(v))
                raise SchemaError(
                    f"{path}: non-numeric value {col[bad]!r} in column {header[j]!r} "
                    f"(data row {bad + 1}); declare it categorical"
                ) from None
            names.append(header[j])

    classes = sorted({r[label_col] for r in cells})
    lookup = {c: i for i, c in enumerate(classes)}
    labels = np.array([lookup[r[label_col]] for r in cells], dtype=np.int64)
    features = np.column_stack(columns) if columns else np.zeros((len(cells), 0))
    return Dataset(name or path.stem, features, labels, names, classes)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def normalize(ds: Dataset) -> Dataset:
    """Min-max scale every feature column into [0, 1]; constant columns become 0."""
    lo = ds.features.min(axis=0)
    span = ds.features.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (ds.features - lo) / safe, 0.0)
    return replace(ds, features=np.clip(scaled, 0.0, 1.0))


def split(ds: Dataset, test_size: int, seed: int) -> Dataset:
    """Seeded shuffle; the first ``test_size`` shuffled rows form the test set."""
    if not 0 <= test_size < len(ds):
        raise ValueError(f"test_size {test_size} must be in [0, {len(ds)})")
    order = np.random.default_rng(seed).permutation(len(ds))
    test = np.sort(order[:test_size])
    train = np.sort(order[test_size:])
    return replace(ds, train_idx=train, test_idx=test)


def builtin_path(name: str) -> Path:
    if name not in BUILTIN_SCHEMAS:
        raise ConfigError(f"unknown built-in dataset {name!r}; known: {sorted(BUILTIN_SCHEMAS)}")
    return Path(str(resources.files("deep_positron") / "datasets" / BUILTIN_SCHEMAS[name][0]))


def load_builtin(name: str, seed: int = 0, test_size: Optional[int] = None,
                 scale: bool = True) -> Dataset:
    """Load, normalise and split one of the vendored datasets."""
    path = builtin_path(name)
    ds = load_csv(path, BUILTIN_SCHEMAS[name][1], name=name)
    if scale:
        ds = normalize(ds)
    return split(ds, CANONICAL_TEST_SIZES[name] if test_size is None else test_size, seed)


DATASET_KEYS = {"name", "path", "schema", "test_size", "normalize", "train"}


def load_dataset(spec: dict, seed: int) -> Dataset:
    """Dataset from a config entry.

    Keys: ``name`` (required), ``path`` and ``schema`` for a custom CSV,
    ``test_size`` (required for custom CSVs), ``normalize`` (default true).
    A ``train`` key is allowed and ignored here.
    """
    if "name" not in spec:
        raise ConfigError("dataset entry needs a 'name'")
    unknown = set(spec) - DATASET_KEYS
    if unknown:
        raise ConfigError(f"dataset {spec['name']!r}: unknown keys {sorted(unknown)}")
    name = spec["name"]
    scale = bool(spec.get("normalize", True))
    if "path" in spec:
        if "schema" not in spec:
            raise ConfigError(f"dataset {name!r}: a custom path needs a schema")
        test_size = spec.get("test_size")
        if test_size is None:
            raise ConfigError(f"dataset {name!r}: custom datasets need a test_size")
        ds = load_csv(spec["path"], CsvSchema.from_dict(spec["schema"]), name=name)
        return split(normalize(ds) if scale else ds, int(test_size), seed)
    test_size = spec.get("test_size")
    return load_builtin(name, seed=seed, test_size=None if test_size is None else int(test_size),
                        scale=scale)


def one_hot(labels: Sequence[int], num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out
