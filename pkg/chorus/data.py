"""Datasets: CSV ingestion, synthetic mixtures, the labeled/unlabeled split and batching.

Examples keep the row they came from (``row``) so partitions can be checked
for disjointness; unlabeled examples carry no label at all.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from chorus.diagnostics import ChorusError, did_you_mean


FEATURE_COLUMN = re.compile(r"^f(\d+)$")


@dataclass(frozen=True)
class LabeledExample:
    features: tuple[float, ...]
    label: int
    row: int = -1

    def unlabeled(self) -> UnlabeledExample:
        return UnlabeledExample(features=self.features, row=self.row)


@dataclass(frozen=True)
class UnlabeledExample:
    features: tuple[float, ...]
    row: int = -1


@dataclass(frozen=True)
class SplitDataset:
    labeled_train: list[LabeledExample]
    unlabeled_train: list[UnlabeledExample]
    validation: list[LabeledExample]
    test: list[LabeledExample]

    def sizes(self) -> tuple[int, int, int, int]:
        return (
            len(self.labeled_train),
            len(self.unlabeled_train),
            len(self.validation),
            len(self.test),
        )


@dataclass(frozen=True)
class CsvSchema:
    feature_columns: tuple[str, ...] | None = None
    label_column: str = "label"


def feature_matrix(examples: Sequence[LabeledExample | UnlabeledExample], input_dim: int | None = None) -> np.ndarray:
    if not examples:
        return np.zeros((0, input_dim or 0), dtype=np.float64)
    return np.asarray([ex.features for ex in examples], dtype=np.float64)


def label_vector(examples: Sequence[LabeledExample]) -> np.ndarray:
    return np.asarray([ex.label for ex in examples], dtype=np.int64)


def _feature_columns(header: list[str], schema: CsvSchema) -> list[str]:
    if schema.feature_columns is not None:
        for name in schema.feature_columns:
            if name not in header:
                raise ChorusError(
                    code="unknown_column",
                    technical=f"unknown column `{name}`.{did_you_mean(name, header)}",
                    row=0,
                )
        return list(schema.feature_columns)
    found = [name for name in header if FEATURE_COLUMN.match(name)]
    found.sort(key=lambda name: int(FEATURE_COLUMN.match(name).group(1)))
    if not found:
        raise ChorusError(
            code="unknown_column",
            technical="header has no feature columns named f0..fk",
            row=0,
        )
    return found


def load_csv(
    path: str | Path,
    schema: CsvSchema | None = None,
    label_map: dict[str, int] | None = None,
) -> list[LabeledExample]:
    """Read a labeled CSV. Rows are numbered from 1 after the header."""
    return load_csv_with_labels(path, schema, label_map)[0]


def load_csv_with_labels(
    path: str | Path,
    schema: CsvSchema | None = None,
    label_map: dict[str, int] | None = None,
) -> tuple[list[LabeledExample], dict[str, int]]:
    """Like ``load_csv`` but also returns the class-name mapping it used.

    Pass the mapping of a training file as ``label_map`` when loading its
    test file so both agree on class indices. Integer labels map to
    themselves and give an empty mapping.
    """
    schema = schema or CsvSchema()
    csv_path = Path(path)
    if not csv_path.is_file():
        raise ChorusError(code="missing_file", technical=f"file not found: `{csv_path}`")

    with csv_path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ChorusError(code="malformed_row", technical="file has no header row", row=0)
        header = [name.strip() for name in header]
        features = _feature_columns(header, schema)
        if schema.label_column not in header:
            raise ChorusError(
                code="unknown_column",
                technical=f"unknown column `{schema.label_column}`.{did_you_mean(schema.label_column, header)}",
                row=0,
            )
        feature_idx = [header.index(name) for name in features]
        label_idx = header.index(schema.label_column)

        raw_rows: list[tuple[tuple[float, ...], str, int]] = []
        for row_number, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise ChorusError(
                    code="malformed_row",
                    technical=f"expected {len(header)} cells, found {len(cells)}",
                    row=row_number,
                )
            values: list[float] = []
            for idx in feature_idx:
                cell = cells[idx].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise ChorusError(
                        code="malformed_row",
                        technical=f"non-numeric value `{cell}` in column `{header[idx]}`",
                        row=row_number,
                    ) from None
                if not math.isfinite(value):
                    raise ChorusError(
                        code="malformed_row",
                        technical=f"non-finite value `{cell}` in column `{header[idx]}`",
                        row=row_number,
                    )
                values.append(value)
            raw_rows.append((tuple(values), cells[label_idx].strip(), row_number))

    labels, mapping = _map_labels([(label, row_number) for _, label, row_number in raw_rows], label_map)
    examples = [
        LabeledExample(features=feats, label=label, row=i)
        for i, ((feats, _, _), label) in enumerate(zip(raw_rows, labels))
    ]
    return examples, mapping


def _map_labels(
    raw: list[tuple[str, int]],
    label_map: dict[str, int] | None = None,
) -> tuple[list[int], dict[str, int]]:
    if label_map:
        labels: list[int] = []
        for value, row_number in raw:
            if value not in label_map:
                raise ChorusError(
                    code="invalid_label",
                    technical=f"class `{value}` does not occur in the training data.{did_you_mean(value, list(label_map))}",
                    row=row_number,
                )
            labels.append(label_map[value])
        return labels, dict(label_map)
    try:
        ints = [int(value) for value, _ in raw]
    except ValueError:
        ints = None
    if ints is not None:
        for value, (_, row_number) in zip(ints, raw):
            if value < 0:
                raise ChorusError(
                    code="invalid_label",
                    technical=f"negative class index {value}",
                    row=row_number,
                )
        return ints, {}
    if label_map is not None:
        # integer-labeled training data
        value, row_number = next((v, r) for v, r in raw if not _is_int(v))
        raise ChorusError(
            code="invalid_label",
            technical=f"class `{value}` is not an integer index like the training labels",
            row=row_number,
        )
    mapping: dict[str, int] = {}
    for value, _ in raw:
        mapping.setdefault(value, len(mapping))
    return [mapping[value] for value, _ in raw], mapping


def _is_int(value: str) -> bool:
    try:
        int(value)
    except ValueError:
        return False
    return True


def write_csv(path: str | Path, examples: Sequence[LabeledExample | UnlabeledExample]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    width = len(examples[0].features) if examples else 0
    labeled = bool(examples) and isinstance(examples[0], LabeledExample)
    header = [f"f{i}" for i in range(width)] + (["label"] if labeled else [])
    with out.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for ex in examples:
            cells = [repr(float(v)) for v in ex.features]
            if labeled:
                cells.append(str(ex.label))
            writer.writerow(cells)
    return out


def ring_means(num_classes: int, distance: float) -> np.ndarray:
    """One 2-D mean per class on a circle; neighbours sit ``distance`` apart."""
    radius = distance / (2.0 * math.sin(math.pi / num_classes))
    angles = 2.0 * math.pi * np.arange(num_classes) / num_classes
    return np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)


def grid_means(num_classes: int, spacing: float) -> np.ndarray:
    """C x C grid of blobs; cell (i, j) belongs to class (i + j) mod C.

    Returns shape (C, C, 2): C components per class.
    """
    offset = spacing * (num_classes - 1) / 2.0
    means = np.zeros((num_classes, num_classes, 2), dtype=np.float64)
    counts = [0] * num_classes
    for i in range(num_classes):
        for j in range(num_classes):
            cls = (i + j) % num_classes
            means[cls, counts[cls]] = (i * spacing - offset, j * spacing - offset)
            counts[cls] += 1
    return means


def generate_gaussian_mixture(
    num_classes: int,
    per_class: int,
    means: object,
    cov_scale: float,
    seed: int,
) -> list[LabeledExample]:
    """Isotropic Gaussian draws (covariance ``cov_scale * I``) around each class mean.

    ``means`` is (C, d) or (C, K, d); with K components a class spreads its
    ``per_class`` samples as evenly as possible over them.
    """
    centers = np.asarray(means, dtype=np.float64)
    if centers.ndim == 2:
        centers = centers[:, np.newaxis, :]
    if centers.ndim != 3 or centers.shape[0] != num_classes or centers.shape[2] < 1:
        raise ChorusError(
            code="invalid_mixture",
            technical=f"means must have shape ({num_classes}, d) or ({num_classes}, K, d), got {np.shape(means)}",
        )
    if not cov_scale > 0.0 or per_class < 1:
        raise ChorusError(
            code="invalid_mixture",
            technical=f"need cov_scale > 0 and per_class >= 1 (got {cov_scale}, {per_class})",
        )

    rng = np.random.default_rng(seed)
    std = math.sqrt(cov_scale)
    n_components, dim = centers.shape[1], centers.shape[2]
    rows: list[np.ndarray] = []
    labels: list[int] = []
    for cls in range(num_classes):
        base, extra = divmod(per_class, n_components)
        for k in range(n_components):
            count = base + (1 if k < extra else 0)
            if count == 0:
                continue
            rows.append(centers[cls, k] + std * rng.standard_normal((count, dim)))
            labels.extend([cls] * count)

    features = np.concatenate(rows, axis=0)
    order = rng.permutation(len(labels))
    return [
        LabeledExample(features=tuple(float(v) for v in features[idx]), label=labels[idx], row=i)
        for i, idx in enumerate(order)
    ]


def _share(fraction: float, n: int) -> int:
    return int(math.floor(fraction * n + 0.5))


def split(
    source: Sequence[LabeledExample],
    labeled_fraction: float = 0.5,
    val_fraction: float = 0.0,
    test_fraction: float = 0.0,
    seed: int = 0,
) -> SplitDataset:
    """Shuffle and partition ``source``; fractions are shares of the whole source.

    Test and validation are taken first, then the labeled share; everything
    left over becomes unlabeled training data with its labels dropped.
    """
    if not source:
        raise ChorusError(code="empty_source", technical="cannot split an empty dataset")
    for name, value in (("val_fraction", val_fraction), ("test_fraction", test_fraction)):
        if not 0.0 <= value <= 1.0:
            raise ChorusError(code="invalid_fraction", technical=f"{name} must lie in [0, 1], got {value}")
    if not 0.0 < labeled_fraction <= 1.0:
        raise ChorusError(
            code="invalid_fraction",
            technical=f"labeled_fraction must lie in (0, 1], got {labeled_fraction}",
        )
    if labeled_fraction + val_fraction + test_fraction > 1.0 + 1e-12:
        raise ChorusError(
            code="invalid_fraction",
            technical="labeled_fraction + val_fraction + test_fraction exceeds 1",
        )

    n = len(source)
    n_test = _share(test_fraction, n)
    n_val = _share(val_fraction, n)
    n_labeled = min(_share(labeled_fraction, n), n - n_test - n_val)
    order = np.random.default_rng(seed).permutation(n)
    picked = [source[int(i)] for i in order]

    test = picked[:n_test]
    validation = picked[n_test : n_test + n_val]
    labeled = picked[n_test + n_val : n_test + n_val + n_labeled]
    unlabeled = [ex.unlabeled() for ex in picked[n_test + n_val + n_labeled :]]
    return SplitDataset(
        labeled_train=list(labeled),
        unlabeled_train=unlabeled,
        validation=list(validation),
        test=list(test),
    )


def carve_validation(dataset: SplitDataset, fraction: float, seed: int) -> SplitDataset:
    """Move a seeded ``fraction`` of the labeled partition into validation."""
    if not 0.0 <= fraction < 1.0:
        raise ChorusError(code="invalid_fraction", technical=f"validation fraction must lie in [0, 1), got {fraction}")
    labeled = dataset.labeled_train
    n_val = _share(fraction, len(labeled))
    order = np.random.default_rng(seed).permutation(len(labeled))
    held = sorted(int(i) for i in order[:n_val])
    held_set = set(held)
    return replace(
        dataset,
        labeled_train=[ex for i, ex in enumerate(labeled) if i not in held_set],
        validation=[*dataset.validation, *(labeled[i] for i in held)],
    )


def restore_labels(dataset: SplitDataset, source: Sequence[LabeledExample]) -> list[LabeledExample]:
    """Labeled partition plus the unlabeled rows with their source labels put back."""
    by_row = {ex.row: ex for ex in source}
    return [*dataset.labeled_train, *(by_row[ex.row] for ex in dataset.unlabeled_train)]


def batches(data: Sequence[object] | int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Index batches for one epoch; the permutation is keyed by (seed, epoch)."""
    if batch_size < 1:
        raise ChorusError(code="invalid_config_value", technical=f"batch_size must be >= 1, got {batch_size}")
    n = data if isinstance(data, int) else len(data)
    if n == 0:
        return []
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[start : start + batch_size] for start in range(0, n, batch_size)]


@dataclass(frozen=True)
class ArrayView:
    """Dense arrays for one partition, built once per run."""

    features: np.ndarray
    labels: np.ndarray | None = field(default=None)

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @classmethod
    def labeled(cls, examples: Sequence[LabeledExample], input_dim: int) -> ArrayView:
        return cls(features=feature_matrix(examples, input_dim), labels=label_vector(examples))

    @classmethod
    def unlabeled(cls, examples: Sequence[UnlabeledExample], input_dim: int) -> ArrayView:
        return cls(features=feature_matrix(examples, input_dim))
