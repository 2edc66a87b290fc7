"""Property-CSV ingestion, seeded splits, statistics and imputation.

The expected file layout is one header row ``SMILES,MW,HBA,HBD,nRot,nRing,
nHet,TPSA,logP,Stereo`` followed by one molecule per row. Exact-duplicate
SMILES are dropped (first occurrence wins) and rows with non-finite
properties are rejected with a logged warning; any other malformed row is a
hard error carrying its line number.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ValidationError
from .rng import rng_for
from .smiles import ALL_PROPERTIES

logger = logging.getLogger(__name__)

CSV_HEADER = ("SMILES",) + ALL_PROPERTIES
N_PROPERTIES = len(ALL_PROPERTIES)

TRAIN_TO_VAL_RATIO = 20  # one validation molecule per 20 training molecules


@dataclass
class Dataset:
    smiles: list[str]
    properties: np.ndarray  # (N, 9) float64
    train_indices: np.ndarray
    val_indices: np.ndarray
    duplicates_dropped: int = 0
    rows_rejected: int = 0

    def __len__(self) -> int:
        return len(self.smiles)

    @property
    def train_smiles(self) -> list[str]:
        return [self.smiles[i] for i in self.train_indices]

    @property
    def val_smiles(self) -> list[str]:
        return [self.smiles[i] for i in self.val_indices]

    @property
    def train_properties(self) -> np.ndarray:
        return self.properties[self.train_indices]

    @property
    def val_properties(self) -> np.ndarray:
        return self.properties[self.val_indices]


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffle-based split at TRAIN_TO_VAL_RATIO : 1.

    Exactly n/21 molecules go to validation when n is a multiple of 21;
    otherwise floor(n/21), with a floor of one molecule once n >= 2.
    """
    if n < 1:
        raise ValidationError("cannot split an empty dataset")
    perm = rng_for(seed, "split").permutation(n)
    val_count = 0 if n < 2 else max(1, n // (TRAIN_TO_VAL_RATIO + 1))
    val = np.sort(perm[:val_count])
    train = np.sort(perm[val_count:])
    return train, val


def ingest(path, seed: int) -> Dataset:
    """Read, deduplicate and split a property CSV."""
    smiles: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    duplicates = 0
    rejected = 0
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(
                f"{path}: expected header {','.join(CSV_HEADER)}, got "
                f"{','.join(header) if header else '<empty file>'}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            smi = row[0].strip()
            if not smi:
                raise DataError(f"{path}:{lineno}: empty SMILES field")
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not all(np.isfinite(values)):
                logger.warning("%s:%d: non-finite property, row rejected", path, lineno)
                rejected += 1
                continue
            if smi in seen:
                duplicates += 1
                continue
            seen.add(smi)
            smiles.append(smi)
            rows.append(values)
    if not smiles:
        raise DataError(f"{path}: no usable rows")
    properties = np.array(rows, dtype=np.float64)
    train, val = split_indices(len(smiles), seed)
    return Dataset(
        smiles=smiles,
        properties=properties,
        train_indices=train,
        val_indices=val,
        duplicates_dropped=duplicates,
        rows_rejected=rejected,
    )


def write_split_manifest(dataset: Dataset, path) -> None:
    """Persist which molecule landed in which split."""
    split_of = {}
    for i in dataset.train_indices:
        split_of[int(i)] = "train"
    for i in dataset.val_indices:
        split_of[int(i)] = "val"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "smiles", "split"])
        for i, smi in enumerate(dataset.smiles):
            writer.writerow([i, smi, split_of[i]])


# ---------------------------------------------------------------------------
# statistics


@dataclass
class PropertyStats:
    """Per-property summary statistics over one split."""

    names: tuple[str, ...]
    mean: np.ndarray
    median: np.ndarray
    mode: np.ndarray
    sigma: np.ndarray  # population standard deviation
    iqr: np.ndarray  # linear-interpolation quartiles
    minimum: np.ndarray
    maximum: np.ndarray

    def by_name(self, statistic: str) -> dict[str, float]:
        return dict(zip(self.names, getattr(self, statistic)))

    def save(self, path) -> None:
        payload = {
            "names": list(self.names),
            **{
                k: [float(x) for x in getattr(self, k)]
                for k in ("mean", "median", "mode", "sigma", "iqr", "minimum", "maximum")
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)

    @classmethod
    def load(cls, path) -> "PropertyStats":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            names=tuple(payload["names"]),
            **{
                k: np.array(payload[k], dtype=np.float64)
                for k in ("mean", "median", "mode", "sigma", "iqr", "minimum", "maximum")
            },
        )


def _column_mode(col: np.ndarray) -> float:
    """Most frequent value after rounding to 2 decimals; ties go low."""
    rounded = np.round(col, 2)
    values, counts = np.unique(rounded, return_counts=True)
    return float(values[np.argmax(counts == counts.max())])


def property_stats(values: np.ndarray, names=ALL_PROPERTIES) -> PropertyStats:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != len(names):
        raise ValidationError(f"expected (N, {len(names)}) property matrix, got {values.shape}")
    if values.shape[0] < 1:
        raise ValidationError("no rows to summarize")
    q75, q25 = np.percentile(values, [75, 25], axis=0)
    return PropertyStats(
        names=tuple(names),
        mean=values.mean(axis=0),
        median=np.median(values, axis=0),
        mode=np.array([_column_mode(values[:, j]) for j in range(values.shape[1])]),
        sigma=values.std(axis=0, ddof=0),
        iqr=q75 - q25,
        minimum=values.min(axis=0),
        maximum=values.max(axis=0),
    )


# ---------------------------------------------------------------------------
# angle scaling


def scale_to_angle(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Affine map of ``values`` from [lo, hi] onto [0, pi], clamped.

    ``lo``/``hi`` are frozen per-component statistics; values outside the
    fitted range clamp to the interval ends. A degenerate component
    (hi == lo) maps to pi/2 with a logged warning.
    """
    values = np.asarray(values, dtype=np.float64)
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), values.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), values.shape)
    span = hi - lo
    if np.any(span < 0):
        raise ValidationError("scale_to_angle needs hi >= lo")
    degenerate = span == 0
    if np.any(degenerate):
        logger.warning("degenerate scale_to_angle range; emitting pi/2")
    safe_span = np.where(degenerate, 1.0, span)
    unit = np.clip((values - lo) / safe_span, 0.0, 1.0)
    return np.where(degenerate, 0.5, unit) * np.pi


# ---------------------------------------------------------------------------
# imputation


def knn_impute(
    train_properties: np.ndarray,
    property_index: int,
    target_value: float,
    k: int = 5,
) -> np.ndarray:
    """Fill the other 8 properties for one pinned property value.

    Neighbors are the k training rows closest in |property - target|, ties
    broken by row order; the result is their unweighted column mean with the
    pinned property overwritten by the exact target.
    """
    props = np.asarray(train_properties, dtype=np.float64)
    if props.ndim != 2 or props.shape[1] != N_PROPERTIES:
        raise ValidationError(f"expected (N, {N_PROPERTIES}) matrix, got {props.shape}")
    if not 0 <= property_index < N_PROPERTIES:
        raise ValidationError(f"property_index {property_index} out of range")
    if k < 1 or k > props.shape[0]:
        raise ValidationError(f"k={k} outside 1..{props.shape[0]}")
    distance = np.abs(props[:, property_index] - float(target_value))
    neighbors = np.argsort(distance, kind="stable")[:k]
    imputed = props[neighbors].mean(axis=0)
    imputed[property_index] = float(target_value)
    return imputed
