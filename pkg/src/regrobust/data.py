"""CSV ingestion, splits, normalization, and nearest-neighbor precomputation.

Conventions: rows are examples, one named column is the regression target,
everything else is a feature. Splits are encoded per row as 0/1/2 for
train/val/test. All distances here are L-infinity in normalized feature
space; neighbor search is exact brute force, which is fine at the dataset
sizes this package targets.
"""
import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .defenses import NeighborInfo
from .errors import ConfigError, DataError, DimensionError

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")

NA_MARKERS = frozenset({"", "na", "n/a", "nan", "null", "?"})
MISSING_POLICIES = ("error", "drop_rows", "drop_columns")


@dataclass
class Dataset:
    features: np.ndarray  # (N, D) float64
    targets: np.ndarray  # (N,) float64
    split: np.ndarray | None  # (N,) int in {0,1,2}, or None before splitting
    name: str = "dataset"
    target_bounded_01: bool = False
    feature_names: tuple = ()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise DimensionError(f"features must be (N, D>=1), got {self.features.shape}")
        n = self.features.shape[0]
        if self.targets.shape != (n,):
            raise DimensionError(f"targets must have shape ({n},), got {self.targets.shape}")
        if not np.all(np.isfinite(self.features)) or not np.all(np.isfinite(self.targets)):
            raise DataError("dataset contains NaN or infinity after ingestion")
        if self.split is not None:
            self.split = np.asarray(self.split)
            if self.split.shape != (n,):
                raise DimensionError(f"split must have shape ({n},), got {self.split.shape}")
        if not self.feature_names:
            self.feature_names = tuple(f"x{j}" for j in range(self.features.shape[1]))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def rows(self, which: int) -> np.ndarray:
        """Row indices of one split, in ascending order."""
        if self.split is None:
            raise DataError("dataset has no split assigned")
        return np.flatnonzero(self.split == which)


def load_csv(
    path,
    target_column: str,
    name: str | None = None,
    target_bounded_01: bool = False,
    missing: str = "error",
) -> Dataset:
    """Read a headered numeric CSV into a Dataset (split unassigned).

    missing controls cells matching the usual NA markers: "error" rejects the
    file naming the offending lines, "drop_rows" removes those rows, and
    "drop_columns" removes feature columns containing any missing value (rows
    whose target is missing are dropped). Cells that are neither numeric nor a
    recognized NA marker are always an error naming the line and column.
    """
    if missing not in MISSING_POLICIES:
        raise ConfigError(f"missing policy must be one of {MISSING_POLICIES}, got {missing!r}")
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: file is empty") from None
            header = [h.strip() for h in header]
            raw_rows = [(line_no, row) for line_no, row in enumerate(reader, start=2) if row]
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e

    if target_column not in header:
        raise DataError(
            f"{path}: target column {target_column!r} not found; columns are {header}"
        )
    t_col = header.index(target_column)
    width = len(header)

    values = np.empty((len(raw_rows), width), dtype=np.float64)
    missing_cells = []  # (row_pos, col, line_no)
    for i, (line_no, row) in enumerate(raw_rows):
        if len(row) != width:
            raise DataError(
                f"{path}: line {line_no} has {len(row)} cells, expected {width}"
            )
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell.lower() in NA_MARKERS:
                values[i, j] = np.nan
                missing_cells.append((i, j, line_no))
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: line {line_no}, column {header[j]!r}: "
                    f"cannot parse {cell!r} as a number"
                ) from None
            if math.isnan(v):
                values[i, j] = np.nan
                missing_cells.append((i, j, line_no))
            else:
                values[i, j] = v

    if missing_cells and missing == "error":
        lines = sorted({ln for _, _, ln in missing_cells})
        raise DataError(
            f"{path}: missing values on line(s) {lines[:20]}"
            f"{' ...' if len(lines) > 20 else ''} (policy 'error')"
        )

    keep_cols = [j for j in range(width) if j != t_col]
    col_names = [header[j] for j in keep_cols]
    if missing == "drop_columns":
        bad_cols = {j for _, j, _ in missing_cells if j != t_col}
        keep_cols = [j for j in keep_cols if j not in bad_cols]
        col_names = [header[j] for j in keep_cols]
    keep_rows = np.ones(len(raw_rows), dtype=bool)
    if missing == "drop_rows":
        for i, _, _ in missing_cells:
            keep_rows[i] = False
    elif missing == "drop_columns":
        # A missing target cannot be recovered by dropping a feature column.
        for i, j, _ in missing_cells:
            if j == t_col:
                keep_rows[i] = False

    if not keep_cols:
        raise DataError(f"{path}: every feature column had missing values")
    features = values[np.ix_(keep_rows, keep_cols)]
    targets = values[keep_rows, t_col]
    if features.shape[0] == 0:
        raise DataError(f"{path}: no usable rows after applying missing policy {missing!r}")
    if target_bounded_01 and (targets.min() < 0.0 or targets.max() > 1.0):
        raise DataError(
            f"{path}: target_bounded_01 is set but targets span "
            f"[{targets.min()}, {targets.max()}]"
        )
    return Dataset(
        features=features,
        targets=targets,
        split=None,
        name=name or str(path),
        target_bounded_01=target_bounded_01,
        feature_names=tuple(col_names),
    )


def split_dataset(dataset: Dataset, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> Dataset:
    """Random train/val/test split; rounding leftovers go to the train split."""
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must be 3 positive numbers summing to 1, got {fractions}")
    n = dataset.n_rows
    sizes = [int(math.floor(n * f)) for f in fr]
    sizes[0] += n - sum(sizes)
    if min(sizes) < 1:
        raise DataError(f"split of {n} rows with fractions {fr} leaves an empty split: {sizes}")
    perm = np.random.default_rng(seed).permutation(n)
    split = np.empty(n, dtype=np.int64)
    split[perm[: sizes[0]]] = TRAIN
    split[perm[sizes[0] : sizes[0] + sizes[1]]] = VAL
    split[perm[sizes[0] + sizes[1] :]] = TEST
    return replace(dataset, split=split)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray  # (D,)
    std: np.ndarray  # (D,)


def fit_normalizer(dataset: Dataset) -> Normalizer:
    """Per-feature z-score parameters from the train split only.

    Population std (ddof 0). Constant features get std 1 and mean equal to
    the constant, so they normalize to exactly zero.
    """
    rows = dataset.rows(TRAIN) if dataset.split is not None else np.arange(dataset.n_rows)
    X = dataset.features[rows]
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = np.ptp(X, axis=0) == 0.0
    if constant.any():
        mean = np.where(constant, X[0], mean)
        std = np.where(constant, 1.0, std)
    return Normalizer(mean=mean, std=std)


def apply_normalizer(norm: Normalizer, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != norm.mean.shape[0]:
        raise DimensionError(
            f"normalizer is for {norm.mean.shape[0]} features, got {X.shape[-1]}"
        )
    return (X - norm.mean) / norm.std


def normalize_dataset(dataset: Dataset, norm: Normalizer) -> Dataset:
    return replace(dataset, features=apply_normalizer(norm, dataset.features))


def _chunked_linf_min(A: np.ndarray, B: np.ndarray, exclude_self: bool = False):
    """For each row of A, the L-inf distance to the nearest row of B.

    Returns (distances, argmin indices into B). With exclude_self=True, A and
    B must be identical and row i skips B[i]. Ties go to the lowest index.
    """
    nA = A.shape[0]
    dist = np.empty(nA)
    idx = np.empty(nA, dtype=np.int64)
    chunk = max(1, int(2**22 // max(1, B.size)))  # keep the (chunk, nB, D) block small
    for start in range(0, nA, chunk):
        stop = min(nA, start + chunk)
        d = np.abs(A[start:stop, None, :] - B[None, :, :]).max(axis=2)
        if exclude_self:
            for i in range(start, stop):
                d[i - start, i] = np.inf
        idx[start:stop] = d.argmin(axis=1)
        dist[start:stop] = d[np.arange(stop - start), idx[start:stop]]
    return dist, idx


def compute_neighbors(dataset: Dataset) -> dict[int, NeighborInfo]:
    """Nearest neighbor among the other train rows, for every train row.

    Keyed by dataset row index. Expects features to be normalized already;
    distances are L-inf. Exact brute force with lowest-index tie-breaking.
    """
    rows = dataset.rows(TRAIN)
    if len(rows) < 2:
        raise DataError("nearest-neighbor computation needs at least 2 train rows")
    X = dataset.features[rows]
    y = dataset.targets[rows]
    dist, local_idx = _chunked_linf_min(X, X, exclude_self=True)
    out = {}
    for k, row in enumerate(rows):
        j = int(local_idx[k])
        out[int(row)] = NeighborInfo(
            nn_index=int(rows[j]),
            nn_distance=float(dist[k]),
            label_gap=float(abs(y[k] - y[j])),
        )
    return out


def neighbor_arrays(neighbors: dict, rows) -> tuple[np.ndarray, np.ndarray]:
    """Align neighbor info with an ordered sequence of dataset row indices."""
    try:
        infos = [neighbors[int(r)] for r in rows]
    except KeyError as e:
        raise DataError(f"no neighbor info for row {e.args[0]}") from None
    nn_d = np.array([i.nn_distance for i in infos], dtype=np.float64)
    gaps = np.array([i.label_gap for i in infos], dtype=np.float64)
    return nn_d, gaps


def nearest_train_distance(dataset: Dataset, X) -> np.ndarray:
    """L-inf distance from each row of X to the closest train row."""
    rows = dataset.rows(TRAIN)
    if len(rows) < 1:
        raise DataError("no train rows")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    dist, _ = _chunked_linf_min(X, dataset.features[rows])
    return dist


def save_dataset_cache(path, dataset: Dataset, norm: Normalizer, neighbors: dict) -> None:
    """Write the prepared dataset (already normalized) plus neighbor info as JSON."""
    if dataset.split is None:
        raise DataError("cannot cache a dataset without split assignment")
    doc = {
        "name": dataset.name,
        "target_bounded_01": dataset.target_bounded_01,
        "feature_names": list(dataset.feature_names),
        "features": [row.tolist() for row in dataset.features],
        "targets": dataset.targets.tolist(),
        "split": [SPLIT_NAMES[s] for s in dataset.split],
        "normalizer": {"mean": norm.mean.tolist(), "std": norm.std.tolist()},
        "neighbors": [
            {
                "index": i,
                "nn_index": info.nn_index,
                "nn_distance": info.nn_distance,
                "label_gap": info.label_gap,
            }
            for i, info in sorted(neighbors.items())
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_dataset_cache(path):
    """Inverse of save_dataset_cache. Returns (dataset, normalizer, neighbors)."""
    try:
        with open(path) as f:
            doc = json.load(f)
        split = np.array([SPLIT_NAMES.index(s) for s in doc["split"]], dtype=np.int64)
        dataset = Dataset(
            features=np.asarray(doc["features"], dtype=np.float64),
            targets=np.asarray(doc["targets"], dtype=np.float64),
            split=split,
            name=doc["name"],
            target_bounded_01=bool(doc["target_bounded_01"]),
            feature_names=tuple(doc["feature_names"]),
        )
        norm = Normalizer(
            mean=np.asarray(doc["normalizer"]["mean"], dtype=np.float64),
            std=np.asarray(doc["normalizer"]["std"], dtype=np.float64),
        )
        neighbors = {
            int(e["index"]): NeighborInfo(
                nn_index=int(e["nn_index"]),
                nn_distance=float(e["nn_distance"]),
                label_gap=float(e["label_gap"]),
            )
            for e in doc["neighbors"]
        }
    except (KeyError, ValueError, TypeError) as e:
        raise DataError(f"malformed dataset cache {path}: {e}") from e
    except OSError as e:
        raise DataError(f"cannot read dataset cache {path}: {e}") from e
    return dataset, norm, neighbors
