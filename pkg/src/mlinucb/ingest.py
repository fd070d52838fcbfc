"""Loading datasets into :class:`BanditDataset`, plus a synthetic generator and PCA.

Data files are not shipped; :func:`fetch_instructions` explains where to
get each one and which file name the loaders expect under the data
directory (``$MLINUCB_DATA_DIR`` or ``./data``).
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environment import BanditDataset

logger = logging.getLogger(__name__)

MISSING_TOKENS = ("", "?", "NA", "nan", "NaN")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    name: str = "custom"
    path: str | None = None
    label_column: int | str = -1
    expected_dims: tuple[int, int, int] | None = None
    delimiter: str = ","
    header: bool | None = None  # None: sniff from the first row
    categorical_columns: tuple = ()
    drop_columns: tuple = ()
    scale_features: bool = False


# File names expected under the data directory, with the loader recipe and
# the (instances, features, classes) triple each dataset is reported with.
KNOWN_DATASETS = {
    "covertype": dict(
        file="covtype.data",
        label_column=-1,
        dims=(500000, 95, 7),
        url="https://archive.ics.uci.edu/dataset/31/covertype",
        notes="Raw file has 581012 rows and 54 features; labels 1..7 in the last column. "
        "Loaded as-is (54 features) unless a preprocessed CSV with 95 features is supplied.",
    ),
    "cnae9": dict(
        file="CNAE-9.data",
        label_column=0,
        dims=(1080, 856, 9),
        url="https://archive.ics.uci.edu/dataset/233/cnae+9",
        notes="No header; the class (1..9) is the first column, followed by 856 word counts.",
    ),
    "internet_ads": dict(
        file="ad.data",
        label_column=-1,
        dims=(3279, 1558, 2),
        url="https://archive.ics.uci.edu/dataset/51/internet+advertisements",
        notes="No header; last column is 'ad.'/'nonad.'; '?' marks missing values "
        "(filled with the column mean).",
    ),
    "warfarin": dict(
        file="warfarin.csv",
        label_column=-1,
        dims=(5528, 93, 3),
        url="https://www.pharmgkb.org/downloads (IWPC warfarin dataset)",
        notes="Supply a preprocessed numeric CSV with 93 feature columns and the dose bucket "
        "(low <21 mg/week, medium 21-49, high >49) as the last column. Categorical raw columns "
        "can instead be one-hot encoded with DatasetSpec.categorical_columns.",
    ),
}


def data_dir() -> Path:
    return Path(os.environ.get("MLINUCB_DATA_DIR", "data"))


def dataset_spec(name: str, path: str | None = None, **overrides) -> DatasetSpec:
    """Spec for a known dataset name, or a custom file when ``name`` is unknown."""
    if name in KNOWN_DATASETS:
        info = KNOWN_DATASETS[name]
        kwargs = dict(
            name=name,
            path=str(path or data_dir() / info["file"]),
            label_column=info["label_column"],
        )
    else:
        if path is None:
            raise DatasetError(f"unknown dataset {name!r} and no path given")
        kwargs = dict(name=name, path=str(path))
    kwargs.update(overrides)
    return DatasetSpec(**kwargs)


def fetch_instructions() -> str:
    lines = [
        "Datasets are not redistributed. Download them and place the files in",
        f"  {data_dir()}  (override with MLINUCB_DATA_DIR)",
        "",
    ]
    for name, info in KNOWN_DATASETS.items():
        T, d, K = info["dims"]
        lines += [
            f"{name}: {info['file']}",
            f"  source: {info['url']}",
            f"  reported size: {T} instances, {d} features, {K} classes",
            f"  {info['notes']}",
            "",
        ]
    return "\n".join(lines)


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _looks_like_header(first_row: list[str], label_column) -> bool:
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        return True
    skip = int(label_column) % len(first_row)
    cells = [c.strip() for i, c in enumerate(first_row) if i != skip]
    return not all(_is_number(c) or c in MISSING_TOKENS for c in cells)


def _resolve_column(col, header: list[str] | None, width: int) -> int:
    if isinstance(col, str) and not col.lstrip("-").isdigit():
        if header is None or col not in header:
            raise DatasetError(f"column {col!r} not found in header")
        return header.index(col)
    idx = int(col)
    if idx < 0:
        idx += width
    if not 0 <= idx < width:
        raise DatasetError(f"column index {col} out of range for {width} columns")
    return idx


def load_csv(spec: DatasetSpec) -> BanditDataset:
    """Parse delimited text with one label column into a :class:`BanditDataset`.

    Empty (or ``?``) feature cells are filled with the column mean.
    Label values are mapped to ``0..K-1`` in order of first appearance;
    columns listed in ``categorical_columns`` are one-hot encoded the same way.
    """
    if spec.path is None or not Path(spec.path).is_file():
        raise FileNotFoundError(f"dataset file not found: {spec.path}")
    with open(spec.path, newline="") as fh:
        rows = [row for row in csv.reader(fh, delimiter=spec.delimiter) if row and any(c.strip() for c in row)]
    if not rows:
        raise DatasetError(f"{spec.path}: no data rows")

    header = None
    has_header = spec.header
    if has_header is None:
        has_header = _looks_like_header(rows[0], spec.label_column)
    if has_header:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    width = len(header) if header else len(rows[0])

    label_idx = _resolve_column(spec.label_column, header, width)
    drop = {_resolve_column(c, header, width) for c in spec.drop_columns}
    categorical = [_resolve_column(c, header, width) for c in spec.categorical_columns]
    numeric = [i for i in range(width) if i != label_idx and i not in drop and i not in categorical]

    label_codes: dict[str, int] = {}
    cat_codes: list[dict[str, int]] = [{} for _ in categorical]
    values = np.empty((len(rows), len(numeric)))
    labels = np.empty(len(rows), dtype=np.int64)
    cat_raw = np.empty((len(rows), len(categorical)), dtype=np.int64)
    offset = 2 if has_header else 1
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DatasetError(f"{spec.path}: row {i + offset} has {len(row)} fields, expected {width}")
        lab = row[label_idx].strip()
        labels[i] = label_codes.setdefault(lab, len(label_codes))
        for c, col in enumerate(categorical):
            cat_raw[i, c] = cat_codes[c].setdefault(row[col].strip(), len(cat_codes[c]))
        for c, col in enumerate(numeric):
            tok = row[col].strip()
            if tok in MISSING_TOKENS:
                values[i, c] = np.nan
                continue
            try:
                values[i, c] = float(tok)
            except ValueError:
                raise DatasetError(
                    f"{spec.path}: row {i + offset}, column {col}: cannot parse {tok!r} as a number"
                ) from None

    missing = np.isnan(values)
    if missing.any():
        observed = ~missing
        n_obs = observed.sum(axis=0)
        col_mean = np.where(observed, values, 0.0).sum(axis=0) / np.maximum(n_obs, 1)
        values[missing] = col_mean[np.nonzero(missing)[1]]
        logger.info("%s: filled %d missing feature cells with column means", spec.name, int(missing.sum()))

    blocks = [values]
    for c, codes in enumerate(cat_codes):
        onehot = np.zeros((len(rows), len(codes)))
        onehot[np.arange(len(rows)), cat_raw[:, c]] = 1.0
        blocks.append(onehot)
    X = np.hstack(blocks) if len(blocks) > 1 else values
    if spec.scale_features:
        X = minmax_scale(X)

    K = len(label_codes)
    if K < 2:
        raise DatasetError(f"{spec.path}: need at least 2 label values, found {K}")
    ds = BanditDataset(X, labels, K, spec.name)
    if spec.expected_dims is not None:
        got = (ds.n_rounds, ds.dim, ds.n_classes)
        if tuple(spec.expected_dims) != got:
            raise DatasetError(f"{spec.name}: expected (T, d, K) = {tuple(spec.expected_dims)}, parsed {got}")
    return ds


def minmax_scale(X: np.ndarray) -> np.ndarray:
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (X - lo) / span


def load_dataset(name: str, path: str | None = None, **overrides) -> BanditDataset:
    if name == "synthetic":
        return synth_linear(**overrides)[0]
    return load_csv(dataset_spec(name, path, **overrides))


def synth_linear(T: int = 2000, d: int = 10, K: int = 3, noise_sigma: float = 0.0, seed: int = 0):
    """Linearly realizable multiclass data.

    Arm weights ``theta*_k`` are drawn uniformly from the unit ball and
    contexts uniformly from the unit sphere; the label is
    ``argmax_k theta*_k^T x`` (plus Gaussian score noise when
    ``noise_sigma > 0``).

    Returns
    -------
    (BanditDataset, ndarray of shape (K, d))
    """
    if T < 1 or d < 1:
        raise ValueError("T and d must be positive")
    if K < 2:
        raise ValueError(f"need at least 2 arms, got {K}")
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((K, d))
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    theta *= rng.random((K, 1)) ** (1.0 / d)
    X = rng.standard_normal((T, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    scores = X @ theta.T
    if noise_sigma > 0:
        scores = scores + noise_sigma * rng.standard_normal(scores.shape)
    labels = np.argmax(scores, axis=1)
    return BanditDataset(X, labels, K, "synthetic"), theta


def pca2_variance(ds_or_X) -> tuple[float, np.ndarray]:
    """Fraction of variance captured by the top two principal components.

    Returns the fraction and the ``T x 2`` projection of the centered data.
    Component signs are fixed so the first nonzero loading is positive.
    """
    X = ds_or_X.contexts if isinstance(ds_or_X, BanditDataset) else np.asarray(ds_or_X, dtype=np.float64)
    if X.shape[0] < 3:
        raise ValueError("need at least 3 rows for PCA")
    Xc = X - X.mean(axis=0)
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    total = float(np.sum(s**2))
    comps = np.zeros((2, X.shape[1]))
    k = min(2, Vt.shape[0])
    comps[:k] = Vt[:k]
    for c in comps:
        nz = np.flatnonzero(np.abs(c) > 1e-12)
        if nz.size and c[nz[0]] < 0:
            c *= -1.0
    coords = Xc @ comps.T
    if total <= 0.0:
        logger.warning("zero-variance data; reporting PCA variance fraction as 1.0")
        return 1.0, coords
    return min(float(np.sum(s[:2] ** 2)) / total, 1.0), coords
