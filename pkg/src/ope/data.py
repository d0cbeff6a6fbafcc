"""Synthetic generators, CSV ingestion, standardization and negative subsampling."""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np


class DataFormatError(ValueError):
    """Malformed CSV input; the message names the offending line."""


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with binary labels (1 = positive / normal, 0 = negative / anomalous).

    ``classes`` holds the original class id of every row (e.g. the mixture
    component or digit), used by class-mode subsampling.
    """

    X: np.ndarray
    y: np.ndarray
    classes: np.ndarray | None = None
    split: str = "train"
    standardized: bool = False

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y).astype(np.int64)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        if self.split not in ("train", "test"):
            raise ValueError(f"unknown split {self.split!r}")
        if self.split == "train" and not np.any(y == 1):
            raise ValueError("a training split needs at least one positive sample")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.classes is not None:
            c = np.asarray(self.classes).astype(np.int64)
            if c.shape != y.shape:
                raise ValueError("classes must have one entry per row")
            object.__setattr__(self, "classes", c)

    def __len__(self):
        return self.X.shape[0]

    @property
    def positives(self) -> np.ndarray:
        return self.X[self.y == 1]

    @property
    def negatives(self) -> np.ndarray:
        return self.X[self.y == 0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return replace(self, X=self.X[idx], y=self.y[idx],
                       classes=None if self.classes is None else self.classes[idx])


def concat(a: LabeledDataset, b: LabeledDataset) -> LabeledDataset:
    if a.classes is None or b.classes is None:
        classes = None
    else:
        classes = np.concatenate([a.classes, b.classes])
    return replace(a, X=np.vstack([a.X, b.X]), y=np.concatenate([a.y, b.y]), classes=classes)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def make_moons(n, noise_sigma, rng, split="train") -> LabeledDataset:
    """Two interleaving unit half-circles.

    The upper arc (centre (0, 0), class 0) is positive, the lower arc
    (centre (1, 0.5), class 1) negative.  Angles are uniform on [0, pi].
    """
    if n < 2:
        raise ValueError("make_moons needs n >= 2")
    n_up = n // 2
    n_down = n - n_up
    t_up = rng.uniform(0.0, np.pi, n_up)
    t_down = rng.uniform(0.0, np.pi, n_down)
    up = np.column_stack([np.cos(t_up), np.sin(t_up)])
    down = np.column_stack([1.0 - np.cos(t_down), 0.5 - np.sin(t_down)])
    X = np.vstack([up, down]) + noise_sigma * rng.standard_normal((n, 2))
    y = np.r_[np.ones(n_up), np.zeros(n_down)]
    classes = np.r_[np.zeros(n_up), np.ones(n_down)]
    return LabeledDataset(X, y, classes, split)


MOONS_ARC_CENTERS = np.array([[0.0, 0.0], [1.0, 0.5]])


def make_ring(n, radius, center, rng) -> np.ndarray:
    """``n`` points uniform on the circle of the given radius."""
    t = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.asarray(center, dtype=np.float64) + radius * np.column_stack([np.cos(t), np.sin(t)])


def sample_disk(n, r, center, rng) -> np.ndarray:
    """Uniform on a disk (polar draw with sqrt-radius)."""
    rad = r * np.sqrt(rng.random(n))
    t = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.asarray(center, dtype=np.float64) + rad[:, None] * np.column_stack([np.cos(t), np.sin(t)])


def make_two_disks(n, r=1.0, centers=((-2.0, 0.0), (2.0, 0.0)), rng=None, split="train") -> LabeledDataset:
    """Uniform samples on two disks; the first (left) disk is positive."""
    if n < 2:
        raise ValueError("make_two_disks needs n >= 2")
    if r <= 0:
        raise ValueError("disk radius must be positive")
    n_pos = n // 2
    X = np.vstack([sample_disk(n_pos, r, centers[0], rng), sample_disk(n - n_pos, r, centers[1], rng)])
    y = np.r_[np.ones(n_pos), np.zeros(n - n_pos)]
    return LabeledDataset(X, y, 1 - y, split)


@dataclass
class GaussianMixture:
    """Mixture of axis-aligned Gaussians with exact density."""

    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        sig = np.asarray(self.sigmas, dtype=np.float64)
        if sig.ndim < 2:
            sig = np.broadcast_to(sig.reshape(-1, 1), self.means.shape)
        self.sigmas = np.array(sig)
        k = self.weights.shape[0]
        if self.means.shape[0] != k or self.sigmas.shape != self.means.shape:
            raise ValueError("weights, means and sigmas disagree on the number of components or dimensions")
        if np.any(self.weights < 0) or not math.isclose(self.weights.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if np.any(self.sigmas <= 0):
            raise ValueError("component sigmas must be positive")

    @property
    def dim(self):
        return self.means.shape[1]

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("weights", [1.0]), d["means"], d["sigmas"])

    def sample(self, n, rng):
        """Draws and their component ids."""
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        X = self.means[comp] + self.sigmas[comp] * rng.standard_normal((n, self.dim))
        return X, comp

    def pdf(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        z = (X[:, None, :] - self.means[None]) / self.sigmas[None]
        log_norm = -0.5 * self.dim * np.log(2 * np.pi) - np.sum(np.log(self.sigmas), axis=1)
        log_comp = log_norm[None] - 0.5 * np.sum(z * z, axis=2)
        return np.exp(log_comp) @ self.weights


def make_gaussian_mixture(spec, rng, split="train"):
    """Sample a two-class mixture problem.

    ``spec = {"positive": {"n", "weights", "means", "sigmas"}, "negative": {...}}``;
    the negative entry may be omitted.  Negative rows carry their component id
    as class id (positive rows get -1).  Returns ``(dataset, densities)`` where
    ``densities`` maps "positive"/"negative" to exact pdf callables.
    """
    pos = GaussianMixture.from_dict(spec["positive"])
    Xp, _ = pos.sample(int(spec["positive"]["n"]), rng)
    parts_X, parts_y, parts_c = [Xp], [np.ones(len(Xp))], [np.full(len(Xp), -1)]
    densities = {"positive": pos.pdf}
    if spec.get("negative"):
        neg = GaussianMixture.from_dict(spec["negative"])
        if neg.dim != pos.dim:
            raise ValueError("positive and negative mixtures live in different dimensions")
        Xn, cn = neg.sample(int(spec["negative"]["n"]), rng)
        parts_X.append(Xn)
        parts_y.append(np.zeros(len(Xn)))
        parts_c.append(cn)
        densities["negative"] = neg.pdf
    ds = LabeledDataset(np.vstack(parts_X), np.concatenate(parts_y), np.concatenate(parts_c), split)
    return ds, densities


def train_test_split(ds: LabeledDataset, rng, test_fraction=0.5):
    """Random split, stratified by label."""
    train_idx, test_idx = [], []
    for label in (0, 1):
        idx = np.flatnonzero(ds.y == label)
        idx = idx[rng.permutation(len(idx))]
        n_test = int(round(test_fraction * len(idx)))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return replace(ds.subset(train_idx), split="train"), replace(ds.subset(test_idx), split="test")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _parse_float(cell, lineno, col):
    try:
        return float(cell)
    except ValueError:
        raise DataFormatError(f"line {lineno}: column {col} is not numeric: {cell!r}") from None


def load_csv(path, label_column="label", class_column=None, split="train") -> LabeledDataset:
    """Read a comma-separated numeric file.

    Dialect: ',' separator, '.' decimal point, no quoting, at most one header
    row (detected when any cell of the first line is not a number).  Columns
    may be named (with a header) or given as integer positions.  Labels must be
    0 or 1, with 1 the positive (normal) class.  All remaining columns except
    ``class_column`` are features.
    """
    with open(path) as fh:
        lines = [(i + 1, line.rstrip("\r\n")) for i, line in enumerate(fh)]
    lines = [(i, l) for i, l in lines if l.strip()]
    if not lines:
        raise DataFormatError("line 1: file is empty")

    first = lines[0][1].split(",")
    header = None
    try:
        [float(c) for c in first]
    except ValueError:
        header = [c.strip() for c in first]
        lines = lines[1:]
    ncol = len(first)

    def resolve(col):
        if col is None:
            return None
        if isinstance(col, int):
            if not -ncol <= col < ncol:
                raise DataFormatError(f"line 1: column index {col} out of range for {ncol} columns")
            return col % ncol
        if header is None or col not in header:
            raise DataFormatError(f"line 1: no column named {col!r}")
        return header.index(col)

    li = resolve(label_column)
    ci = resolve(class_column)
    feat_cols = [j for j in range(ncol) if j not in (li, ci)]

    X, y, cls = [], [], []
    for lineno, line in lines:
        cells = line.split(",")
        if len(cells) != ncol:
            raise DataFormatError(f"line {lineno}: expected {ncol} columns, found {len(cells)}")
        row = [_parse_float(cells[j], lineno, j) for j in range(ncol)]
        if row[li] not in (0.0, 1.0):
            raise DataFormatError(f"line {lineno}: unknown label {cells[li]!r}; expected 0 or 1")
        X.append([row[j] for j in feat_cols])
        y.append(int(row[li]))
        if ci is not None:
            cls.append(int(row[ci]))
    if not X:
        raise DataFormatError(f"line {lines[0][0] if lines else 1}: no data rows")
    return LabeledDataset(np.array(X), np.array(y), np.array(cls) if ci is not None else None, split)


def save_csv(ds: LabeledDataset, path, manifest=None):
    """Write ``f0..fN-1,label[,class]`` with a header, plus ``<path>.manifest.json``.

    The manifest records the given metadata, row counts and the SHA-256 of the CSV.
    """
    cols = [f"f{j}" for j in range(ds.n_features)] + ["label"]
    if ds.classes is not None:
        cols.append("class")
    rows = [",".join(cols)]
    for i in range(len(ds)):
        cells = [repr(float(v)) for v in ds.X[i]] + [str(int(ds.y[i]))]
        if ds.classes is not None:
            cells.append(str(int(ds.classes[i])))
        rows.append(",".join(cells))
    text = "\n".join(rows) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    doc = dict(manifest or {})
    doc["counts"] = {"rows": len(ds), "positive": int(ds.y.sum()), "negative": int((ds.y == 0).sum())}
    doc["checksum"] = "sha256:" + hashlib.sha256(text.encode()).hexdigest()
    with open(f"{path}.manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return doc


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse(self, Z):
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def standardize_fit(ds: LabeledDataset) -> Standardizer:
    """Per-feature mean and std of the positive rows only."""
    P = ds.positives
    if P.shape[0] == 0:
        raise ValueError("cannot fit a standardizer without positive samples")
    mean = P.mean(axis=0)
    std = P.std(axis=0)
    flat = ~(std > 0)
    if np.any(flat):
        warnings.warn(f"features {np.flatnonzero(flat).tolist()} are constant on positives; using std = 1",
                      RuntimeWarning, stacklevel=2)
        std = np.where(flat, 1.0, std)
    return Standardizer(mean, std)


def standardize_apply(ds: LabeledDataset, st: Standardizer) -> LabeledDataset:
    if ds.standardized:
        raise ValueError("dataset is already standardized")
    return replace(ds, X=st.transform(ds.X), standardized=True)


# ---------------------------------------------------------------------------
# negative subsampling
# ---------------------------------------------------------------------------

@dataclass
class SubsampleMode:
    """Either ``count`` negatives at random, or ``classes`` original classes with ``per_class`` cap."""

    count: int | None = None
    classes: int | None = None
    per_class: int | None = None

    def __post_init__(self):
        if (self.count is None) == (self.classes is None):
            raise ValueError("subsample mode needs exactly one of 'count' or 'classes'")
        if self.count is not None and self.count < 0:
            raise ValueError("count must be >= 0")
        if self.classes is not None and (self.classes < 0 or (self.per_class is not None and self.per_class < 0)):
            raise ValueError("classes and per_class must be >= 0")


def subsample_protocol(ds: LabeledDataset, mode: SubsampleMode, rng) -> LabeledDataset:
    """Reduce the negatives of a training split; positives are kept as they are.

    Test splits are returned unchanged.
    """
    if isinstance(mode, dict):
        mode = SubsampleMode(**mode)
    if ds.split == "test":
        return ds
    pos_idx = np.flatnonzero(ds.y == 1)
    neg_idx = np.flatnonzero(ds.y == 0)

    if mode.count is not None:
        if mode.count > len(neg_idx):
            raise ValueError(f"requested {mode.count} negatives but only {len(neg_idx)} are available")
        keep = rng.choice(neg_idx, size=mode.count, replace=False)
    else:
        if ds.classes is None:
            raise ValueError("class-mode subsampling needs original class ids")
        available = np.unique(ds.classes[neg_idx])
        if mode.classes > len(available):
            raise ValueError(f"requested {mode.classes} classes but negatives span only {len(available)}")
        chosen = rng.choice(available, size=mode.classes, replace=False)
        keep = []
        for c in np.sort(chosen):
            members = neg_idx[ds.classes[neg_idx] == c]
            k = len(members) if mode.per_class is None else min(mode.per_class, len(members))
            keep.append(rng.choice(members, size=k, replace=False))
        keep = np.concatenate(keep) if keep else np.array([], dtype=np.int64)
    idx = np.concatenate([pos_idx, np.sort(keep).astype(np.int64)])
    return ds.subset(idx)
