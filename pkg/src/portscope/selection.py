"""ANOVA-F Select-K-Best and the five feature scalers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAXABS = "maxabs"
MINMAX = "minmax"
STANDARD = "standard"
QUANTILE = "quantile"
NORMALIZER = "normalizer"
SCALER_KINDS = (MAXABS, MINMAX, STANDARD, QUANTILE, NORMALIZER)


@dataclass(eq=False)
class LabeledDataset:
    matrix: np.ndarray
    labels: list[str]
    feature_names: list[str]
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("matrix must be 2-D")
        self.labels = [str(y) for y in self.labels]
        n, d = self.matrix.shape
        if len(self.labels) != n:
            raise ValueError(f"{len(self.labels)} labels for {n} rows")
        if len(self.feature_names) != d:
            raise ValueError(f"{len(self.feature_names)} feature names for {d} columns")
        if not self.ids:
            self.ids = [str(i) for i in range(n)]
        elif len(self.ids) != n:
            raise ValueError(f"{len(self.ids)} ids for {n} rows")
        if np.isnan(self.matrix).any():
            raise ValueError("matrix contains NaN")

    def __len__(self):
        return self.matrix.shape[0]

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels))

    def subset(self, rows) -> "LabeledDataset":
        rows = list(rows)
        return LabeledDataset(
            self.matrix[rows],
            [self.labels[i] for i in rows],
            list(self.feature_names),
            [self.ids[i] for i in rows],
        )


def anova_f(matrix, labels) -> np.ndarray:
    """One-way ANOVA F statistic per column.

    Zero within-class variance gives +inf when the class means differ and 0
    when they do not.
    """
    X = np.asarray(matrix, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    G, N = classes.size, X.shape[0]
    if G < 2:
        raise ValueError("ANOVA needs at least two classes")
    if N <= G:
        raise ValueError("ANOVA needs more samples than classes")
    grand = X.mean(axis=0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for c in classes:
        Xc = X[labels == c]
        mu = Xc.mean(axis=0)
        between += Xc.shape[0] * (mu - grand) ** 2
        within += ((Xc - mu) ** 2).sum(axis=0)
    # spread below float resolution of the column counts as none
    scale = np.maximum(np.abs(X).max(axis=0), 1e-300) ** 2 * N
    between[between <= 1e-24 * scale] = 0.0
    within[within <= 1e-24 * scale] = 0.0
    num = between / (G - 1)
    den = within / (N - G)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = num / den
    F[(den == 0) & (num > 0)] = np.inf
    F[(den == 0) & (num == 0)] = 0.0
    return F


@dataclass(eq=False)
class SelectorModel:
    scores: np.ndarray
    selected_indices: np.ndarray

    @property
    def k(self) -> int:
        return int(self.selected_indices.size)

    def ranking(self) -> np.ndarray:
        """Column indices by descending score, ties to the lower index."""
        return np.lexsort((np.arange(self.scores.size), -self.scores))

    def transform(self, matrix) -> np.ndarray:
        X = np.asarray(matrix, dtype=np.float64)
        if X.shape[-1] != self.scores.size:
            raise ValueError(f"expected {self.scores.size} features, got {X.shape[-1]}")
        return X[..., self.selected_indices]


def select_k_best_fit(data: LabeledDataset, k: int = 30) -> SelectorModel:
    counts = {c: data.labels.count(c) for c in data.classes}
    if len(counts) < 2:
        raise ValueError("feature selection needs at least two classes")
    small = [c for c, n in counts.items() if n < 2]
    if small:
        raise ValueError(f"classes with fewer than 2 samples: {small}")
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = anova_f(data.matrix, data.labels)
    model = SelectorModel(scores, np.array([], dtype=np.int64))
    top = model.ranking()[: min(k, scores.size)]
    model.selected_indices = np.sort(top).astype(np.int64)
    return model


def selector_transform(model: SelectorModel, matrix) -> np.ndarray:
    return model.transform(matrix)


@dataclass(eq=False)
class ScalerModel:
    kind: str
    params: dict = field(default_factory=dict)
    n_features: int = 0

    def transform(self, matrix) -> np.ndarray:
        X = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"scaler fitted on {self.n_features} features, got {X.shape[1]}")
        p = self.params
        if self.kind == MAXABS:
            return X / p["scale"]
        if self.kind == MINMAX:
            return (X - p["min"]) / p["range"]
        if self.kind == STANDARD:
            return (X - p["mean"]) / p["scale"]
        if self.kind == QUANTILE:
            return _quantile_transform(X, p["references"], p["quantiles"])
        if self.kind == NORMALIZER:
            norms = np.sqrt(np.einsum("ij,ij->i", X, X))
            norms[norms == 0] = 1.0
            return X / norms[:, None]
        raise ValueError(f"unknown scaler kind {self.kind!r}")


def _quantile_transform(X, refs, quantiles):
    out = np.empty_like(X)
    for j in range(X.shape[1]):
        r = refs[:, j]
        # average of forward and reversed interpolation: ties map to the middle of their rank span
        fwd = np.interp(X[:, j], r, quantiles)
        bwd = -np.interp(-X[:, j], -r[::-1], -quantiles[::-1])
        out[:, j] = 0.5 * (fwd + bwd)
    return np.clip(out, 0.0, 1.0)


def scaler_fit(kind: str, matrix, n_quantiles: int = 1000) -> ScalerModel:
    kind = kind.lower()
    if kind not in SCALER_KINDS:
        raise ValueError(f"unknown scaler {kind!r}; choose from {', '.join(SCALER_KINDS)}")
    X = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if X.size == 0:
        raise ValueError("cannot fit a scaler on an empty matrix")
    d = X.shape[1]
    if kind == MAXABS:
        scale = np.abs(X).max(axis=0)
        params = {"scale": np.where(scale == 0, 1.0, scale)}
    elif kind == MINMAX:
        lo, hi = X.min(axis=0), X.max(axis=0)
        rng = hi - lo
        params = {"min": lo, "range": np.where(rng == 0, 1.0, rng)}
    elif kind == STANDARD:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        params = {"mean": mean, "scale": np.where(std == 0, 1.0, std)}
    elif kind == QUANTILE:
        q = min(n_quantiles, X.shape[0])
        quantiles = np.linspace(0.0, 1.0, q)
        params = {"quantiles": quantiles, "references": np.quantile(X, quantiles, axis=0)}
    else:
        params = {}
    return ScalerModel(kind, params, d)


def scaler_transform(model: ScalerModel, matrix) -> np.ndarray:
    return model.transform(matrix)
