"""Train/evaluate orchestration, metrics, persistence and report exports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import UNKNOWN
from .classifiers import ForestModel, KnnModel, Prediction, forest_fit, knn_fit, predict_with_rejection
from .features import FeatureConfig, extract_features, feature_names
from .preprocess import SensorCalibration, calibrate, clean
from .selection import LabeledDataset, ScalerModel, SelectorModel, scaler_fit, select_k_best_fit
from .trace_io import DatasetManifest, RawTrace, read_trace

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MODEL_MAGIC = "portscope-model"
_HEADER_RE = re.compile(r"^portscope-model format_version=(\d+) sha256=([0-9a-f]{64})$")


class ModelFormatError(ValueError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


# -- featurization ----------------------------------------------------------


def trace_features(trace: RawTrace, cfg: FeatureConfig = FeatureConfig(), cal: SensorCalibration | None = None):
    ct = clean(trace)
    if cal is not None:
        ct = calibrate(ct, cal, trace.adc_bits)
    return extract_features(ct, cfg)


def _featurize_path(args):
    path, cfg, cal = args
    trace = read_trace(path)
    return trace.trace_id, trace_features(trace, cfg, cal)


def default_jobs() -> int:
    env = os.environ.get("PORTSCOPE_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def featurize_paths(paths, cfg: FeatureConfig = FeatureConfig(), cal=None, jobs: int = 1):
    """Feature rows for ``paths`` in input order: (trace_ids, matrix)."""
    work = [(p, cfg, cal) for p in paths]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_featurize_path, work, chunksize=4))
    else:
        results = [_featurize_path(w) for w in work]
    ids = [r[0] for r in results]
    matrix = np.array([r[1] for r in results]).reshape(len(results), -1)
    return ids, matrix


def featurize_manifest(manifest: DatasetManifest, cfg: FeatureConfig = FeatureConfig(), cal=None, jobs: int = 1):
    """(known-class dataset, unknown dataset or None)."""
    names = feature_names(cfg)
    paths, labels = [], []
    for name, files in manifest.classes:
        paths += files
        labels += [name] * len(files)
    ids, X = featurize_paths(paths, cfg, cal, jobs)
    known = LabeledDataset(X, labels, names, ids)
    unknown = None
    if manifest.unknown_paths:
        uids, U = featurize_paths(manifest.unknown_paths, cfg, cal, jobs)
        unknown = LabeledDataset(U, [UNKNOWN] * len(uids), names, uids)
    return known, unknown


def write_feature_csv(data: LabeledDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trace_id", "label", *data.feature_names])
        for tid, label, row in zip(data.ids, data.labels, data.matrix):
            w.writerow([tid, label, *(repr(float(v)) for v in row)])


def read_feature_csv(path) -> LabeledDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty feature file")
    header = rows[0]
    if header[:2] != ["trace_id", "label"]:
        raise ValueError(f"{path}: header must start with trace_id,label")
    names = header[2:]
    ids, labels, values = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0])
        labels.append(row[1])
        try:
            values.append([float(v) for v in row[2:]])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not ids:
        raise ValueError(f"{path}: no data rows")
    return LabeledDataset(np.array(values), labels, names, ids)


# -- splitting & fitting ----------------------------------------------------


def stratified_split(data: LabeledDataset, test_fraction: float = 0.2, seed: int = 42):
    """Per class, ceil(test_fraction * n) shuffled rows go to test; rows keep their original order."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    labels = np.array(data.labels)
    test_rows = []
    for c in data.classes:
        idx = np.flatnonzero(labels == c)
        if idx.size == 1:
            log.warning("class %r has a single sample; keeping it in the training set", c)
            continue
        n_test = min(math.ceil(test_fraction * idx.size), idx.size - 1)
        test_rows += rng.permutation(idx)[:n_test].tolist()
    test_set = set(test_rows)
    train_rows = [i for i in range(len(data)) if i not in test_set]
    return data.subset(train_rows), data.subset(sorted(test_set))


@dataclass(frozen=True)
class PipelineConfig:
    scaler_kind: str = "normalizer"
    classifier_kind: str = "knn"
    k_best: int = 30
    knn_k: int = 5
    knn_p: float = 2.0
    n_trees: int = 100
    threshold: float = 0.5
    seed: int = 42

    def __post_init__(self):
        if self.classifier_kind not in ("knn", "forest"):
            raise ValueError(f"unknown classifier {self.classifier_kind!r}; choose knn or forest")
        if not 0 <= self.threshold <= 1:
            raise ValueError("threshold must be in [0, 1]")


@dataclass(eq=False)
class PipelineModel:
    selector: SelectorModel
    scaler: ScalerModel
    classifier: KnnModel | ForestModel
    threshold: float
    feature_names: list
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    calibration: SensorCalibration | None = None
    config: PipelineConfig = field(default_factory=PipelineConfig)
    format_version: int = FORMAT_VERSION

    @property
    def classes(self) -> list:
        return list(self.classifier.classes)

    def reduce(self, matrix) -> np.ndarray:
        return self.scaler.transform(self.selector.transform(np.atleast_2d(matrix)))

    def predict_proba_rows(self, matrix) -> list[dict]:
        return [self.classifier.predict_proba(row) for row in self.reduce(matrix)]

    def predict_rows(self, matrix, threshold: float | None = None) -> list[Prediction]:
        thr = self.threshold if threshold is None else threshold
        return [predict_with_rejection(p, thr) for p in self.predict_proba_rows(matrix)]


def fit_pipeline(train: LabeledDataset, cfg: PipelineConfig = PipelineConfig(), feature_cfg=None, calibration=None) -> PipelineModel:
    """Selector, then scaler, then classifier, each fitted on ``train`` only."""
    selector = select_k_best_fit(train, cfg.k_best)
    reduced = selector.transform(train.matrix)
    scaler = scaler_fit(cfg.scaler_kind, reduced)
    scaled = scaler.transform(reduced)
    if cfg.classifier_kind == "knn":
        clf = knn_fit(scaled, train.labels, cfg.knn_k, cfg.knn_p)
    else:
        clf = forest_fit(scaled, train.labels, cfg.n_trees, cfg.seed)
    return PipelineModel(
        selector, scaler, clf, cfg.threshold, list(train.feature_names),
        feature_cfg or FeatureConfig(), calibration, cfg,
    )


def predict_trace(model: PipelineModel, trace: RawTrace, threshold: float | None = None) -> Prediction:
    x = trace_features(trace, model.feature_config, model.calibration)
    return model.predict_rows(x[None, :], threshold)[0]


# -- metrics ----------------------------------------------------------------


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    weighted_f1: float
    labels: list
    confusion: np.ndarray
    per_class: dict
    n_test: int
    open_set: bool = False
    threshold: float = 0.0
    known_accuracy: float | None = None
    unknown_rejection_rate: float | None = None
    false_rejection_rate: float | None = None

    def to_text(self) -> str:
        lines = [
            f"open_set={str(self.open_set).lower()}",
            f"threshold={self.threshold:g}",
            f"n_test={self.n_test}",
            f"accuracy={self.accuracy:.6f}",
            f"macro_f1={self.macro_f1:.6f}",
            f"weighted_f1={self.weighted_f1:.6f}",
        ]
        for key in ("known_accuracy", "unknown_rejection_rate", "false_rejection_rate"):
            v = getattr(self, key)
            if v is not None:
                lines.append(f"{key}={v:.6f}")
        width = max(len(lab) for lab in self.labels)
        lines += ["", f"{'class':<{width}}  precision  recall     f1         support"]
        for lab in self.labels:
            p, r, f, s = (self.per_class[lab][k] for k in ("precision", "recall", "f1", "support"))
            lines.append(f"{lab:<{width}}  {p:<9.4f}  {r:<9.4f}  {f:<9.4f}  {s}")
        return "\n".join(lines) + "\n"

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred", *self.labels])
        for lab, row in zip(self.labels, self.confusion):
            w.writerow([lab, *row.tolist()])
        return buf.getvalue()


def _label_order(labels):
    labels = set(labels)
    return sorted(labels - {UNKNOWN}) + ([UNKNOWN] if UNKNOWN in labels else [])


def classification_metrics(y_true, y_pred, labels=None):
    """(accuracy, confusion, per_class, macro_f1, weighted_f1, labels). Undefined ratios count as 0."""
    y_true = [str(y) for y in y_true]
    y_pred = [str(y) for y in y_pred]
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred differ in length")
    if not y_true:
        raise ValueError("no predictions to score")
    labels = list(labels) if labels is not None else _label_order(y_true + y_pred)
    pos = {lab: i for i, lab in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[pos[t], pos[p]] += 1
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    per_class = {
        lab: {"precision": float(precision[i]), "recall": float(recall[i]), "f1": float(f1[i]), "support": int(support[i])}
        for i, lab in enumerate(labels)
    }
    accuracy = float(tp.sum() / len(y_true))
    macro = float(f1.mean())
    weighted = float((f1 * support).sum() / support.sum())
    return accuracy, cm, per_class, macro, weighted, labels


def evaluate(model: PipelineModel, test: LabeledDataset, open_set: bool = False,
             unknown_rows: LabeledDataset | None = None, threshold: float | None = None) -> EvalReport:
    """Closed-set scoring takes the argmax; open-set applies the rejection threshold.

    In open-set mode ``unknown_rows`` are scored with true label UNKNOWN, and a
    rejected unknown counts as correct.
    """
    if len(test) == 0:
        raise ValueError("empty test set")
    thr = (model.threshold if threshold is None else threshold) if open_set else 0.0
    y_true = list(test.labels)
    preds = [p.label for p in model.predict_rows(test.matrix, thr)]
    n_known = len(preds)
    if open_set:
        if unknown_rows is None or len(unknown_rows) == 0:
            log.warning("open-set evaluation without unknown rows measures false rejection only")
        else:
            preds += [p.label for p in model.predict_rows(unknown_rows.matrix, thr)]
            y_true += [UNKNOWN] * len(unknown_rows)
    labels = _label_order(y_true + preds + ([UNKNOWN] if open_set else []))
    acc, cm, per_class, macro, weighted, labels = classification_metrics(y_true, preds, labels)
    report = EvalReport(acc, macro, weighted, labels, cm, per_class, len(y_true), open_set, thr)
    if open_set:
        known_pred, known_true = preds[:n_known], y_true[:n_known]
        report.known_accuracy = float(np.mean([p == t for p, t in zip(known_pred, known_true)]))
        report.false_rejection_rate = float(np.mean([p == UNKNOWN for p in known_pred]))
        if len(preds) > n_known:
            report.unknown_rejection_rate = float(np.mean([p == UNKNOWN for p in preds[n_known:]]))
    return report


def feature_importance_report(selector: SelectorModel, names, top_n: int = 30) -> list[tuple[str, float]]:
    order = selector.ranking()[: min(top_n, len(names))]
    return [(names[i], float(selector.scores[i])) for i in order]


def importance_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "feature", "f_score"])
    for rank, (name, score) in enumerate(rows, start=1):
        w.writerow([rank, name, repr(score)])
    return buf.getvalue()


def per_feature_class_summary(data: LabeledDataset, name: str) -> dict:
    """Box-plot numbers per class: quartiles (linear interpolation), whisker ends, 1.5 IQR outliers."""
    try:
        col = data.feature_names.index(name)
    except ValueError:
        raise KeyError(f"no feature named {name!r}") from None
    labels = np.array(data.labels)
    out = {}
    for c in data.classes:
        v = np.sort(data.matrix[labels == c, col])
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        iqr = q3 - q1
        lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        inside = v[(v >= lo) & (v <= hi)]
        out[c] = {
            "min": float(inside.min()),
            "q1": float(q1),
            "median": float(med),
            "q3": float(q3),
            "max": float(inside.max()),
            "outliers": [float(x) for x in v[(v < lo) | (v > hi)]],
        }
    return out


# -- persistence ------------------------------------------------------------


def _scaler_to_dict(s: ScalerModel) -> dict:
    return {"kind": s.kind, "n_features": s.n_features, "params": {k: np.asarray(v).tolist() for k, v in s.params.items()}}


def _scaler_from_dict(d: dict) -> ScalerModel:
    return ScalerModel(d["kind"], {k: np.array(v, dtype=np.float64) for k, v in d["params"].items()}, d["n_features"])


def _model_to_dict(m: PipelineModel) -> dict:
    return {
        "format_version": m.format_version,
        "feature_names": list(m.feature_names),
        "feature_config": m.feature_config.to_dict(),
        "calibration": asdict(m.calibration) if m.calibration else None,
        "config": asdict(m.config),
        "threshold": m.threshold,
        "selector": {
            "scores": [s if math.isfinite(s) else "inf" for s in m.selector.scores.tolist()],
            "selected_indices": m.selector.selected_indices.tolist(),
        },
        "scaler": _scaler_to_dict(m.scaler),
        "classifier": m.classifier.to_dict(),
    }


def _model_from_dict(d: dict) -> PipelineModel:
    scores = np.array([math.inf if s == "inf" else s for s in d["selector"]["scores"]], dtype=np.float64)
    selector = SelectorModel(scores, np.array(d["selector"]["selected_indices"], dtype=np.int64))
    clf_d = d["classifier"]
    if clf_d["kind"] == "knn":
        clf = KnnModel.from_dict(clf_d)
    elif clf_d["kind"] == "forest":
        clf = ForestModel.from_dict(clf_d)
    else:
        raise ModelFormatError(f"unknown classifier kind {clf_d['kind']!r}")
    cal = SensorCalibration(**d["calibration"]) if d["calibration"] else None
    model = PipelineModel(
        selector, _scaler_from_dict(d["scaler"]), clf, float(d["threshold"]), list(d["feature_names"]),
        FeatureConfig.from_dict(d["feature_config"]), cal, PipelineConfig(**d["config"]), int(d["format_version"]),
    )
    _validate(model)
    return model


def _validate(m: PipelineModel) -> None:
    n = len(m.feature_names)
    idx = m.selector.selected_indices
    if m.selector.scores.size != n:
        raise ModelFormatError("selector scores do not match feature_names")
    if idx.size == 0 or idx.min() < 0 or idx.max() >= n or np.any(np.diff(idx) <= 0):
        raise ModelFormatError("selected_indices invalid for feature_names")
    if m.scaler.n_features != idx.size:
        raise ModelFormatError("scaler width does not match the selection")
    if not 0 <= m.threshold <= 1:
        raise ModelFormatError("threshold outside [0, 1]")
    if feature_names(m.feature_config) != list(m.feature_names):
        raise ModelFormatError("feature_names disagree with feature_config")


def save_model(model: PipelineModel) -> bytes:
    """Versioned JSON document behind a header line carrying the body's SHA-256."""
    body = json.dumps(_model_to_dict(model), sort_keys=True, indent=1, allow_nan=False).encode("utf-8") + b"\n"
    header = f"{MODEL_MAGIC} format_version={model.format_version} sha256={hashlib.sha256(body).hexdigest()}\n"
    return header.encode("ascii") + body


def load_model(data: bytes) -> PipelineModel:
    head, sep, body = data.partition(b"\n")
    try:
        header = head.decode("ascii")
    except UnicodeDecodeError:
        raise ModelFormatError("model header is not ASCII") from None
    if not header.startswith(MODEL_MAGIC):
        raise ModelFormatError("not a portscope model file")
    match = _HEADER_RE.match(header)
    if not match or not sep:
        raise ModelFormatError("malformed model header")
    version = int(match.group(1))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported model format_version {version} (this build reads {FORMAT_VERSION})")
    if hashlib.sha256(body).hexdigest() != match.group(2):
        raise ModelFormatError("model body checksum mismatch (truncated or corrupted)")
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"model body is not valid JSON: {exc}") from None
    if doc.get("format_version") != version:
        raise ModelFormatError("format_version in body disagrees with header")
    try:
        return _model_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"invalid model document: {exc}") from None


def save_model_file(model: PipelineModel, path) -> None:
    Path(path).write_bytes(save_model(model))


def load_model_file(path) -> PipelineModel:
    return load_model(Path(path).read_bytes())


def feature_meta_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.name + ".meta.json")


def write_feature_meta(csv_path, cfg: FeatureConfig, cal: SensorCalibration | None) -> None:
    meta = {"feature_config": cfg.to_dict(), "calibration": asdict(cal) if cal else None}
    feature_meta_path(csv_path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def read_feature_meta(csv_path):
    """(FeatureConfig, calibration) recorded next to a feature CSV; defaults when absent."""
    p = feature_meta_path(csv_path)
    if not p.exists():
        return FeatureConfig(), None
    meta = json.loads(p.read_text(encoding="utf-8"))
    cal = SensorCalibration(**meta["calibration"]) if meta.get("calibration") else None
    return FeatureConfig.from_dict(meta["feature_config"]), cal
