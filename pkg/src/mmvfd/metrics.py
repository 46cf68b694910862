"""Classification metrics and per-generator report tables.

The detection convention makes FAKE the positive class for recall,
precision, and F1. Model outputs are probabilities of the REAL class, so
evaluators rank by the inverted score 1 - p.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kvtext
from .backbones import FeatureBackend, FeatureCache
from .fusion import DetectorModel
from .ingest import LABELS, VideoManifest
from .pipeline import features_for_manifest, predict_features

UNTAGGED = "untagged"


def confusion_metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    """Accuracy, recall, precision, F1 with fake as the positive class.

    `scores` are fake-class scores (higher = more likely fake); `labels`
    use the canonical encoding real=1 / fake=0. A video is predicted fake
    when its score strictly exceeds the threshold (ties go to real,
    honouring the "real if p >= 0.5" rule on the inverted score).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or len(scores) == 0:
        raise ValueError("scores and labels must be equal-length and non-empty")
    pred_fake = scores > threshold
    is_fake = labels == LABELS["fake"]
    tp = int(np.sum(pred_fake & is_fake))
    fn = int(np.sum(~pred_fake & is_fake))
    fp = int(np.sum(pred_fake & ~is_fake))
    tn = int(np.sum(~pred_fake & ~is_fake))
    accuracy = (tp + tn) / len(scores)
    recall = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": accuracy, "recall": recall, "precision": precision, "f1": f1}


def _tied_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """Probability a random positive (fake) outranks a random negative,
    ties counted one half (rank / Mann-Whitney formulation)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == LABELS["fake"]
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    ranks = _tied_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class EvalRow:
    id: str
    generator: str
    label: str
    score: float        # probability of the real class
    prediction: int     # 1 = real, 0 = fake

    @property
    def fake_score(self) -> float:
        return 1.0 - self.score


@dataclass
class EvalResult:
    rows: list[EvalRow] = field(default_factory=list)
    threshold: float = 0.5
    checkpoint_hash: str = ""
    backend_fingerprint: str = ""

    def accuracy(self) -> float:
        if not self.rows:
            raise ValueError("empty evaluation")
        return float(np.mean([r.prediction == LABELS[r.label] for r in self.rows]))

    def to_text(self) -> str:
        items: dict[str, object] = {
            "meta.threshold": self.threshold,
            "meta.checkpoint_hash": self.checkpoint_hash,
            "meta.backend_fingerprint": self.backend_fingerprint,
        }
        for i, r in enumerate(self.rows):
            items[f"row.{i:08d}"] = (
                f"{r.id}\t{r.generator}\t{r.label}\t{r.score!r}\t{r.prediction}"
            )
        return kvtext.render_items(items)

    @classmethod
    def from_text(cls, text: str) -> "EvalResult":
        items = kvtext.parse_items(text)
        result = cls(
            threshold=float(items["meta.threshold"]),
            checkpoint_hash=items["meta.checkpoint_hash"],
            backend_fingerprint=items["meta.backend_fingerprint"],
        )
        for key in sorted(k for k in items if k.startswith("row.")):
            vid, gen, label, score, pred = items[key].split("\t")
            result.rows.append(EvalRow(vid, gen, label, float(score), int(pred)))
        return result


def evaluate_manifest(
    model: DetectorModel,
    manifest: VideoManifest,
    backend: FeatureBackend,
    cache: FeatureCache | None = None,
    threshold: float = 0.5,
    checkpoint_hash: str = "",
) -> EvalResult:
    features, _ = features_for_manifest(manifest, backend, model.cfg.t, cache=cache)
    p = predict_features(model, features)
    rows = [
        EvalRow(
            id=e.id,
            generator=e.generator,
            label=e.label,
            score=float(p[i]),
            prediction=int(p[i] >= threshold),
        )
        for i, e in enumerate(manifest.entries)
    ]
    return EvalResult(
        rows=rows,
        threshold=threshold,
        checkpoint_hash=checkpoint_hash,
        backend_fingerprint=backend.fingerprint.hex(),
    )


_TABLE_COLUMNS = ("subset", "n_real", "n_fake", "accuracy", "recall", "precision", "f1", "auroc")


@dataclass
class PerGeneratorReport:
    rows: list[dict] = field(default_factory=list)  # one dict per generator subset
    mean: dict = field(default_factory=dict)

    def to_text(self) -> str:
        def fmt(value):
            if value is None:
                return "na"
            if isinstance(value, float):
                return repr(value)
            return str(value)

        lines = ["\t".join(_TABLE_COLUMNS)]
        for row in self.rows + [self.mean]:
            lines.append("\t".join(fmt(row[c]) for c in _TABLE_COLUMNS))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PerGeneratorReport":
        lines = text.splitlines()
        rows = []
        for line in lines[1:]:
            raw = dict(zip(_TABLE_COLUMNS, line.split("\t")))
            row: dict = {"subset": raw["subset"]}
            for c in ("n_real", "n_fake"):
                row[c] = None if raw[c] == "na" else int(raw[c])
            for c in ("accuracy", "recall", "precision", "f1", "auroc"):
                row[c] = None if raw[c] == "na" else float(raw[c])
            rows.append(row)
        return cls(rows=rows[:-1], mean=rows[-1])


def per_generator_report(result: EvalResult) -> PerGeneratorReport:
    """One row per fake-generator tag (evaluated against all real videos)
    plus an unweighted mean row."""
    reals = [r for r in result.rows if r.label == "real"]
    fakes = [r for r in result.rows if r.label == "fake"]
    tags = sorted({r.generator or UNTAGGED for r in fakes}) or [UNTAGGED]

    report = PerGeneratorReport()
    for tag in tags:
        subset = reals + [r for r in fakes if (r.generator or UNTAGGED) == tag]
        scores = np.array([r.fake_score for r in subset])
        labels = np.array([LABELS[r.label] for r in subset])
        preds = np.array([r.prediction for r in subset])
        row: dict = {"subset": tag, "n_real": len(reals), "n_fake": len(subset) - len(reals)}
        if len(subset) == 0:
            row.update({m: None for m in ("accuracy", "recall", "precision", "f1", "auroc")})
            report.rows.append(row)
            continue
        row["accuracy"] = float(np.mean(preds == labels))
        # threshold tau on p(real) is 1 - tau on the inverted fake score
        conf = confusion_metrics(scores, labels, threshold=1.0 - result.threshold)
        row["recall"] = conf["recall"]
        row["precision"] = conf["precision"]
        row["f1"] = conf["f1"]
        try:
            row["auroc"] = auroc(scores, labels)
        except ValueError:
            row["auroc"] = None
        report.rows.append(row)

    mean_row: dict = {"subset": "mean", "n_real": None, "n_fake": None}
    for metric in ("accuracy", "recall", "precision", "f1", "auroc"):
        values = [r[metric] for r in report.rows if r[metric] is not None]
        mean_row[metric] = float(np.mean(values)) if values else None
    report.mean = mean_row
    return report
