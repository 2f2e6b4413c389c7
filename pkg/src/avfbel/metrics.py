"""Similarity and binary-label classification metrics for generated EPP."""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np


def _pair(true, gen):
    t = np.asarray(true, dtype=np.float64).ravel()
    g = np.asarray(gen, dtype=np.float64).ravel()
    if t.shape != g.shape:
        raise ValueError(f"length mismatch: {t.size} true vs {g.size} generated")
    if t.size == 0:
        raise ValueError("empty input")
    return t, g


def similarity(true, gen) -> float:
    """Percent similarity ``100 * exp(-mean |true - gen|)``."""
    t, g = _pair(true, gen)
    return float(100.0 * np.exp(-np.mean(np.abs(t - g))))


def binarize(values, threshold: float = 0.5) -> np.ndarray:
    """Label 1 where value >= threshold (the boundary counts as positive)."""
    return (np.asarray(values, dtype=np.float64) >= threshold).astype(np.int64)


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    undefined: tuple[str, ...] = ()  # metrics whose denominator was zero (reported as 0)


def precision_recall_f1(true_labels, pred_labels) -> Scores:
    t, p = _pair(true_labels, pred_labels)
    if t.size and not (np.isin(t, (0, 1)).all() and np.isin(p, (0, 1)).all()):
        raise ValueError("labels must be 0 or 1")
    tp = int(np.sum((t == 1) & (p == 1)))
    fp = int(np.sum((t == 0) & (p == 1)))
    fn = int(np.sum((t == 1) & (p == 0)))
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    prec = ratio(tp, tp + fp, "precision")
    rec = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * prec * rec, prec + rec, "f1")
    return Scores(prec, rec, f1, tuple(undefined))


@dataclass
class EvalReport:
    variant: str
    ids: list[str]
    epp_true: list[float]
    epp_gen: list[float]
    similarity: float
    precision: float
    recall: float
    f1: float
    threshold: float = 0.5
    undefined: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def comparison_csv(self) -> str:
        buf = io.StringIO()
        buf.write("id,epp_true,epp_gen\n")
        for i, t, g in zip(self.ids, self.epp_true, self.epp_gen):
            buf.write(f"{i},{float(t)!r},{float(g)!r}\n")
        return buf.getvalue()


def evaluate(variant: str, ids, true, gen, threshold: float = 0.5) -> EvalReport:
    t, g = _pair(true, gen)
    scores = precision_recall_f1(binarize(t, threshold), binarize(g, threshold))
    return EvalReport(
        variant=variant,
        ids=[str(i) for i in ids],
        epp_true=[float(v) for v in t],
        epp_gen=[float(v) for v in g],
        similarity=similarity(t, g),
        precision=scores.precision,
        recall=scores.recall,
        f1=scores.f1,
        threshold=threshold,
        undefined=list(scores.undefined),
    )
