"""Leaf-scoring metrics: box IoU for grounding, normalized exact match for VQA."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .core import AnswerValue, MetricKind

Box = tuple[float, float, float, float]

_ARTICLE = re.compile(r"^(a|an|the)\s+")
_WHITESPACE = re.compile(r"\s+")
_TERMINAL_PUNCT = ".,;:!?"


def _validate_box(box: Box) -> Box:
    x1, y1, x2, y2 = (float(c) for c in box)
    if x1 > x2 or y1 > y2:
        raise ValueError(f"invalid box (corners out of order): {box}")
    return (x1, y1, x2, y2)


def iou(a: Box, b: Box) -> float:
    """Intersection-over-union of two corner-form boxes, in [0, 1].

    A union of zero area (two degenerate boxes) scores 0.
    """
    ax1, ay1, ax2, ay2 = _validate_box(a)
    bx1, by1, bx2, by2 = _validate_box(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = max(0.0, iw) * max(0.0, ih)
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def normalize_answer(text: str) -> str:
    """Lowercase, trim, collapse whitespace, strip terminal punctuation and a
    leading article (a/an/the)."""
    out = _WHITESPACE.sub(" ", text.lower().strip())
    out = out.rstrip(_TERMINAL_PUNCT).strip()
    out = _ARTICLE.sub("", out)
    return out


def vqa_accuracy(pred: str, gold: str) -> float:
    """1.0 iff the normalized prediction equals the normalized gold answer."""
    return 1.0 if normalize_answer(pred) == normalize_answer(gold) else 0.0


@dataclass(frozen=True)
class MetricConfig:
    """Scoring configuration; the IoU threshold only matters for hit-rates."""

    kind: MetricKind
    iou_threshold_for_acc: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold_for_acc <= 1.0:
            raise ValueError("iou_threshold_for_acc must lie in (0, 1]")


def leaf_score(pred: AnswerValue | None, gold: AnswerValue, kind: MetricKind) -> float:
    """Score one extracted answer against gold; absent answers score 0.

    The gold answer must match the metric's variant; a prediction of the
    wrong variant is simply wrong (scores 0).
    """
    if gold.kind != kind.answer_kind:
        raise ValueError(
            f"gold answer variant {gold.kind!r} does not match metric {kind.value!r}"
        )
    if pred is None or pred.kind != gold.kind:
        return 0.0
    if kind is MetricKind.VQA_ACCURACY:
        assert pred.text is not None and gold.text is not None
        return vqa_accuracy(pred.text, gold.text)
    assert pred.box is not None and gold.box is not None
    return iou(pred.box, gold.box)


def hit(pred: AnswerValue | None, gold: AnswerValue, config: MetricConfig) -> float:
    """Binary hit-rate variant: thresholded IoU for grounding, exact match for VQA."""
    score = leaf_score(pred, gold, config.kind)
    if config.kind is MetricKind.GROUNDING_IOU:
        return 1.0 if score > config.iou_threshold_for_acc else 0.0
    return score
