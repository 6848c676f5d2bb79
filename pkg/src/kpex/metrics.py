"""Prediction post-processing and evaluation metrics.

Phrases are compared as case-folded token tuples, exact match only.
Dataset-level scores are micro-averaged (supports summed over documents);
macro averaging is available for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Document, LabeledDocument, Phrase, bio_to_phrases, keyphrases_to_bio
from .crf import marginals, phrase_confidence, viterbi
from .encoder import encode_forward
from .model import Model


@dataclass
class PhrasePrediction:
    phrase: Phrase  # case-folded
    span: tuple[int, int]
    confidence: float


@dataclass
class MetricReport:
    precision: float
    recall: float
    f1: float
    n_pred: int
    n_gold: int
    n_match: int


def _fold(phrase) -> Phrase:
    return tuple(t.casefold() for t in phrase)


def present_phrases(tokens, phrases) -> set[Phrase]:
    """The subset of ``phrases`` actually matchable in ``tokens``.

    Runs the same leftmost-longest matcher used to build training labels,
    so evaluation targets and training supervision can never disagree.
    """
    labels = keyphrases_to_bio(tokens, phrases)
    return {_fold(p) for _, p in bio_to_phrases(tokens, labels)}


def gold_phrases(doc: LabeledDocument) -> set[Phrase]:
    """Case-folded gold phrase set implied by a document's labels."""
    return {_fold(p) for _, p in bio_to_phrases(doc.tokens, doc.labels)}


def dedup_predictions(preds) -> list[PhrasePrediction]:
    """Collapse case-folded duplicates, keeping the highest-confidence
    occurrence (the earliest span on ties); output ordered by span start."""
    best: dict[Phrase, PhrasePrediction] = {}
    for p in sorted(preds, key=lambda p: p.span[0]):
        kept = best.get(p.phrase)
        if kept is None or p.confidence > kept.confidence:
            best[p.phrase] = p
    return sorted(best.values(), key=lambda p: p.span[0])


def extract(model: Model, doc) -> tuple[set[Phrase], list[PhrasePrediction]]:
    """Decode a document and return its predicted phrase set and predictions.

    Pipeline: encode, Viterbi decode, span recovery, then case-folded
    de-duplication via :func:`dedup_predictions`. Confidence is the marginal
    product over the decoded span.
    """
    tokens = doc.tokens if isinstance(doc, Document) else doc.doc.tokens
    ids = model.vocab.encode(tokens)
    emissions, _ = encode_forward(model.encoder, ids)
    labels, _ = viterbi(emissions, model.crf)
    spans = bio_to_phrases(tokens, labels)
    if not spans:
        return set(), []
    marg = marginals(emissions, model.crf)
    preds = dedup_predictions(
        PhrasePrediction(
            phrase=_fold(phrase),
            span=(s, e),
            confidence=phrase_confidence(marg, (s, e), labels[s:e]),
        )
        for (s, e), phrase in spans
    )
    return {p.phrase for p in preds}, preds


def exact_f1(pred: set, gold: set) -> MetricReport:
    """Set-level exact-match precision/recall/F1 on case-folded phrases."""
    pred = {_fold(p) for p in pred}
    gold = {_fold(p) for p in gold}
    return _report(n_pred=len(pred), n_gold=len(gold), n_match=len(pred & gold))


def _report(n_pred: int, n_gold: int, n_match: int) -> MetricReport:
    precision = n_match / n_pred if n_pred else 0.0
    recall = n_match / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricReport(precision, recall, f1, n_pred, n_gold, n_match)


def rank_predictions(preds) -> list[PhrasePrediction]:
    """Sort predictions by confidence descending; ties go to the earlier
    span start, then the shorter phrase."""
    return sorted(preds, key=lambda p: (-p.confidence, p.span[0], len(p.phrase)))


def rank_phrases(model: Model, doc) -> list[PhrasePrediction]:
    """De-duplicated predictions for one document in ranking order."""
    _, preds = extract(model, doc)
    return rank_predictions(preds)


def f1_at_k(ranked, gold: set, k: int) -> MetricReport:
    """Exact-match F1 of the top-k ranked predictions (all of them if fewer)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    top = {p.phrase for p in ranked[:k]}
    return exact_f1(top, gold)


def dataset_f1(model: Model, dataset, average: str = "micro") -> MetricReport:
    """Exact-match F1 of full extraction over a labeled dataset."""
    return _aggregate(
        ((extract(model, d)[0], gold_phrases(d)) for d in dataset), average
    )


def dataset_f1_at_k(model: Model, dataset, k: int, average: str = "micro") -> MetricReport:
    """F1@k over a labeled dataset using confidence-ranked predictions."""
    pairs = []
    for d in dataset:
        ranked = rank_phrases(model, d)
        pairs.append(({p.phrase for p in ranked[:k]}, gold_phrases(d)))
    return _aggregate(pairs, average)


def _aggregate(pairs, average: str) -> MetricReport:
    if average == "micro":
        n_pred = n_gold = n_match = 0
        for pred, gold in pairs:
            n_pred += len(pred)
            n_gold += len(gold)
            n_match += len(pred & gold)
        return _report(n_pred, n_gold, n_match)
    if average == "macro":
        reports = [exact_f1(pred, gold) for pred, gold in pairs]
        n = len(reports)
        if n == 0:
            return _report(0, 0, 0)
        rep = _report(
            sum(r.n_pred for r in reports),
            sum(r.n_gold for r in reports),
            sum(r.n_match for r in reports),
        )
        rep.precision = sum(r.precision for r in reports) / n
        rep.recall = sum(r.recall for r in reports) / n
        rep.f1 = sum(r.f1 for r in reports) / n
        return rep
    raise ValueError(f"unknown average {average!r}")
