"""FITB accuracy, exact rank-based AUC, and machine-readable reports."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import CompatPair, FITBQuestion
from .errors import FormatError

REPORT_FIELDS = (
    "model_id",
    "modality",
    "n_fitb_questions",
    "fitb_accuracy",
    "n_compat_pairs",
    "auc",
    "seed",
    "timestamp",
)


def _map_ordered(fn, items, threads: int = 1) -> list:
    """Apply fn to items, optionally in parallel, results in input order."""
    if threads <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def fitb_accuracy(scorer, questions: list[FITBQuestion], threads: int = 1) -> float:
    """Fraction of questions where the true completion scores highest.

    Ties break toward the lowest choice index, so results are reproducible.
    """
    def judge(question: FITBQuestion) -> bool:
        scores = [scorer(question.completed(i)) for i in range(4)]
        return int(np.argmax(scores)) == question.answer_index

    verdicts = _map_ordered(judge, questions, threads)
    return sum(verdicts) / len(questions)


def auc(pos_scores, neg_scores) -> float:
    """Exact Mann-Whitney AUC: P(pos > neg) with ties counted half."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auc requires non-empty score lists")
    combined = np.concatenate([pos, neg])
    order = np.argsort(combined, kind="stable")
    ranks = np.empty(combined.size, dtype=np.float64)
    ranks[order] = np.arange(1, combined.size + 1)
    # average ranks over tie groups
    sorted_vals = combined[order]
    i = 0
    while i < sorted_vals.size:
        j = i
        while j + 1 < sorted_vals.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    rank_sum = ranks[: pos.size].sum()
    u = rank_sum - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def compat_auc(scorer, pairs: list[CompatPair], threads: int = 1) -> float:
    """AUC of positive outfit scores against their corrupted counterparts."""
    def score_pair(pair: CompatPair) -> tuple[float, float]:
        return scorer(pair.positive), scorer(pair.negative)

    scored = _map_ordered(score_pair, pairs, threads)
    pos = [s for s, _ in scored]
    neg = [s for _, s in scored]
    return auc(pos, neg)


@dataclass
class EvalReport:
    model_id: str
    modality: str
    n_fitb_questions: int
    fitb_accuracy: float
    n_compat_pairs: int
    auc: float
    seed: int
    timestamp: str


def emit_report(report: EvalReport, path) -> None:
    """JSON with the fixed field order; full float precision."""
    payload = {name: getattr(report, name) for name in REPORT_FIELDS}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if set(payload) != set(REPORT_FIELDS):
        missing = set(REPORT_FIELDS) ^ set(payload)
        raise FormatError(f"report field mismatch: {sorted(missing)}")
    return EvalReport(**payload)


def format_table(rows: list[tuple[str, float, float]]) -> str:
    """Plain-text method/accuracy/AUC table for side-by-side comparison."""
    lines = [f"{'Method':<24} {'Accuracy (FITB)':>16} {'AUC (Compatibility)':>20}"]
    lines.append("-" * len(lines[0]))
    for method, accuracy, auc_value in rows:
        lines.append(f"{method:<24} {accuracy * 100:>15.1f}% {auc_value:>20.4f}")
    return "\n".join(lines) + "\n"
