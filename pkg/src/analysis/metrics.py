"""
Metrics Module for the Symmetry Toolkit

F1 and AUC scoring plus the permuted-test-set evaluation: every test program
is rewritten by a sampled legal reordering at a given percentage, its
features are rebuilt from scratch, and predictions are mapped back to the
original token order before scoring.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import hashlib
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from learning.ga_model import GaModel
from learning.trainer import NonFiniteOutputError, featurize_item, predict_features
from program.pdg import build_pdg
from program.symmetry import apply, sample_reordering

logger = logging.getLogger(__name__)

PAIR_THRESHOLD = 0.5
LENGTH_BINS = 4


def f1_score(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    """
    Binary F1 of class 1 when labels are {0, 1}; macro F1 otherwise.

    Returns:
        F1 in [0, 1]; 0 when a class is never predicted nor present
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have equal length")
    classes = np.union1d(y_true, y_pred)
    if set(classes.tolist()) <= {0, 1}:
        classes = np.array([1])
    scores = []
    for label in classes:
        tp = np.sum((y_pred == label) & (y_true == label))
        fp = np.sum((y_pred == label) & (y_true != label))
        fn = np.sum((y_pred != label) & (y_true == label))
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores)) if scores else 0.0


def majority_baseline_f1(y_true: Sequence[int]) -> float:
    """F1 of always predicting the most frequent label (smallest label on ties)."""
    counts = pd.Series(np.asarray(y_true, dtype=np.int64)).value_counts()
    if counts.empty:
        return 0.0
    majority = int(counts[counts == counts.max()].index.min())
    return f1_score(y_true, [majority] * len(y_true))


def auc_score(y_true: Sequence[int], scores: Sequence[float]) -> float:
    """
    Area under the ROC curve by the exact rank statistic (ties averaged).

    Returns:
        AUC in [0, 1]; 0.5 when only one class is present
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    positives = int(np.sum(y_true == 1))
    negatives = len(y_true) - positives
    if positives == 0 or negatives == 0:
        return 0.5
    ranks = pd.Series(np.asarray(scores, dtype=np.float64)).rank(method="average").to_numpy()
    statistic = ranks[y_true == 1].sum() - positives * (positives + 1) / 2.0
    return float(statistic / (positives * negatives))


def f1_by_length_bin(lengths: Sequence[int], y_true: Sequence[int], y_pred: Sequence[int],
                     bins: int = LENGTH_BINS) -> List[Dict[str, object]]:
    """F1 per instruction-count quantile bin."""
    frame = pd.DataFrame({"length": lengths, "true": y_true, "pred": y_pred})
    if frame.empty:
        return []
    if frame["length"].nunique() < 2:
        only = frame["length"].iloc[0]
        return [{"bin": f"{only:g}-{only:g}", "count": int(len(frame)), "f1": f1_score(frame["true"], frame["pred"])}]
    frame["bin"] = pd.qcut(frame["length"], bins, duplicates="drop")
    results = []
    for interval, group in frame.groupby("bin", observed=True):
        results.append({
            "bin": f"{interval.left:g}-{interval.right:g}",
            "count": int(len(group)),
            "f1": f1_score(group["true"], group["pred"]),
        })
    return results


def _permute_item(item, task: str, percent: float, seed: int):
    """Rewrite an item by a sampled legal reordering; returns (item, token order map)."""
    if task == "pair":
        first, second = item
        pi1 = sample_reordering(build_pdg(first), percent, seed)
        pi2 = sample_reordering(build_pdg(second), percent, seed + 1)
        return (apply(pi1, first), apply(pi2, second)), None
    pi = sample_reordering(build_pdg(item), percent, seed, item.block_sizes)
    return apply(pi, item), np.asarray(pi.token_map, dtype=np.int64)


def _digest(values: Sequence[int]) -> str:
    return hashlib.sha256(np.asarray(values, dtype="<i8").tobytes()).hexdigest()


def _miss(label: int, classes: int) -> int:
    return (int(label) + 1) % classes


def evaluate_percent(model: GaModel, items: Sequence[Tuple[object, object]], task: str,
                     percent: float, seed: int = 0) -> Dict[str, object]:
    """
    Score a model on a test set rewritten at one permutation percentage.

    Items whose outputs are NaN or infinite are scored as misses and counted
    under `non_finite`.

    Args:
        model: trained model
        items: (item, label) pairs
        task: "token", "unit" or "pair"
        percent: share of Kahn layers shuffled per program
        seed: base seed; program k uses seed + 2k

    Returns:
        dict with f1, auc (pairs), majority baseline, per-length-bin F1, the
        non-finite count and a digest of the predictions in original token order
    """
    golds, predictions, lengths, scores = [], [], [], []
    non_finite = 0
    for k, (item, label) in enumerate(items):
        permuted, token_map = _permute_item(item, task, percent, seed + 2 * k)
        try:
            output = predict_features(model, featurize_item(permuted, task), task)
        except NonFiniteOutputError:
            non_finite += 1
            output = None
        if task == "token":
            gold = [int(v) for v in label]
            if output is None:
                predictions.extend(_miss(v, model.config.token_labels) for v in gold)
            else:
                predictions.extend(np.argmax(output, axis=1)[token_map].tolist())
            golds.extend(gold)
            lengths.extend([item.n] * item.num_tokens)
        elif task == "unit":
            predictions.append(_miss(label, model.config.unit_labels) if output is None else int(np.argmax(output)))
            golds.append(int(label))
            lengths.append(item.n)
        else:
            if output is None:
                output = -1.0 if int(label) == 1 else 1.0
            scores.append(float(output))
            predictions.append(int(output >= PAIR_THRESHOLD))
            golds.append(int(label))
            lengths.append(item[0].n + item[1].n)

    if non_finite:
        logger.warning(f"⚠️  {non_finite} of {len(items)} examples gave non-finite outputs "
                       f"({model.config.precision} precision, percent {percent:g})")
    result = {
        "percent": percent,
        "examples": len(items),
        "f1": f1_score(golds, predictions),
        "majority_f1": majority_baseline_f1(golds),
        "length_bins": f1_by_length_bin(lengths, golds, predictions),
        "non_finite": non_finite,
        "predictions_digest": _digest(predictions),
    }
    if task == "pair":
        result["auc"] = auc_score(golds, scores)
    logger.info(f"Percent {percent:g}: F1 {result['f1']:.4f} on {len(items)} examples")
    return result


def evaluate(model: GaModel, items: Sequence[Tuple[object, object]], task: str,
             percents: Sequence[float] = (0.0,), seed: int = 0) -> Dict[str, object]:
    """Evaluate at every requested percentage and summarise the spread of F1."""
    runs = [evaluate_percent(model, items, task, percent, seed) for percent in percents]
    f1_values = [run["f1"] for run in runs]
    return {
        "task": task,
        "precision": model.config.precision,
        "runs": runs,
        "f1_spread": float(max(f1_values) - min(f1_values)) if f1_values else 0.0,
        "non_finite_outputs": int(sum(run["non_finite"] for run in runs)),
        "predictions_identical": len({run["predictions_digest"] for run in runs}) <= 1,
    }
