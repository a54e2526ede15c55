"""
Corruption error.

    CE_c = sum_s E_{c,s}(model) / sum_s E_{c,s}(baseline) * 100
    mCE  = mean over kinds c of CE_c

E is the top-1 error in percent. Each corrupted set is generated once per
(kind, severity, seed) and evaluated by both models. A cell where the baseline
makes no errors is undefined: it is excluded from its kind's sums and reported.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

from tqdm import tqdm

from rconvmk.data.datasets import Dataset
from rconvmk.errors import MetricError
from rconvmk.models.resnet import Model, evaluate
from rconvmk.robustness.corruptions import CorruptionSpec, corrupt_dataset

logger = logging.getLogger(__name__)

Cell = Tuple[str, int]


def ce_from_errors(
    model_errors: Dict[Cell, float],
    baseline_errors: Dict[Cell, float],
) -> Dict[str, object]:
    """
    CE per kind and mCE from per-cell error percentages.

    Returns ``{"ce": {kind: float | None}, "mce": float | None,
    "undefined": [(kind, severity), ...]}``.
    """
    if not model_errors:
        raise MetricError("no corruption cells to score")
    missing = sorted(set(model_errors) - set(baseline_errors))
    if missing:
        raise MetricError(f"baseline has no error for cells {missing[:3]}")

    kinds: List[str] = []
    for kind, _ in model_errors:
        if kind not in kinds:
            kinds.append(kind)

    ce: Dict[str, Optional[float]] = {}
    undefined: List[Cell] = []
    for kind in kinds:
        cells = sorted(c for c in model_errors if c[0] == kind)
        usable = []
        for cell in cells:
            if baseline_errors[cell] == 0:
                undefined.append(cell)
                logger.warning("CE cell %s/%d undefined: baseline error is 0; excluded", *cell)
            else:
                usable.append(cell)
        if not usable:
            ce[kind] = None
            continue
        num = sum(model_errors[c] for c in usable)
        den = sum(baseline_errors[c] for c in usable)
        ce[kind] = num / den * 100.0

    defined = [v for v in ce.values() if v is not None]
    mce = sum(defined) / len(defined) if defined else None
    if mce is None:
        logger.warning("mCE undefined: every kind lost all of its cells")
    return {"ce": ce, "mce": mce, "undefined": undefined}


def corruption_error(
    model: Model,
    baseline_model: Model,
    clean_testset: Dataset,
    kinds: Sequence[str],
    severities: Sequence[int],
    seed: int = 0,
    batch_size: int = 256,
    workers: int = 1,
    progress: bool = True,
) -> Dict[str, object]:
    """
    Evaluate both models on every (kind, severity) corrupted copy of
    ``clean_testset`` and score CE / mCE.

    Returns the ``ce_from_errors`` result plus ``cells``: one row per
    (kind, severity) with both error percentages.
    """
    if not kinds or not severities:
        raise MetricError("kinds and severities must be non-empty")

    model_errors: Dict[Cell, float] = {}
    baseline_errors: Dict[Cell, float] = {}
    rows = []
    grid = [(k, s) for k in kinds for s in severities]
    for kind, severity in tqdm(grid, desc="corruptions", disable=None if progress else True):
        spec = CorruptionSpec(kind=kind, severity=severity, seed=seed)
        corrupted = corrupt_dataset(clean_testset, spec, batch_size, workers)
        e_model = evaluate(model, corrupted, batch_size, workers)["top1_error"]
        e_base = e_model if baseline_model is model else evaluate(baseline_model, corrupted, batch_size, workers)["top1_error"]
        model_errors[(kind, severity)] = e_model
        baseline_errors[(kind, severity)] = e_base
        rows.append({"kind": kind, "severity": severity, "error_percent": e_model, "baseline_error_percent": e_base})
        logger.debug("%s/%d: error %.2f%% (baseline %.2f%%)", kind, severity, e_model, e_base)

    result = ce_from_errors(model_errors, baseline_errors)
    result["cells"] = rows
    logger.info("mCE = %s over %d kinds", "undefined" if result["mce"] is None else f"{result['mce']:.2f}", len(kinds))
    return result
