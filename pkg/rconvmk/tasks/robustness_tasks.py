"""
Robustness tasks: white-box attacks and corruption error
"""
import logging
from typing import Any, Dict

from rconvmk.cli.report import report_table, write_rows
from rconvmk.data.checkpoint import load_model
from rconvmk.robustness.attacks import clean_accuracy, robust_accuracy
from rconvmk.robustness.metrics import corruption_error
from rconvmk.tasks.context import RunContext
from rconvmk.tasks.common import attack_spec, configured_model, load_dataset

logger = logging.getLogger(__name__)

ATTACK_COLUMNS = ["attack", "epsilon", "accuracy", "clean_accuracy", "n"]
CORRUPTION_COLUMNS = ["kind", "severity", "error_percent"]
CE_COLUMNS = ["kind", "ce", "undefined_cells"]


# ============================================================
# Attack: robust accuracy, one row per configured attack
# ============================================================
def run_attack(ctx: RunContext) -> Dict[str, Any]:
    """
    Clean and robust accuracy on the test split. Clean accuracy is counted
    with the attack batch size so eps = 0 attacks reproduce it exactly.
    """
    cfg = ctx.cfg
    section = cfg.attack
    logger.info("[attack] Starting %s at eps=%.4f", ",".join(section.kinds), section.epsilon)

    model = configured_model(ctx)
    testset = load_dataset(cfg, "test")
    clean = clean_accuracy(model, testset, section.batch_size, ctx.workers)

    rows = []
    for kind in section.kinds:
        result = robust_accuracy(model, testset, attack_spec(section, kind), section.batch_size, ctx.workers)
        rows.append({**result, "clean_accuracy": clean})
    write_rows(rows, ctx.path("attack.csv"), ATTACK_COLUMNS)

    method = model.spec.variant.value
    report = [{"method": method, "metric": "clean_accuracy", "value": clean}]
    report += [{"method": method, "metric": f"{r['attack']}_accuracy", "value": r["accuracy"]} for r in rows]
    text, _ = report_table(report)

    stats = {"clean_accuracy": clean, "robust_accuracy": {r["attack"]: r["accuracy"] for r in rows}}
    logger.info("[attack] complete: %s", stats)
    return {"status": "success", "table": text, **stats}


# ============================================================
# Corrupt: CE per kind and mCE against a baseline checkpoint
# ============================================================
def run_corrupt(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    section = cfg.corruption
    logger.info("[corrupt] Starting %d kinds x %d severities", len(section.kinds), len(section.severities))

    model = configured_model(ctx)
    if section.baseline_checkpoint:
        baseline, _ = load_model(section.baseline_checkpoint)
    else:
        ctx.warn("corruption.baseline_checkpoint is not set; the model is its own baseline (every CE = 100)")
        baseline = model
    testset = load_dataset(cfg, "test")

    result = corruption_error(
        model, baseline, testset, section.kinds, section.severities,
        seed=section.seed, batch_size=section.batch_size, workers=ctx.workers, progress=ctx.progress,
    )
    for kind, severity in result["undefined"]:
        ctx.warn(f"CE cell {kind}/{severity} is undefined (baseline error 0) and was excluded")

    write_rows(result["cells"], ctx.path("corruption.csv"), CORRUPTION_COLUMNS)
    ce_rows = [
        {"kind": kind, "ce": ce, "undefined_cells": sum(1 for c in result["undefined"] if c[0] == kind)}
        for kind, ce in result["ce"].items()
    ]
    ce_rows.append({"kind": "mCE", "ce": result["mce"], "undefined_cells": len(result["undefined"])})
    write_rows(ce_rows, ctx.path("ce.csv"), CE_COLUMNS)

    method = model.spec.variant.value
    report = [{"method": method, "metric": f"CE_{r['kind']}", "value": r["ce"]} for r in ce_rows[:-1]]
    report.append({"method": method, "metric": "mCE", "value": result["mce"]})
    text, _ = report_table(report)

    stats = {"mce": result["mce"], "ce": result["ce"], "undefined_cells": len(result["undefined"])}
    logger.info("[corrupt] complete: %s", stats)
    return {"status": "success", "table": text, **stats}
