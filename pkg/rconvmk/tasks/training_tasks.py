"""
Training and evaluation tasks
"""
import logging
from typing import Any, Dict, List

from rconvmk.cli.report import report_table, write_rows
from rconvmk.data.checkpoint import load_checkpoint, restore, save_checkpoint
from rconvmk.models.resnet import build_model, evaluate
from rconvmk.nn.optim import SGD
from rconvmk.robustness.training import TrainSettings, train_model
from rconvmk.tasks.context import RunContext
from rconvmk.tasks.common import attack_spec, configured_model, load_dataset

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.rcmk"
LOSS_CURVE_COLUMNS = ["step", "epoch", "loss", "lr"]


def metric_rows(method: str, metrics: Dict[str, Any]) -> List[Dict[str, Any]]:
    return [
        {"method": method, "metric": key, "value": metrics[key]}
        for key in ("top1_error", "top5_error", "loss", "n")
        if metrics.get(key) is not None
    ]


# ============================================================
# Train: fit a model, checkpoint it, score it on the test split
# ============================================================
def run_train(ctx: RunContext) -> Dict[str, Any]:
    """
    Train the configured model (adversarially when ``train.adversarial``).

    ``model.checkpoint`` resumes from saved weights and optimizer state with
    a fresh learning-rate schedule.
    """
    cfg = ctx.cfg
    spec = cfg.resolved_spec()
    logger.info("[train] Starting %s training: %d epochs, seed %d", spec.variant.value, cfg.train.epochs, ctx.seed)

    trainset = load_dataset(cfg, "train")
    testset = load_dataset(cfg, "test")
    model = build_model(spec, ctx.seed)
    optimizer = SGD(model.parameters(), cfg.train.lr, cfg.train.momentum, cfg.train.weight_decay)
    if cfg.model.checkpoint:
        restore(load_checkpoint(cfg.model.checkpoint), model, optimizer)
        optimizer.lr = cfg.train.lr
        logger.info("[train] Resuming from %s at step %d", cfg.model.checkpoint, optimizer.step_count)

    adversary = attack_spec(cfg.attack, "PGD") if cfg.train.adversarial else None
    history = train_model(
        model, trainset, TrainSettings.from_section(cfg.train), adversary,
        seed=ctx.seed, optimizer=optimizer, progress=ctx.progress,
    )
    metrics = evaluate(model, testset, cfg.train.eval_batch_size, ctx.workers)

    checkpoint = save_checkpoint(model, optimizer, ctx.path(CHECKPOINT_FILE), rng=history.rng,
                                 step=optimizer.step_count)
    write_rows(history.steps, ctx.path("loss_curve.csv"), LOSS_CURVE_COLUMNS)
    rows = metric_rows(spec.variant.value, metrics)
    text, csv = report_table(rows)
    ctx.path("metrics.csv").write_text(csv, encoding="utf-8")

    stats = {
        "steps": len(history.steps),
        "final_loss": history.final_loss,
        "checkpoint": str(checkpoint),
        "adversarial": adversary.label if adversary else None,
        **metrics,
    }
    logger.info("[train] complete: %s", stats)
    return {"status": "success", "table": text, **stats}


# ============================================================
# Eval: clean test-split metrics of a checkpoint
# ============================================================
def run_eval(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    logger.info("[eval] Starting evaluation of %s", cfg.model.checkpoint or "an untrained model")
    model = configured_model(ctx)
    testset = load_dataset(cfg, "test")
    metrics = evaluate(model, testset, cfg.train.eval_batch_size, ctx.workers)

    text, csv = report_table(metric_rows(model.spec.variant.value, metrics))
    ctx.path("metrics.csv").write_text(csv, encoding="utf-8")
    logger.info("[eval] complete: %s", metrics)
    return {"status": "success", "table": text, **metrics}
