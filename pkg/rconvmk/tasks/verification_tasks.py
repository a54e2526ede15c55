"""
Verification tasks: layer gradient checks and model inspection
"""
import logging
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np

from rconvmk.blocks.rconv import RConvBlock, RConvConfig, block_summary, build_block
from rconvmk.cli.report import report_table, write_rows
from rconvmk.engine.gradcheck import gradcheck
from rconvmk.engine.tensor import Tensor
from rconvmk.errors import GradcheckError
from rconvmk.models.resnet import build_model, conv_sites, count_model_params
from rconvmk.nn.conv import conv2d
from rconvmk.nn.functional import soft_threshold
from rconvmk.nn.norm import BatchNorm2d, NSTState, batch_norm, nst_forward, sample_norm
from rconvmk.tasks.context import RunContext

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2)
GRADCHECK_COLUMNS = ["layer", "seed", "max_rel_err", "passed", "checked", "excluded"]
INSPECT_COLUMNS = ["site", "variant", "total", "t_r", "t_c", "t_s", "extra_vs_lst"]
PARTITION_COLUMNS = ["site", "branch", "kernel", "channels", "in_channels", "out_channels"]

Case = Tuple[str, Callable[[Tensor], Tensor], np.ndarray]


def layer_suite(seed: int) -> List[Case]:
    """
    (name, f, x) cases in float64: conv2d in every group mode plus its
    weight gradient, the normalizers, soft thresholding, NST and a full
    multi-kernel block.
    """
    rng = np.random.default_rng([seed, 7])
    x = rng.standard_normal((2, 4, 5, 5))

    def conv_case(c_out: int, groups: int, stride: int) -> Callable[[Tensor], Tensor]:
        w = Tensor(rng.standard_normal((c_out, 4 // groups, 3, 3)))
        b = Tensor(rng.standard_normal(c_out))
        return lambda t: conv2d(t, w, b, stride=stride, padding=1, groups=groups)

    w_shape = (6, 4, 3, 3)
    bn = BatchNorm2d(4, dtype=np.float64)
    nst = NSTState(4, dtype=np.float64)
    block = build_block(RConvConfig(c_in=4, c_out=8, k=3, a=2), rng_seed=[seed, 11], dtype=np.float64)

    return [
        ("conv2d", conv_case(6, 1, 1), x),
        ("conv2d-grouped", conv_case(6, 2, 1), x),
        ("conv2d-depthwise", conv_case(4, 4, 1), x),
        ("conv2d-strided", conv_case(6, 1, 2), x),
        ("conv2d-weight", lambda w: conv2d(Tensor(x), w, padding=1), rng.standard_normal(w_shape)),
        ("sample_norm", sample_norm, x),
        ("batch_norm", lambda t: batch_norm(t, bn), x),
        ("soft_threshold", lambda t: soft_threshold(t, 0.1), x),
        ("nst", lambda t: nst_forward(t, nst), x),
        ("rconv-mk-block", block, x),
    ]


def run_suite(seeds: Sequence[int] = DEFAULT_SEEDS) -> List[Dict[str, Any]]:
    rows = []
    for seed in seeds:
        for name, f, x in layer_suite(seed):
            report = gradcheck(f, Tensor(x, dtype=np.float64), seed=seed)
            rows.append({"layer": name, "seed": seed, **report.as_row()})
            logger.debug("gradcheck %s seed=%d: %s", name, seed, report)
    return rows


# ============================================================
# Gradcheck: finite-difference check of every layer
# ============================================================
def run_gradcheck(ctx: RunContext) -> Dict[str, Any]:
    logger.info("[gradcheck] Starting layer suite over seeds %s", list(DEFAULT_SEEDS))
    rows = run_suite(DEFAULT_SEEDS)
    write_rows(rows, ctx.path("gradcheck.csv"), GRADCHECK_COLUMNS)
    text, _ = report_table(
        {"method": r["layer"], "metric": f"max_rel_err[seed={r['seed']}]", "value": r["max_rel_err"]} for r in rows
    )

    failed = sorted({r["layer"] for r in rows if not r["passed"]})
    stats = {"cases": len(rows), "failed": failed}
    logger.info("[gradcheck] complete: %s", stats)
    if failed:
        raise GradcheckError(f"gradient check failed for {', '.join(failed)}")
    return {"status": "success", "table": text, **stats}


# ============================================================
# Inspect: parameter accounting and frequency partition
# ============================================================
def run_inspect(ctx: RunContext) -> Dict[str, Any]:
    spec = ctx.cfg.resolved_spec()
    logger.info("[inspect] Starting %s model inspection", spec.variant.value)
    model = build_model(spec, ctx.seed)

    counts = count_model_params(model)
    partitions = []
    for site, module in conv_sites(model).items():
        if isinstance(module, RConvBlock):
            partitions.extend({"site": site, **row} for row in block_summary(module))
    write_rows(counts, ctx.path("inspect.csv"), INSPECT_COLUMNS)
    write_rows(partitions, ctx.path("partition.csv"), PARTITION_COLUMNS)

    blocks = [r for r in counts if r["site"] not in ("total", "stem", "head") and not r["site"].endswith("shortcut")]
    text, _ = report_table(
        [{"method": r["site"], "metric": "extra_vs_lst", "value": r["extra_vs_lst"]} for r in blocks]
        + [{"method": "total", "metric": "parameters", "value": counts[-1]["total"]}]
    )
    stats = {"parameters": counts[-1]["total"], "blocks": len(blocks),
             "extra_vs_lst": sorted({r["extra_vs_lst"] for r in blocks})}
    logger.info("[inspect] complete: %s", stats)
    return {"status": "success", "table": text, **stats}
