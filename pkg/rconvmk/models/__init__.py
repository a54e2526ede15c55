from rconvmk.models.resnet import (
    PRESETS,
    Model,
    ModelSpec,
    build_model,
    conv_sites,
    count_model_params,
    evaluate,
    forward,
    preset_spec,
)

__all__ = [
    "PRESETS", "Model", "ModelSpec", "build_model", "conv_sites", "count_model_params",
    "evaluate", "forward", "preset_spec",
]
