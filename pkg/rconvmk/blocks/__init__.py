from rconvmk.blocks.dct import dct2_filters, dct_matrix, zigzag_order
from rconvmk.blocks.partition import partition_channels
from rconvmk.blocks.rconv import (
    RConvBlock,
    RConvConfig,
    Variant,
    block_forward,
    block_summary,
    build_block,
    count_params,
)

__all__ = [
    "RConvBlock", "RConvConfig", "Variant", "block_forward", "block_summary", "build_block",
    "count_params", "dct2_filters", "dct_matrix", "partition_channels", "zigzag_order",
]
