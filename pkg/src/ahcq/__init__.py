"""Post-training quantization toolkit: a hybrid log-uniform quantizer with
channel-aware grouping, block-wise reconstruction, and a bit-exact dual-PE
datapath simulator with a storage/energy cost model."""

from .errors import (
    AhcqError,
    ConfigError,
    DivergenceError,
    DomainError,
    FormatError,
    ParameterError,
    ShapeError,
    SimulationError,
)
from .tensor import ChannelStats, Tensor, channel_stats, matmul, read_container, write_container
from .quantizers import (
    HluqConfig,
    ParamSet,
    QuantParams,
    dequant,
    dequantize_tensor,
    fake_quant_tensor,
    hluq_dequant,
    hluq_quant,
    log2_biased_dequant,
    log2_biased_quant,
    log2_dequant,
    log2_quant,
    paramset_from_text,
    paramset_to_text,
    quant,
    quantize_tensor,
    uniform_dequant,
    uniform_quant,
)
from .calibration import (
    ChannelParamMatrix,
    HluqSearchSpace,
    SimilarityReport,
    cosine_similarity,
    hluq_grid_objectives,
    hluq_search,
    minmax_init,
    per_channel_search,
)
from .grouping import (
    GroupAssignment,
    MilestoneSchedule,
    apply_grouping,
    grouped_paramset,
    kmeans,
    progressive_cag,
    storage_cost,
)
from .reconstruction import (
    ReconConfig,
    ReconEngine,
    ReconState,
    ToyBlock,
    block_loss,
    forward_fp,
    forward_quant,
    reconstruct,
)
from .hwsim import (
    PeConfig,
    SimReport,
    cost_compare,
    inverse_reorder,
    reorder_channels,
    route,
    simulate_matmul,
)
from .datagen import FixtureSpec, gen, gen_toy_block

__version__ = "0.1.0"
