from ._core import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    Error,
    FormatError,
    IoError,
    MambaHashNet,
    ModelConfig,
    NumericError,
    TrainConfig,
    discretize_zoh,
    enhancement_ratio,
    hamming_distances,
    mean_average_precision,
    pack_codes,
    pair_nll,
    quantization_loss,
    run_command,
    search_topk,
    selective_scan,
    total_loss,
)

__all__ = [name for name in dir() if not name.startswith("_")]
