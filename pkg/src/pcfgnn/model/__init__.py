"""
Cross-feature graph network: parameters, forward pass, checkpoints.
"""

from pcfgnn.model.encoder import (
    EncodeOutput,
    aggregate,
    backprop_pairs,
    combine,
    cross_predict,
    encode,
    infer_pair,
    predict_pairs,
    sigmoid,
)
from pcfgnn.model.params import (
    GradientSet,
    PcfParams,
    init_params,
    load_checkpoint,
    params_checksum,
    save_checkpoint,
)

__all__ = [
    "EncodeOutput",
    "GradientSet",
    "PcfParams",
    "aggregate",
    "backprop_pairs",
    "combine",
    "cross_predict",
    "encode",
    "infer_pair",
    "init_params",
    "load_checkpoint",
    "params_checksum",
    "predict_pairs",
    "save_checkpoint",
    "sigmoid",
]
