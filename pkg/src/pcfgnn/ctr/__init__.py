"""
Downstream CTR model consuming explicit cross features.
"""

from pcfgnn.ctr.model import (
    CtrModel,
    CtrTrainResult,
    featurize,
    load_ctr_model,
    predict_batch,
    predict_ctr,
    save_ctr_model,
    train_ctr,
    write_predictions,
)

__all__ = [
    "CtrModel",
    "CtrTrainResult",
    "featurize",
    "load_ctr_model",
    "predict_batch",
    "predict_ctr",
    "save_ctr_model",
    "train_ctr",
    "write_predictions",
]
