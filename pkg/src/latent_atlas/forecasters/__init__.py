"""Neural forecasters of dynamical systems and their training utilities."""

from .models import (
    FAMILIES,
    MODEL_ORDER,
    PROPAGATORS,
    TRUE_SYSTEM,
    EchoStateNetwork,
    Forecaster,
    ForecasterSpec,
    TrueSystem,
    build_model,
    ridge_solve,
)
from .training import (
    EvalReport,
    ForecasterCheckpoint,
    LatentMatrix,
    collect_latents,
    decode,
    encode,
    error_report,
    evaluate,
    fit,
    load_bundle,
    load_checkpoint,
    perturb_inputs,
    predict,
    propagate,
    save_bundle,
    train,
)

__all__ = [
    "FAMILIES", "MODEL_ORDER", "PROPAGATORS", "TRUE_SYSTEM", "EchoStateNetwork", "EvalReport",
    "Forecaster", "ForecasterCheckpoint", "ForecasterSpec", "LatentMatrix", "TrueSystem",
    "build_model", "collect_latents", "decode", "encode", "error_report", "evaluate", "fit",
    "load_bundle", "load_checkpoint", "perturb_inputs", "predict", "propagate", "ridge_solve",
    "save_bundle", "train",
]
