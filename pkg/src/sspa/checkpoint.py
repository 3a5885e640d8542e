"""Save/restore model parameters and EMA shadows as .npz archives."""

from __future__ import annotations

import numpy as np

from .model import ModelConfig, SspaParams, init_params, named_parameters
from .optim import EmaState, ema_weights


def save_params(path, params: SspaParams, ema: EmaState | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, node in named_parameters(params).items():
        arrays[f"param.{name}"] = node.data
    if params.bank is not None:
        arrays["frozen.bank.words"] = params.bank.word_embeddings.data
        arrays["frozen.encoder_proj"] = params.encoder_proj.data
    if ema is not None:
        arrays["ema.decay"] = np.asarray(ema.decay)
        for name, averaged in ema_weights(ema).items():
            arrays[f"ema.shadow.{name}"] = averaged
    np.savez(path, **arrays)


def load_params(path, cfg: ModelConfig, use_ema: bool = True) -> SspaParams:
    """Rebuild parameters for ``cfg`` and overwrite them with stored arrays.

    When the archive carries EMA shadows and ``use_ema`` is set, shadow
    values replace the raw weights (evaluation always runs on EMA weights).
    """
    archive = np.load(path)
    params = init_params(cfg)
    named = named_parameters(params)
    for name, node in named.items():
        stored = archive[f"param.{name}"]
        if stored.shape != node.data.shape:
            raise ValueError(f"parameter '{name}' shape {stored.shape} != {node.data.shape}")
        node.data = stored.astype(np.float64)
    if params.bank is not None:
        params.bank.word_embeddings.data = archive["frozen.bank.words"].astype(np.float64)
        params.encoder_proj.data = archive["frozen.encoder_proj"].astype(np.float64)
    if use_ema:
        for name, node in named.items():
            key = f"ema.shadow.{name}"
            if key in archive:
                node.data = archive[key].astype(np.float64)
    return params
