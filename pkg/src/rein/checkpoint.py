"""Model + optimizer checkpoints.

The sidecar records the model kind and hyperparameters, so a checkpoint
alone is enough to rebuild the architecture.
"""
from __future__ import annotations

import torch

from .baselines import GTGraphMLP, JointLSTM
from .model.rein import REIN, ModelConfig
from .tensorcore.checkpoint import (CheckpointError, decode_bytes, encode_bytes, load_into, load_tensors,
                                    save_tensors)

MODEL_KINDS = ("rein", "lstm", "gtgraph")


def build_model(kind: str, hparams: dict, precision: str = "single"):
    if kind == "rein":
        model = REIN(ModelConfig(**hparams))
    elif kind == "lstm":
        model = JointLSTM(**hparams)
    elif kind == "gtgraph":
        model = GTGraphMLP(**hparams)
    else:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return model.double() if precision == "double" else model


def model_kind(model) -> str:
    if isinstance(model, REIN):
        return "rein"
    if isinstance(model, JointLSTM):
        return "lstm"
    if isinstance(model, GTGraphMLP):
        return "gtgraph"
    raise TypeError(f"unsupported model type {type(model).__name__}")


def save_checkpoint(stem, model, trainer=None, extra: dict | None = None) -> None:
    tensors = {f"param:{k}": v for k, v in model.state_dict().items()}
    meta = {
        "kind": model_kind(model),
        "hparams": model.hparams,
        "precision": "double" if model.dtype == torch.float64 else "single",
        "step": 0,
    }
    if trainer is not None:
        st = trainer.opt.state
        for name in trainer.opt.params:
            if name in st.m:
                tensors[f"m:{name}"] = st.m[name]
                tensors[f"v:{name}"] = st.v[name]
        meta["step"] = st.step
        meta["trainer"] = trainer.state()
        meta["rng"] = {"training": encode_bytes(trainer.gen.get_state())}
    if extra:
        meta["extra"] = extra
    save_tensors(stem, tensors, meta)


def load_checkpoint(stem, expect: dict | None = None):
    """Rebuild the model from a checkpoint.  Returns ``(model, meta, tensors)``.

    ``expect`` optionally pins hyperparameters (e.g. ``{"neuron_dim": 32}``);
    a mismatch raises :class:`CheckpointError` naming the key.
    """
    tensors, meta = load_tensors(stem)
    hp = dict(meta["hparams"])
    for key, val in (expect or {}).items():
        if key in hp and hp[key] != val:
            raise CheckpointError(f"hyperparameter {key}: checkpoint has {hp[key]!r}, expected {val!r}")
    model = build_model(meta["kind"], hp, meta.get("precision", "single"))
    load_into(model, {k[6:]: v for k, v in tensors.items() if k.startswith("param:")})
    return model, meta, tensors


def restore_trainer(trainer, stem) -> dict:
    """Load model weights, optimizer moments and RNG state into ``trainer``."""
    tensors, meta = load_tensors(stem)
    if "trainer" not in meta:
        raise CheckpointError(f"{stem} carries no optimizer state")
    load_into(trainer.model, {k[6:]: v for k, v in tensors.items() if k.startswith("param:")})
    moments = {k: v for k, v in tensors.items() if k[:2] in ("m:", "v:")}
    trainer.load_state(meta["trainer"], moments, decode_bytes(meta["rng"]["training"]))
    return meta
