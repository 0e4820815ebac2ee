"""Adam with bias correction, plus global-norm gradient clipping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import torch

Tensor = torch.Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, group: str, name: str):
        self.group = group
        self.name = name
        super().__init__(f"non-finite gradient in parameter group {group!r} ({name})")


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, Tensor] = field(default_factory=dict)
    v: dict[str, Tensor] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, Tensor], state: AdamState,
              groups: Mapping[str, str] | None = None) -> AdamState:
    """Apply one Adam update in place to ``params``; returns ``state``.

    ``groups`` maps parameter name to its group, used only for error
    reporting.
    """
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise NonFiniteGradientError((groups or {}).get(name, "?"), name)
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    with torch.no_grad():
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)} for {name}")
            m = state.m.setdefault(name, torch.zeros_like(p))
            v = state.v.setdefault(name, torch.zeros_like(p))
            m.mul_(state.beta1).add_(g, alpha=1 - state.beta1)
            v.mul_(state.beta2).addcmul_(g, g, value=1 - state.beta2)
            denom = (v / c2).sqrt_().add_(state.eps)
            p.addcdiv_(m, denom, value=-state.lr / c1)
    return state


def clip_grad_norm(grads: Mapping[str, Tensor], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(g.double().pow(2).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g.mul_(scale)
    return total


class Adam:
    """Adam over a named parameter registry split into groups."""

    def __init__(self, named_params: Mapping[str, Tensor], groups: Mapping[str, str] | None = None,
                 lr: float = 5e-4, betas=(0.9, 0.999), eps: float = 1e-8, clip_norm: float | None = 5.0):
        self.params = dict(named_params)
        self.groups = dict(groups or {})
        self.clip_norm = clip_norm
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> float:
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        norm = clip_grad_norm(grads, self.clip_norm) if self.clip_norm else math.nan
        adam_step(self.params, grads, self.state, self.groups)
        return norm
