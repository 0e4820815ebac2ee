"""Reverse-mode gradients and a finite-difference checker."""
from __future__ import annotations

from typing import Callable, Mapping

import torch

Tensor = torch.Tensor


def backward(loss: Tensor, params: Mapping[str, Tensor] | None = None) -> dict[str, Tensor]:
    """Backpropagate a scalar ``loss``; returns ``{name: grad}`` for ``params``.

    Gradients accumulate into ``.grad`` as usual; the graph is freed.
    """
    if loss.numel() != 1 or loss.dim() > 1:
        raise ValueError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    loss.reshape(()).backward()
    if params is None:
        return {}
    return {
        name: (p.grad.clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in params.items()
    }


def grad_check(f: Callable[[], Tensor], params: Mapping[str, Tensor], h: float = 1e-5,
               return_worst: bool = False):
    """Compare reverse-mode gradients of ``f()`` against central differences.

    ``f`` takes no arguments and reads ``params`` (which it must treat as
    its inputs); any randomness inside it has to be frozen.  Every
    coordinate is perturbed.  Relative error per coordinate is
    ``|a - n| / max(1, |a|, |n|)``; the maximum is returned.
    """
    for p in params.values():
        p.grad = None
    loss = f()
    analytic = backward(loss, params)
    worst = (0.0, None, None)
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            g = analytic[name].reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = f().item()
                flat[i] = orig - h
                down = f().item()
                flat[i] = orig
                num = (up - down) / (2 * h)
                ana = g[i].item()
                err = abs(ana - num) / max(1.0, abs(ana), abs(num))
                if err > worst[0] or worst[1] is None:
                    worst = (err, name, i)
    return worst if return_worst else worst[0]
