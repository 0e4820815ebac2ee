"""Seeded streams and differentiable stochastic nodes."""
from __future__ import annotations


import numpy as np
import torch

Tensor = torch.Tensor

STREAMS = {"dataset": 0, "init": 1, "training": 2, "eval": 3}


def stream_seed(seed: int, stream: int | str) -> int:
    sid = STREAMS[stream] if isinstance(stream, str) else int(stream)
    ss = np.random.SeedSequence([int(seed), sid])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def generator(seed: int, stream: int | str = 0) -> torch.Generator:
    """Torch generator fully determined by ``(seed, stream)``."""
    g = torch.Generator()
    g.manual_seed(stream_seed(seed, stream))
    return g


def gumbel_softmax_sample(logits: Tensor, tau: float, hard: bool = False,
                          gen: torch.Generator | None = None, eps: float = 1e-20) -> Tensor:
    """Relaxed one-hot sample over the last axis.

    In hard mode the forward value is the one-hot argmax while gradients
    flow through the soft sample (straight-through).
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    u = torch.rand(logits.shape, generator=gen, dtype=logits.dtype)
    gumbel = -torch.log(-torch.log(u + eps) + eps)
    soft = torch.softmax((logits + gumbel) / tau, dim=-1)
    if not hard:
        return soft
    index = soft.argmax(dim=-1, keepdim=True)
    one_hot = torch.zeros_like(soft).scatter_(-1, index, 1.0)
    return (one_hot - soft).detach() + soft


def gaussian_reparameterize(mu: Tensor, logvar: Tensor, gen: torch.Generator | None = None,
                            noise: Tensor | None = None) -> Tensor:
    if mu.shape != logvar.shape:
        raise ValueError(f"mu shape {tuple(mu.shape)} != logvar shape {tuple(logvar.shape)}")
    if noise is None:
        noise = torch.randn(mu.shape, generator=gen, dtype=mu.dtype)
    return mu + torch.exp(0.5 * logvar) * noise


def kl_diag_gaussian(mu_q: Tensor, logvar_q: Tensor, mu_p: Tensor, logvar_p: Tensor,
                     dim: int | tuple[int, ...] | None = None) -> Tensor:
    """KL(q || p) for diagonal Gaussians, summed over ``dim`` (all dims if None)."""
    shapes = {tuple(t.shape) for t in (mu_q, logvar_q, mu_p, logvar_p)}
    if len(shapes) != 1:
        raise ValueError(f"kl_diag_gaussian: mismatched shapes {sorted(shapes)}")
    # expm1(d) - d vanishes exactly when the variances agree
    d = logvar_q - logvar_p
    kl = 0.5 * (torch.expm1(d) - d + (mu_q - mu_p) ** 2 * torch.exp(-logvar_p))
    if dim is None:
        return kl.sum()
    return kl.sum(dim=dim)


