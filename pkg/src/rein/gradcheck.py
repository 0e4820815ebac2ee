"""Finite-difference check of the full model's negative ELBO on a tiny problem."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .model.rein import REIN, ModelConfig
from .sim import SimParams, SystemKind, generate_episodes
from .tensorcore.autodiff import grad_check
from .tensorcore.stochastic import generator


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str | None
    worst_index: int | None
    n_coords: int
    seconds: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def toy_problem(seed: int = 0, n_objects: int = 2, frames: int = 5, neuron_dim: int = 8):
    """Double-precision model plus a short springs batch."""
    eps = generate_episodes(SystemKind.SPRINGS, n_objects, 2, frames, 100, seed, SimParams())
    obs = torch.from_numpy(np.stack([e.trajectory.states for e in eps])).double()
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = REIN(ModelConfig(n_objects=n_objects, neuron_dim=neuron_dim, heads=2, edge_types=2,
                                 context_len=frames)).double()
    model.set_normalization(obs)
    # zero-initialised output heads would hide the upstream gradients
    with torch.no_grad():
        for p in model.parameters():
            if not p.abs().sum():
                p.normal_(0.0, 0.1, generator=torch.Generator().manual_seed(seed + p.numel()))
    return model, obs


def run_gradcheck(seed: int = 0, h: float = 1e-6) -> GradCheckResult:
    model, obs = toy_problem(seed)
    params = dict(model.named_parameters())

    def loss():
        # re-seeding freezes every Gumbel and Gaussian draw across calls
        gen = generator(seed, "training")
        return model.elbo(obs, kl_weight=1.0, tau=1.0, hard=False, gen=gen).total

    start = time.time()
    err, name, idx = grad_check(loss, params, h=h, return_worst=True)
    return GradCheckResult(err, name, idx, sum(p.numel() for p in params.values()), time.time() - start)
