from . import ops
from .autodiff import backward, grad_check
from .optim import Adam, AdamState, NonFiniteGradientError, adam_step, clip_grad_norm
from .stochastic import (gaussian_reparameterize, generator, gumbel_softmax_sample,
                         kl_diag_gaussian, stream_seed)

__all__ = [
    "ops", "backward", "grad_check", "Adam", "AdamState", "NonFiniteGradientError",
    "adam_step", "clip_grad_norm", "gaussian_reparameterize", "generator",
    "gumbel_softmax_sample", "kl_diag_gaussian", "stream_seed",
]
