"""Reference predictors: Static, a joint LSTM, and a ground-truth-graph MLP."""
from __future__ import annotations

import enum
import math

import torch
import torch.nn as nn

from .model.channels import PeerPass
from .model.layers import MLP, edge_index


class BaselineKind(str, enum.Enum):
    STATIC = "static"
    JOINT_LSTM = "lstm"
    GT_GRAPH = "gtgraph"


def static_predict(context: torch.Tensor, horizon: int) -> torch.Tensor:
    """Repeat the last observed frame ``horizon`` times: (B, T, ...) -> (B, H, ...)."""
    if context.shape[1] < 1:
        raise ValueError("static_predict needs a non-empty context")
    last = context[:, -1:]
    return last.expand(-1, horizon, *last.shape[2:]).clone()


class _Markov(nn.Module):
    """Shared scaffolding: normalisation and teacher-forced training loss."""

    def _setup_scale(self, state_dim: int) -> None:
        self.register_buffer("scale", torch.ones(state_dim))

    def set_normalization(self, data) -> None:
        data = torch.as_tensor(data, dtype=torch.float64)
        half = self.state_dim // 2
        scale = [data[..., :half].std().item()] * half + [data[..., half:].std().item()] * (self.state_dim - half)
        self.scale.copy_(torch.tensor(scale))

    @property
    def dtype(self):
        return self.scale.dtype

    def param_groups(self) -> dict[str, str]:
        return {name: "theta" for name, _ in self.named_parameters()}

    def sequence_loss(self, obs, aux=None):
        x = obs.to(self.dtype) / self.scale
        state = self.init_state(x.shape[0])
        pred, losses = None, []
        period = max(self.teacher_every, 1)
        for t in range(x.shape[1] - 1):
            inp = x[:, t] if t % period == 0 else pred
            pred, state = self.step(state, inp, aux)
            losses.append(((pred - x[:, t + 1]) ** 2).sum(dim=(1, 2)).mean())
        return torch.stack(losses)

    @torch.no_grad()
    def _rollout(self, context, horizon, aux=None):
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        x = context.to(self.dtype) / self.scale
        b, t0 = x.shape[:2]
        if horizon == 0:
            return x.new_zeros((b, 0) + tuple(x.shape[2:]))
        state = self.init_state(b)
        out, pred = [], None
        for t in range(t0 + horizon - 1):
            inp = x[:, t] if t < t0 else pred
            pred, state = self.step(state, inp, aux)
            if t >= t0 - 1:
                out.append(pred)
        return torch.stack(out, dim=1) * self.scale


class JointLSTM(_Markov):
    """One LSTM over the concatenated state of all objects."""

    def __init__(self, n_objects: int, state_dim: int = 4, hidden: int = 256, teacher_every: int = 10):
        super().__init__()
        self.n_objects, self.state_dim, self.hidden = n_objects, state_dim, hidden
        self.teacher_every = teacher_every
        self.hparams = {"n_objects": n_objects, "state_dim": state_dim, "hidden": hidden,
                        "teacher_every": teacher_every}
        width = n_objects * state_dim
        self.inp = nn.Linear(width, hidden)
        self.cell = nn.LSTMCell(hidden, hidden)
        self.out = nn.Linear(hidden, width)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)
        self._setup_scale(state_dim)

    @staticmethod
    def hidden_for_budget(n_params: int, n_objects: int, state_dim: int = 4) -> int:
        """Largest hidden size whose parameter count stays within ``n_params``."""
        w = n_objects * state_dim
        # inp: w*h + h; cell: 4h(h + h) + 8h; out: h*w + w
        a, b, c = 8, 2 * w + 9, w - n_params
        return max(1, int((-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)))

    def init_state(self, batch):
        z = torch.zeros(batch, self.hidden, dtype=self.dtype)
        return z, z.clone()

    def step(self, state, x, aux=None):
        b = x.shape[0]
        h, c = self.cell(torch.tanh(self.inp(x.reshape(b, -1))), state)
        return x + self.out(h).view_as(x), (h, c)

    def training_loss(self, batch, tau=None, kl_weight=None, gen=None):
        losses = self.sequence_loss(batch["obs"])
        return losses.sum(), {"recon": losses.sum().detach()}

    def rollout(self, context, horizon, **_):
        return self._rollout(context, horizon)


def gt_edges(edge_type: torch.Tensor, edge_types: int) -> torch.Tensor:
    """(B, n, n) integer labels -> (B, E, K) one-hot per directed pair."""
    if edge_type is None:
        raise ValueError("ground-truth edge labels are required")
    n = edge_type.shape[-1]
    send, recv = edge_index(n)
    labels = edge_type[:, send, recv].long()
    return nn.functional.one_hot(labels, edge_types)


class GTGraphMLP(_Markov):
    """Markovian message-passing MLP driven by the true relation graph."""

    def __init__(self, n_objects: int, state_dim: int = 4, hidden: int = 64, edge_types: int = 2,
                 teacher_every: int = 10):
        super().__init__()
        self.n_objects, self.state_dim, self.edge_types = n_objects, state_dim, edge_types
        self.teacher_every = teacher_every
        self.hparams = {"n_objects": n_objects, "state_dim": state_dim, "hidden": hidden,
                        "edge_types": edge_types, "teacher_every": teacher_every}
        self.peer = PeerPass(n_objects, state_dim, hidden, edge_types)
        self.out = MLP(state_dim + hidden, hidden, state_dim)
        self.out.zero_output()
        self._setup_scale(state_dim)

    def init_state(self, batch):
        return None

    def step(self, state, x, edges):
        agg = self.peer(x, edges)
        return x + self.out(torch.cat([x, agg], dim=-1)), None

    def training_loss(self, batch, tau=None, kl_weight=None, gen=None):
        edges = gt_edges(batch.get("edge_type"), self.edge_types).to(self.dtype)
        losses = self.sequence_loss(batch["obs"], edges)
        return losses.sum(), {"recon": losses.sum().detach()}

    def rollout(self, context, horizon, edge_type=None, **_):
        edges = gt_edges(edge_type, self.edge_types).to(self.dtype)
        return self._rollout(context, horizon, edges)


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
