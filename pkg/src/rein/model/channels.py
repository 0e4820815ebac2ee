"""The three message channels feeding each neuron: upward, downward, peer."""
from __future__ import annotations

import math

import torch
import torch.nn as nn

from .layers import MLP, edge_index, receiver_matrix


class ConfigError(ValueError):
    pass


class ObservationEmbed(nn.Module):
    """Upward channel of the bottom level: embedding of the raw observation."""

    def __init__(self, state_dim: int, dim: int):
        super().__init__()
        self.mlp = MLP(state_dim, dim, dim)

    def forward(self, obs):
        return self.mlp(obs)


class UpwardPass(nn.Module):
    """Aggregate children into parents: per-child map, then attentive pooling.

    Each child contributes ``msg = skip(z_u) + MLP([z_u, r])`` where ``r`` is
    the child's previous recurrent state; parents take a softmax-weighted
    mean of their children's messages.
    """

    def __init__(self, membership: torch.Tensor, child_dim: int, dim: int):
        super().__init__()
        if (membership.sum(dim=1) == 0).any():
            raise ConfigError("every parent neuron needs at least one child")
        self.register_buffer("mask", membership > 0, persistent=False)
        self.skip = nn.Identity() if child_dim == dim else nn.Linear(child_dim, dim, bias=False)
        self.mlp = MLP(2 * child_dim, dim, dim)
        self.score = nn.Linear(dim, 1)

    def identity_init(self) -> None:
        """Make each child's message equal its upward embedding."""
        self.mlp.zero_output()

    def forward(self, z_u_child, r_child, return_weights: bool = False):
        msg = self.skip(z_u_child) + self.mlp(torch.cat([z_u_child, r_child], dim=-1))
        score = self.score(msg).squeeze(-1)  # (B, N_child)
        score = score.unsqueeze(-2).masked_fill(~self.mask, float("-inf"))
        weights = torch.softmax(score, dim=-1)  # (B, N_parent, N_child)
        out = weights @ msg
        return (out, weights) if return_weights else out


class ControlEmbed(nn.Module):
    """Downward channel of the top level: the embedded control signal."""

    def __init__(self, control_dim: int, dim: int):
        super().__init__()
        self.control_dim = control_dim
        if control_dim:
            self.proj = nn.Linear(control_dim, dim)
        else:
            self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, a, batch: int, n_neurons: int):
        if self.control_dim:
            out = self.proj(a)[:, None, :]
        else:
            out = self.bias[None, None, :]
        return out.expand(batch, n_neurons, -1)


class DownwardPass(nn.Module):
    """Multi-head attention: level-m queries read level-(m+1) keys/values."""

    def __init__(self, query_dim: int, parent_dim: int, dim: int, heads: int):
        super().__init__()
        if heads < 1 or dim % heads:
            raise ConfigError(f"heads={heads} must divide neuron_dim={dim}")
        self.heads = heads
        self.q = nn.Linear(query_dim, dim)
        self.k = nn.Linear(parent_dim, dim)
        self.v = nn.Linear(parent_dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, query_in, parent_in, return_weights: bool = False):
        b, nq, _ = query_in.shape
        nk = parent_in.shape[1]
        h = self.heads
        q = self.q(query_in).view(b, nq, h, -1).transpose(1, 2)
        k = self.k(parent_in).view(b, nk, h, -1).transpose(1, 2)
        v = self.v(parent_in).view(b, nk, h, -1).transpose(1, 2)
        weights = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1]), dim=-1)
        ctx = (weights @ v).transpose(1, 2).reshape(b, nq, -1)
        out = self.out(ctx)
        return (out, weights) if return_weights else out


class PeerPass(nn.Module):
    """Edge-typed message passing over a (sampled) relation graph.

    Type 0 means "no edge" and carries no message.  Messages for the other
    types come from their own MLP and are weighted by the edge sample, then
    summed at the receiver.
    """

    def __init__(self, n_nodes: int, node_dim: int, dim: int, edge_types: int):
        super().__init__()
        self.n_nodes = n_nodes
        self.edge_types = edge_types
        send, recv = edge_index(n_nodes)
        self.register_buffer("send", send, persistent=False)
        self.register_buffer("recv", recv, persistent=False)
        self.register_buffer("rec_mat", receiver_matrix(n_nodes), persistent=False)
        self.msg = nn.ModuleList(MLP(2 * node_dim, dim, dim) for _ in range(edge_types - 1))
        self.dim = dim

    def forward(self, x, edges):
        """``x``: (B, N, F) node features; ``edges``: (B, E, K) edge weights."""
        if edges.shape[-2] != self.send.numel() or edges.shape[-1] != self.edge_types:
            raise ValueError(f"edge belief shape {tuple(edges.shape)} does not match "
                             f"{self.n_nodes} nodes / {self.edge_types} types")
        if self.send.numel() == 0:
            return x.new_zeros(x.shape[:-1] + (self.dim,))
        pair = torch.cat([x[:, self.send], x[:, self.recv]], dim=-1)
        total = 0
        for k, mlp in enumerate(self.msg, start=1):
            total = total + edges[..., k:k + 1] * mlp(pair)
        return self.rec_mat.to(x.dtype) @ total
