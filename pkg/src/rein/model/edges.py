"""Edge inference: node time series -> categorical belief per directed pair."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .layers import MLP, dense_edges, edge_index, receiver_matrix


@dataclass
class EdgeBelief:
    """Per-directed-pair logits and the (relaxed or hard) sample actually used.

    Both are stored edge-list style, shape (B, E, K), with the edge order of
    :func:`rein.model.layers.edge_index`.
    """

    logits: torch.Tensor
    sample: torch.Tensor
    n_nodes: int

    @property
    def n_edges(self) -> int:
        return self.logits.shape[-2]

    def dense_logits(self) -> torch.Tensor:
        return dense_edges(self.logits, self.n_nodes)

    def dense_sample(self) -> torch.Tensor:
        return dense_edges(self.sample, self.n_nodes)

    def probs(self) -> torch.Tensor:
        """(B, n, n, K) edge-type probabilities with zero diagonal."""
        return dense_edges(torch.softmax(self.logits, dim=-1), self.n_nodes)

    def detach(self) -> "EdgeBelief":
        return EdgeBelief(self.logits.detach(), self.sample.detach(), self.n_nodes)


class EdgeInference(nn.Module):
    """Encode each node's whole series, then one node<->edge round.

    node series -> MLP -> pair concat -> MLP -> mean at receivers -> MLP
    -> pair concat with skip -> MLP -> logits over edge types.
    """

    def __init__(self, n_nodes: int, series_len: int, feat_dim: int, dim: int, edge_types: int):
        super().__init__()
        self.n_nodes = n_nodes
        self.series_len = series_len
        self.edge_types = edge_types
        send, recv = edge_index(n_nodes)
        self.register_buffer("send", send, persistent=False)
        self.register_buffer("recv", recv, persistent=False)
        rec = receiver_matrix(n_nodes)
        self.register_buffer("rec_mean", rec / max(n_nodes - 1, 1), persistent=False)
        self.node_mlp = MLP(series_len * feat_dim, dim, dim)
        self.edge_mlp = MLP(2 * dim, dim, dim)
        self.node_mlp2 = MLP(dim, dim, dim)
        self.edge_mlp2 = MLP(3 * dim, dim, dim)
        self.fc_out = nn.Linear(dim, edge_types)

    def forward(self, series):
        """``series``: (B, N, T, F) -> logits (B, E, K)."""
        b, n, t, _ = series.shape
        if t != self.series_len:
            raise ValueError(f"edge inference expects {self.series_len} frames, got {t}")
        if n < 2:
            return series.new_zeros(b, 0, self.edge_types)
        x = self.node_mlp(series.reshape(b, n, -1))
        e = self.edge_mlp(torch.cat([x[:, self.send], x[:, self.recv]], dim=-1))
        skip = e
        x = self.node_mlp2(self.rec_mean.to(e.dtype) @ e)
        e = self.edge_mlp2(torch.cat([x[:, self.send], x[:, self.recv], skip], dim=-1))
        return self.fc_out(e)
