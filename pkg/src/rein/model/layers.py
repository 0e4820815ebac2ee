from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class MLP(nn.Module):
    """Linear -> ELU -> Linear."""

    def __init__(self, n_in: int, n_hid: int, n_out: int):
        super().__init__()
        self.fc1 = nn.Linear(n_in, n_hid)
        self.fc2 = nn.Linear(n_hid, n_out)

    def forward(self, x):
        return self.fc2(F.elu(self.fc1(x)))

    def zero_output(self) -> None:
        nn.init.zeros_(self.fc2.weight)
        nn.init.zeros_(self.fc2.bias)


def edge_index(n: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Sender/receiver indices of all directed pairs i -> j, i != j, row-major."""
    send = [i for i in range(n) for j in range(n) if i != j]
    recv = [j for i in range(n) for j in range(n) if i != j]
    return torch.tensor(send, dtype=torch.long), torch.tensor(recv, dtype=torch.long)


def receiver_matrix(n: int) -> torch.Tensor:
    """(n, E) incidence matrix summing edge features onto receivers."""
    _, recv = edge_index(n)
    mat = torch.zeros(n, len(recv), dtype=torch.float64)
    mat[recv, torch.arange(len(recv))] = 1.0
    return mat


def dense_edges(values: torch.Tensor, n: int) -> torch.Tensor:
    """Scatter per-edge values (..., E, K) into (..., n, n, K) with zero diagonal."""
    send, recv = edge_index(n)
    out = values.new_zeros(values.shape[:-2] + (n, n, values.shape[-1]))
    out[..., send, recv, :] = values
    return out
