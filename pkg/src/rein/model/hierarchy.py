"""Part-whole partition of objects into levels of neurons."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


class HierarchyError(ValueError):
    pass


@dataclass(frozen=True)
class HierarchySpec:
    """Levels of neurons; level 0 holds one neuron per object.

    ``parents[m - 1][i]`` is the level-``m`` parent of neuron ``i`` at level
    ``m - 1``.  The top level has a single neuron.
    """

    sizes: tuple[int, ...]
    parents: tuple[tuple[int, ...], ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) < 1 or len(self.dims) != len(self.sizes):
            raise HierarchyError("need one size and one neuron_dim per level")
        if len(self.parents) != len(self.sizes) - 1:
            raise HierarchyError("need a parent map for every level above the bottom")
        if len(self.sizes) > 1 and self.sizes[-1] != 1:
            raise HierarchyError(f"top level must have exactly one neuron, got {self.sizes[-1]}")
        for m, parent in enumerate(self.parents, start=1):
            if len(parent) != self.sizes[m - 1]:
                raise HierarchyError(f"level {m - 1} has {self.sizes[m - 1]} neurons but {len(parent)} parent entries")
            if any(not 0 <= p < self.sizes[m] for p in parent):
                raise HierarchyError(f"parent index out of range at level {m}")
            empty = set(range(self.sizes[m])) - set(parent)
            if empty:
                raise HierarchyError(f"level {m} neurons {sorted(empty)} have no children")

    @property
    def n_levels(self) -> int:
        return len(self.sizes)

    @classmethod
    def physical(cls, n_objects: int, dim: int) -> "HierarchySpec":
        """Two levels: objects and the whole system."""
        return cls((n_objects, 1), ((0,) * n_objects,), (dim, dim))

    @classmethod
    def grouped(cls, groups: list[int], dim: int) -> "HierarchySpec":
        """Three levels: objects, the groups given by ``groups[i]``, the whole."""
        n_groups = max(groups) + 1
        return cls((len(groups), n_groups, 1), (tuple(groups), (0,) * n_groups), (dim,) * 3)

    def membership(self, level: int) -> torch.Tensor:
        """(N_level, N_{level-1}) 0/1 matrix of parent/child links."""
        parent = np.asarray(self.parents[level - 1])
        mat = np.zeros((self.sizes[level], self.sizes[level - 1]))
        mat[parent, np.arange(len(parent))] = 1.0
        return torch.as_tensor(mat)

    def descendants(self, level: int) -> torch.Tensor:
        """(N_level, N_0) row-normalised averaging matrix over bottom neurons."""
        mat = torch.eye(self.sizes[0], dtype=torch.float64)
        for m in range(1, level + 1):
            mat = self.membership(m) @ mat
        return mat / mat.sum(dim=1, keepdim=True)

    def permuted(self, perm) -> "HierarchySpec":
        """Spec after relabelling bottom neuron ``perm[k]`` as ``k``."""
        if self.n_levels == 1:
            return self
        first = tuple(self.parents[0][p] for p in perm)
        return HierarchySpec(self.sizes, (first,) + self.parents[1:], self.dims)
