"""Shape-checked tensor operations.

Thin layer over torch: every op validates shapes up front and raises
:class:`ShapeError` naming the op and the offending shapes.  Gradients are
recorded by torch's tape whenever an input requires grad.
"""
from __future__ import annotations

from typing import Sequence

import torch

Tensor = torch.Tensor

PRECISIONS = {"single": torch.float32, "double": torch.float64}


class ShapeError(ValueError):
    pass


def dtype_for(precision: str) -> torch.dtype:
    try:
        return PRECISIONS[precision]
    except KeyError:
        raise ValueError(f"precision must be one of {sorted(PRECISIONS)}, got {precision!r}") from None


def tensor(data, requires_grad: bool = False, precision: str = "double") -> Tensor:
    return torch.tensor(data, dtype=dtype_for(precision), requires_grad=requires_grad)


def _broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeError(f"{op}: incompatible shapes {tuple(a.shape)} and {tuple(b.shape)}") from None


def _axis(op: str, x: Tensor, axis: int) -> None:
    if not -x.dim() <= axis < max(x.dim(), 1):
        raise ShapeError(f"{op}: axis {axis} out of range for shape {tuple(x.shape)}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast("add", a, b)
    return a + b


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast("sub", a, b)
    return a - b


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast("mul", a, b)
    return a * b


def div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast("div", a, b)
    return a / b


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.dim() < 2 or b.dim() < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {tuple(a.shape)} and {tuple(b.shape)}")
    try:
        torch.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except RuntimeError:
        raise ShapeError(f"matmul: incompatible batch shapes {tuple(a.shape)} and {tuple(b.shape)}") from None
    return a @ b


def exp(x: Tensor) -> Tensor:
    return torch.exp(x)


def log(x: Tensor) -> Tensor:
    return torch.log(x)


def tanh(x: Tensor) -> Tensor:
    return torch.tanh(x)


def sigmoid(x: Tensor) -> Tensor:
    return torch.sigmoid(x)


def relu(x: Tensor) -> Tensor:
    return torch.relu(x)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _axis("softmax", x, axis)
    return torch.softmax(x, dim=axis)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not xs:
        raise ShapeError("concat: empty input list")
    ref = xs[0]
    _axis("concat", ref, axis)
    ax = axis % ref.dim()
    for x in xs[1:]:
        if x.dim() != ref.dim() or any(
            d != r for i, (d, r) in enumerate(zip(x.shape, ref.shape)) if i != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {tuple(ref.shape)} and {tuple(x.shape)} on axis {axis}")
    return torch.cat(list(xs), dim=axis)


def slice_(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    _axis("slice", x, axis)
    size = x.shape[axis]
    if not 0 <= start <= stop <= size:
        raise ShapeError(f"slice: range [{start}, {stop}) invalid for axis {axis} of shape {tuple(x.shape)}")
    return x.narrow(axis, start, stop - start)


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        return x.sum()
    _axis("reduce_sum", x, axis)
    return x.sum(dim=axis)


def reduce_mean(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        return x.mean()
    _axis("reduce_mean", x, axis)
    return x.mean(dim=axis)


def broadcast(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        return x.expand(*shape)
    except RuntimeError:
        raise ShapeError(f"broadcast: cannot broadcast {tuple(x.shape)} to {tuple(shape)}") from None
