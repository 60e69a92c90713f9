"""Differentiable 1-D tensor kernels.

All kernels operate on (batch, channel, time) tensors.  torch supplies the
tensor arithmetic and reverse-mode differentiation; everything on top
(shape contracts, phase shuffle, the network graphs in ``models``) is local
code.  Kernels are pure functions of their inputs: given the same tensors
and rng state they return bit-identical results on CPU.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np
import torch

from ..errors import DimensionError, NumericError, UserInputError


def as_tensor3(x, dtype=None) -> torch.Tensor:
    """Coerce an array to a (B, C, T) torch tensor."""
    t = torch.as_tensor(np.asarray(x) if not isinstance(x, torch.Tensor) else x)
    if dtype is not None:
        t = t.to(dtype)
    if t.dim() == 1:
        t = t.reshape(1, 1, -1)
    if t.dim() != 3:
        raise DimensionError(f"expected a (B, C, T) tensor, got shape {tuple(t.shape)}")
    return t


def same_pad(kernel_width: int, stride: int) -> int:
    """Symmetric padding that keeps T_out = T_in / stride for stride-divisible T."""
    pad = -(-(kernel_width - stride) // 2)  # ceil
    if not 0 <= 2 * pad - (kernel_width - stride) < stride:
        raise UserInputError(
            f"kernel width {kernel_width} / stride {stride} admits no same-style padding"
        )
    return pad


def conv1d(x, weights, bias, stride: int, pad: int) -> torch.Tensor:
    """Strided cross-correlation; T_out = floor((T + 2*pad - K)/stride) + 1."""
    x = as_tensor3(x)
    weights = torch.as_tensor(weights)
    if weights.dim() != 3:
        raise DimensionError(f"conv1d weights must be (C_out, C_in, K), got {tuple(weights.shape)}")
    if x.shape[1] != weights.shape[1]:
        raise DimensionError(
            f"conv1d channel mismatch: input has {x.shape[1]}, weights expect {weights.shape[1]}"
        )
    if bias is not None:
        bias = torch.as_tensor(bias)
        if bias.shape != (weights.shape[0],):
            raise DimensionError(f"conv1d bias must have {weights.shape[0]} entries")
    t_out = (x.shape[2] + 2 * pad - weights.shape[2]) // stride + 1
    if t_out < 1:
        raise DimensionError(
            f"conv1d output would be empty (T={x.shape[2]}, K={weights.shape[2]}, pad={pad})"
        )
    return torch.nn.functional.conv1d(x, weights, bias, stride=stride, padding=pad)


def conv1d_transposed(x, weights, bias, stride: int, pad: int, out_len: int | None = None) -> torch.Tensor:
    """Adjoint of ``conv1d`` with shared weights.

    ``weights`` has the forward layout (C_out, C_in, K); input channels here
    are C_out.  ``out_len`` selects among the stride-many input lengths the
    forward map could have had (defaults to the smallest).
    """
    x = as_tensor3(x)
    weights = torch.as_tensor(weights)
    if weights.dim() != 3:
        raise DimensionError(f"weights must be 3-D, got {tuple(weights.shape)}")
    if x.shape[1] != weights.shape[0]:
        raise DimensionError(
            f"transposed-conv channel mismatch: input has {x.shape[1]}, weights expect {weights.shape[0]}"
        )
    if bias is not None:
        bias = torch.as_tensor(bias)
        if bias.shape != (weights.shape[1],):
            raise DimensionError(f"bias must have {weights.shape[1]} entries")
    base = (x.shape[2] - 1) * stride - 2 * pad + weights.shape[2]
    output_padding = 0
    if out_len is not None:
        output_padding = out_len - base
        if not 0 <= output_padding < stride:
            raise DimensionError(
                f"out_len {out_len} unreachable from T={x.shape[2]} "
                f"(base {base}, stride {stride})"
            )
    return torch.nn.functional.conv_transpose1d(
        x, weights, bias, stride=stride, padding=pad, output_padding=output_padding
    )


def leaky_relu(x, slope: float) -> torch.Tensor:
    x = torch.as_tensor(x)
    return torch.nn.functional.leaky_relu(x, negative_slope=slope)


def dense(x, weights, bias) -> torch.Tensor:
    """Affine map on the last axis: y = x @ W^T + b."""
    x = torch.as_tensor(x)
    weights = torch.as_tensor(weights)
    if x.shape[-1] != weights.shape[1]:
        raise DimensionError(
            f"dense expects {weights.shape[1]} input features, got {x.shape[-1]}"
        )
    y = x @ weights.t()
    if bias is not None:
        y = y + torch.as_tensor(bias)
    return y


def phase_shuffle(x, n: int, rng: np.random.Generator) -> torch.Tensor:
    """Shift each batch item by k ~ U{-n..n} along time, reflect-padding edges."""
    if n < 0:
        raise UserInputError(f"phase shuffle width must be >= 0, got {n}")
    x = as_tensor3(x)
    if n == 0:
        return x
    if x.shape[2] <= n:
        raise DimensionError(f"phase shuffle width {n} too large for T={x.shape[2]}")
    shifts = rng.integers(-n, n + 1, size=x.shape[0])
    padded = torch.nn.functional.pad(x, (n, n), mode="reflect")
    rows = [padded[b : b + 1, :, n - k : n - k + x.shape[2]] for b, k in enumerate(shifts)]
    return torch.cat(rows, dim=0)


def grad(params: dict[str, torch.Tensor], loss_fn: Callable[[dict], torch.Tensor]) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of a scalar loss with respect to named parameters.

    ``loss_fn`` receives a dict of leaf tensors (same names) and must return
    a scalar built from the kernels above.  Parameters the loss does not
    touch get zero gradients.
    """
    leaves = {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}
    loss = loss_fn(leaves)
    if loss.numel() != 1:
        raise DimensionError("loss_fn must return a scalar")
    gs = torch.autograd.grad(loss, list(leaves.values()), allow_unused=True)
    out = {}
    for (name, leaf), g in zip(leaves.items(), gs):
        if g is None:
            g = torch.zeros_like(leaf)
        if not torch.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        out[name] = g.detach()
    return out


def check_finite(x: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise NumericError(f"non-finite activation at {where}")
    return x
