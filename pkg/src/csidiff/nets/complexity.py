"""Analytic parameter and FLOP accounting for the bundled networks.

FLOPs follow the 2 * multiply-accumulate convention for one forward
pass: dense m->n costs 2*m*n, a conv costs 2*k_h*k_w*C_in*C_out*H_out*W_out.
Biases, activations, normalizations, and softmax are not counted.
Hooks fire per invocation, so modules reused across timesteps
accumulate their cost once per call.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import torch
import torch.nn as nn

from ..errors import EstimatorError
from .baselines import TimeMixBlock
from .common import SpatialSelfAttention, TemporalSelfAttention
from .dit import DiT, DiTBlock


def count_params(obj) -> int:
    """Exact number of scalar parameters in a module or parameter iterable."""
    if isinstance(obj, nn.Module):
        return sum(p.numel() for p in obj.parameters())
    if isinstance(obj, torch.Tensor):
        return obj.numel()
    if isinstance(obj, Iterable) and not isinstance(obj, (str, bytes)):
        try:
            return sum(int(p.numel()) for p in obj)
        except AttributeError as exc:
            raise EstimatorError(f"iterable contains a non-tensor item: {exc}") from exc
    raise EstimatorError(f"cannot count parameters of {type(obj).__name__}")


def _linear_flops(mod: nn.Linear, inputs, output) -> int:
    rows = output.numel() // mod.out_features
    return 2 * rows * mod.in_features * mod.out_features


def _conv_flops(mod, inputs, output) -> int:
    macs_per_out = (mod.in_channels // mod.groups) * math.prod(mod.kernel_size)
    return 2 * output.numel() * macs_per_out


def _conv_transpose_flops(mod, inputs, output) -> int:
    x = inputs[0]
    macs = (
        x.numel() * (mod.out_channels // mod.groups) * math.prod(mod.kernel_size)
    )
    return 2 * macs


def _gru_flops(mod: nn.GRU, inputs, output) -> int:
    x = inputs[0]
    if x.dim() != 3:
        raise EstimatorError("GRU estimate expects batched 3D input")
    batch, steps = (x.shape[0], x.shape[1]) if mod.batch_first else (x.shape[1], x.shape[0])
    macs = 0
    in_dim = mod.input_size
    for _ in range(mod.num_layers):
        macs += 3 * (in_dim * mod.hidden_size + mod.hidden_size * mod.hidden_size)
        in_dim = mod.hidden_size
    return 2 * batch * steps * macs


def _spatial_attn_flops(mod: SpatialSelfAttention, inputs, output) -> int:
    x = inputs[0]
    b, c = x.shape[0], x.shape[1]
    n = x.shape[2] * x.shape[3]
    return 4 * b * n * n * c  # scores + weighted sum; qkv convs hooked separately


def _temporal_attn_flops(mod: TemporalSelfAttention, inputs, output) -> int:
    x = inputs[0]
    b, c, t = x.shape[0], x.shape[1], x.shape[2]
    sites = x.shape[3] * x.shape[4]
    return 4 * b * sites * t * t * c


def _dit_block_flops(mod: DiTBlock, inputs, output) -> int:
    x = inputs[0]
    b, n, d = x.shape
    return 4 * b * n * n * d


def _time_mix_flops(mod: TimeMixBlock, inputs, output) -> int:
    x = inputs[0]
    b, t, d = x.shape
    return 2 * b * t * t * d


_FLOP_HANDLERS = {
    nn.Linear: _linear_flops,
    nn.Conv1d: _conv_flops,
    nn.Conv2d: _conv_flops,
    nn.Conv3d: _conv_flops,
    nn.ConvTranspose2d: _conv_transpose_flops,
    nn.ConvTranspose3d: _conv_transpose_flops,
    nn.GRU: _gru_flops,
    SpatialSelfAttention: _spatial_attn_flops,
    TemporalSelfAttention: _temporal_attn_flops,
    DiTBlock: _dit_block_flops,
    TimeMixBlock: _time_mix_flops,
}

# Parametric modules whose extra cost beyond hooked children is elementwise only.
_FREE_PARAMETRIC = (nn.GroupNorm, nn.LayerNorm, nn.BatchNorm1d, nn.BatchNorm2d, DiT)


def _check_supported(model: nn.Module) -> None:
    for mod in model.modules():
        if not any(True for _ in mod.parameters(recurse=False)):
            continue
        if type(mod) in _FLOP_HANDLERS or isinstance(mod, _FREE_PARAMETRIC):
            continue
        raise EstimatorError(
            f"no FLOP rule for parametric layer {type(mod).__name__}"
        )


def _materialize(item):
    if isinstance(item, torch.Tensor):
        return item
    if isinstance(item, (tuple, list)):
        return torch.zeros(*item)
    return item


def estimate_flops(model: nn.Module, *example_inputs, **forward_kwargs) -> int:
    """FLOPs for one forward pass of ``model`` on inputs of the given shapes.

    Positional arguments are tensors, or shape tuples materialized as
    zeros; scalars pass through (e.g. a timestep index).
    """
    _check_supported(model)
    args = [_materialize(a) for a in example_inputs]
    total = 0
    handles = []

    def make_hook(fn):
        def hook(mod, inputs, output):
            nonlocal total
            total += int(fn(mod, inputs, output))

        return hook

    for mod in model.modules():
        fn = _FLOP_HANDLERS.get(type(mod))
        if fn is not None:
            handles.append(mod.register_forward_hook(make_hook(fn)))
    was_training = model.training
    try:
        model.eval()
        with torch.no_grad():
            model(*args, **forward_kwargs)
    finally:
        for h in handles:
            h.remove()
        model.train(was_training)
    return total
