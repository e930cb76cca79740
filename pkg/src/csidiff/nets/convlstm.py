"""Convolutional LSTM cell and the encoder built from it."""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import InputError


class ConvLSTMCell(nn.Module):
    """One step of a convolutional LSTM.

    The concatenated [input, hidden] map passes through a single
    convolution producing four gate stacks; sigmoid on input/forget/
    output gates, tanh on the candidate.
    """

    def __init__(self, in_channels: int, hidden_channels: int, kernel_size: int = 3):
        super().__init__()
        self.in_channels = in_channels
        self.hidden_channels = hidden_channels
        self.conv = nn.Conv2d(
            in_channels + hidden_channels,
            4 * hidden_channels,
            kernel_size,
            padding=kernel_size // 2,
        )

    def forward(
        self, x: torch.Tensor, h: torch.Tensor, c: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if x.shape[-2:] != h.shape[-2:] or h.shape[-2:] != c.shape[-2:]:
            raise InputError(
                f"spatial mismatch: x {tuple(x.shape[-2:])}, h {tuple(h.shape[-2:])}, "
                f"c {tuple(c.shape[-2:])}"
            )
        if h.shape[-3] != c.shape[-3]:
            raise InputError("hidden and cell maps must share channel count")
        gates = self.conv(torch.cat([x, h], dim=-3))
        i, f, o, g = gates.chunk(4, dim=-3)
        i, f, o = torch.sigmoid(i), torch.sigmoid(f), torch.sigmoid(o)
        g = torch.tanh(g)
        c_next = f * c + i * g
        h_next = o * torch.tanh(c_next)
        return h_next, c_next

    def zero_state(
        self, batch: int, height: int, width: int, ref: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        shape = (batch, self.hidden_channels, height, width)
        return (
            torch.zeros(shape, dtype=ref.dtype, device=ref.device),
            torch.zeros(shape, dtype=ref.dtype, device=ref.device),
        )


class ConvLSTMEncoder(nn.Module):
    """Unroll a ConvLSTM cell over a frame sequence, project to the latent width.

    Input [B, T, C, H, W] with any T >= 1; output [B, latent, H, W] from
    the final hidden map through a 1x1 convolution.
    """

    def __init__(self, in_channels: int, hidden_channels: int, latent_channels: int):
        super().__init__()
        self.cell = ConvLSTMCell(in_channels, hidden_channels)
        self.proj = nn.Conv2d(hidden_channels, latent_channels, 1)
        self.latent_channels = latent_channels

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.dim() != 5 or seq.shape[1] < 1:
            raise InputError(f"encoder expects [B, T>=1, C, H, W], got {tuple(seq.shape)}")
        b, t, _, hgt, wid = seq.shape
        h, c = self.cell.zero_state(b, hgt, wid, seq)
        for step in range(t):
            h, c = self.cell(seq[:, step], h, c)
        return self.proj(h)
