"""Decoder-only transformer for in-context regression.

The prompt (x_1, y_1, ..., x_t, y_t, x_{t+1}) is packed into one token per
step: token k carries (x_k, y_{k-1}) with y_0 := 0, so under the causal mask
the output at position k is a function of x_1..x_k and y_1..y_{k-1} — exactly
the information available when predicting y_k.  One forward pass therefore
yields the model's prediction at every demonstration count simultaneously.

There is no positional encoding of any kind: position information enters only
through the causal mask, which keeps the model applicable to sequences longer
than anything seen in training.  A linear read-in lifts the 2-dimensional
tokens into the embedding space and a linear read-out maps the final hidden
state to the scalar prediction; the blocks are pre-norm with a 4x GELU MLP.
"""

from __future__ import annotations

import torch
import torch.nn as nn

__all__ = ["DecoderRegressor", "tokens_from_xy"]


def tokens_from_xy(xs: torch.Tensor, ys: torch.Tensor) -> torch.Tensor:
    """Pack (batch, L) inputs and outputs into (batch, L, 2) lagged tokens.

    Token k is (x_k, y_{k-1}); the first token's output slot is zero.  The
    value y_L never appears in the tokens, so predictions are never leaked
    their own target.
    """
    if xs.shape != ys.shape or xs.ndim != 2:
        raise ValueError(f"xs and ys must both be (batch, L), got {tuple(xs.shape)} and {tuple(ys.shape)}")
    lagged = torch.cat([torch.zeros_like(ys[:, :1]), ys[:, :-1]], dim=1)
    return torch.stack([xs, lagged], dim=-1)


class _Block(nn.Module):
    def __init__(self, embed_dim: int, heads: int):
        super().__init__()
        self.ln_attn = nn.LayerNorm(embed_dim)
        self.attn = nn.MultiheadAttention(embed_dim, heads, batch_first=True)
        self.ln_mlp = nn.LayerNorm(embed_dim)
        self.mlp = nn.Sequential(
            nn.Linear(embed_dim, 4 * embed_dim),
            nn.GELU(),
            nn.Linear(4 * embed_dim, embed_dim),
        )

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        a = self.ln_attn(x)
        x = x + self.attn(a, a, a, attn_mask=mask, need_weights=False)[0]
        return x + self.mlp(self.ln_mlp(x))


class DecoderRegressor(nn.Module):
    """Causal transformer mapping (batch, L, 2) tokens to (batch, L) predictions."""

    def __init__(self, layers: int, heads: int, embed_dim: int):
        super().__init__()
        if layers < 1 or heads < 1 or embed_dim < 1:
            raise ValueError(f"bad architecture: layers={layers} heads={heads} embed_dim={embed_dim}")
        if embed_dim % heads:
            raise ValueError(f"embed_dim must be divisible by heads, got {embed_dim} / {heads}")
        self.read_in = nn.Linear(2, embed_dim)
        self.blocks = nn.ModuleList(_Block(embed_dim, heads) for _ in range(layers))
        self.ln_out = nn.LayerNorm(embed_dim)
        self.read_out = nn.Linear(embed_dim, 1)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.ndim != 3 or tokens.shape[-1] != 2:
            raise ValueError(f"tokens must be (batch, L, 2), got {tuple(tokens.shape)}")
        L = tokens.shape[1]
        mask = torch.full((L, L), float("-inf"), dtype=tokens.dtype).triu(1)
        x = self.read_in(tokens)
        for block in self.blocks:
            x = block(x, mask)
        return self.read_out(self.ln_out(x)).squeeze(-1)

    def predict(self, xs: torch.Tensor, ys: torch.Tensor) -> torch.Tensor:
        """Prediction of y_k at every position k from (batch, L) prompt arrays."""
        return self(tokens_from_xy(xs, ys))
