"""Fresh prompt sampling for training.

Each prompt is an independent regression task: a hidden Fourier order m drawn
uniformly from {1..m_max}, Gaussian weights, uniform inputs, and noisy
observations of the variance-normalized Fourier expansion

    f(x) = w . phi_m(x) / sqrt(m + 1),
    phi_m(x) = [1, cos(pi x / P), sin(pi x / P), ..., cos(m pi x / P), sin(m pi x / P)].

This reimplements the benchmark environment's generative law (the packages
share no code), so the match is guarded by a two-sample moment test against
``gen`` output in the test suite.  Training never replays benchmark tasks —
every batch is fresh — which is why the sampler needs only the distribution,
not the benchmark's seed derivation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from icl_trainer.config import ScenarioParams

__all__ = ["PromptSampler"]


@dataclass
class PromptSampler:
    """Draws batches of (xs, ys, m) prompt arrays for one scenario."""

    scenario: ScenarioParams

    def __post_init__(self) -> None:
        s = self.scenario
        # Angular frequency of Fourier component j is j*pi/period; component j
        # occupies feature columns (2j-1, 2j), column 0 being the constant.
        self._freq = (math.pi / s.period) * torch.arange(1, s.M + 1, dtype=torch.float64)
        self._col_order = torch.cat(
            [torch.zeros(1, dtype=torch.int64),
             torch.repeat_interleave(torch.arange(1, s.M + 1), 2)]
        )

    def sample(
        self,
        generator: torch.Generator,
        batch: int,
        length: int,
        m_max: int | None = None,
        dtype: torch.dtype = torch.float32,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Sample ``batch`` prompts of ``length`` points each.

        Returns ``(xs, ys, m)`` with shapes (batch, length), (batch, length)
        and (batch,).  ``m_max`` caps the drawn Fourier order (the training
        curriculum raises it); defaults to the scenario's M.
        """
        s = self.scenario
        if length < 1 or batch < 1:
            raise ValueError(f"batch and length must be >= 1, got {batch}, {length}")
        m_max = s.M if m_max is None else m_max
        if not 1 <= m_max <= s.M:
            raise ValueError(f"m_max must lie in [1, {s.M}], got {m_max}")

        m = torch.randint(1, m_max + 1, (batch,), generator=generator)
        weights = torch.empty(batch, 2 * s.M + 1, dtype=torch.float64)
        weights.normal_(0.0, math.sqrt(s.sigma_w_sq), generator=generator)
        # Zero out the columns beyond each prompt's own order.
        weights = weights * (self._col_order[None, :] <= m[:, None])

        xs = torch.empty(batch, length, dtype=torch.float64)
        xs.uniform_(s.x_min, s.x_max, generator=generator)
        ang = xs[..., None] * self._freq
        phi = torch.empty(batch, length, 2 * s.M + 1, dtype=torch.float64)
        phi[..., 0] = 1.0
        phi[..., 1::2] = torch.cos(ang)
        phi[..., 2::2] = torch.sin(ang)

        f = torch.einsum("blk,bk->bl", phi, weights) / torch.sqrt(m[:, None] + 1.0)
        noise = torch.empty(batch, length, dtype=torch.float64)
        noise.normal_(0.0, math.sqrt(s.sigma_eps_sq), generator=generator)
        ys = f + noise
        return xs.to(dtype), ys.to(dtype), m
