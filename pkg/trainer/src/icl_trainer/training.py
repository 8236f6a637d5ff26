"""Training loop: curriculum schedule, divergence handling, checkpoints.

The objective is the average squared error of the next-output prediction over
every prompt position, estimated on a fresh batch of prompts per iteration
and minimized with Adam at a fixed learning rate.  The curriculum grows the
prompt length by ``curriculum_step`` and the maximum Fourier order by 1 every
``curriculum_period`` iterations, starting from length 1 and order 1, capped
at ``T_train`` and the scenario's M.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np
import torch

from icl_trainer.config import TrainConfig
from icl_trainer.model import DecoderRegressor, tokens_from_xy
from icl_trainer.sampling import PromptSampler

__all__ = [
    "TrainingDiverged",
    "curriculum_length",
    "curriculum_order",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the message carries the diagnostics."""


def curriculum_length(iteration: int, cfg: TrainConfig) -> int:
    """Prompt length at a given iteration: 1, then +step per period, capped."""
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    return min(1 + cfg.curriculum_step * (iteration // cfg.curriculum_period), cfg.T_train)


def curriculum_order(iteration: int, cfg: TrainConfig) -> int:
    """Maximum Fourier order at a given iteration: 1, then +1 per period, capped."""
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    return min(1 + iteration // cfg.curriculum_period, cfg.scenario.M)


def train(
    cfg: TrainConfig,
    log_every: int = 1000,
    log: Callable[[str], None] | None = None,
) -> dict:
    """Run one training job and return the checkpoint dictionary.

    Model initialization and prompt sampling are both derived from
    ``cfg.seed``, so a configuration fully determines the run.  A non-finite
    loss aborts with diagnostics rather than training on.
    """
    torch.manual_seed(cfg.seed)
    model = DecoderRegressor(cfg.layers, cfg.heads, cfg.embed_dim)
    data_gen = torch.Generator().manual_seed(cfg.seed + 1)
    sampler = PromptSampler(cfg.scenario)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    history = np.empty(cfg.iterations, dtype=np.float32)
    started = time.perf_counter()
    for it in range(cfg.iterations):
        length = curriculum_length(it, cfg)
        m_max = curriculum_order(it, cfg)
        xs, ys, _ = sampler.sample(data_gen, cfg.batch, length, m_max)
        preds = model(tokens_from_xy(xs, ys))
        loss = ((preds - ys) ** 2).mean()
        value = float(loss.detach())
        if not math.isfinite(value):
            window = history[max(0, it - 100):it]
            raise TrainingDiverged(
                f"loss became {value} at iteration {it} "
                f"(lr={cfg.lr:g}, batch={cfg.batch}, length={length}, m_max={m_max}, "
                f"mean loss over the previous {len(window)} iterations: "
                f"{float(window.mean()) if len(window) else math.nan:.6g})"
            )
        history[it] = value
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log is not None and (it % log_every == 0 or it == cfg.iterations - 1):
            rate = (it + 1) / (time.perf_counter() - started)
            log(
                f"iter {it:>7d}  loss {value:9.5f}  length {length:>3d}  "
                f"m_max {m_max:>2d}  ({rate:.1f} it/s)"
            )

    return {
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "state_dict": model.state_dict(),
        "loss_history": history,
        "final_loss": float(history[-1]),
    }


def evaluate(model: DecoderRegressor, cfg: TrainConfig, n_prompts: int = 2048,
             seed: int = 10_000) -> float:
    """Objective value on fresh full-length prompts (no curriculum)."""
    sampler = PromptSampler(cfg.scenario)
    gen = torch.Generator().manual_seed(seed)
    total = 0.0
    done = 0
    model.eval()
    with torch.no_grad():
        while done < n_prompts:
            b = min(256, n_prompts - done)
            xs, ys, _ = sampler.sample(gen, b, cfg.T_train)
            preds = model(tokens_from_xy(xs, ys))
            total += float(((preds - ys) ** 2).mean()) * b
            done += b
    return total / n_prompts


def save_checkpoint(checkpoint: dict, path) -> None:
    torch.save(checkpoint, path)


def load_checkpoint(path) -> tuple[DecoderRegressor, TrainConfig, dict]:
    """Rebuild the model from a checkpoint file; returns (model, config, raw)."""
    raw = torch.load(path, map_location="cpu", weights_only=False)
    if raw.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {raw.get('version')!r}")
    cfg = TrainConfig.from_dict(raw["config"])
    model = DecoderRegressor(cfg.layers, cfg.heads, cfg.embed_dim)
    model.load_state_dict(raw["state_dict"])
    model.eval()
    return model, cfg, raw
