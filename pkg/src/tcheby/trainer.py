"""Training loop: warmup + cosine schedule, AdamW, seeded pair batching, checkpoints."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import RewardDataset, RewardStats, RunConfig, compute_reward_stats
from .losses import (LossReport, PairBatch, build_pairs, dpo_loss, odpo_loss, prepare_pairs,
                     squared_pref_loss, stomp_loss)
from .policy import SequencePolicy, load_policy, save_policy
from .scalarize import lambda_prime, normalize_lambda, rho, scalarize_group

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, checkpoints):
        super().__init__(message)
        self.checkpoints = checkpoints


def lr_at(step: int, total_steps: int, warmup_steps: int, peak_lr: float, final_lr: float) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if not 0 <= warmup_steps < total_steps:
        raise ValueError("warmup_steps must lie in [0, total_steps)")
    if step <= warmup_steps:
        return peak_lr * step / warmup_steps if warmup_steps else peak_lr
    frac = (step - warmup_steps) / (total_steps - warmup_steps)
    return final_lr + 0.5 * (peak_lr - final_lr) * (1.0 + math.cos(math.pi * frac))


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.0
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray, **kw) -> "OptimizerState":
        return cls(np.zeros_like(params), np.zeros_like(params), **kw)


def adamw_step(state: OptimizerState, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """One decoupled-weight-decay Adam step, updating ``params`` and ``state`` in place."""
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))
        raise FloatingPointError(f"non-finite gradient at {bad.size} entries (first index {bad[0]})")
    state.step += 1
    params *= 1.0 - lr * state.weight_decay
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    denom = np.sqrt(state.v) / math.sqrt(bc2) + state.eps
    params -= (lr / bc1) * state.m / denom
    return params


@dataclass
class Checkpoint:
    fraction: float
    step: int
    policy: SequencePolicy
    config_hash: str
    metrics: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"ckpt_{self.fraction:.2f}"


@dataclass
class TrainingData:
    """Everything the loop needs that does not change with the parameters."""

    batch: PairBatch
    stats: RewardStats
    lam: np.ndarray
    group_of_pair: np.ndarray


SCALARIZATION = {"dpo-lin": "linear", "odpo-lin": "linear", "odpo-sq": "linear", "odpo-stz": "stz", "stomp": "st"}


def effective_lambda(config: RunConfig, stats: RewardStats) -> np.ndarray:
    if config.algorithm == "stomp" and config.use_lambda_prime:
        return lambda_prime(config.preference, stats).weights
    return config.preference.weights


def prepare_training(config: RunConfig, dataset: RewardDataset, ref: SequencePolicy, rng: np.random.Generator,
                     stats: RewardStats | None = None) -> TrainingData:
    stats = stats or compute_reward_stats(dataset, config.gamma)
    lam = effective_lambda(config, stats)
    method = SCALARIZATION[config.algorithm]
    pairs, scal, rhos = [], [], []
    for m, g in enumerate(dataset.groups):
        R = scalarize_group(method, g.rewards, m, lam, stats, tau=config.tau)
        scal.append(R)
        rhos.append(rho(g.rewards, m, stats, warn=False))
        pairs.extend(build_pairs(R, config.delta, config.max_pairs_per_context, rng, group_index=m))
    batch = prepare_pairs(ref, dataset, pairs, scalarized=scal, rho=rhos)
    return TrainingData(batch, stats, lam, np.array([p.group_index for p in pairs], dtype=np.int64))


def evaluate_loss(config: RunConfig, policy: SequencePolicy, batch: PairBatch, lam) -> LossReport:
    algo = config.algorithm
    if algo == "dpo-lin":
        return dpo_loss(policy, batch, config.beta, config.alpha)
    if algo in ("odpo-lin", "odpo-stz"):
        return odpo_loss(policy, batch, config.beta, config.delta, config.clamp, config.alpha)
    if algo == "odpo-sq":
        return squared_pref_loss(policy, batch, config.beta, config.delta, config.clamp, config.alpha)
    if algo == "stomp":
        return stomp_loss(policy, batch, config.alpha, config.beta, config.gamma, config.delta,
                          normalize_lambda(lam), config.tau, config.clamp)
    raise ValueError(algo)


def _batches(data: TrainingData, n_groups: int, batch_size: int, rng: np.random.Generator):
    """Yield index arrays over pairs forever: shuffled context order, last partial batch kept."""
    by_group = [np.flatnonzero(data.group_of_pair == m) for m in range(n_groups)]
    while True:
        order = rng.permutation(n_groups)
        flat = np.concatenate([by_group[m] for m in order]) if n_groups else np.zeros(0, dtype=np.int64)
        if flat.size == 0:
            return
        for s in range(0, flat.size, batch_size):
            yield flat[s:s + batch_size]


def _clip(grad: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def checkpoint_steps(config: RunConfig) -> list[int]:
    return [int(round(f * config.total_steps)) for f in config.checkpoints]


def train(config: RunConfig, dataset: RewardDataset, ref: SequencePolicy, stats: RewardStats | None = None,
          metrics_log: list | None = None) -> list[Checkpoint]:
    """Run one training job and return checkpoints at the configured fractions.

    ``ref`` is never modified; the trained policy starts as a copy of it.
    Per-step metrics are appended to ``metrics_log`` when given.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    data = prepare_training(config, dataset, ref, rng, stats)
    policy = ref.copy()
    opt = OptimizerState.zeros_like(policy.theta, beta1=config.adam_beta1, beta2=config.adam_beta2,
                                    weight_decay=config.weight_decay, eps=config.adam_eps)
    digest = config.digest()
    ckpt_at: dict[int, list[float]] = {}
    for s, f in zip(checkpoint_steps(config), config.checkpoints):
        ckpt_at.setdefault(s, []).append(f)
    checkpoints: list[Checkpoint] = []
    log = metrics_log if metrics_log is not None else []

    if config.total_steps == 0 or len(data.batch) == 0:
        if len(data.batch) == 0:
            logger.warning("no preference pairs pass the threshold delta=%s; policy left unchanged", config.delta)
        return [Checkpoint(f, 0, policy.copy(), digest, {}) for f in config.checkpoints]

    batches = _batches(data, len(dataset.groups), config.batch_size, rng)
    for step in range(1, config.total_steps + 1):
        idx = next(batches)
        sub = data.batch.subset(idx)
        report = evaluate_loss(config, policy, sub, data.lam)
        n = max(len(sub), 1)
        if not np.isfinite(report.total):
            raise TrainingDiverged(f"loss became non-finite at step {step}", checkpoints)
        lr = lr_at(step, config.total_steps, config.warmup_steps, config.peak_lr, config.final_lr)
        adamw_step(opt, policy.theta, _clip(report.grad / n, config.grad_clip), lr)
        row = {"step": step, "loss": report.total / n, "pref_term": report.pref_term / n,
               "nll_term": report.nll_term / n, "lr": lr}
        log.append(row)
        for f in ckpt_at.get(step, ()):
            checkpoints.append(Checkpoint(f, step, policy.copy(), digest, dict(row)))
    # fractions that round to step 0 are snapshots of the reference
    early = [Checkpoint(f, 0, ref.copy(), digest, {}) for f in ckpt_at.get(0, ())]
    return early + checkpoints


def write_run(run_dir, checkpoints: list[Checkpoint], metrics: list[dict]) -> None:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    for c in checkpoints:
        save_policy(c.policy, run_dir / f"{c.name}.json")
    with (run_dir / "metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss", "pref_term", "nll_term", "lr"])
        for row in metrics:
            w.writerow([row["step"], repr(row["loss"]), repr(row["pref_term"]), repr(row["nll_term"]),
                        repr(row["lr"])])


def read_run(run_dir) -> list[tuple[float, SequencePolicy]]:
    out = []
    for p in sorted(Path(run_dir).glob("ckpt_*.json")):
        out.append((float(p.stem.split("_", 1)[1]), load_policy(p)))
    return out
