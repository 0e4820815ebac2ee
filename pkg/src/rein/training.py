"""Mini-batch training loop shared by REIN and the learned baselines.

Models plug in through two methods:

* ``training_loss(batch, tau, kl_weight, gen) -> (loss, parts)``
* ``param_groups() -> {parameter name: group}``
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import torch

from .tensorcore.optim import Adam, AdamState
from .tensorcore.stochastic import generator

log = logging.getLogger(__name__)


@dataclass
class Schedule:
    epochs: int = 50
    tau_start: float = 5.0
    tau_end: float = 0.5
    kl_warmup: int = 10

    def tau(self, epoch: int) -> float:
        if self.epochs <= 1:
            return self.tau_end
        frac = min(1.0, epoch / (self.epochs - 1))
        return self.tau_start + (self.tau_end - self.tau_start) * frac

    def kl_weight(self, epoch: int) -> float:
        if self.kl_warmup <= 0:
            return 1.0
        return min(1.0, epoch / self.kl_warmup)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    parts: dict
    n_batches: int
    skipped: int


class Trainer:
    def __init__(self, model, data: dict, schedule: Schedule, lr: float = 5e-4, batch_size: int = 32,
                 clip_norm: float = 5.0, seed: int = 0):
        n = {len(v) for v in data.values()}
        if len(n) != 1 or n == {0}:
            raise ValueError("training data must be non-empty with consistent lengths")
        self.model = model
        self.data = data
        self.n_items = n.pop()
        self.schedule = schedule
        self.batch_size = batch_size
        groups = model.param_groups()
        self.opt = Adam(dict(model.named_parameters()), groups, lr=lr, clip_norm=clip_norm)
        self.gen = generator(seed, "training")
        self.epoch = 0
        self.batch_idx = 0
        self.perm: torch.Tensor | None = None
        self.history: list[float] = []

    @property
    def n_batches(self) -> int:
        return math.ceil(self.n_items / self.batch_size)

    def train_step(self) -> tuple[float, dict]:
        """One batch and one Adam update.  Returns (loss, parts)."""
        if self.perm is None:
            self.perm = torch.randperm(self.n_items, generator=self.gen)
        idx = self.perm[self.batch_idx * self.batch_size:(self.batch_idx + 1) * self.batch_size]
        batch = {k: v[idx] for k, v in self.data.items()}
        tau = self.schedule.tau(self.epoch)
        kl_w = self.schedule.kl_weight(self.epoch)
        self.model.train()
        self.opt.zero_grad()
        loss, parts = self.model.training_loss(batch, tau, kl_w, self.gen)
        value = float(loss.detach())
        if math.isfinite(value):
            loss.backward()
            self.opt.step()
        else:
            log.warning("non-finite loss at epoch %d batch %d; group norms %s",
                        self.epoch, self.batch_idx, self.group_norms())
        self.batch_idx += 1
        if self.batch_idx >= self.n_batches:
            self.batch_idx = 0
            self.epoch += 1
            self.perm = None
        return value, parts

    def train_epoch(self) -> EpochStats:
        epoch = self.epoch
        losses, skipped, parts_sum = [], 0, {}
        while self.epoch == epoch:
            value, parts = self.train_step()
            if not math.isfinite(value):
                skipped += 1
                continue
            losses.append(value)
            for k, v in parts.items():
                parts_sum[k] = parts_sum.get(k, 0.0) + float(v)
        mean = sum(losses) / max(len(losses), 1)
        self.history.append(mean)
        parts = {k: v / max(len(losses), 1) for k, v in parts_sum.items()}
        return EpochStats(epoch, mean, parts, len(losses) + skipped, skipped)

    def fit(self, epochs: int | None = None, callback=None) -> list[EpochStats]:
        stats = []
        target = self.schedule.epochs if epochs is None else self.epoch + epochs
        while self.epoch < target:
            s = self.train_epoch()
            stats.append(s)
            if callback is not None:
                callback(s)
        return stats

    def group_norms(self) -> dict[str, float]:
        norms: dict[str, float] = {}
        for name, p in self.model.named_parameters():
            g = self.opt.groups.get(name, "?")
            norms[g] = norms.get(g, 0.0) + float(p.detach().double().pow(2).sum())
        return {k: math.sqrt(v) for k, v in norms.items()}

    # -- persistence -----------------------------------------------------

    def state(self) -> dict:
        st = self.opt.state
        return {
            "epoch": self.epoch,
            "batch_idx": self.batch_idx,
            "perm": None if self.perm is None else self.perm.tolist(),
            "history": list(self.history),
            "adam": {"lr": st.lr, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps, "step": st.step},
            "schedule": asdict(self.schedule),
            "batch_size": self.batch_size,
            "clip_norm": self.opt.clip_norm,
        }

    def load_state(self, meta: dict, moments: dict[str, torch.Tensor], gen_state: torch.Tensor) -> None:
        self.epoch = meta["epoch"]
        self.batch_idx = meta["batch_idx"]
        self.perm = None if meta["perm"] is None else torch.tensor(meta["perm"], dtype=torch.long)
        self.history = list(meta["history"])
        a = meta["adam"]
        self.opt.state = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"],
                                   m={k[2:]: v for k, v in moments.items() if k.startswith("m:")},
                                   v={k[2:]: v for k, v in moments.items() if k.startswith("v:")})
        self.gen.set_state(gen_state)
