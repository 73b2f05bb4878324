"""Adversarial training for domain generalization (DG) and multi-source adaptation (MSDA).

Each iteration takes one discriminator step and then one step of the
classifier and feature extractor. The extractor receives the discriminator
gradients reversed and scaled by λ. Every random choice comes from a stream
keyed by ``(seed, purpose)``. Runs that differ only in λ therefore share
their initialisation and batch schedule.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from ..dataset import DomainSplit, build_domains
from ..rng import make_rng
from .discrepancy import estimate_latent_discrepancy, mean_pairwise
from .heads import ModelStack, build_stack, generator_objective, ss_head, st_head
from .nets import Momentum


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, detail: str):
        super().__init__(f"training diverged at iteration {iteration}: {detail}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    lambda_ss: float = 0.0
    lambda_st: float = 0.0
    target: str = "close"
    seed: int = 0
    iters: int = 2000
    lr: float = 0.01
    momentum: float = 0.9
    batch: int = 128
    record_every: int = 100
    data_seed: int = 0
    n_per_domain: int = 10_000
    source_count: int = 7
    hidden: int = 16
    disc_hidden: int = 16


@dataclass
class SweepRecord:
    lambda_ss: float
    lambda_st: float
    seed: int
    iteration: int
    source_val_acc: float
    target_acc_close: float
    target_acc_far: float
    est_ss_discrepancy: float
    est_st_discrepancy: float
    mode: str = "dg"
    target: str = "close"

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, k) for k in self.header()]


def write_records(records: Sequence[SweepRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SweepRecord.header())
    for r in records:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r.row()])


def records_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()


def read_records(fh) -> list[SweepRecord]:
    types = {f.name: f.type for f in fields(SweepRecord)}
    out = []
    for row in csv.DictReader(fh):
        kw = {}
        for k, v in row.items():
            t = types[k]
            kw[k] = int(v) if t in ("int", int) else float(v) if t in ("float", float) else v
        out.append(SweepRecord(**kw))
    return out


@dataclass(frozen=True)
class ExperimentData:
    sources: tuple[DomainSplit, ...]
    targets: dict[str, DomainSplit]

    @property
    def x_train(self) -> np.ndarray:
        return np.concatenate([d.train.x for d in self.sources]).astype(np.float64)

    @property
    def y_train(self) -> np.ndarray:
        return np.concatenate([d.train.y for d in self.sources]).astype(np.int64)

    @property
    def domain_train(self) -> np.ndarray:
        return np.concatenate([np.full(len(d.train), i) for i, d in enumerate(self.sources)])


@lru_cache(maxsize=4)
def experiment_data(data_seed: int, n_per_domain: int, source_count: int) -> ExperimentData:
    doms = build_domains(data_seed, n_per_domain, "vector", source_count)
    sources = tuple(d for d in doms if d.spec.role == "source")
    targets = {d.name: d for d in doms if d.spec.role == "target"}
    return ExperimentData(sources, targets)


def _accuracy(stack: ModelStack, x: np.ndarray, y: np.ndarray) -> float:
    pred = np.argmax(stack.h_hat(stack.g(x.astype(np.float64))), axis=1)
    return float(np.mean(pred == y))


def _codes(stack: ModelStack, d: DomainSplit) -> np.ndarray:
    return stack.g(np.concatenate([d.train.x, d.val.x]).astype(np.float64))


def _record(stack, data: ExperimentData, cfg: TrainConfig, mode: str, it: int) -> SweepRecord:
    # discrepancy estimates use every point of a domain: histogram bias falls with n
    src_codes = [_codes(stack, d) for d in data.sources]
    src_x = np.concatenate([d.val.x for d in data.sources])
    src_y = np.concatenate([d.val.y for d in data.sources])
    est_st = estimate_latent_discrepancy(np.concatenate(src_codes), _codes(stack, data.targets[cfg.target])).value
    return SweepRecord(
        lambda_ss=cfg.lambda_ss,
        lambda_st=cfg.lambda_st if mode == "msda" else 0.0,
        seed=cfg.seed,
        iteration=it,
        source_val_acc=_accuracy(stack, src_x, src_y),
        target_acc_close=_accuracy(stack, data.targets["close"].val.x, data.targets["close"].val.y),
        target_acc_far=_accuracy(stack, data.targets["far"].val.x, data.targets["far"].val.y),
        est_ss_discrepancy=mean_pairwise(src_codes),
        est_st_discrepancy=est_st,
        mode=mode,
        target=cfg.target,
    )


def _check(stack: ModelStack, it: int, *losses: float) -> None:
    if not all(np.isfinite(losses)):
        raise TrainingDiverged(it, f"non-finite loss values {losses}")
    if not stack.finite():
        bad = [n for n, net in stack.nets().items() if not net.finite()]
        raise TrainingDiverged(it, f"non-finite weights in {bad}")


def _run(cfg: TrainConfig, mode: str, data: ExperimentData | None = None,
         return_stack: bool = False):
    if mode not in ("dg", "msda"):
        raise ValueError(f"unknown mode {mode!r}")
    if cfg.target not in ("close", "far"):
        raise ValueError(f"target must be 'close' or 'far', got {cfg.target!r}")
    data = data or experiment_data(cfg.data_seed, cfg.n_per_domain, cfg.source_count)
    x, y, dom = data.x_train, data.y_train, data.domain_train
    xt_all = data.targets[cfg.target].train.x.astype(np.float64)
    K = len(data.sources)

    stack = build_stack(lambda name: make_rng(cfg.seed, "init", name), x.shape[1], K,
                        hidden=cfg.hidden, disc_hidden=cfg.disc_hidden)
    opt = {name: Momentum(cfg.lr, cfg.momentum) for name in ("g", "h_hat", "d_ss", "d_st")}
    src_stream = make_rng(cfg.seed, "batches", "source")
    tgt_stream = make_rng(cfg.seed, "batches", "target")
    use_st = mode == "msda"
    lam_st = cfg.lambda_st if use_st else 0.0

    records = []
    if cfg.iters == 0:
        records.append(_record(stack, data, cfg, mode, 0))
    for it in range(1, cfg.iters + 1):
        idx = src_stream.integers(0, len(y), size=cfg.batch)
        xs, ys, ds = x[idx], y[idx], dom[idx]
        xt = xt_all[tgt_stream.integers(0, len(xt_all), size=cfg.batch)] if use_st else None

        # discriminator step on the current (fixed) representation
        zs = stack.g(xs)
        l_ss, g_ss, _ = ss_head(stack.d_ss, zs, ds)
        opt["d_ss"].step(stack.d_ss, g_ss)
        l_st = 0.0
        if use_st:
            l_st, g_st, _, _ = st_head(stack.d_st, zs, stack.g(xt))
            opt["d_st"].step(stack.d_st, g_st)

        # classifier + feature extractor step with reversed discriminator gradients
        value, grads = generator_objective(stack, xs, ys, ds, xt, cfg.lambda_ss, lam_st)
        opt["h_hat"].step(stack.h_hat, grads["h_hat"])
        opt["g"].step(stack.g, grads["g"])
        _check(stack, it, l_ss, l_st, value)

        if it % cfg.record_every == 0:
            records.append(_record(stack, data, cfg, mode, it))
    return (records, stack) if return_stack else records


def train_dg(cfg: TrainConfig, data: ExperimentData | None = None, return_stack: bool = False):
    """Source-source alignment only; ``lambda_st`` is ignored."""
    return _run(replace(cfg, lambda_st=0.0), "dg", data, return_stack)


def train_msda(cfg: TrainConfig, data: ExperimentData | None = None, return_stack: bool = False):
    """Source-source and source-target alignment using the unlabeled target training split."""
    return _run(cfg, "msda", data, return_stack)


def record_dict(r: SweepRecord) -> dict:
    return asdict(r)
