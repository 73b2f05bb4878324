"""Empirical source-mixture loss and its Chebyshev concentration bound."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .bounds import latent_masses, pairwise_hellinger
from .core import (
    BRIER,
    FiniteDomain,
    LabelingFunction,
    LossFamily,
    MixtureWeights,
    PreconditionError,
    StructuralError,
    expected_loss,
)
from .instances import Instance
from .pushforward import TableFeatureMap, induced_labeling_table
from .rng import spawn

BLOCK = 256


@dataclass(frozen=True)
class Sample:
    """Draws ``(k, z, y)``: source index, latent point, class."""

    domain: np.ndarray
    z: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return int(self.z.size)


@dataclass
class GapReport:
    N: int
    delta: float
    epsilon: float
    A: float
    variance_term: float
    squared_term: float
    empirical_coverage: float = float("nan")
    population_loss: float = float("nan")
    exact_variance: float = float("nan")
    seed: int | None = None
    resamples: int = 0
    loss: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def csv_header(cls) -> list[str]:
        return list(cls.__dataclass_fields__)

    def csv_row(self) -> list:
        return [getattr(self, k) for k in self.csv_header()]


@dataclass(frozen=True)
class LatentSources:
    """Latent masses, induced labelings and per-point losses of every source."""

    masses: np.ndarray       # K x m
    labelings: np.ndarray    # K x m x C
    point_losses: np.ndarray  # K x m, ℓ(ĥ(z), h^{S,k}(z))

    @property
    def means(self) -> np.ndarray:
        return np.sum(self.masses * self.point_losses, axis=1)

    @property
    def variances(self) -> np.ndarray:
        m = self.means
        return np.sum(self.masses * self.point_losses**2, axis=1) - m**2


def latent_sources(sources: Sequence[FiniteDomain], g: TableFeatureMap, h_hat: LabelingFunction, loss: LossFamily) -> LatentSources:
    masses = latent_masses(sources, g)
    labelings = np.stack([induced_labeling_table(s, g)[0] for s in sources])
    point_losses = np.stack([loss.pointwise(h_hat.table, lab) for lab in labelings])
    return LatentSources(masses, labelings, point_losses)


def empirical_loss(sample: Sample, h_hat: LabelingFunction, source_labelings, loss: LossFamily) -> float:
    """``(1/N) Σ ℓ(ĥ(z_n), h^{S,k_n}(z_n))`` over the draws."""
    if len(sample) == 0:
        raise ValueError("empty sample")
    labs = np.asarray(source_labelings, dtype=float)
    per = loss.pointwise(h_hat.table[sample.z], labs[sample.domain, sample.z])
    return float(per.mean())


def draw_sample(rng: np.random.Generator, pi: MixtureWeights, ls: LatentSources, N: int) -> Sample:
    K, m = ls.masses.shape
    k = rng.choice(K, size=N, p=pi.pi)
    cdf = np.cumsum(ls.masses, axis=1)
    u = rng.random(N) * cdf[k, -1]
    z = np.minimum((cdf[k] < u[:, None]).sum(axis=1), m - 1)
    cdf_y = np.cumsum(ls.labelings[k, z], axis=1)
    uy = rng.random(N) * cdf_y[:, -1]
    y = np.minimum((cdf_y < uy[:, None]).sum(axis=1), ls.labelings.shape[2] - 1)
    return Sample(k, z, y)


def _pairwise_shift(sources: Sequence[FiniteDomain]) -> np.ndarray:
    """``[max_k E_{P^{S,k}} ‖f^{S,k} - f^{S,i}‖₁]_i``."""
    K = len(sources)
    out = np.zeros(K)
    for i in range(K):
        fi = sources[i].labels.table
        out[i] = max(s.dist.mass @ np.abs(s.labels.table - fi).sum(axis=1) for s in sources)
    return out


def gap_bound(
    sources: Sequence[FiniteDomain],
    pi: MixtureWeights,
    g: TableFeatureMap,
    h_hat: LabelingFunction,
    loss: LossFamily,
    N: int,
    delta: float,
    compress: bool = False,
) -> GapReport:
    """Chebyshev radius ``ε = √(A/δ)`` for the empirical mixture loss of ``N`` draws.

    ``A`` is the variance term plus the squared discrepancy term. With
    ``compress=True`` the pairwise source discrepancies are evaluated after
    replacing every source pushforward by the mixture, so they vanish.
    """
    if not loss.bounded:
        raise PreconditionError(f"{loss.kind.value} loss is unbounded")
    if not (0.0 < delta <= 1.0):
        raise PreconditionError(f"delta must lie in (0, 1], got {delta}")
    if N < 1:
        raise PreconditionError("N must be positive")
    if len(sources) != len(pi):
        raise StructuralError(f"{len(sources)} sources but {len(pi)} mixture weights")
    L = loss.bound_L
    K = len(sources)
    w = np.asarray(pi.pi)
    root = np.sqrt(w)
    ls = latent_sources(sources, g, h_hat, loss)

    variance_term = float(w @ ls.variances) / N
    f_hat = g.compose(h_hat)
    src_losses = np.array([expected_loss(f_hat, s, loss) for s in sources])
    if compress:
        d_ss = np.zeros((K, K))
    else:
        d_ss = pairwise_hellinger(ls.masses)
    inner = (
        root.sum() / K * src_losses.sum()
        + L * float(root @ _pairwise_shift(sources))
        + L / K * float(np.sqrt(2.0 * w) @ d_ss.sum(axis=1))
    )
    squared_term = inner**2 / N
    A = variance_term + squared_term

    means = ls.means
    second = float(w @ (ls.variances + means**2))
    exact_var = (second - float(w @ means) ** 2) / N
    return GapReport(
        N=N,
        delta=delta,
        epsilon=float(np.sqrt(A / delta)),
        A=A,
        variance_term=variance_term,
        squared_term=squared_term,
        population_loss=float(w @ means),
        exact_variance=max(exact_var, 0.0),
        loss=loss.kind.value,
    )


def resample_losses(instance: Instance, loss: LossFamily, N: int, resamples: int, seed: int) -> np.ndarray:
    """Empirical losses of ``resamples`` independent samples of size ``N``.

    Resamples are drawn in fixed blocks, each from its own generator derived
    from ``seed``; the result does not depend on how blocks are scheduled.
    """
    ls = latent_sources(instance.sources, instance.g, instance.h_hat, loss)
    out = np.empty(resamples)
    n_blocks = -(-resamples // BLOCK)
    for b, rng in enumerate(spawn(seed, "gap-resample", n_blocks)):
        lo, hi = b * BLOCK, min((b + 1) * BLOCK, resamples)
        s = draw_sample(rng, instance.pi, ls, (hi - lo) * N)
        out[lo:hi] = ls.point_losses[s.domain, s.z].reshape(hi - lo, N).mean(axis=1)
    return out


def coverage_experiment(
    instance: Instance,
    N: int,
    delta: float,
    resamples: int,
    seed: int,
    loss: LossFamily = BRIER,
) -> GapReport:
    if resamples < 1000:
        raise PreconditionError("coverage needs at least 1000 resamples")
    rep = gap_bound(instance.sources, instance.pi, instance.g, instance.h_hat, loss, N, delta)
    losses = resample_losses(instance, loss, N, resamples, seed)
    rep.empirical_coverage = float(np.mean(np.abs(losses - rep.population_loss) <= rep.epsilon))
    rep.seed = seed
    rep.resamples = resamples
    return rep
