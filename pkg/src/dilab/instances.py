"""Random finite instances for the property sweeps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FiniteDistribution, FiniteDomain, LabelingFunction, MixtureWeights
from .pushforward import TableFeatureMap


@dataclass(frozen=True)
class Instance:
    sources: tuple[FiniteDomain, ...]
    pi: MixtureWeights
    target: FiniteDomain
    g: TableFeatureMap
    h_hat: LabelingFunction

    def to_dict(self) -> dict:
        return {
            "sources": [s.to_dict() for s in self.sources],
            "pi": self.pi.to_dict(),
            "target": self.target.to_dict(),
            "g": self.g.to_dict(),
            "h_hat": self.h_hat.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        return cls(
            tuple(FiniteDomain.from_dict(s) for s in d["sources"]),
            MixtureWeights.from_dict(d["pi"]),
            FiniteDomain.from_dict(d["target"]),
            TableFeatureMap.from_dict(d["g"]),
            LabelingFunction.from_dict(d["h_hat"]),
        )


def _normalised(v: np.ndarray) -> np.ndarray:
    return v / v.sum(axis=-1, keepdims=True)


def random_distribution(rng: np.random.Generator, n: int, sparsity: float = 0.0) -> np.ndarray:
    """Dirichlet(1) mass; a ``sparsity`` fraction of points may be zeroed out."""
    m = rng.dirichlet(np.ones(n))
    if sparsity > 0:
        drop = rng.random(n) < sparsity
        drop[rng.integers(n)] = False
        m = np.where(drop, 0.0, m)
        m = _normalised(m)
    return m


def random_labels(rng: np.random.Generator, n: int, C: int, concentration: float = 1.0) -> np.ndarray:
    return rng.dirichlet(np.full(C, concentration), size=n)


def random_domain(rng: np.random.Generator, n: int, C: int, sparsity: float = 0.0) -> FiniteDomain:
    return FiniteDomain(FiniteDistribution(random_distribution(rng, n, sparsity)),
                        LabelingFunction(random_labels(rng, n, C)))


def smooth_table(table: np.ndarray, eps: float) -> np.ndarray:
    return (1.0 - eps) * table + eps / table.shape[1]


def random_instance(
    rng: np.random.Generator,
    K: int = 3,
    n: int = 30,
    m: int = 6,
    C: int = 2,
    shared_labels: float = 0.5,
    smoothing: float = 0.0,
    sparsity: float = 0.2,
) -> Instance:
    """Sources, target, a table feature map and a latent hypothesis.

    With probability ``shared_labels`` all domains draw their labeling
    functions as small perturbations of one base labeling (small label
    shift); otherwise every domain labels independently.
    """
    if rng.random() < shared_labels:
        base = random_labels(rng, n, C, concentration=0.3)
        rho = rng.uniform(0.0, 0.3, size=K + 1)
        tables = [(1 - r) * base + r * random_labels(rng, n, C) for r in rho]
    else:
        tables = [random_labels(rng, n, C) for _ in range(K + 1)]
    tables = [_normalised(t) for t in tables]
    if smoothing > 0:
        tables = [smooth_table(t, smoothing) for t in tables]
    doms = [
        FiniteDomain(FiniteDistribution(random_distribution(rng, n, sparsity)), LabelingFunction(t))
        for t in tables
    ]
    pi = MixtureWeights(rng.dirichlet(np.ones(K)))
    g = TableFeatureMap(rng.integers(0, m, size=n), m)
    h_hat = LabelingFunction(rng.dirichlet(np.ones(C), size=m))
    return Instance(tuple(doms[:K]), pi, doms[K], g, h_hat)
