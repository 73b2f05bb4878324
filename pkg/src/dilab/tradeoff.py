"""Label-marginal distances and the trade-off between alignment and target loss.

All losses here are the Hellinger point loss ``2 Σ (√u - √v)²``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .bounds import latent_masses, pairwise_hellinger
from .core import (
    HELLINGER,
    FiniteDistribution,
    FiniteDomain,
    LabelingFunction,
    MixtureWeights,
    PreconditionError,
    SimplexVector,
    StructuralError,
    expected_loss,
    hellinger,
    hellinger_sq,
)
from .pushforward import TableFeatureMap, pushforward_mass

TOL = 1e-10


@dataclass(frozen=True)
class LabelMarginal:
    probs: SimplexVector

    @property
    def array(self) -> np.ndarray:
        return self.probs.probs


def hellinger_point_loss(u: SimplexVector, v: SimplexVector) -> float:
    return hellinger_sq(u.probs, v.probs)


def label_smooth(domain: FiniteDomain, eps: float) -> FiniteDomain:
    """``f'(x, i) = (1 - eps) f(x, i) + eps / C``."""
    if not (0.0 <= eps < 0.5):
        raise PreconditionError(f"smoothing eps must lie in [0, 0.5), got {eps}")
    t = domain.labels.table
    return FiniteDomain(domain.dist, LabelingFunction((1.0 - eps) * t + eps / t.shape[1]))


def _marginal(mass: np.ndarray, table: np.ndarray) -> np.ndarray:
    return mass @ table


def label_marginal(domain: FiniteDomain, hypothesis: LabelingFunction | None = None) -> LabelMarginal:
    """Class frequencies of ``y ~ Cat(f(x))``, ``x ~ P``; pass ``hypothesis`` to use ``f̂`` instead."""
    table = domain.labels.table if hypothesis is None else hypothesis.table
    return LabelMarginal(SimplexVector(_marginal(domain.dist.mass, table)))


def mixture_label_marginal(domains: Sequence[FiniteDomain], pi: MixtureWeights) -> LabelMarginal:
    if len(domains) != len(pi):
        raise StructuralError(f"{len(domains)} domains but {len(pi)} mixture weights")
    stacked = np.stack([label_marginal(d).array for d in domains])
    return LabelMarginal(SimplexVector(np.asarray(pi.pi) @ stacked))


def verify_marginal_lemma(domain: FiniteDomain, hypothesis: LabelingFunction) -> tuple[float, float]:
    """``(d(P_Y^f, P_Y^f̂), L(f̂, f, P)^{1/2})``; the first never exceeds the second."""
    lhs = hellinger(label_marginal(domain).array, label_marginal(domain, hypothesis).array)
    rhs = float(np.sqrt(expected_loss(hypothesis, domain, HELLINGER)))
    return lhs, rhs


@dataclass
class TradeoffReport:
    lhs: float
    rhs1: float
    rhs2: float
    source_term: float
    target_term: float
    discrepancy_general: float
    discrepancy_target_sources: float
    discrepancy_pairwise: float
    lower_bound1: float
    lower_bound2: float
    target_loss: float

    @property
    def slack1(self) -> float:
        return self.rhs1 - self.lhs

    @property
    def slack2(self) -> float:
        return self.rhs2 - self.lhs

    @property
    def ok(self) -> bool:
        return (
            self.slack1 >= -TOL
            and self.slack2 >= -TOL
            and self.rhs1 <= self.rhs2 + TOL
            and self.lower_bound1 <= self.target_loss + TOL
            and self.lower_bound2 <= self.target_loss + TOL
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slack1"], d["slack2"] = self.slack1, self.slack2
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    CSV_FIELDS = ("lhs", "rhs1", "rhs2", "slack1", "slack2", "lower_bound1", "lower_bound2", "target_loss")

    def csv_row(self) -> list:
        return [getattr(self, k) for k in self.CSV_FIELDS]


def verify_tradeoff(
    sources: Sequence[FiniteDomain],
    pi: MixtureWeights,
    target: FiniteDomain,
    g: TableFeatureMap,
    h_hat: LabelingFunction,
) -> TradeoffReport:
    """Both upper bounds on ``d(P_Y^π, P_Y^T)`` and the implied target-loss lower bounds.

    Labels must be strictly positive (smooth them first) so that the
    Hellinger point loss is finite on every class.
    """
    if len(sources) != len(pi):
        raise StructuralError(f"{len(sources)} sources but {len(pi)} mixture weights")
    for d in list(sources) + [target]:
        if np.any(d.labels.table <= 0):
            raise PreconditionError("labels must be strictly positive; apply label_smooth first")
    K = len(sources)
    w = np.asarray(pi.pi)
    f_hat = g.compose(h_hat)

    lhs = hellinger(mixture_label_marginal(sources, pi).array, label_marginal(target).array)
    src_loss = float(w @ [expected_loss(f_hat, s, HELLINGER) for s in sources])
    tgt_loss = expected_loss(f_hat, target, HELLINGER)
    source_term = float(np.sqrt(src_loss))
    target_term = float(np.sqrt(tgt_loss))

    p_src = latent_masses(sources, g)
    p_tgt = pushforward_mass(target.dist.mass, g)
    d_general = hellinger(p_tgt, w @ p_src)
    d_ts = np.array([hellinger(p_tgt, p) for p in p_src])
    d_ss = pairwise_hellinger(p_src)
    root = np.sqrt(w)
    # Σ_i Σ_j (√π_j / K) d(·)
    ts_term = float(root.sum() * d_ts.sum() / K)
    ss_term = float(np.sum(d_ss @ root) / K)

    rhs1 = source_term + d_general + target_term
    rhs2 = source_term + ss_term + ts_term + target_term
    lb1 = max(0.0, lhs - source_term - d_general) ** 2
    lb2 = max(0.0, lhs - source_term - ss_term - ts_term) ** 2
    return TradeoffReport(
        lhs=lhs,
        rhs1=rhs1,
        rhs2=rhs2,
        source_term=source_term,
        target_term=target_term,
        discrepancy_general=d_general,
        discrepancy_target_sources=ts_term,
        discrepancy_pairwise=ss_term,
        lower_bound1=lb1,
        lower_bound2=lb2,
        target_loss=tgt_loss,
    )


def tradeoff_witness(n: int = 4, eps: float = 0.01) -> tuple[list[FiniteDomain], MixtureWeights, FiniteDomain, TableFeatureMap, LabelingFunction]:
    """A source mostly of class 0, a target mostly of class 1, and a map that aligns them fully.

    All discrepancy terms vanish and the source classifier is exact, so the
    whole label-marginal gap must be paid by the target loss.
    """
    mass = np.full(n, 1.0 / n)
    src = label_smooth(FiniteDomain(FiniteDistribution(mass), LabelingFunction(np.tile([1.0, 0.0], (n, 1)))), eps)
    tgt = label_smooth(FiniteDomain(FiniteDistribution(mass), LabelingFunction(np.tile([0.0, 1.0], (n, 1)))), eps)
    g = TableFeatureMap.collapse(n)
    h_hat = LabelingFunction(src.labels.table[:1])
    return [src], MixtureWeights.uniform(1), tgt, g, h_hat
