"""Target-loss upper bounds for a source mixture, evaluated term by term."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    FiniteDomain,
    LabelingFunction,
    LossFamily,
    MixtureWeights,
    PreconditionError,
    StructuralError,
    expected_loss,
    hellinger,
)
from .pushforward import TableFeatureMap, induced_labeling_table, pushforward_mass

SLACK_TOL = 1e-10


def _check_shared(sources: Sequence[FiniteDomain], target: FiniteDomain | None = None) -> None:
    doms = list(sources) + ([target] if target is not None else [])
    shapes = {d.labels.table.shape for d in doms}
    if len(shapes) != 1:
        raise StructuralError(f"domains do not share support/classes: {sorted(shapes)}")


def label_shift_term(sources: Sequence[FiniteDomain], target: FiniteDomain) -> float:
    """``max_i Σ_x p^{S,i}(x) ‖f^T(x) - f^{S,i}(x)‖₁`` (without the factor L)."""
    _check_shared(sources, target)
    ft = target.labels.table
    return float(max(s.dist.mass @ np.abs(ft - s.labels.table).sum(axis=1) for s in sources))


def latent_label_shift_term(
    sources: Sequence[FiniteDomain], pi: MixtureWeights, target: FiniteDomain, g: TableFeatureMap
) -> float:
    """``Σ_i π_i E_{P_g^{S,i}} ‖h^T - h^{S,i}‖₁`` with each ``h`` induced under its own domain.

    This is the label-shift quantity the mixture bound actually needs. It can
    exceed :func:`label_shift_term` when ``g`` merges points that carry
    different data mass in source and target.
    """
    _check_shared(sources, target)
    h_t, _ = induced_labeling_table(target, g)
    total = 0.0
    for w, s in zip(pi.pi, sources):
        h_s, _ = induced_labeling_table(s, g)
        p_g = pushforward_mass(s.dist.mass, g)
        total += w * float(p_g @ np.abs(h_t - h_s).sum(axis=1))
    return total


@dataclass
class BoundReport:
    target_loss: float
    source_mixture_loss: float
    label_shift: float
    discrepancy_general: float
    discrepancy_pairwise_matrix: np.ndarray
    rhs_general: float
    rhs_compressed: float
    slack_general: float
    slack_compressed: float
    loss: str = ""
    bound_L: float = 0.0
    discrepancy_target_sources: np.ndarray = field(default_factory=lambda: np.zeros(0))
    latent_label_shift: float = 0.0
    rhs_latent_shift: float = 0.0

    SCALARS = (
        "loss", "bound_L", "target_loss", "source_mixture_loss", "label_shift",
        "discrepancy_general", "rhs_general", "rhs_compressed", "slack_general",
        "slack_compressed", "latent_label_shift", "rhs_latent_shift",
    )

    @property
    def ok(self) -> bool:
        return (
            self.slack_general >= -SLACK_TOL
            and self.slack_compressed >= -SLACK_TOL
            and self.rhs_compressed >= self.rhs_general - SLACK_TOL
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["discrepancy_pairwise_matrix"] = np.asarray(self.discrepancy_pairwise_matrix).tolist()
        d["discrepancy_target_sources"] = np.asarray(self.discrepancy_target_sources).tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "BoundReport":
        d = dict(d)
        d["discrepancy_pairwise_matrix"] = np.asarray(d["discrepancy_pairwise_matrix"], dtype=float)
        d["discrepancy_target_sources"] = np.asarray(d.get("discrepancy_target_sources", []), dtype=float)
        return cls(**d)

    @classmethod
    def csv_header(cls) -> list[str]:
        return list(cls.SCALARS) + ["discrepancy_pairwise_matrix"]

    def csv_row(self) -> list:
        row = [getattr(self, k) for k in self.SCALARS]
        return row + [json.dumps(np.asarray(self.discrepancy_pairwise_matrix).tolist())]


def latent_masses(domains: Sequence[FiniteDomain], g: TableFeatureMap) -> np.ndarray:
    return np.stack([pushforward_mass(d.dist.mass, g) for d in domains])


def pairwise_hellinger(masses: np.ndarray) -> np.ndarray:
    K = masses.shape[0]
    out = np.zeros((K, K))
    for i in range(K):
        for j in range(i + 1, K):
            out[i, j] = out[j, i] = hellinger(masses[i], masses[j])
    return out


def evaluate_bounds(
    sources: Sequence[FiniteDomain],
    pi: MixtureWeights,
    target: FiniteDomain,
    g: TableFeatureMap,
    h_hat: LabelingFunction,
    loss: LossFamily,
) -> BoundReport:
    if not loss.bounded:
        raise PreconditionError(f"{loss.kind.value} loss is unbounded; the bounds need a finite L")
    if len(sources) != len(pi):
        raise StructuralError(f"{len(sources)} sources but {len(pi)} mixture weights")
    _check_shared(sources, target)
    L = loss.bound_L
    K = len(sources)
    w = np.asarray(pi.pi)
    f_hat = g.compose(h_hat)

    target_loss = expected_loss(f_hat, target, loss)
    src_losses = np.array([expected_loss(f_hat, s, loss) for s in sources])
    source_mixture_loss = float(w @ src_losses)
    shift = label_shift_term(sources, target)

    p_src = latent_masses(sources, g)
    p_tgt = pushforward_mass(target.dist.mass, g)
    d_general = hellinger(p_tgt, w @ p_src)
    d_ts = np.array([hellinger(p_tgt, p) for p in p_src])
    d_ss = pairwise_hellinger(p_src)

    rhs_general = source_mixture_loss + L * shift + L * np.sqrt(2.0) * d_general
    coef = L * np.sqrt(2.0 * w) / K  # indexed by j
    # Σ_i Σ_j coef_j [d(T, S_i) + d(S_i, S_j)]
    compressed = coef.sum() * d_ts.sum() + float(np.sum(d_ss @ coef))
    rhs_compressed = source_mixture_loss + L * shift + compressed

    latent_shift = latent_label_shift_term(sources, pi, target, g)
    rhs_latent = source_mixture_loss + L * latent_shift + L * np.sqrt(2.0) * d_general

    return BoundReport(
        target_loss=target_loss,
        source_mixture_loss=source_mixture_loss,
        label_shift=shift,
        discrepancy_general=d_general,
        discrepancy_pairwise_matrix=d_ss,
        rhs_general=float(rhs_general),
        rhs_compressed=float(rhs_compressed),
        slack_general=float(rhs_general - target_loss),
        slack_compressed=float(rhs_compressed - target_loss),
        loss=loss.kind.value,
        bound_L=L,
        discrepancy_target_sources=d_ts,
        latent_label_shift=latent_shift,
        rhs_latent_shift=float(rhs_latent),
    )


def mixture_decomposition_check(
    sources: Sequence[FiniteDomain], pi: MixtureWeights, target: FiniteDomain, g: TableFeatureMap
) -> tuple[float, float]:
    """``(d(P_g^T, P_g^π), Σ_j √π_j d(P_g^T, P_g^{S,j}))``; the first never exceeds the second."""
    if len(sources) != len(pi):
        raise StructuralError(f"{len(sources)} sources but {len(pi)} mixture weights")
    p_src = latent_masses(sources, g)
    p_tgt = pushforward_mass(target.dist.mass, g)
    w = np.asarray(pi.pi)
    lhs = hellinger(p_tgt, w @ p_src)
    rhs = float(sum(np.sqrt(wj) * hellinger(p_tgt, pj) for wj, pj in zip(w, p_src)))
    return lhs, rhs
