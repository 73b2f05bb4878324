"""Hypothesis-aware divergence among several distributions on a finite latent space.

The hypothesis class is taken to have infinite capacity, so the optimal
hypothesis is found independently at each latent point.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    SIMPLEX_TOL,
    FiniteDistribution,
    FiniteDomain,
    LossFamily,
    LossKind,
    MixtureWeights,
    StructuralError,
)
from .pushforward import TableFeatureMap, induced_labeling_table, pushforward_mass

CLAMP_TOL = 1e-10
TIE_TOL = 1e-10
PG_STEP = 0.1
PG_MAX_ITER = 10_000
PG_KKT_TOL = 1e-10
GRAD_CAP = 1e6


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.atleast_2d(v)
    n, C = v.shape
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, C + 1)
    cond = u - css / ind > 0
    rho = C - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(n), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def _objective(beta: np.ndarray, t: np.ndarray, loss: LossFamily) -> np.ndarray:
    return np.sum(t * loss.class_losses(beta), axis=1)


def _gradient(beta: np.ndarray, t: np.ndarray, loss: LossFamily) -> np.ndarray:
    if loss.kind is LossKind.BRIER:
        return 2.0 * beta - 2.0 * t
    if loss.kind is LossKind.HELLINGER:
        # the true gradient is -inf on the boundary; the cap keeps the projection finite
        root = np.sqrt(np.maximum(beta, 0.0))
        with np.errstate(divide="ignore"):
            grad = np.where(t > 0, -2.0 * t / root, 0.0)
        return np.maximum(grad, -GRAD_CAP)
    raise ValueError(f"no gradient solver for {loss.kind.value}")


def kkt_residual(beta: np.ndarray, t: np.ndarray, loss: LossFamily) -> np.ndarray:
    """Row-wise ``‖β - Π(β - ∇)‖_∞``; zero exactly at a constrained minimiser."""
    grad = _gradient(beta, t, loss)
    return np.max(np.abs(beta - project_simplex(beta - grad)), axis=1)


def projected_gradient(t: np.ndarray, loss: LossFamily) -> tuple[np.ndarray, np.ndarray, int]:
    """Minimise ``Σ_i t_i l(β, i)`` over the simplex for every row of ``t``.

    Starts at the uniform point with step ``PG_STEP``. A row's step halves
    whenever its objective would increase and doubles (up to ``PG_STEP``)
    after an accepted move. Returns ``(β, residual, iters)``.
    """
    n, C = t.shape
    beta = np.full((n, C), 1.0 / C)
    step = np.full(n, PG_STEP)
    obj = _objective(beta, t, loss)
    active = np.ones(n, dtype=bool)
    it = 0
    for it in range(1, PG_MAX_ITER + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        b, tt, s = beta[idx], t[idx], step[idx]
        cand = project_simplex(b - s[:, None] * _gradient(b, tt, loss))
        new_obj = _objective(cand, tt, loss)
        worse = new_obj > obj[idx] + 1e-15
        take = ~worse
        beta[idx[take]] = cand[take]
        obj[idx[take]] = new_obj[take]
        step[idx[worse]] *= 0.5
        step[idx[take]] = np.minimum(step[idx[take]] * 2.0, PG_STEP)
        res = kkt_residual(beta[idx], tt, loss)
        done = (res < PG_KKT_TOL) | (step[idx] < 1e-18)
        active[idx[done]] = False
    return beta, kkt_residual(beta, t, loss), it


@dataclass(frozen=True)
class PointwiseSolution:
    beta: np.ndarray
    undefined: np.ndarray
    residual: np.ndarray


def closed_form_minimizer(t: np.ndarray, loss: LossFamily) -> np.ndarray:
    """Exact ``argmin_β Σ_i t_i l(β, i)`` for rows ``t`` already on the simplex."""
    C = t.shape[1]
    if loss.kind is LossKind.ZERO_ONE:
        return np.eye(C)[np.argmax(t, axis=1)]
    if loss.kind is LossKind.HELLINGER:
        sq = t * t
        return sq / sq.sum(axis=1, keepdims=True)
    # log and Brier are both minimised by the posterior itself
    return t.copy()


def minimize_pointwise(weights: np.ndarray, loss: LossFamily, method: str = "exact") -> PointwiseSolution:
    """For each row ``w`` find ``argmin_β Σ_i w_i l(β, i)`` over the simplex.

    ``method="pg"`` runs :func:`projected_gradient` instead of the closed form
    (Brier and Hellinger only). Rows whose weights are all zero are flagged
    undefined and get the uniform vector.
    """
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    n, C = w.shape
    tot = w.sum(axis=1)
    undefined = tot <= 0
    beta = np.full((n, C), 1.0 / C)
    residual = np.zeros(n)
    live = ~undefined
    t = w[live] / tot[live, None]
    if method == "pg":
        b, r, _ = projected_gradient(t, loss)
        beta[live] = b
        residual[live] = r
    elif method == "exact":
        beta[live] = closed_form_minimizer(t, loss)
        if loss.kind in (LossKind.BRIER, LossKind.HELLINGER):
            residual[live] = kkt_residual(beta[live], t, loss)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PointwiseSolution(beta, undefined, residual)


def weighted_min_loss(weights: np.ndarray, loss: LossFamily) -> tuple[float, PointwiseSolution]:
    """``Σ_z min_β Σ_i w[z, i] l(β, i)`` together with the minimisers."""
    sol = minimize_pointwise(weights, loss)
    w = np.atleast_2d(weights)
    cl = loss.class_losses(sol.beta)
    pos = w > 0
    value = float(np.sum(w[pos] * cl[pos]))
    return value, sol


def _stack(qs: Sequence) -> np.ndarray:
    masses = [q.mass if isinstance(q, FiniteDistribution) else np.asarray(q, dtype=float) for q in qs]
    if len({m.shape for m in masses}) != 1:
        raise StructuralError("distributions do not share a support")
    return np.stack(masses)


def _check_alpha(Q: np.ndarray, alpha: MixtureWeights) -> np.ndarray:
    a = np.asarray(alpha.pi)
    if a.size != Q.shape[0]:
        raise StructuralError(f"{Q.shape[0]} distributions but {a.size} mixing weights")
    return a


def optimal_pointwise_hypothesis(qs: Sequence, alpha: MixtureWeights, loss: LossFamily) -> PointwiseSolution:
    """Bayes-optimal distribution classifier ``β*(z)`` for the mixture ``Σ α_i Q_i``."""
    Q = _stack(qs)
    a = _check_alpha(Q, alpha)
    return minimize_pointwise((a[:, None] * Q).T, loss)


@dataclass(frozen=True)
class DivergenceResult:
    divergence: float
    constant: float
    min_loss: float
    raw: float
    hypothesis: PointwiseSolution

    def to_dict(self) -> dict:
        return {"divergence": self.divergence, "constant": self.constant, "min_loss": self.min_loss}


def loss_constant(alpha: MixtureWeights, loss: LossFamily) -> float:
    """``inf_β Σ_i l(β, i) α_i``."""
    value, _ = weighted_min_loss(np.asarray(alpha.pi)[None, :], loss)
    return value


def _clamp(raw: float) -> float:
    return 0.0 if -CLAMP_TOL <= raw < 0.0 else raw


def hypothesis_aware_divergence(qs: Sequence, alpha: MixtureWeights, loss: LossFamily) -> DivergenceResult:
    """``D^α = -min_ĥ Σ_i α_i E_{Q_i}[l(ĥ(z), i)] + inf_β Σ_i l(β, i) α_i``."""
    Q = _stack(qs)
    a = _check_alpha(Q, alpha)
    min_loss, sol = weighted_min_loss((a[:, None] * Q).T, loss)
    const = loss_constant(alpha, loss)
    raw = const - min_loss
    return DivergenceResult(_clamp(raw), const, min_loss, raw, sol)


def generalized_js(qs: Sequence, alpha: MixtureWeights) -> float:
    """``Σ_i α_i KL(Q_i ‖ Q^α)`` in nats."""
    Q = _stack(qs)
    a = _check_alpha(Q, alpha)
    mix = a @ Q
    total = 0.0
    for ai, qi in zip(a, Q):
        nz = qi > 0
        total += ai * float(np.sum(qi[nz] * np.log(qi[nz] / mix[nz])))
    return total


@dataclass(frozen=True)
class ClassConditionalMixture:
    """Per-class latent distributions ``Q_g^{s,c}`` pooled over sources.

    ``classes`` lists the original class index of each kept distribution;
    classes with ``α_c = 0`` are listed in ``dropped``.
    """

    qs: tuple[FiniteDistribution, ...]
    alpha: MixtureWeights
    gamma: np.ndarray
    pi: MixtureWeights
    classes: tuple[int, ...]
    dropped: tuple[int, ...]

    def __post_init__(self):
        full = np.asarray(self.pi.pi) @ self.gamma
        kept = full[list(self.classes)]
        if np.max(np.abs(kept / kept.sum() - self.alpha.pi)) > SIMPLEX_TOL:
            raise ValueError("alpha does not match Σ_j π_j γ_{j,c}")
        if len(self.qs) != len(self.classes):
            raise StructuralError("one distribution per kept class")

    def mixture_mass(self) -> np.ndarray:
        return np.asarray(self.alpha.pi) @ _stack(self.qs)


def class_marginals(domain: FiniteDomain) -> np.ndarray:
    return domain.dist.mass @ domain.labels.table


def build_class_conditionals(
    sources: Sequence[FiniteDomain], pi: MixtureWeights, g: TableFeatureMap
) -> ClassConditionalMixture:
    if len(sources) != len(pi):
        raise StructuralError(f"{len(sources)} sources but {len(pi)} mixture weights")
    w = np.asarray(pi.pi)
    gamma = np.stack([class_marginals(s) for s in sources])  # K x C
    alpha_full = w @ gamma
    C = gamma.shape[1]
    # unnormalised joint mass of (z, c) under the source mixture
    joint = np.zeros((g.latent_size, C))
    for wi, s in zip(w, sources):
        joint_x = s.dist.mass[:, None] * s.labels.table
        acc = np.zeros((g.latent_size, C))
        np.add.at(acc, g.mapping, joint_x)
        joint += wi * acc
    classes = tuple(int(c) for c in range(C) if alpha_full[c] > 0)
    dropped = tuple(int(c) for c in range(C) if alpha_full[c] <= 0)
    qs = tuple(FiniteDistribution(joint[:, c] / alpha_full[c]) for c in classes)
    alpha = MixtureWeights(alpha_full[list(classes)] / alpha_full[list(classes)].sum())
    return ClassConditionalMixture(qs, alpha, gamma, pi, classes, dropped)


def source_min_loss(sources: Sequence[FiniteDomain], pi: MixtureWeights, g: TableFeatureMap, loss: LossFamily) -> float:
    """``min_ĥ Σ_i π_i L(ĥ, h^{S,i}, P_g^{S,i})`` via induced latent labelings."""
    weights = np.zeros((g.latent_size, sources[0].num_classes))
    for wi, s in zip(np.asarray(pi.pi), sources):
        h, _ = induced_labeling_table(s, g)
        weights += wi * pushforward_mass(s.dist.mass, g)[:, None] * h
    value, _ = weighted_min_loss(weights, loss)
    return value


def tolerant_argmin(values: Sequence[float], tol: float = TIE_TOL) -> int:
    v = np.asarray(values, dtype=float)
    return int(np.flatnonzero(v <= v.min() + tol)[0])


def tolerant_argmax(values: Sequence[float], tol: float = TIE_TOL) -> int:
    v = np.asarray(values, dtype=float)
    return int(np.flatnonzero(v >= v.max() - tol)[0])


@dataclass(frozen=True)
class EquivalenceResult:
    argmin_loss_index: int
    argmax_div_index: int
    min_losses: np.ndarray
    divergences: np.ndarray
    constant: float
    max_identity_error: float

    @property
    def agree(self) -> bool:
        return self.argmin_loss_index == self.argmax_div_index


def verify_general_di_equivalence(
    sources: Sequence[FiniteDomain],
    pi: MixtureWeights,
    candidate_gs: Sequence[TableFeatureMap],
    loss: LossFamily,
) -> EquivalenceResult:
    """Rank candidate feature maps by optimal source loss and by ``D^α`` of their class conditionals."""
    if not candidate_gs:
        raise ValueError("need at least one candidate feature map")
    losses, divs, errs = [], [], []
    const = None
    for g in candidate_gs:
        ccm = build_class_conditionals(sources, pi, g)
        res = hypothesis_aware_divergence(ccm.qs, ccm.alpha, loss)
        m = source_min_loss(sources, pi, g, loss)
        if const is None:
            const = res.constant
        losses.append(m)
        divs.append(res.raw)
        errs.append(abs(res.raw + m - res.constant))
    return EquivalenceResult(
        tolerant_argmin(losses),
        tolerant_argmax(divs),
        np.array(losses),
        np.array(divs),
        float(const),
        float(max(errs)),
    )
