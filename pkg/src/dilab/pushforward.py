"""Deterministic feature maps on finite spaces and what they induce in latent space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    FiniteDistribution,
    FiniteDomain,
    LabelingFunction,
    LossFamily,
    PreconditionError,
    StructuralError,
    expected_loss,
)


@dataclass(frozen=True)
class TableFeatureMap:
    """``mapping[x]`` is the latent index of input point ``x``."""

    mapping: np.ndarray
    latent_size: int

    def __post_init__(self):
        m = np.array(self.mapping, dtype=np.int64, copy=True)
        if m.ndim != 1:
            raise StructuralError("mapping must be 1-d")
        if self.latent_size < 1:
            raise StructuralError("latent_size must be positive")
        if m.size and (m.min() < 0 or m.max() >= self.latent_size):
            raise StructuralError(f"mapping has indices outside [0, {self.latent_size})")
        m.setflags(write=False)
        object.__setattr__(self, "mapping", m)
        object.__setattr__(self, "latent_size", int(self.latent_size))

    @classmethod
    def identity(cls, n: int) -> "TableFeatureMap":
        return cls(np.arange(n), n)

    @classmethod
    def collapse(cls, n: int) -> "TableFeatureMap":
        return cls(np.zeros(n, dtype=np.int64), 1)

    def compose(self, h_hat: LabelingFunction) -> LabelingFunction:
        """Materialise ``ĥ∘g`` as a table on the input support."""
        if h_hat.support_size != self.latent_size:
            raise StructuralError(
                f"latent hypothesis has {h_hat.support_size} rows, latent size is {self.latent_size}"
            )
        return LabelingFunction(h_hat.table[self.mapping])

    def to_dict(self) -> dict:
        return {"mapping": self.mapping.tolist(), "latent_size": self.latent_size}

    @classmethod
    def from_dict(cls, d: dict) -> "TableFeatureMap":
        return cls(d["mapping"], d["latent_size"])


def _check(n: int, g: TableFeatureMap) -> None:
    if g.mapping.size != n:
        raise StructuralError(f"feature map covers {g.mapping.size} points, support has {n}")


def pushforward_mass(mass: np.ndarray, g: TableFeatureMap) -> np.ndarray:
    _check(mass.size, g)
    return np.bincount(g.mapping, weights=mass, minlength=g.latent_size)


def pushforward(dist: FiniteDistribution, g: TableFeatureMap) -> FiniteDistribution:
    return FiniteDistribution(pushforward_mass(dist.mass, g))


def induced_labeling_table(domain: FiniteDomain, g: TableFeatureMap) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(h, undefined)``; rows of ``h`` with no preimage mass are uniform."""
    p = domain.dist.mass
    _check(p.size, g)
    C = domain.num_classes
    num = np.zeros((g.latent_size, C))
    np.add.at(num, g.mapping, p[:, None] * domain.labels.table)
    den = np.bincount(g.mapping, weights=p, minlength=g.latent_size)
    undefined = den <= 0
    h = np.full((g.latent_size, C), 1.0 / C)
    h[~undefined] = num[~undefined] / den[~undefined, None]
    return h, undefined


@dataclass(frozen=True)
class InducedLabeling:
    labels: LabelingFunction
    undefined: np.ndarray


def induced_labeling(domain: FiniteDomain, g: TableFeatureMap) -> InducedLabeling:
    """Latent labeling ``h(z)``: the p-weighted average of ``f`` over ``g⁻¹(z)``.

    Latent points without preimage mass get the uniform simplex and are
    flagged in ``undefined``.
    """
    h, undefined = induced_labeling_table(domain, g)
    undefined = undefined.copy()
    undefined.setflags(write=False)
    return InducedLabeling(LabelingFunction(h), undefined)


def latent_domain(domain: FiniteDomain, g: TableFeatureMap) -> FiniteDomain:
    return FiniteDomain(pushforward(domain.dist, g), induced_labeling(domain, g).labels)


def verify_loss_equality(
    hypothesis_on_latent: LabelingFunction,
    domain: FiniteDomain,
    g: TableFeatureMap,
    loss: LossFamily,
) -> tuple[float, float]:
    """Loss of ``ĥ∘g`` on the input domain and of ``ĥ`` on the induced latent domain.

    The two agree for every loss of the form ``ℓ(u, v) = Σ l(u, i) v_i``.
    """
    input_loss = expected_loss(g.compose(hypothesis_on_latent), domain, loss)
    latent_loss = expected_loss(hypothesis_on_latent, latent_domain(domain, g), loss)
    return input_loss, latent_loss


def _class_weights(c_weights, g: TableFeatureMap, C: int) -> np.ndarray:
    c = np.asarray(c_weights, dtype=float)
    if c.shape != (g.latent_size, C):
        raise StructuralError(f"c_weights must have shape {(g.latent_size, C)}, got {c.shape}")
    if np.any(c <= 0):
        raise PreconditionError("c_weights must be strictly positive")
    return c


def weighted_label_sides(domain: FiniteDomain, g: TableFeatureMap, c_weights) -> tuple[np.ndarray, np.ndarray]:
    """Per-class latent and input sides of ``∫ h c p_g dz = ∫ f c p dx``.

    ``c_weights[z, i]`` plays the role of ``c(ĥ(z), i)``; on the input side it
    is read through ``g`` because ``f̂ = ĥ∘g``.
    """
    c = _class_weights(c_weights, g, domain.num_classes)
    h, _ = induced_labeling_table(domain, g)
    p_g = pushforward_mass(domain.dist.mass, g)
    latent = np.sum(h * c * p_g[:, None], axis=0)
    inputs = np.sum(domain.labels.table * c[g.mapping] * domain.dist.mass[:, None], axis=0)
    return latent, inputs


def verify_proposition_identity(domain: FiniteDomain, g: TableFeatureMap, c_weights, tol: float = 1e-12) -> bool:
    latent, inputs = weighted_label_sides(domain, g, c_weights)
    return bool(np.all(np.abs(latent - inputs) <= tol))


def labeling_gap_sides(
    dist: FiniteDistribution,
    f: LabelingFunction,
    f_prime: LabelingFunction,
    g: TableFeatureMap,
    c_weights,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class sides of ``∫ |h - h'| c p_g dz ≤ ∫ |f - f'| c p dx``.

    Both latent labelings are induced under the same data distribution.
    """
    c = _class_weights(c_weights, g, f.num_classes)
    h, _ = induced_labeling_table(FiniteDomain(dist, f), g)
    h2, _ = induced_labeling_table(FiniteDomain(dist, f_prime), g)
    p_g = pushforward_mass(dist.mass, g)
    latent = np.sum(np.abs(h - h2) * c * p_g[:, None], axis=0)
    inputs = np.sum(np.abs(f.table - f_prime.table) * c[g.mapping] * dist.mass[:, None], axis=0)
    return latent, inputs
