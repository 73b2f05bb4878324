"""Exact probability primitives on finite supports.

Every integral in the theory becomes a finite sum here, so each identity and
inequality can be checked to floating-point precision.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SIMPLEX_TOL = 1e-12


class StructuralError(ValueError):
    """Shapes or support sizes of the inputs do not line up."""


class DomainError(ValueError):
    """A value lies outside the domain of the requested quantity."""


class PreconditionError(ValueError):
    """The inputs violate a documented precondition of the operation."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_simplex_rows(mat: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(mat)):
        raise DomainError(f"{what}: non-finite entries")
    if np.any(mat < 0):
        idx = np.argwhere(mat < 0)[0]
        raise DomainError(f"{what}: negative entry at {tuple(idx.tolist())}")
    sums = mat.sum(axis=-1)
    bad = np.abs(sums - 1.0) > SIMPLEX_TOL
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise DomainError(
            f"{what}: entries sum to {np.atleast_1d(sums)[idx[0]]!r} at row {idx[0]}, expected 1"
        )


@dataclass(frozen=True)
class SimplexVector:
    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 1 or p.size == 0:
            raise StructuralError("SimplexVector needs a non-empty 1-d vector")
        _check_simplex_rows(p, "SimplexVector")
        object.__setattr__(self, "probs", p)

    @property
    def num_classes(self) -> int:
        return self.probs.size

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SimplexVector":
        return cls(d["probs"])


@dataclass(frozen=True)
class FiniteDistribution:
    mass: np.ndarray

    def __post_init__(self):
        m = _frozen(self.mass)
        if m.ndim != 1 or m.size == 0:
            raise StructuralError("FiniteDistribution needs a non-empty 1-d mass vector")
        _check_simplex_rows(m, "FiniteDistribution")
        object.__setattr__(self, "mass", m)

    @property
    def support_size(self) -> int:
        return self.mass.size

    def to_dict(self) -> dict:
        return {"support_size": self.support_size, "mass": self.mass.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteDistribution":
        dist = cls(d["mass"])
        if "support_size" in d and int(d["support_size"]) != dist.support_size:
            raise StructuralError("support_size does not match length of mass")
        return dist


@dataclass(frozen=True)
class LabelingFunction:
    """One simplex row per support point: ``table[x, i] = f(x, i)``."""

    table: np.ndarray

    def __post_init__(self):
        t = _frozen(self.table)
        if t.ndim != 2 or t.shape[0] == 0 or t.shape[1] == 0:
            raise StructuralError("LabelingFunction needs a non-empty 2-d table")
        _check_simplex_rows(t, "LabelingFunction")
        object.__setattr__(self, "table", t)

    @property
    def support_size(self) -> int:
        return self.table.shape[0]

    @property
    def num_classes(self) -> int:
        return self.table.shape[1]

    def row(self, x: int) -> SimplexVector:
        return SimplexVector(self.table[x])

    def to_dict(self) -> dict:
        return {"table": self.table.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelingFunction":
        return cls(d["table"])


@dataclass(frozen=True)
class FiniteDomain:
    dist: FiniteDistribution
    labels: LabelingFunction

    def __post_init__(self):
        if self.dist.support_size != self.labels.support_size:
            raise StructuralError(
                f"distribution has {self.dist.support_size} points but labeling has "
                f"{self.labels.support_size} rows"
            )

    @property
    def support_size(self) -> int:
        return self.dist.support_size

    @property
    def num_classes(self) -> int:
        return self.labels.num_classes

    def to_dict(self) -> dict:
        return {"dist": self.dist.to_dict(), "labels": self.labels.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteDomain":
        return cls(FiniteDistribution.from_dict(d["dist"]), LabelingFunction.from_dict(d["labels"]))


@dataclass(frozen=True)
class MixtureWeights:
    pi: np.ndarray

    def __post_init__(self):
        w = _frozen(self.pi)
        if w.ndim != 1 or w.size == 0:
            raise StructuralError("MixtureWeights needs a non-empty 1-d vector")
        _check_simplex_rows(w, "MixtureWeights")
        object.__setattr__(self, "pi", w)

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "MixtureWeights":
        c = np.asarray(counts, dtype=float)
        return cls(c / c.sum())

    @classmethod
    def uniform(cls, k: int) -> "MixtureWeights":
        return cls(np.full(k, 1.0 / k))

    def __len__(self) -> int:
        return self.pi.size

    def to_dict(self) -> dict:
        return {"pi": self.pi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureWeights":
        return cls(d["pi"])


class LossKind(str, enum.Enum):
    ZERO_ONE = "zero-one"
    BRIER = "brier"
    HELLINGER = "hellinger"
    LOG = "log"


_BOUNDS = {LossKind.ZERO_ONE: 1.0, LossKind.BRIER: 2.0, LossKind.HELLINGER: 4.0, LossKind.LOG: None}


@dataclass(frozen=True)
class LossFamily:
    """A per-class loss ``l(u, i)`` and its label-averaged form ``ℓ(u, v)``.

    ``ℓ(u, v) = Σ_i l(u, i) v_i`` for zero-one, Brier and log. The Hellinger
    point loss is evaluated directly as ``2 Σ (√u - √v)²``; against a one-hot
    label it reduces to ``l(u, i) = 4 (1 - √u_i)``, which is the per-class form
    used when the loss scores a single class.
    """

    kind: LossKind

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))

    @property
    def bound_L(self) -> float | None:
        return _BOUNDS[self.kind]

    @property
    def bounded(self) -> bool:
        return self.bound_L is not None

    @property
    def affine(self) -> bool:
        return self.kind is not LossKind.HELLINGER

    def class_losses(self, u: np.ndarray) -> np.ndarray:
        """Matrix of ``l(u_r, i)`` for each row ``u_r`` of ``u`` and class ``i``."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        C = u.shape[1]
        if self.kind is LossKind.ZERO_ONE:
            # np.argmax returns the first maximum: lowest class index wins ties
            return 1.0 - np.eye(C)[np.argmax(u, axis=1)]
        if self.kind is LossKind.BRIER:
            sq = np.sum(u * u, axis=1, keepdims=True)
            return sq - 2.0 * u + 1.0
        if self.kind is LossKind.HELLINGER:
            return 4.0 * (1.0 - np.sqrt(u))
        with np.errstate(divide="ignore"):
            return -np.log(u)

    def pointwise(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Row-wise ``ℓ(u_r, v_r)``."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if u.shape != v.shape:
            raise StructuralError(f"prediction shape {u.shape} != label shape {v.shape}")
        if self.kind is LossKind.HELLINGER:
            return 2.0 * np.sum((np.sqrt(u) - np.sqrt(v)) ** 2, axis=1)
        cl = self.class_losses(u)
        # 0 * inf := 0 so that log loss ignores classes with zero label mass
        return np.sum(np.where(v > 0, cl * v, 0.0), axis=1)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "bound_L": self.bound_L if self.bounded else "unbounded"}

    @classmethod
    def from_dict(cls, d: dict) -> "LossFamily":
        return cls(LossKind(d["kind"]))


ZERO_ONE = LossFamily(LossKind.ZERO_ONE)
BRIER = LossFamily(LossKind.BRIER)
HELLINGER = LossFamily(LossKind.HELLINGER)
LOG = LossFamily(LossKind.LOG)
BOUNDED_LOSSES = (ZERO_ONE, BRIER, HELLINGER)


def loss_family(name: str) -> LossFamily:
    return LossFamily(LossKind(name))


def expected_loss(hypothesis: LabelingFunction, domain: FiniteDomain, loss: LossFamily) -> float:
    """``Σ_x p(x) ℓ(f̂(x), f(x))``, skipping zero-mass points."""
    if hypothesis.table.shape != domain.labels.table.shape:
        raise StructuralError(
            f"hypothesis table {hypothesis.table.shape} != labels {domain.labels.table.shape}"
        )
    p = domain.dist.mass
    live = p > 0
    per_point = loss.pointwise(hypothesis.table[live], domain.labels.table[live])
    if not np.all(np.isfinite(per_point)):
        bad = np.flatnonzero(live)[np.flatnonzero(~np.isfinite(per_point))[0]]
        raise DomainError(
            f"{loss.kind.value} loss is infinite at support point {bad}: the hypothesis "
            f"gives zero probability to a class with positive label mass"
        )
    return float(np.dot(p[live], per_point))


def _masses(p, q) -> tuple[np.ndarray, np.ndarray]:
    a = p.mass if isinstance(p, FiniteDistribution) else np.asarray(p, dtype=float)
    b = q.mass if isinstance(q, FiniteDistribution) else np.asarray(q, dtype=float)
    if a.shape != b.shape:
        raise StructuralError(f"support sizes differ: {a.shape} vs {b.shape}")
    return a, b


def hellinger_sq(p, q) -> float:
    """Squared Hellinger divergence ``2 Σ (√p - √q)²`` in [0, 4]."""
    a, b = _masses(p, q)
    return float(2.0 * np.sum((np.sqrt(a) - np.sqrt(b)) ** 2))


def hellinger(p, q) -> float:
    """Hellinger metric: square root of :func:`hellinger_sq`, in [0, 2]."""
    return float(np.sqrt(hellinger_sq(p, q)))


def _as_mass(d) -> np.ndarray:
    if isinstance(d, FiniteDomain):
        return d.dist.mass
    if isinstance(d, FiniteDistribution):
        return d.mass
    return np.asarray(d, dtype=float)


def mix(domains: Sequence, pi: MixtureWeights) -> FiniteDistribution:
    """π-weighted mixture of the data distributions of ``domains``."""
    if len(domains) != len(pi):
        raise StructuralError(f"{len(domains)} domains but {len(pi)} mixture weights")
    masses = [_as_mass(d) for d in domains]
    if len({m.shape for m in masses}) != 1:
        raise StructuralError("domains do not share a support size")
    return FiniteDistribution(np.asarray(pi.pi) @ np.stack(masses))
