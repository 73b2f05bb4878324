"""Loss heads on top of the feature extractor, each returning the loss and its gradients.

Every public head returns ``(loss, grads)`` where ``grads`` maps a network
name to the gradient list of its parameters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import MLP


@dataclass
class ModelStack:
    g: MLP
    h_hat: MLP
    d_ss: MLP
    d_st: MLP

    def nets(self) -> dict[str, MLP]:
        return {"g": self.g, "h_hat": self.h_hat, "d_ss": self.d_ss, "d_st": self.d_st}

    def finite(self) -> bool:
        return all(n.finite() for n in self.nets().values())

    def copy(self) -> "ModelStack":
        return ModelStack(self.g.copy(), self.h_hat.copy(), self.d_ss.copy(), self.d_st.copy())


def build_stack(rng_for, input_dim: int, num_sources: int, latent: int = 2, hidden: int = 16,
                disc_hidden: int = 16, num_classes: int = 2, latent_act: str | None = "tanh") -> ModelStack:
    """``rng_for(name)`` supplies an independent init stream per network.

    The latent layer is squashed by ``tanh`` by default; under gradient
    reversal an unbounded latent lets the extractor inflate the
    discriminator loss without limit.
    """
    return ModelStack(
        g=MLP.init(rng_for("g"), [input_dim, hidden, latent], ["relu", latent_act], "g"),
        h_hat=MLP.init(rng_for("h_hat"), [latent, num_classes], [None], "h_hat"),
        d_ss=MLP.init(rng_for("d_ss"), [latent, disc_hidden, num_sources], ["relu", None], "d_ss"),
        d_st=MLP.init(rng_for("d_st"), [latent, disc_hidden, 1], ["relu", None], "d_st"),
    )


def _softmax_xent(logits: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> tuple[float, np.ndarray]:
    shift = logits - logits.max(axis=1, keepdims=True)
    logp = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(weights @ logp[np.arange(n), labels])
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return loss, d * weights[:, None]


def _weights(n: int, w: np.ndarray | None) -> np.ndarray:
    if n == 0:
        raise ValueError("empty batch")
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=float)
    return w / w.sum()


def _log_sigmoid(t: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -t)


# Heads on latent codes. Each returns (loss, head grads, d loss / d z).

def classifier_head(h_hat: MLP, z: np.ndarray, y: np.ndarray, w: np.ndarray | None = None):
    w = _weights(len(y), w)
    logits, cache = h_hat.forward(z)
    loss, dlog = _softmax_xent(logits, y, w)
    grads, dz = h_hat.backward(cache, dlog)
    return loss, grads, dz


def ss_head(d_ss: MLP, z: np.ndarray, domain: np.ndarray):
    w = _weights(len(domain), None)
    logits, cache = d_ss.forward(z)
    loss, dlog = _softmax_xent(logits, domain, w)
    grads, dz = d_ss.backward(cache, dlog)
    return loss, grads, dz


def st_head(d_st: MLP, zs: np.ndarray, zt: np.ndarray):
    """``-½ mean log σ(s) - ½ mean log(1 - σ(t))``: source is class 1, target class 0."""
    ns, nt = len(zs), len(zt)
    if ns == 0 or nt == 0:
        raise ValueError("empty batch")
    logits, cache = d_st.forward(np.concatenate([zs, zt]))
    t = logits[:, 0]
    is_src = np.r_[np.ones(ns), np.zeros(nt)]
    w = np.r_[np.full(ns, 0.5 / ns), np.full(nt, 0.5 / nt)]
    loss = -float(w @ (is_src * _log_sigmoid(t) + (1 - is_src) * _log_sigmoid(-t)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * t))
    dlog = (w * (sig - is_src))[:, None]
    grads, dz = d_st.backward(cache, dlog)
    return loss, grads, dz[:ns], dz[ns:]


# Public heads: include the feature extractor.

def classification_loss(stack: ModelStack, x: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None):
    """Weighted mean cross-entropy of ``ĥ(g(x))``."""
    z, cache = stack.g.forward(x)
    loss, gh, dz = classifier_head(stack.h_hat, z, y, weights)
    gg, _ = stack.g.backward(cache, dz)
    return loss, {"g": gg, "h_hat": gh}


def ss_discriminator_loss(stack: ModelStack, x: np.ndarray, domain: np.ndarray):
    """K-way cross-entropy of the source-source discriminator on domain labels."""
    z, cache = stack.g.forward(x)
    loss, gd, dz = ss_head(stack.d_ss, z, domain)
    gg, _ = stack.g.backward(cache, dz)
    return loss, {"g": gg, "d_ss": gd}


def st_discriminator_loss(stack: ModelStack, xs: np.ndarray, xt: np.ndarray):
    """Balanced binary cross-entropy of the source-target discriminator."""
    zs, cs = stack.g.forward(xs)
    zt, ct = stack.g.forward(xt)
    loss, gd, dzs, dzt = st_head(stack.d_st, zs, zt)
    gs, _ = stack.g.backward(cs, dzs)
    gt, _ = stack.g.backward(ct, dzt)
    return loss, {"g": [a + b for a, b in zip(gs, gt)], "d_st": gd}


def generator_objective(
    stack: ModelStack,
    xs: np.ndarray,
    y: np.ndarray,
    domain: np.ndarray,
    xt: np.ndarray | None = None,
    lambda_ss: float = 0.0,
    lambda_st: float = 0.0,
):
    """``L_cls - λ_ss L_ss - λ_st L_st`` and its gradient for ``g`` and ``ĥ``.

    The ``g`` gradient is exactly what reversing the discriminator gradients
    (scaled by λ) at the latent layer produces in a single backward pass.
    """
    zs, cs = stack.g.forward(xs)
    value, gh, dzs = classifier_head(stack.h_hat, zs, y)
    if lambda_ss:
        l_ss, _, dz_ss = ss_head(stack.d_ss, zs, domain)
        value -= lambda_ss * l_ss
        dzs = dzs - lambda_ss * dz_ss
    gg, _ = stack.g.backward(cs, dzs)
    if lambda_st and xt is not None:
        zt, ct = stack.g.forward(xt)
        l_st, _, dz_s, dz_t = st_head(stack.d_st, zs, zt)
        value -= lambda_st * l_st
        gs, _ = stack.g.backward(cs, -lambda_st * dz_s)
        gt, _ = stack.g.backward(ct, -lambda_st * dz_t)
        gg = [a + b + c for a, b, c in zip(gg, gs, gt)]
    return value, {"g": gg, "h_hat": gh}
