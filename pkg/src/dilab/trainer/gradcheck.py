"""Central finite-difference check of the analytic head gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..rng import make_rng
from .heads import (
    ModelStack,
    build_stack,
    classification_loss,
    generator_objective,
    ss_discriminator_loss,
    st_discriminator_loss,
)

STEP = 1e-4


def numeric_grads(stack: ModelStack, loss_fn: Callable[[ModelStack], float], names, h: float = STEP) -> dict:
    out = {}
    for name in names:
        net = stack.nets()[name]
        grads = []
        for p in net.params:
            g = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_fn(stack)
                p[idx] = old - h
                down = loss_fn(stack)
                p[idx] = old
                g[idx] = (up - down) / (2 * h)
            grads.append(g)
        out[name] = grads
    return out


def relative_error(analytic: dict, numeric: dict) -> float:
    """``‖a - n‖ / max(‖a‖, ‖n‖)`` over all parameters named in ``analytic``."""
    a = np.concatenate([g.ravel() for name in analytic for g in analytic[name]])
    n = np.concatenate([g.ravel() for name in analytic for g in numeric[name]])
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-300)
    return float(np.linalg.norm(a - n) / scale)


def check_head(stack: ModelStack, head: Callable, *args, h: float = STEP, **kwargs) -> float:
    """Relative error between ``head``'s analytic gradient and central differences."""
    _, analytic = head(stack, *args, **kwargs)
    numeric = numeric_grads(stack, lambda s: head(s, *args, **kwargs)[0], analytic.keys(), h)
    return relative_error(analytic, numeric)


def relu_margin(stack: ModelStack, *inputs: np.ndarray) -> float:
    """Smallest |pre-activation| at any ReLU unit over the given inputs.

    Central differences are only valid when this exceeds the step.
    """
    margin = np.inf
    for x in inputs:
        z, cache = stack.g.forward(x)
        margin = min(margin, np.abs(cache[0][1]).min())
        for net in (stack.d_ss, stack.d_st):
            _, c = net.forward(z)
            margin = min(margin, np.abs(c[0][1]).min())
    return float(margin)


MIN_MARGIN = 1e-3


def kink_free_fixture(seed: int, input_dim: int = 4, num_sources: int = 3, batch: int = 8, attempts: int = 100):
    """A tiny stack and batch whose ReLU inputs all exceed ``MIN_MARGIN`` in magnitude.

    Returns ``(stack, x, xt, y, domain)``.
    """
    for attempt in range(attempts):
        rng = make_rng(seed, "gradcheck", attempt)
        stack = build_stack(lambda n, a=attempt: make_rng(seed, "gradcheck-init", a, n), input_dim, num_sources)
        x, xt = rng.standard_normal((batch, input_dim)), rng.standard_normal((batch, input_dim))
        if relu_margin(stack, x, xt) > MIN_MARGIN:
            y, d = rng.integers(0, 2, batch), rng.integers(0, num_sources, batch)
            return stack, x, xt, y, d
    raise RuntimeError(f"no kink-free fixture in {attempts} attempts")


def check_all_heads(seed: int, lambda_ss: float = 0.5, lambda_st: float = 2.0) -> dict[str, float]:
    """Relative gradient error of each of the four heads on a kink-free fixture."""
    stack, x, xt, y, d = kink_free_fixture(seed)
    return {
        "classification": check_head(stack, classification_loss, x, y),
        "source-source": check_head(stack, ss_discriminator_loss, x, d),
        "source-target": check_head(stack, st_discriminator_loss, x, xt),
        "generator": check_head(stack, generator_objective, x, y, d, xt, lambda_ss, lambda_st),
    }
