"""Gradient estimators and the AdamW optimizer.

Two estimator families cover the two parameter worlds:

* ``parameter_shift_grad``: exact gradients of circuit expectations, two
  evaluations per angle at shifts of +/- pi/2 (verification tool)
* ``spsa_grad``: simultaneous-perturbation estimate, exactly two evaluations
  regardless of dimension (the training-time estimator for circuit-feeding
  parameters)

Exact reverse-mode gradients for the classical tensors live with the model,
next to the forward pass that produces their cache.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .rng import rademacher

logger = logging.getLogger(__name__)


@dataclass
class GradReport:
    """Gradient values plus how many function evaluations produced them."""

    method: str
    grads: np.ndarray
    evaluations: int


def parameter_shift_grad(eval_fn, theta: np.ndarray) -> GradReport:
    """Exact gradient of a circuit expectation w.r.t. each angle.

    Component k is (f(theta + pi/2 e_k) - f(theta - pi/2 e_k)) / 2, which is
    exact for expectations generated by RY rotations.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1:
        raise ValidationError(f"theta must be a vector, got shape {theta.shape}")
    g = np.zeros_like(theta)
    for k in range(theta.size):
        plus = theta.copy()
        plus[k] += np.pi / 2
        minus = theta.copy()
        minus[k] -= np.pi / 2
        g[k] = 0.5 * (eval_fn(plus) - eval_fn(minus))
    return GradReport("parameter_shift", g, 2 * theta.size)


def spsa_grad(
    eval_fn, x: np.ndarray, rng: np.random.Generator, epsilon: float = 0.01
) -> GradReport:
    """Two-evaluation SPSA estimate with a Rademacher perturbation.

    Component k is (f(x + eps*delta) - f(x - eps*delta)) / (2*eps*delta_k);
    unbiased for quadratics, exact in one dimension for linear functions.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"x must be a vector, got shape {x.shape}")
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    delta = rademacher(rng, x.size)
    f_plus = eval_fn(x + epsilon * delta)
    f_minus = eval_fn(x - epsilon * delta)
    g = (f_plus - f_minus) / (2.0 * epsilon * delta)
    return GradReport("spsa", g, 2)


# ---------------------------------------------------------------------------
# AdamW


@dataclass
class AdamWState:
    """Optimizer hyperparameters and per-tensor moment buffers."""

    lr: float = 0.005
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    step: int = 0
    skipped_batches: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def clip_by_norm(g: np.ndarray, max_norm: float) -> np.ndarray:
    """Scale g down to ``max_norm`` (L2) when it exceeds it; idempotent."""
    norm = float(np.linalg.norm(g))
    if norm > max_norm:
        return g * (max_norm / norm)
    return g


def adamw_step(state: AdamWState, params: dict, grads: dict) -> bool:
    """One decoupled-weight-decay Adam update over named tensors, in place.

    Gradients are clipped per tensor to ``clip_norm`` before entering the
    moment estimates. A non-finite gradient anywhere skips the whole batch
    (with a warning) and leaves parameters, moments and step count untouched.
    Returns True when the update was applied.
    """
    for name, g in grads.items():
        if name not in params:
            raise ValidationError(f"gradient for unknown tensor {name!r}")
        if not np.all(np.isfinite(g)):
            logger.warning("non-finite gradient in %r; batch skipped", name)
            state.skipped_batches += 1
            return False

    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        g = clip_by_norm(np.asarray(g, dtype=np.float64), state.clip_norm)
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        p = params[name]
        # decay is decoupled and uses the pre-update parameter value
        p -= state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p)
    return True
