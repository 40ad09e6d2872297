"""Finite-difference gradient verification for hand-written backward passes."""

from __future__ import annotations

import numpy as np

from .modules import Module, Param


def numeric_grad(loss_fn, param: Param, index: tuple, h: float) -> float:
    """Central difference of ``loss_fn()`` w.r.t. one parameter entry."""
    orig = param.value[index]
    param.value[index] = orig + h
    lp = loss_fn()
    param.value[index] = orig - h
    lm = loss_fn()
    param.value[index] = orig
    return (lp - lm) / (2.0 * h)


def check_gradients(loss_and_backward, loss_fn, module: Module,
                    rng: np.random.Generator, n_probes: int = 100,
                    h: float = 1e-5, floor: float = 1e-6):
    """Compare analytic gradients against central differences.

    ``loss_and_backward()`` must run one full forward+backward, populating
    ``Param.grad``; ``loss_fn()`` must evaluate the same deterministic loss
    without touching gradients.  Returns a list of relative errors, one per
    probed parameter entry.
    """
    module.zero_grad()
    loss_and_backward()
    named = [(name, p) for name, p in module.named_parameters()]
    sizes = np.array([p.value.size for _, p in named], dtype=np.float64)
    probs = sizes / sizes.sum()
    errors = []
    for _ in range(n_probes):
        k = rng.choice(len(named), p=probs)
        name, p = named[k]
        flat_index = rng.integers(p.value.size)
        index = np.unravel_index(flat_index, p.value.shape)
        analytic = 0.0 if p.grad is None else float(p.grad[index])
        numeric = numeric_grad(loss_fn, p, index, h)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        errors.append((name, index, analytic, numeric, rel))
    return errors
