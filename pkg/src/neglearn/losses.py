"""Positive, negative (complementary-label) and soft-target losses.

Every loss takes softmax probabilities ``p`` of shape ``(n, c)`` (or a single
``(c,)`` vector) and returns per-sample losses together with the gradient of
each sample's loss with respect to its logits. Labels are 0-based class
indices. Batch reduction (mean over selected samples) is the caller's job.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .engine import EPS


class InvalidProblemError(ValueError):
    pass


class LossOutput(NamedTuple):
    loss: np.ndarray  # (n,) or scalar for single-sample input
    grad: np.ndarray  # d loss / d logits, same shape as p
    clamped: bool  # some probability hit the EPS floor/ceiling


def _batch(p, *labels):
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    if single:
        p = p[None, :]
        labels = tuple(np.asarray(l)[None, ...] for l in labels)
    else:
        labels = tuple(np.asarray(l) for l in labels)
    return single, p, labels


def _out(single, loss, grad, clamped) -> LossOutput:
    if single:
        return LossOutput(float(loss[0]), grad[0], bool(clamped))
    return LossOutput(loss, grad, bool(clamped))


def default_k(n_classes: int) -> int:
    """Complementary labels per sample so the uniform-state gradient at the
    true class matches the 10-class, single-label case: round(c(c-1)/90)."""
    return max(1, int(round(n_classes * (n_classes - 1) / 90)))


def gen_complementary(y, n_classes: int, rng: np.random.Generator, k: int | None = None):
    """Draw complementary labels uniformly from the classes other than ``y``.

    ``y`` may be a scalar or an array; with ``k`` given, an extra trailing axis
    of ``k`` independent draws (duplicates allowed) is added.
    """
    if n_classes < 2:
        raise InvalidProblemError("complementary labels need at least 2 classes")
    y = np.asarray(y)
    if np.any((y < 0) | (y >= n_classes)):
        raise InvalidProblemError(f"labels must lie in [0, {n_classes})")
    if k is None:
        shape = y.shape
        base = y
    else:
        if k < 1:
            raise InvalidProblemError("k must be at least 1")
        shape = y.shape + (k,)
        base = y[..., None]
    offset = rng.integers(1, n_classes, size=shape)
    out = (base + offset) % n_classes
    return int(out) if out.ndim == 0 else out


def pl_loss(p, y) -> LossOutput:
    """Cross-entropy on the given label: -log p_y, gradient p - onehot(y)."""
    single, p, (y,) = _batch(p, y)
    idx = np.arange(len(p))
    py = p[idx, y]
    clamped = np.any(py < EPS)
    loss = -np.log(np.clip(py, EPS, 1.0))
    grad = p.copy()
    grad[idx, y] -= 1.0
    return _out(single, loss, grad, clamped)


def nl_loss(p, ybar) -> LossOutput:
    """Complementary-label loss -log(1 - p_ybar).

    dL/df_i = p_ybar for i = ybar, and -p_ybar * p_i / (1 - p_ybar) otherwise.
    ``1 - p_ybar`` is floored at EPS; ``clamped`` reports when that happens.
    """
    single, p, (ybar,) = _batch(p, ybar)
    idx = np.arange(len(p))
    pj = p[idx, ybar]
    rest = 1.0 - pj
    clamped = np.any(rest < EPS)
    rest = np.maximum(rest, EPS)
    loss = -np.log(rest)
    grad = -(pj / rest)[:, None] * p
    grad[idx, ybar] = pj
    return _out(single, loss, grad, clamped)


def nl_loss_multi(p, ybars) -> LossOutput:
    """Sum of ``nl_loss`` over k complementary labels per sample.

    ``ybars`` has shape ``(n, k)`` (or ``(k,)`` for one sample). All k terms
    share the same probabilities, i.e. one forward pass.
    """
    single, p, (ybars,) = _batch(p, ybars)
    if ybars.ndim != 2 or ybars.shape[1] == 0:
        raise InvalidProblemError("need at least one complementary label per sample")
    n, k = ybars.shape
    idx = np.arange(n)
    pj = p[idx[:, None], ybars]  # (n, k)
    rest = 1.0 - pj
    clamped = np.any(rest < EPS)
    rest = np.maximum(rest, EPS)
    loss = -np.log(rest).sum(axis=1)
    ratio = pj / rest
    grad = -ratio.sum(axis=1)[:, None] * p
    # each term adds p_j + p_j/(1-p_j) * p_j = p_j/(1-p_j) at its own index
    np.add.at(grad, (np.repeat(idx, k), ybars.ravel()), ratio.ravel())
    return _out(single, loss, grad, clamped)


def soft_ce_loss(p, q) -> LossOutput:
    """Cross-entropy against a target distribution: -sum_k q_k log p_k, gradient p - q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidProblemError(f"target shape {q.shape} != probability shape {p.shape}")
    clamped = np.any((q > 0) & (p < EPS))
    loss = -(q * np.log(np.clip(p, EPS, 1.0))).sum(axis=-1)
    grad = p - q
    if p.ndim == 1:
        return LossOutput(float(loss), grad, bool(clamped))
    return LossOutput(loss, grad, bool(clamped))


def uniform_nl_gradient(n_classes: int) -> tuple[float, float]:
    """Closed-form NL logit gradient at uniform probabilities.

    Returns ``(at_ybar, elsewhere)`` = ``(1/c, -1/(c(c-1)))``.
    """
    c = n_classes
    return 1.0 / c, -1.0 / (c * (c - 1))
