"""Occupancy losses with hand-derived gradients.

Two terms guide pre-training, combined as ``L = L_ce + lambda * L_lov``:

* a class-weighted cross entropy over BEV cells, normalized by the sum of
  the applied weights so the scale is grid-size independent::

      L_ce = sum_hw w[gt_hw] * (-ln p_hw[gt_hw]) / sum_hw w[gt_hw]

* the Lovász-Softmax loss: for each class n the per-cell error map is
  ``1 - p[n]`` where the ground truth equals n and ``p[n]`` elsewhere; the
  errors are sorted descending and dotted with the gradient of the Lovász
  extension of the Jaccard loss, then averaged over classes.

Cross-entropy gradients are taken with respect to the *logits* feeding the
softmax (the composition collapses to ``w/W * (p - onehot)``); the Lovász
gradient is with respect to the probabilities, and :func:`softmax_vjp`
pulls it back through the softmax when mixing the two.
"""

from __future__ import annotations

import numpy as np

__all__ = ["softmax_field", "weighted_ce", "lovasz_softmax", "total_loss",
           "softmax_vjp", "lovasz_grad"]


def softmax_field(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last (class) axis."""
    logits = np.asarray(logits, dtype=np.float64)
    if np.isnan(logits).any():
        raise ValueError("logits contain NaN")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_vjp(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. probabilities back to the pre-softmax logits."""
    inner = (probs * grad_probs).sum(axis=-1, keepdims=True)
    return probs * (grad_probs - inner)


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.ndim != gt.ndim + 1 or pred.shape[:-1] != gt.shape:
        raise ValueError(
            f"prediction {pred.shape} does not match ground truth {gt.shape}")
    if gt.size and (gt.min() < 0 or gt.max() >= pred.shape[-1]):
        raise ValueError(f"ground-truth labels out of range [0, {pred.shape[-1] - 1}]")
    return pred, gt.astype(np.int64)


def weighted_ce(pred: np.ndarray, gt: np.ndarray,
                weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Class-weighted cross entropy and its gradient w.r.t. the logits.

    `pred` holds per-cell probabilities (..., C); `gt` integer labels (...);
    `weights` a length-C vector.  Returns the weighted-mean loss and an
    array shaped like `pred` holding dL/dlogits.
    """
    pred, gt = _check_pair(pred, gt)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (pred.shape[-1],):
        raise ValueError(
            f"weights must have length {pred.shape[-1]}, got {weights.shape}")

    w_cell = weights[gt]
    total_w = w_cell.sum()
    if total_w == 0:
        raise ValueError("sum of applied weights is zero")
    p_true = np.take_along_axis(pred, gt[..., None], axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        loss = float((w_cell * -np.log(p_true)).sum() / total_w)

    onehot = np.zeros_like(pred)
    np.put_along_axis(onehot, gt[..., None], 1.0, axis=-1)
    grad = (w_cell / total_w)[..., None] * (pred - onehot)
    return loss, grad


def lovasz_grad(fg_sorted: np.ndarray) -> np.ndarray:
    """Gradient of the Lovász extension of the Jaccard loss.

    `fg_sorted` is the 0/1 foreground vector re-ordered by descending error;
    the result is the vector of Jaccard-loss increments along that prefix.
    """
    gts = fg_sorted.sum()
    intersection = gts - np.cumsum(fg_sorted)
    union = gts + np.cumsum(1.0 - fg_sorted)
    jaccard = 1.0 - intersection / union
    if fg_sorted.size > 1:
        jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_softmax(pred: np.ndarray, gt: np.ndarray,
                   classes: str = "present") -> tuple[float, np.ndarray]:
    """Lovász-Softmax loss and its gradient w.r.t. the probabilities.

    ``classes="present"`` averages over the non-empty classes that occur in
    `gt` (avoids zero-support degeneracy on small grids);  ``classes="all"``
    averages over every class 1..C-1 as the flat 1/N_cls formulation does.
    Class 0 (empty) never gets its own Jaccard term but still receives
    gradient through the other classes' error maps.

    The loss is piecewise linear; the returned gradient is exact wherever
    the descending error sort is strict (ties contribute a subgradient).
    """
    pred, gt = _check_pair(pred, gt)
    if classes not in ("present", "all"):
        raise ValueError(f"classes must be 'present' or 'all', got {classes!r}")
    n_classes = pred.shape[-1]
    flat_p = pred.reshape(-1, n_classes)
    flat_gt = gt.reshape(-1)

    if classes == "present":
        active = [n for n in np.unique(flat_gt) if n != 0]
    else:
        active = list(range(1, n_classes))

    grad = np.zeros_like(flat_p)
    if not active:
        return 0.0, grad.reshape(pred.shape)

    loss = 0.0
    for n in active:
        fg = (flat_gt == n).astype(np.float64)
        errors = np.where(fg > 0, 1.0 - flat_p[:, n], flat_p[:, n])
        perm = np.argsort(-errors, kind="stable")
        g = lovasz_grad(fg[perm])
        loss += float(errors[perm] @ g)
        g_unsorted = np.empty_like(g)
        g_unsorted[perm] = g
        # d(error)/d(p_n) is -1 on foreground cells, +1 elsewhere
        grad[:, n] += g_unsorted * (1.0 - 2.0 * fg)

    k = len(active)
    return loss / k, (grad / k).reshape(pred.shape)


def total_loss(pred: np.ndarray, gt: np.ndarray, weights: np.ndarray,
               lam: float = 1.0,
               lovasz_classes: str = "present") -> tuple[float, np.ndarray]:
    """``L_ce + lam * L_lov`` with the combined gradient w.r.t. the logits."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    ce, grad_logits = weighted_ce(pred, gt, weights)
    if lam == 0.0:
        return ce, grad_logits
    lov, grad_probs = lovasz_softmax(pred, gt, classes=lovasz_classes)
    return ce + lam * lov, grad_logits + lam * softmax_vjp(pred, grad_probs)
