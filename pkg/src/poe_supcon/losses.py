"""Training objectives: supervised contrastive loss over picture labels,
cross-entropy, and log-space product-of-experts fusion.

The contrastive loss treats two descriptions of the same picture as a
positive pair. Two denominator conventions are supported:

* ``standard`` - the denominator sums over every non-anchor sample in the
  batch (the usual supervised-contrastive form; bounded below by 0).
* ``paper_literal`` - the denominator sums over negatives only. The ratio
  can then exceed 1, so the loss is unbounded below; kept for comparison.

Anchors whose positive set is empty (their picture appears once in the
batch) contribute zero; so do ``paper_literal`` anchors with no negatives.

Product-of-experts fusion turns each expert's logits into log-probabilities,
sums them element-wise, and renormalizes, so every modality multiplies into
the joint class distribution and any single confident expert can veto.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import log_softmax

__all__ = [
    "SUPCON_VARIANTS", "supcon_loss", "cross_entropy",
    "FusedLogits", "poe_fuse", "poe_backward", "total_loss",
]

SUPCON_VARIANTS = ("standard", "paper_literal")


def supcon_loss(h, picture_ids, temperature=0.07, variant="standard"):
    """Supervised contrastive loss and its gradient w.r.t. the embeddings.

    ``h`` is a (batch, dim) matrix of unit-normalized embeddings,
    ``picture_ids`` the per-row picture labels. Returns ``(loss, dh)``
    where the loss is summed over anchors. Batches smaller than 2 return
    ``(0.0, zeros)`` since no pair exists.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if variant not in SUPCON_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {SUPCON_VARIANTS}")
    h = np.asarray(h, dtype=np.float64)
    ids = np.asarray(picture_ids)
    n = h.shape[0]
    if ids.shape != (n,):
        raise ValueError(f"picture_ids shape {ids.shape} does not match batch size {n}")
    if n < 2:
        return 0.0, np.zeros_like(h)

    scores = h @ h.T / temperature
    same = ids[:, None] == ids[None, :]
    diag = np.eye(n, dtype=bool)
    pos_mask = same & ~diag
    den_mask = ~diag if variant == "standard" else ~same

    pos_count = pos_mask.sum(axis=1)
    den_count = den_mask.sum(axis=1)
    anchors = (pos_count > 0) & (den_count > 0)
    if not anchors.any():
        return 0.0, np.zeros_like(h)

    masked = np.where(den_mask, scores, -np.inf)
    row_max = np.where(anchors, masked.max(axis=1), 0.0)
    exp_shift = np.where(den_mask, np.exp(scores - row_max[:, None]), 0.0)
    lse = row_max + np.log(exp_shift.sum(axis=1))

    inv_pos = np.zeros(n)
    inv_pos[anchors] = 1.0 / pos_count[anchors]
    per_anchor = np.where(anchors, inv_pos * ((lse[:, None] - scores) * pos_mask).sum(axis=1), 0.0)
    loss = float(per_anchor.sum())

    # d loss / d scores: -1/|P(k)| on positives, softmax over the denominator
    # set on D(k) (each anchor's |P(k)| log terms share one normalizer).
    grad_s = np.zeros((n, n))
    grad_s[anchors] = (-inv_pos[anchors, None] * pos_mask[anchors]
                       + exp_shift[anchors] / exp_shift[anchors].sum(axis=1, keepdims=True))
    dh = (grad_s @ h + grad_s.T @ h) / temperature
    return loss, dh


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of the true class; returns (loss, d_logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    if n == 0:
        raise ValueError("cross_entropy on an empty batch")
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {n}")
    log_probs = log_softmax(logits)
    loss = float(-log_probs[np.arange(n), labels].mean())
    d_logits = np.exp(log_probs)
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    return loss, d_logits


@dataclass
class FusedLogits:
    """Per-expert class log-probabilities and their renormalized product."""

    per_modality: list  # log-probability matrices, one per expert
    fused: np.ndarray   # (batch, classes) log-probabilities, rows sum to 1 in prob space
    _cache: dict


def poe_fuse(per_modality_logits):
    """Fuse expert logits multiplicatively in log space.

    Each expert's logits pass through log-softmax (so the experts combine
    as probability distributions, not as raw scores), the log-probabilities
    are summed element-wise, and the sum is renormalized.
    """
    if len(per_modality_logits) == 0:
        raise ValueError("poe_fuse needs at least one expert")
    mats = [np.asarray(m, dtype=np.float64) for m in per_modality_logits]
    shape = mats[0].shape
    for i, m in enumerate(mats):
        if m.shape != shape:
            raise ValueError(f"expert {i} has shape {m.shape}, expected {shape}")
    log_probs = [log_softmax(m) for m in mats]
    total = np.sum(log_probs, axis=0) if len(log_probs) > 1 else log_probs[0].copy()
    fused = log_softmax(total)
    cache = {
        "expert_softmax": [np.exp(lp) for lp in log_probs],
        "total_softmax": np.exp(fused),
    }
    return FusedLogits(per_modality=log_probs, fused=fused, _cache=cache)


def poe_backward(fused, d_fused):
    """Gradient of the fused log-probabilities w.r.t. each expert's raw logits."""
    d_fused = np.asarray(d_fused, dtype=np.float64)
    # through the final renormalization
    d_total = d_fused - fused._cache["total_softmax"] * d_fused.sum(axis=1, keepdims=True)
    # through each expert's own log-softmax
    return [d_total - sm * d_total.sum(axis=1, keepdims=True)
            for sm in fused._cache["expert_softmax"]]


def total_loss(ce, supcon, weight):
    """Combined objective: cross-entropy plus weighted contrastive term."""
    return float(ce) + float(weight) * float(supcon)
