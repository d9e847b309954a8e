"""Finite-difference verification of every analytic gradient in the toolkit.

Each check builds a small random problem, packs the relevant free
quantities into one vector, and compares the hand-derived gradient against
central differences. ReLU networks are only probed at points whose hidden
pre-activations stay clear of the kink, so the central difference is valid.
"""

import os

import numpy as np

from .losses import cross_entropy, poe_backward, poe_fuse, supcon_loss
from .model import (ffn_backward, ffn_forward, init_head, pack_params,
                    projection_backward, projection_forward, unpack_params)
from .numerics import Rng, grad_check

__all__ = ["run_gradient_checks", "FAIL_THRESHOLD"]

FAIL_THRESHOLD = 1e-5
KINK_MARGIN = 1e-3

CORRUPT_ENV = "POE_SUPCON_CORRUPT_GRADCHECK"


def _corrupt_enabled(corrupt):
    return corrupt or os.environ.get(CORRUPT_ENV, "") == "1"


def _check_cross_entropy(rng, corrupt=False):
    g = rng.generator
    logits = g.normal(size=(5, 2))
    labels = g.integers(0, 2, size=5)

    def f(vec):
        loss, d = cross_entropy(vec.reshape(5, 2), labels)
        d = d.ravel().copy()
        if _corrupt_enabled(corrupt):
            d[0] += 1e-3
        return loss, d

    return grad_check(f, logits.ravel())


def _check_supcon(rng, variant):
    g = rng.generator
    x = g.normal(size=(6, 4))
    pictures = g.integers(1, 4, size=6)  # repeats guaranteed by pigeonhole

    def f(vec):
        raw = vec.reshape(6, 4)
        norms = np.sqrt((raw * raw).sum(axis=1, keepdims=True))
        z = raw / norms
        loss, dz = supcon_loss(z, pictures, temperature=0.25, variant=variant)
        draw = (dz - z * (z * dz).sum(axis=1, keepdims=True)) / norms
        return loss, draw.ravel()

    return grad_check(f, x.ravel())


def _check_poe_ce(rng):
    g = rng.generator
    n_experts, batch = 3, 5
    logits = [g.normal(size=(batch, 2)) for _ in range(n_experts)]
    labels = g.integers(0, 2, size=batch)

    def f(vec):
        mats = [vec[i * batch * 2:(i + 1) * batch * 2].reshape(batch, 2)
                for i in range(n_experts)]
        fused = poe_fuse(mats)
        loss, d_fused = cross_entropy(fused.fused, labels)
        d_experts = poe_backward(fused, d_fused)
        return loss, np.concatenate([d.ravel() for d in d_experts])

    return grad_check(f, np.concatenate([m.ravel() for m in logits]))


def _pipeline_problem(rng):
    """Random multimodal batch + heads, resampled until pre-activations
    clear the ReLU kink margin."""
    dims = {"speech": 5, "text": 4, "image": 6}
    batch = 6
    labels = rng.split("labels").integers(0, 2, size=batch)
    pictures = rng.split("pictures").integers(1, 4, size=batch)
    for attempt in range(50):
        sub = rng.split("attempt", attempt)
        feats = {m: sub.split("x", m).normal(size=(batch, d)) for m, d in dims.items()}
        joint_x = np.concatenate([feats[m] for m in sorted(dims)], axis=1)
        heads = {m: init_head(m, d, sub.split("init", m), hidden=8, out_dim=2, proj_dim=6)
                 for m, d in dims.items()}
        heads["joint"] = init_head("joint", joint_x.shape[1], sub.split("init", "joint"),
                                   hidden=8, out_dim=2, proj_dim=6)
        clear = True
        for name, head in heads.items():
            x = joint_x if name == "joint" else feats[name]
            _, cache = ffn_forward(head, x)
            if np.abs(cache["pre1"]).min() < KINK_MARGIN:
                clear = False
                break
        if clear:
            return feats, joint_x, heads, labels, pictures
    raise RuntimeError("could not find a kink-free probe point")


def _check_full_pipeline(rng, cl_weight=1.0):
    """End-to-end objective: expert heads -> PoE -> CE, plus the contrastive
    term on the joint head's projection."""
    feats, joint_x, heads, labels, pictures = _pipeline_problem(rng)
    modality_names = sorted(feats)
    items = [(f"{name}/{key}", arr) for name in sorted(heads)
             for key, arr in heads[name].param_items()]

    def f(vec):
        values = unpack_params(vec, items)
        for name, head in heads.items():
            head.params = {key: values[f"{name}/{key}"] for key in head.params}
        caches = {}
        logits_list = []
        for name in modality_names:
            logits, caches[name] = ffn_forward(heads[name], feats[name])
            logits_list.append(logits)
        fused = poe_fuse(logits_list)
        _, caches["joint"] = ffn_forward(heads["joint"], joint_x)
        z, pcache = projection_forward(heads["joint"], caches["joint"])

        ce, d_fused = cross_entropy(fused.fused, labels)
        cl, dz = supcon_loss(z, pictures, temperature=0.3)
        loss = ce + cl_weight * cl

        d_experts = poe_backward(fused, d_fused)
        grads = {}
        for name, d_logits in zip(modality_names, d_experts):
            head_grads, _ = ffn_backward(heads[name], caches[name], d_logits)
            head_grads["Wp"] = np.zeros_like(heads[name].params["Wp"])
            grads[name] = head_grads
        d_wp, d_hidden = projection_backward(heads["joint"], pcache, cl_weight * dz)
        joint_grads, _ = ffn_backward(heads["joint"], caches["joint"],
                                      np.zeros((len(labels), 2)), d_hidden=d_hidden)
        joint_grads["Wp"] = d_wp
        grads["joint"] = joint_grads
        flat = pack_params([(key, grads[key.split("/")[0]][key.split("/")[1]])
                            for key, _ in items])
        return loss, flat

    return grad_check(f, pack_params(items))


def run_gradient_checks(seed=0, points=5, corrupt=False):
    """Max relative error per objective over ``points`` random probes.

    Returns a list of (name, max_error, passed) rows; a row fails at 1e-5.
    """
    root = Rng(seed)
    checks = [
        ("cross_entropy", lambda r: _check_cross_entropy(r, corrupt=corrupt)),
        ("supcon_standard", lambda r: _check_supcon(r, "standard")),
        ("supcon_paper_literal", lambda r: _check_supcon(r, "paper_literal")),
        ("poe_fused_cross_entropy", _check_poe_ce),
        ("full_pipeline", _check_full_pipeline),
    ]
    rows = []
    for name, fn in checks:
        worst = max(fn(root.split(name, p)) for p in range(points))
        rows.append((name, worst, worst < FAIL_THRESHOLD))
    return rows
