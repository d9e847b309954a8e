"""Feed-forward heads, hand-derived backward passes, and Adam.

Every head is a two-layer ReLU network ``x W1 + b1 -> relu -> W2 + b2``
mapping one modality's features (or the multimodal concatenation) to two
class logits, plus a bias-free linear projection ``Wp`` from the hidden
layer to the contrastive embedding space. Gradients are written out by
hand; the finite-difference checker in ``numerics`` is the referee.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .dataset import CONTAINER_MAGIC, CONTAINER_VERSION, DatasetError
from .numerics import matmul

__all__ = [
    "FfnHead", "AdamState", "init_head", "init_adam",
    "ffn_forward", "ffn_backward", "projection_forward", "projection_backward",
    "adam_step", "pack_params", "unpack_params",
    "save_checkpoint", "load_checkpoint",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wp")


@dataclass
class FfnHead:
    name: str
    in_dim: int
    hidden: int
    out_dim: int
    proj_dim: int
    params: dict  # name -> float64 array

    def param_items(self):
        return [(k, self.params[k]) for k in PARAM_NAMES]


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0


def init_head(name, in_dim, rng, hidden=256, out_dim=2, proj_dim=128):
    """He-style initialization; deterministic for a given rng stream."""
    g = rng.generator
    params = {
        "W1": g.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, hidden)),
        "b1": np.zeros(hidden),
        "W2": g.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, out_dim)),
        "b2": np.zeros(out_dim),
        "Wp": g.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, proj_dim)),
    }
    return FfnHead(name=name, in_dim=in_dim, hidden=hidden, out_dim=out_dim,
                   proj_dim=proj_dim, params=params)


def init_adam(head):
    return AdamState(m={k: np.zeros_like(v) for k, v in head.params.items()},
                     v={k: np.zeros_like(v) for k, v in head.params.items()})


def ffn_forward(head, x):
    """Forward pass; cache holds the activations the backward pass needs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.in_dim:
        raise ValueError(f"head {head.name!r} expects (*, {head.in_dim}) input, got {x.shape}")
    pre1 = matmul(x, head.params["W1"]) + head.params["b1"]
    h = np.maximum(pre1, 0.0)
    logits = matmul(h, head.params["W2"]) + head.params["b2"]
    cache = {"x": x, "pre1": pre1, "h": h}
    return logits, cache


def ffn_backward(head, cache, d_logits, d_hidden=None):
    """Backprop through the two linear layers and the ReLU.

    ``d_hidden`` lets a second loss (the contrastive projection) inject its
    gradient at the hidden layer. Returns parameter gradients for
    W1/b1/W2/b2 plus dX; dX points at fixed precomputed embeddings, so it
    is informational (e.g. splitting a concatenated head's input gradient
    back per modality).
    """
    x, pre1, h = cache["x"], cache["pre1"], cache["h"]
    d_logits = np.asarray(d_logits, dtype=np.float64)
    if d_logits.shape != (x.shape[0], head.out_dim):
        raise ValueError(f"d_logits shape {d_logits.shape} does not match "
                         f"({x.shape[0]}, {head.out_dim})")
    grads = {
        "W2": matmul(h.T, d_logits),
        "b2": d_logits.sum(axis=0),
    }
    dh = matmul(d_logits, head.params["W2"].T)
    if d_hidden is not None:
        dh = dh + d_hidden
    d_pre1 = dh * (pre1 > 0.0)
    grads["W1"] = matmul(x.T, d_pre1)
    grads["b1"] = d_pre1.sum(axis=0)
    dx = matmul(d_pre1, head.params["W1"].T)
    return grads, dx


def projection_forward(head, cache):
    """Hidden activations -> linear projection -> rows normalized to unit length."""
    h = cache["h"]
    p = matmul(h, head.params["Wp"])
    norms = np.sqrt((p * p).sum(axis=1, keepdims=True))
    safe = np.maximum(norms, 1e-12)
    z = p / safe
    return z, {"h": h, "z": z, "norms": safe}


def projection_backward(head, pcache, dz):
    """Backprop through unit-normalization and the projection weights."""
    h, z, norms = pcache["h"], pcache["z"], pcache["norms"]
    dz = np.asarray(dz, dtype=np.float64)
    # y = p/||p||  =>  dp = (dy - y (y . dy)) / ||p||
    dp = (dz - z * (z * dz).sum(axis=1, keepdims=True)) / norms
    d_wp = matmul(h.T, dp)
    d_hidden = matmul(dp, head.params["Wp"].T)
    return d_wp, d_hidden


def adam_step(params, grads, state, lr, l2=0.0, decoupled_l2=False):
    """One Adam update over a parameter dict, in place.

    L2 is coupled by default (added to the gradient before the moment
    updates); ``decoupled_l2`` switches to plain weight decay applied after
    the adaptive step.
    """
    state.t += 1
    t = state.t
    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r} at step {t}")
        if l2 != 0.0 and not decoupled_l2:
            g = g + l2 * theta
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1 ** t)
        v_hat = v / (1.0 - ADAM_BETA2 ** t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if l2 != 0.0 and decoupled_l2:
            theta -= lr * l2 * theta
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError(f"parameter {name!r} became non-finite at step {t}")
    return params, state


def pack_params(items):
    """Flatten (name, array) pairs into one vector (for gradient checking)."""
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for _, a in items])


def unpack_params(vector, items):
    """Inverse of pack_params; returns {name: array} with the original shapes."""
    out = {}
    offset = 0
    for name, a in items:
        size = a.size
        out[name] = vector[offset:offset + size].reshape(a.shape).copy()
        offset += size
    if offset != vector.size:
        raise ValueError(f"vector has {vector.size} entries, parameters need {offset}")
    return out


# --- checkpoint serialization ------------------------------------------------
# One binary file of concatenated embedding-container records (float32),
# plus a JSON index mapping tensor keys to byte offsets and head shapes.

def _tensor_records(heads, states):
    for name in sorted(heads):
        head = heads[name]
        for key, arr in head.param_items():
            yield f"{name}/{key}", arr
        if states and name in states:
            for key in PARAM_NAMES:
                yield f"{name}/adam_m/{key}", states[name].m[key]
                yield f"{name}/adam_v/{key}", states[name].v[key]


def save_checkpoint(path, heads, states=None):
    """Write heads (and optional Adam state) as float32 container records."""
    path = str(path)
    index = {"tensors": {}, "heads": {}, "adam_t": {}}
    blob = bytearray()
    for key, arr in _tensor_records(heads, states):
        a = np.ascontiguousarray(np.atleast_2d(np.asarray(arr)), dtype="<f4")
        index["tensors"][key] = {"offset": len(blob), "rows": a.shape[0], "cols": a.shape[1]}
        blob += CONTAINER_MAGIC
        blob.append(CONTAINER_VERSION)
        blob += struct.pack("<II", a.shape[0], a.shape[1])
        blob += a.tobytes(order="C")
    for name, head in heads.items():
        index["heads"][name] = {"in_dim": head.in_dim, "hidden": head.hidden,
                                "out_dim": head.out_dim, "proj_dim": head.proj_dim}
    if states:
        index["adam_t"] = {name: st.t for name, st in states.items()}
    with open(path + ".bin", "wb") as fh:
        fh.write(bytes(blob))
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_record(blob, entry):
    off, rows, cols = entry["offset"], entry["rows"], entry["cols"]
    header = blob[off:off + 13]
    if header[:4] != CONTAINER_MAGIC or header[4] != CONTAINER_VERSION:
        raise DatasetError(f"corrupt checkpoint record at offset {off}")
    got_rows, got_cols = struct.unpack_from("<II", header, 5)
    if (got_rows, got_cols) != (rows, cols):
        raise DatasetError(f"checkpoint record shape {(got_rows, got_cols)} "
                           f"disagrees with index {(rows, cols)}")
    start = off + 13
    data = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=start)
    return data.reshape(rows, cols).astype(np.float64)


def load_checkpoint(path):
    """Read heads and Adam state back; float32 storage, float64 in memory."""
    path = str(path)
    with open(path + ".json", encoding="utf-8") as fh:
        index = json.load(fh)
    with open(path + ".bin", "rb") as fh:
        blob = fh.read()

    def tensor(key, shape1d=False):
        arr = _read_record(blob, index["tensors"][key])
        return arr.ravel() if shape1d else arr

    heads, states = {}, {}
    for name, dims in index["heads"].items():
        params = {
            "W1": tensor(f"{name}/W1"),
            "b1": tensor(f"{name}/b1", shape1d=True),
            "W2": tensor(f"{name}/W2"),
            "b2": tensor(f"{name}/b2", shape1d=True),
            "Wp": tensor(f"{name}/Wp"),
        }
        heads[name] = FfnHead(name=name, params=params, **dims)
        if name in index.get("adam_t", {}):
            states[name] = AdamState(
                m={k: tensor(f"{name}/adam_m/{k}", shape1d=(k in ("b1", "b2")))
                   for k in PARAM_NAMES},
                v={k: tensor(f"{name}/adam_v/{k}", shape1d=(k in ("b1", "b2")))
                   for k in PARAM_NAMES},
                t=index["adam_t"][name],
            )
    return heads, states
