"""Minimal dense numerical kernel shared by the training and loss code.

Matrices are plain 2-D float64 numpy arrays (training math runs in 64-bit;
the on-disk embedding containers are float32 and get upcast on load). The
random source is a counter-based Philox generator behind a splittable
wrapper so every consumer derives its stream from one experiment seed.
"""

import zlib

import numpy as np

__all__ = ["as_matrix", "matmul", "softmax", "log_softmax", "Rng", "grad_check"]


def as_matrix(data):
    """Coerce input to a 2-D float64 array (1-D input becomes a row vector)."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a, b):
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})")
    return a @ b


def log_softmax(logits):
    """Row-wise log-softmax, shift-stabilized so huge logits cannot overflow."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"log_softmax expects a 2-D matrix, got ndim={z.ndim}")
    if z.shape[0] == 0:
        return z.copy()
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def _key_to_uint32(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & 0xFFFFFFFF


class Rng:
    """Deterministic splittable random source.

    Wraps numpy's counter-based Philox generator seeded through a
    SeedSequence, so the same 64-bit seed yields the same stream on every
    platform. ``split`` derives an independent child stream from a list of
    integer or string keys; splitting never advances the parent stream.
    """

    def __init__(self, seed, _spawn_key=()):
        self.seed = int(seed)
        self._spawn_key = tuple(_spawn_key)
        seq = np.random.SeedSequence(self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=self._spawn_key)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def split(self, *keys):
        return Rng(self.seed, self._spawn_key + tuple(_key_to_uint32(k) for k in keys))

    # thin passthroughs for the handful of draws the toolkit uses
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def shuffle(self, seq):
        self.generator.shuffle(seq)


def grad_check(f, x, eps=1e-5):
    """Compare an analytic gradient against central finite differences.

    ``f`` maps a 1-D parameter vector to ``(value, gradient)``. Returns the
    maximum over coordinates of the symmetric relative error
    ``|analytic - fd| / (|analytic| + |fd| + 1e-12)``.

    Caveat: central differences assume ``f`` is smooth on ``[x-eps, x+eps]``
    per coordinate; callers probing ReLU networks must nudge inputs away
    from activation kinks first.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    value, analytic = f(x)
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    if not np.isfinite(value):
        raise ValueError(f"objective is non-finite at the probe point (value={value})")
    if analytic.shape != x.shape:
        raise ValueError(f"gradient shape {analytic.shape} does not match point shape {x.shape}")

    worst = 0.0
    for i in range(x.size):
        probe = x.copy()
        probe[i] = x[i] + eps
        up, _ = f(probe)
        probe[i] = x[i] - eps
        down, _ = f(probe)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise ValueError(f"objective is non-finite near coordinate {i}")
        fd = (up - down) / (2.0 * eps)
        rel = abs(analytic[i] - fd) / (abs(analytic[i]) + abs(fd) + 1e-12)
        if rel > worst:
            worst = rel
    return worst
