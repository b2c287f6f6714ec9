"""Finite-difference verification of the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus_io import TimedTranscript, expand_transcripts
from .model import ModelConfig, forward_graph, init_params
from .numerics import Graph
from .training import LOSSES

THRESHOLD = 1e-4


def rel_error(g, g_hat):
    """Elementwise ``|g - g_hat| / max(1e-8, |g| + |g_hat|)``."""
    g, g_hat = np.asarray(g, dtype=np.float64), np.asarray(g_hat, dtype=np.float64)
    return np.abs(g - g_hat) / np.maximum(1e-8, np.abs(g) + np.abs(g_hat))


def tensor_rel_error(g, g_hat):
    """Whole-tensor ``||g - g_hat|| / max(1e-8, ||g|| + ||g_hat||)``.

    Entries that are tiny compared with the rest of the tensor carry pure
    finite-difference roundoff, which an elementwise ratio would amplify.
    """
    g, g_hat = np.asarray(g, dtype=np.float64), np.asarray(g_hat, dtype=np.float64)
    return float(np.linalg.norm(g - g_hat) / max(1e-8, np.linalg.norm(g) + np.linalg.norm(g_hat)))


def central_difference(fn, array, step):
    """Numerical gradient of scalar ``fn()`` w.r.t. ``array`` (perturbed in place)."""
    grad = np.zeros(array.shape, dtype=np.float64)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + step
        up = fn()
        array[idx] = orig - step
        down = fn()
        array[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


@dataclass
class Instance:
    frames: np.ndarray
    script: np.ndarray
    transcripts: np.ndarray
    target: np.ndarray


def random_instance(n=6, m=3, k=2, dim=8, seed=0) -> Instance:
    rng = np.random.default_rng(seed)
    frames = rng.standard_normal((n, dim))
    script = rng.standard_normal((m, dim))
    spans = []
    for _ in range(k):
        a = int(rng.integers(0, n))
        b = int(rng.integers(a + 1, n + 1))
        spans.append(TimedTranscript(rng.standard_normal(dim), float(a), float(b)))
    transcripts = expand_transcripts(spans, n, dim=dim).astype(np.float64)
    target = (rng.random(n) < 0.5).astype(np.float64)
    return Instance(frames, script, transcripts, target)


def check_model(config: ModelConfig, inst: Instance, seed=0, loss="bce", step=1e-5,
                dtype=np.float64, corrupt=None):
    """Relative gradient error (see :func:`tensor_rel_error`) per parameter tensor.

    ``corrupt`` names a tensor whose analytic gradient is deliberately
    perturbed (negative control).
    """
    params = init_params(config, seed)
    tensors = {k: v.astype(dtype) for k, v in params.tensors.items()}
    tr = inst.transcripts if config.use_transcript_branch else None

    def run(with_grad):
        g = Graph(dtype)
        t = {k: (g.param(k, v) if with_grad else g.constant(v)) for k, v in tensors.items()}
        scores = forward_graph(g, t, config, inst.frames, inst.script, tr, training=False)
        value = LOSSES[loss](scores, inst.target)
        if with_grad:
            return g.backward(value)
        return float(value.value[0, 0])

    analytic = run(True)
    if corrupt is not None:
        analytic[corrupt] = analytic[corrupt] * 1.01 + 1e-3
    errors = {}
    for name, value in tensors.items():
        numeric = central_difference(lambda: run(False), value, step)
        errors[name] = tensor_rel_error(analytic[name], numeric)
    return errors
