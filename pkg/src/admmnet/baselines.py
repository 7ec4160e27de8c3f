"""Full-batch backpropagation baselines: GD, Adagrad, Adadelta, Adam.

These train the same forward model (the network the splitting scheme
relaxes) so that traces are comparable run-for-run.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import objective
from .errors import DivergenceError
from .linalg import Rng, l2sq
from .objective import Dataset, MlpArchitecture, accuracy


@dataclass
class BaselineConfig:
    optimizer: str  # gd | adagrad | adadelta | adam
    learning_rate: float
    epochs: int
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    adadelta_decay: float = 0.95

    def __post_init__(self):
        if self.optimizer not in ("gd", "adagrad", "adadelta", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must be in (0,1)")


@dataclass
class BaselineTrace:
    iter: int
    loss: float
    train_acc: float
    test_acc: float
    wall_time: float


def _forward(W, b, x, arch: MlpArchitecture):
    """Returns pre-activations z and activations a per layer (a[-1] is input x)."""
    zs, acts = [], [x]
    last = len(W) - 1
    for l in range(len(W)):
        z = W[l] @ acts[-1] + b[l]
        zs.append(z)
        acts.append(arch.activation.value(z) if l < last else z)
    return zs, acts


def backprop_grads(W, b, data: Dataset, arch: MlpArchitecture):
    """Exact full-batch gradients of risk + regularizer w.r.t. every W_l, b_l."""
    zs, acts = _forward(W, b, data.x, arch)
    last = len(W) - 1
    gW = [None] * len(W)
    gb = [None] * len(W)
    delta = objective.risk_grad(zs[last], data.y, arch.risk)
    for l in range(last, -1, -1):
        gW[l] = delta @ acts[l].T
        gb[l] = np.sum(delta, axis=1, keepdims=True)
        if arch.regularizer.lam != 0.0:
            if arch.regularizer.kind == "l2":
                gW[l] = gW[l] + 2.0 * arch.regularizer.lam * W[l]
            else:
                gW[l] = gW[l] + arch.regularizer.lam * np.sign(W[l])
        if l > 0:
            delta = (W[l].T @ delta) * arch.activation.deriv(zs[l - 1])
    return gW, gb


def _loss(W, b, data, arch):
    zs, _ = _forward(W, b, data.x, arch)
    val = objective.risk(zs[-1], data.y, arch.risk)
    for w in W:
        val += arch.regularizer.value(w)
    return float(val), zs[-1]


class _Updater:
    """Per-parameter state for the four optimizer rules."""

    def __init__(self, cfg: BaselineConfig, params):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        cfg = self.cfg
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            if cfg.optimizer == "gd":
                out.append(p - cfg.learning_rate * g)
            elif cfg.optimizer == "adagrad":
                self.v[i] += g * g
                out.append(p - cfg.learning_rate * g / (np.sqrt(self.v[i]) + cfg.eps))
            elif cfg.optimizer == "adadelta":
                d = cfg.adadelta_decay
                self.v[i] = d * self.v[i] + (1 - d) * g * g
                upd = -np.sqrt(self.m[i] + cfg.eps) / np.sqrt(self.v[i] + cfg.eps) * g
                self.m[i] = d * self.m[i] + (1 - d) * upd * upd
                out.append(p + cfg.learning_rate * upd)
            else:  # adam
                self.m[i] = cfg.beta1 * self.m[i] + (1 - cfg.beta1) * g
                self.v[i] = cfg.beta2 * self.v[i] + (1 - cfg.beta2) * g * g
                mhat = self.m[i] / (1 - cfg.beta1 ** self.t)
                vhat = self.v[i] / (1 - cfg.beta2 ** self.t)
                out.append(p - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps))
        return out


def run_baseline(
    cfg: BaselineConfig,
    arch: MlpArchitecture,
    data: Dataset,
    eval_data: Dataset = None,
    trace_sink=None,
):
    """Trains by full-batch backprop; returns ((W, b), traces)."""
    rng = Rng(cfg.seed)
    dims = arch.layer_dims
    W, b = [], []
    for l in range(len(dims) - 1):
        s = np.sqrt(6.0 / (dims[l] + dims[l + 1]))
        W.append(rng.uniform(-s, s, (dims[l + 1], dims[l])))
        b.append(np.zeros((dims[l + 1], 1)))
    upd = _Updater(cfg, W + b)
    traces = []
    t0 = time.perf_counter()
    for it in range(1, cfg.epochs + 1):
        gW, gb = backprop_grads(W, b, data, arch)
        new = upd.step(W + b, gW + gb)
        W, b = new[: len(W)], new[len(W):]
        loss, z_last = _loss(W, b, data, arch)
        test_acc = float("nan")
        if eval_data is not None:
            _, z_eval = _loss(W, b, eval_data, arch)
            test_acc = accuracy(z_eval, eval_data.y)
        trace = BaselineTrace(
            iter=it,
            loss=loss,
            train_acc=accuracy(z_last, data.y),
            test_acc=test_acc,
            wall_time=time.perf_counter() - t0,
        )
        traces.append(trace)
        if trace_sink is not None:
            trace_sink(trace)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at epoch {it}", traces=traces)
    return (W, b), traces


# ---------------------------------------------------------------------------
# GCN comparison baseline (GD only; used as an independent oracle)
# ---------------------------------------------------------------------------

def gcn_backprop_grads(W, graph, a_norm, activation):
    from .gcn import masked_risk_grad

    ms, zs = [], [graph.features]
    last = len(W) - 1
    for l in range(len(W)):
        m = a_norm @ zs[-1] @ W[l]
        ms.append(m)
        zs.append(activation.value(m) if l < last else m)
    delta = masked_risk_grad(ms[last], graph.labels, graph.train_mask)
    gW = [None] * len(W)
    for l in range(last, -1, -1):
        gW[l] = (a_norm @ zs[l]).T @ delta
        if l > 0:
            delta = (a_norm.T @ delta @ W[l].T) * activation.deriv(ms[l - 1])
    return gW
