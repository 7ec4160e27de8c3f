"""Backward-forward ADMM training for graph convolutional networks.

Nodes sit in rows (N x C matrices), matching the propagation rule
Z_l = f(A_norm Z_{l-1} W_l).  The risk is the masked mean cross-entropy
over training nodes.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .activations import RELU, Activation
from .diagnostics import CkSeries
from .errors import DivergenceError, ShapeError
from .linalg import Matrix, Rng, l2sq
from .objective import _log_softmax
from .solvers import StepSeeds, backtrack_quadratic, fista_minimize


@dataclass
class Graph:
    n_nodes: int
    adjacency: Matrix  # 0/1, symmetric, zero diagonal
    features: Matrix  # N x C0
    labels: Matrix  # N x K one-hot (zero rows allowed for unlabeled nodes)
    train_mask: np.ndarray  # boolean (N,)
    test_mask: np.ndarray  # boolean (N,)

    def __post_init__(self):
        a = self.adjacency
        if a.shape != (self.n_nodes, self.n_nodes):
            raise ShapeError("adjacency must be n_nodes x n_nodes")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(self.train_mask & self.test_mask):
            raise ValueError("train and test masks must be disjoint")
        if not np.any(self.train_mask):
            raise ValueError("need at least one training node")


@dataclass
class GcnState:
    W: list  # W[l]: C_l x C_{l+1}
    Z: list  # Z[l]: N x C_{l+1}
    U: Matrix  # N x C_L
    A_norm: Matrix
    rho: float
    mu: float

    @property
    def n_layers(self) -> int:
        return len(self.W)

    def copy(self) -> "GcnState":
        return GcnState(
            W=[w.copy() for w in self.W],
            Z=[z.copy() for z in self.Z],
            U=self.U.copy(),
            A_norm=self.A_norm,
            rho=self.rho,
            mu=self.mu,
        )


@dataclass
class GcnConfig:
    hidden_dims: tuple
    rho: float
    mu: float
    epochs: int
    seed: int = 0
    activation: Activation = RELU
    growth: float = 2.0
    fista_tol: float = 1e-8
    fista_max_iter: int = 100

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.rho <= 0 or self.mu <= 0:
            raise ValueError("rho and mu must be positive")


@dataclass
class GcnTrace:
    iter: int
    lagrangian: float
    risk: float
    residual_fro: float
    ck: float
    train_acc: float
    test_acc: float
    step_stats: dict
    max_cert_violation: float
    wall_time: float


def normalize_adjacency(graph: Graph) -> Matrix:
    """(D + I)^{-1/2} (A + I) (D + I)^{-1/2} with self-loops added."""
    deg = graph.adjacency.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg + 1.0)
    return inv_sqrt[:, None] * (graph.adjacency + np.eye(graph.n_nodes)) * inv_sqrt[None, :]


# ---------------------------------------------------------------------------
# Masked risk (rows = nodes)
# ---------------------------------------------------------------------------

def masked_risk(z_last: Matrix, labels: Matrix, mask: np.ndarray) -> float:
    n_train = int(np.sum(mask))
    logp = _log_softmax(z_last[mask].T).T
    return float(-np.sum(labels[mask] * logp) / n_train)


def masked_risk_grad(z_last: Matrix, labels: Matrix, mask: np.ndarray) -> Matrix:
    n_train = int(np.sum(mask))
    g = np.zeros_like(z_last)
    p = np.exp(_log_softmax(z_last[mask].T).T)
    g[mask] = (p - labels[mask]) / n_train
    return g


# ---------------------------------------------------------------------------
# Penalty function and block gradients
# ---------------------------------------------------------------------------

def _z_prev(state: GcnState, graph: Graph, layer: int) -> Matrix:
    return graph.features if layer == 0 else state.Z[layer - 1]


def propagated(state: GcnState, graph: Graph, layer: int) -> Matrix:
    """A_norm Z_{l-1} W_l for the given layer."""
    return state.A_norm @ _z_prev(state, graph, layer) @ state.W[layer]


def psi(state: GcnState, graph: Graph, activation: Activation = RELU) -> float:
    last = state.n_layers - 1
    total = 0.0
    for l in range(last):
        total += 0.5 * state.mu * l2sq(state.Z[l] - activation.value(propagated(state, graph, l)))
    eps = state.Z[last] - propagated(state, graph, last)
    total += float(np.vdot(state.U, eps)) + 0.5 * state.rho * l2sq(eps)
    return total


def lagrangian(state: GcnState, graph: Graph, activation: Activation = RELU) -> float:
    return masked_risk(state.Z[-1], graph.labels, graph.train_mask) + psi(state, graph, activation)


def grad_psi_block(
    state: GcnState,
    graph: Graph,
    block: str,
    layer: int,
    activation: Activation = RELU,
) -> Matrix:
    last = state.n_layers - 1
    mu, rho = state.mu, state.rho

    if block == "W":
        if not 0 <= layer <= last:
            raise IndexError(f"layer {layer} out of range")
        az = state.A_norm @ _z_prev(state, graph, layer)
        m = az @ state.W[layer]
        if layer == last:
            scaled = state.U + rho * (state.Z[last] - m)
        else:
            d = state.Z[layer] - activation.value(m)
            scaled = mu * d * activation.deriv(m)
        return -az.T @ scaled

    if block == "Z":
        if not 0 <= layer <= last:
            raise IndexError(f"layer {layer} out of range")
        if layer == last:
            return state.U + rho * (state.Z[last] - propagated(state, graph, last))
        g = mu * (state.Z[layer] - activation.value(propagated(state, graph, layer)))
        nxt = layer + 1
        m = propagated(state, graph, nxt)
        if nxt == last:
            scaled = state.U + rho * (state.Z[last] - m)
        else:
            scaled = mu * (state.Z[nxt] - activation.value(m)) * activation.deriv(m)
        return g - state.A_norm.T @ scaled @ state.W[nxt].T

    raise ValueError(f"unknown block {block!r}")


# ---------------------------------------------------------------------------
# Block updates
# ---------------------------------------------------------------------------

def _update_W_gcn(work, graph, activation, layer, seeds, key, growth):
    last = work.n_layers - 1
    anchor = work.W[layer]
    grad = grad_psi_block(work, graph, "W", layer, activation)
    az = work.A_norm @ _z_prev(work, graph, layer)
    m0 = az @ anchor
    az_grad = az @ grad  # trial propagation is m0 - az_grad / step

    def eval_phi(cand, step):
        m = m0 if step is None else m0 - az_grad / step
        if layer == last:
            eps = work.Z[last] - m
            return float(np.vdot(work.U, eps)) + 0.5 * work.rho * l2sq(eps)
        return 0.5 * work.mu * l2sq(work.Z[layer] - activation.value(m))

    res = backtrack_quadratic(eval_phi, grad, anchor, seeds.get(key), growth)
    seeds.update(key, res.step, growth)
    work.W[layer] = res.candidate
    return res


def _update_Z_hidden(work, graph, activation, layer, seeds, key, growth):
    last = work.n_layers - 1
    anchor = work.Z[layer]
    grad = grad_psi_block(work, graph, "Z", layer, activation)
    fm = activation.value(propagated(work, graph, layer))
    nxt = layer + 1
    m_next0 = propagated(work, graph, nxt)
    a_grad_w = work.A_norm @ grad @ work.W[nxt]  # next propagation shifts by -a_grad_w/step

    def eval_phi(cand, step):
        own = 0.5 * work.mu * l2sq(cand - fm)
        m = m_next0 if step is None else m_next0 - a_grad_w / step
        if nxt == last:
            eps = work.Z[last] - m
            return own + float(np.vdot(work.U, eps)) + 0.5 * work.rho * l2sq(eps)
        return own + 0.5 * work.mu * l2sq(work.Z[nxt] - activation.value(m))

    res = backtrack_quadratic(eval_phi, grad, anchor, seeds.get(key), growth)
    seeds.update(key, res.step, growth)
    work.Z[layer] = res.candidate
    return res


def _update_Z_last(work, graph, cfg) -> bool:
    last = work.n_layers - 1
    w_aff = propagated(work, graph, last)

    def grad_fn(z):
        return (
            masked_risk_grad(z, graph.labels, graph.train_mask)
            + work.U
            + work.rho * (z - w_aff)
        )

    def obj_fn(z):
        d = z - w_aff
        return (
            masked_risk(z, graph.labels, graph.train_mask)
            + float(np.vdot(work.U, d))
            + 0.5 * work.rho * l2sq(d)
        )

    step = 1.0 / (1.0 + work.rho)
    res = fista_minimize(grad_fn, obj_fn, work.Z[last], step, cfg.fista_tol, cfg.fista_max_iter)
    work.Z[last] = res.z
    return res.converged


def gcn_iteration(state: GcnState, graph: Graph, cfg: GcnConfig, seeds: StepSeeds):
    """One backward + forward + dual iteration.  Returns the new state plus
    (barred state, step stats, max certificate violation, residual)."""
    act = cfg.activation
    last = state.n_layers - 1
    steps, worst = {}, 0.0

    work = state.copy()
    for layer in range(last, -1, -1):
        if layer == last:
            _update_Z_last(work, graph, cfg)
        else:
            res = _update_Z_hidden(work, graph, act, layer, seeds, ("Z_bar", layer), cfg.growth)
            steps[("Z_bar", layer)] = res.step
            worst = max(worst, res.violation)
        res = _update_W_gcn(work, graph, act, layer, seeds, ("W_bar", layer), cfg.growth)
        steps[("W_bar", layer)] = res.step
        worst = max(worst, res.violation)
    barred = work.copy()

    for layer in range(last + 1):
        res = _update_W_gcn(work, graph, act, layer, seeds, ("W", layer), cfg.growth)
        steps[("W", layer)] = res.step
        worst = max(worst, res.violation)
        if layer < last:
            res = _update_Z_hidden(work, graph, act, layer, seeds, ("Z", layer), cfg.growth)
            steps[("Z", layer)] = res.step
            worst = max(worst, res.violation)
        else:
            _update_Z_last(work, graph, cfg)

    eps = work.Z[last] - propagated(work, graph, last)
    work.U = work.U + work.rho * eps
    return work, barred, steps, worst, eps


def gcn_forward_init(graph: Graph, dims: tuple, activation: Activation, rng: Rng,
                     rho: float, mu: float) -> GcnState:
    """Glorot-uniform weights, Z by exact propagation, zero dual."""
    a_norm = normalize_adjacency(graph)
    W, Z = [], []
    cur = graph.features
    n_layers = len(dims) - 1
    for l in range(n_layers):
        fan_in, fan_out = dims[l], dims[l + 1]
        s = np.sqrt(6.0 / (fan_in + fan_out))
        W.append(rng.uniform(-s, s, (fan_in, fan_out)))
        m = a_norm @ cur @ W[l]
        cur = activation.value(m) if l < n_layers - 1 else m
        Z.append(cur)
    u = np.zeros_like(Z[-1])
    return GcnState(W=W, Z=Z, U=u, A_norm=a_norm, rho=rho, mu=mu)


def gcn_accuracy(state: GcnState, graph: Graph, mask: np.ndarray) -> float:
    logits = propagated(state, graph, state.n_layers - 1)
    pred = np.argmax(logits[mask], axis=1)
    truth = np.argmax(graph.labels[mask], axis=1)
    return float(np.mean(pred == truth)) if np.any(mask) else float("nan")


def gcn_train(graph: Graph, cfg: GcnConfig, trace_sink=None):
    dims = (graph.features.shape[1], *cfg.hidden_dims, graph.labels.shape[1])
    rng = Rng(cfg.seed)
    state = gcn_forward_init(graph, dims, cfg.activation, rng, cfg.rho, cfg.mu)
    seeds = StepSeeds()
    traces = []
    ck = CkSeries()
    t0 = time.perf_counter()
    for it in range(1, cfg.epochs + 1):
        prev = state
        new, barred, steps, worst, eps = gcn_iteration(prev, graph, cfg, seeds)
        moves = 0.0
        for l in range(prev.n_layers):
            moves += l2sq(barred.W[l] - prev.W[l]) + l2sq(new.W[l] - barred.W[l])
        for l in range(prev.n_layers - 1):
            moves += l2sq(barred.Z[l] - prev.Z[l]) + l2sq(new.Z[l] - barred.Z[l])
        moves += l2sq(barred.Z[-1] - prev.Z[-1]) + l2sq(new.Z[-1] - barred.Z[-1])
        ck.update(moves)
        lagr = lagrangian(new, graph, cfg.activation)
        trace = GcnTrace(
            iter=it,
            lagrangian=lagr,
            risk=masked_risk(new.Z[-1], graph.labels, graph.train_mask),
            residual_fro=float(np.sqrt(l2sq(eps))),
            ck=ck.values[-1],
            train_acc=gcn_accuracy(new, graph, graph.train_mask),
            test_acc=gcn_accuracy(new, graph, graph.test_mask),
            step_stats=steps,
            max_cert_violation=worst,
            wall_time=time.perf_counter() - t0,
        )
        traces.append(trace)
        if trace_sink is not None:
            trace_sink(trace)
        if not np.isfinite(lagr):
            raise DivergenceError(f"non-finite Lagrangian at iteration {it}", traces=traces)
        state = new
    return state, traces
