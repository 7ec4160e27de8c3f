"""Backward-then-forward ADMM training loop for MLPs.

One iteration runs a backward sweep (layer L-1 down to 0, block order
a -> z -> b -> W), a forward sweep (0 up to L-1, order W -> b -> z -> a),
then the residual and dual update.  Sweeps mutate a working copy in place,
which reproduces the mixed old/new indexing of the block subproblems: when
layer l is visited, higher layers already hold this sweep's values and lower
layers still hold the previous ones.

Backtracking trials are evaluated through partial penalty closures that
only touch the terms containing the trial block; candidates are affine in
the inverse step, so trial residuals reuse one precomputed product instead
of a fresh matrix multiply.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, objective
from .errors import DivergenceError
from .linalg import Matrix, Rng, l2sq
from .objective import Dataset, MlpArchitecture, MlpState
from .solvers import (
    StepSeeds,
    backtrack_quadratic,
    prox_regularizer,
    solve_z_last,
    solve_z_leaky_relu,
    solve_z_relu,
    update_b,
)


@dataclass
class TrainConfig:
    rho: float
    nu: float
    epochs: int
    seed: int = 0
    growth: float = 2.0
    fista_tol: float = 1e-8
    fista_max_iter: int = 100
    early_stop: bool = False
    early_stop_residual: float = 1e-6
    early_stop_drop: float = 1e-10
    early_stop_patience: int = 5

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.rho <= 0 or self.nu <= 0:
            raise ValueError("rho and nu must be positive")


@dataclass
class IterationTrace:
    iter: int
    objective_F: float
    lagrangian: float
    residual_l2: float
    descent_lhs: float
    block_move_sq_sum: float
    c2: float
    ck: float
    descent_ok: bool
    hypothesis_met: bool
    stationarity_residual: float
    train_acc: float
    test_acc: float
    step_stats: dict
    max_cert_violation: float
    fista_converged: bool
    wall_time: float


@dataclass
class TrainResult:
    state: MlpState
    traces: list
    converged_early: bool = False


def dual_update(state: MlpState, r: Matrix) -> Matrix:
    return state.u + state.rho * r


def _linear_term(lin: Matrix, nu: float, rho: float, u, is_last: bool) -> float:
    if is_last:
        return float(np.vdot(u, lin)) + 0.5 * rho * l2sq(lin)
    return 0.5 * nu * l2sq(lin)


def _update_W(work: MlpState, data: Dataset, arch: MlpArchitecture, layer: int,
              seeds: StepSeeds, key, growth: float):
    last = work.n_layers - 1
    a_prev = data.x if layer == 0 else work.a[layer - 1]
    anchor = work.W[layer]
    grad = objective.grad_phi_block(work, data, "W", layer, arch.activation)
    lin0 = work.z[layer] - anchor @ a_prev - work.b[layer]
    is_last = layer == last
    reg = arch.regularizer
    use_prox = reg.kind != "none" and reg.lam > 0.0

    if use_prox:
        def eval_phi(cand, step):
            lin = lin0 - (cand - anchor) @ a_prev
            return _linear_term(lin, work.nu, work.rho, work.u, is_last)

        prox = lambda v, t: prox_regularizer(v, reg, reg.lam / t)
    else:
        grad_a = grad @ a_prev  # trial residual is lin0 + grad_a / step

        def eval_phi(cand, step):
            lin = lin0 if step is None else lin0 + grad_a / step
            return _linear_term(lin, work.nu, work.rho, work.u, is_last)

        prox = None

    res = backtrack_quadratic(eval_phi, grad, anchor, seeds.get(key), growth, prox=prox)
    seeds.update(key, res.step, growth)
    work.W[layer] = res.candidate
    return res


def _update_a(work: MlpState, data: Dataset, arch: MlpArchitecture, layer: int,
              seeds: StepSeeds, key, growth: float):
    last = work.n_layers - 1
    nxt = layer + 1
    anchor = work.a[layer]
    grad = objective.grad_phi_block(work, data, "a", layer, arch.activation)
    fz = arch.activation.value(work.z[layer])
    lin0 = objective.linear_residual(work, data, nxt)
    w_grad = work.W[nxt] @ grad  # trial residual is lin0 + w_grad / step
    is_last = nxt == last

    def eval_phi(cand, step):
        lin = lin0 if step is None else lin0 + w_grad / step
        act = 0.5 * work.nu * l2sq(cand - fz)
        return act + _linear_term(lin, work.nu, work.rho, work.u, is_last)

    res = backtrack_quadratic(eval_phi, grad, anchor, seeds.get(key), growth)
    seeds.update(key, res.step, growth)
    work.a[layer] = res.candidate
    return res


def _update_b_block(work: MlpState, data: Dataset, arch: MlpArchitecture, layer: int):
    grad = objective.grad_phi_block(work, data, "b", layer, arch.activation)
    work.b[layer] = update_b(
        work.b[layer], grad, layer, work.n_layers, work.nu, work.rho,
        n_samples=data.n_samples,
    )


def _update_z_hidden(work: MlpState, data: Dataset, arch: MlpArchitecture, layer: int):
    a_prev = data.x if layer == 0 else work.a[layer - 1]
    m_in = work.W[layer] @ a_prev + work.b[layer]
    half_nu = 0.5 * work.nu
    act = arch.activation
    if act.kind == "relu":
        work.z[layer] = solve_z_relu(m_in, work.a[layer], half_nu, half_nu)
    else:
        work.z[layer] = solve_z_leaky_relu(m_in, work.a[layer], act.slope, half_nu, half_nu)


def _update_z_last(work: MlpState, data: Dataset, arch: MlpArchitecture, cfg) -> bool:
    last = work.n_layers - 1
    a_prev = data.x if last == 0 else work.a[last - 1]
    w_aff = work.W[last] @ a_prev + work.b[last]
    res = solve_z_last(
        w_aff, work.u, work.rho, data.y, arch.risk, work.z[last],
        tol=cfg.fista_tol, max_iter=cfg.fista_max_iter,
    )
    work.z[last] = res.z
    return res.converged


def backward_sweep(state: MlpState, data: Dataset, arch: MlpArchitecture,
                   seeds: StepSeeds, cfg: TrainConfig):
    """Returns (barred state, step_stats, max certificate violation, fista ok)."""
    work = state.copy()
    last = work.n_layers - 1
    steps, worst, fista_ok = {}, 0.0, True
    for layer in range(last, -1, -1):
        if layer == last:
            fista_ok = _update_z_last(work, data, arch, cfg)
        else:
            res = _update_a(work, data, arch, layer, seeds, ("a_bar", layer), cfg.growth)
            steps[("a_bar", layer)] = res.step
            worst = max(worst, res.violation)
            _update_z_hidden(work, data, arch, layer)
        _update_b_block(work, data, arch, layer)
        res = _update_W(work, data, arch, layer, seeds, ("W_bar", layer), cfg.growth)
        steps[("W_bar", layer)] = res.step
        worst = max(worst, res.violation)
    return work, steps, worst, fista_ok


def forward_sweep(barred: MlpState, data: Dataset, arch: MlpArchitecture,
                  seeds: StepSeeds, cfg: TrainConfig):
    """Continues from the barred state; anchors are the barred blocks."""
    work = barred.copy()
    last = work.n_layers - 1
    steps, worst, fista_ok = {}, 0.0, True
    for layer in range(last + 1):
        res = _update_W(work, data, arch, layer, seeds, ("W", layer), cfg.growth)
        steps[("W", layer)] = res.step
        worst = max(worst, res.violation)
        _update_b_block(work, data, arch, layer)
        if layer < last:
            _update_z_hidden(work, data, arch, layer)
            res = _update_a(work, data, arch, layer, seeds, ("a", layer), cfg.growth)
            steps[("a", layer)] = res.step
            worst = max(worst, res.violation)
        else:
            fista_ok = _update_z_last(work, data, arch, cfg)
    return work, steps, worst, fista_ok


def block_move_sq_sum(prev: MlpState, barred: MlpState, new: MlpState) -> float:
    """Squared block movements entering the descent bound and c_k: all W and b
    blocks, hidden a blocks, and the output z block only."""
    total = 0.0
    for l in range(prev.n_layers):
        total += l2sq(barred.W[l] - prev.W[l]) + l2sq(new.W[l] - barred.W[l])
        total += l2sq(barred.b[l] - prev.b[l]) + l2sq(new.b[l] - barred.b[l])
    for l in range(prev.n_layers - 1):
        total += l2sq(barred.a[l] - prev.a[l]) + l2sq(new.a[l] - barred.a[l])
    total += l2sq(barred.z[-1] - prev.z[-1]) + l2sq(new.z[-1] - barred.z[-1])
    return total


def train(
    arch: MlpArchitecture,
    data: Dataset,
    cfg: TrainConfig,
    eval_data: Dataset = None,
    trace_sink=None,
    init_state: MlpState = None,
) -> TrainResult:
    rng = Rng(cfg.seed)
    state = init_state if init_state is not None else objective.forward_init(
        arch, data, rng, cfg.rho, cfg.nu
    )
    seeds = StepSeeds()
    traces = []
    ck = diagnostics.CkSeries()
    quiet_iters = 0
    t0 = time.perf_counter()
    for it in range(1, cfg.epochs + 1):
        prev = state
        lagr_prev = objective.lagrangian(prev, data, arch)
        if not np.isfinite(lagr_prev):
            raise DivergenceError(
                f"non-finite Lagrangian entering iteration {it}", traces=traces
            )
        barred, bsteps, bviol, bfista = backward_sweep(prev, data, arch, seeds, cfg)
        new, fsteps, fviol, ffista = forward_sweep(barred, data, arch, seeds, cfg)
        r = objective.linear_residual(new, data, new.n_layers - 1)
        new.u = dual_update(new, r)
        lagr_new = objective.lagrangian(new, data, arch)

        moves = block_move_sq_sum(prev, barred, new)
        ck.update(moves)
        steps = {**bsteps, **fsteps}
        report = diagnostics.check_sufficient_descent(
            lagr_prev, lagr_new, moves, steps, arch.risk, cfg.rho, cfg.nu, it
        )
        logits = objective.forward_logits(new.W, new.b, data.x, arch.activation)
        trace = IterationTrace(
            iter=it,
            objective_F=objective.objective_F(new, data, arch),
            lagrangian=lagr_new,
            residual_l2=float(np.sqrt(l2sq(r))),
            descent_lhs=report.lhs,
            block_move_sq_sum=moves,
            c2=report.c2,
            ck=ck.values[-1],
            descent_ok=report.satisfied,
            hypothesis_met=report.hypothesis_met,
            stationarity_residual=diagnostics.stationarity_residual(new, data, arch.risk),
            train_acc=objective.accuracy(logits, data.y),
            test_acc=(
                objective.accuracy(
                    objective.forward_logits(new.W, new.b, eval_data.x, arch.activation),
                    eval_data.y,
                )
                if eval_data is not None
                else float("nan")
            ),
            step_stats=steps,
            max_cert_violation=max(bviol, fviol),
            fista_converged=bfista and ffista,
            wall_time=time.perf_counter() - t0,
        )
        traces.append(trace)
        if trace_sink is not None:
            trace_sink(trace)
        if not np.isfinite(lagr_new):
            raise DivergenceError(
                f"non-finite Lagrangian at iteration {it}", traces=traces
            )
        state = new
        if cfg.early_stop:
            drop = lagr_prev - lagr_new
            if trace.residual_l2 < cfg.early_stop_residual and drop < cfg.early_stop_drop:
                quiet_iters += 1
                if quiet_iters >= cfg.early_stop_patience:
                    return TrainResult(state=state, traces=traces, converged_early=True)
            else:
                quiet_iters = 0
    return TrainResult(state=state, traces=traces)
