"""Block subproblem solvers: backtracked quadratic majorization, closed-form
bias and ReLU updates, FISTA for the output-layer solve, regularizer prox.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BacktrackError
from .linalg import Matrix, l2sq
from .objective import RISK_LIPSCHITZ, Regularizer, risk, risk_grad

# Slack used when accepting a majorization certificate; well inside the
# 1e-10 certificate tolerance the rest of the package asserts.
CERT_SLACK = 1e-12

DEFAULT_GROWTH = 2.0
DEFAULT_MAX_TRIALS = 60
SEED_FLOOR = 1e-8


@dataclass
class BacktrackResult:
    step: float
    candidate: Matrix
    trials: int
    violation: float  # phi(candidate) - Q(candidate; step) at acceptance


@dataclass
class StepSeeds:
    """Warm-started step seeds, one per (block kind, layer)."""

    values: dict = field(default_factory=dict)
    default: float = 1.0

    def get(self, key) -> float:
        return self.values.get(key, self.default)

    def update(self, key, accepted: float, growth: float = DEFAULT_GROWTH):
        self.values[key] = max(accepted / growth, SEED_FLOOR)


def backtrack_quadratic(
    eval_phi,
    grad: Matrix,
    anchor: Matrix,
    seed_step: float,
    growth: float = DEFAULT_GROWTH,
    prox=None,
    max_trials: int = DEFAULT_MAX_TRIALS,
) -> BacktrackResult:
    """Grow the step parameter geometrically until the quadratic model
    Q(x; t) = phi(anchor) + <grad, x - anchor> + (t/2) ||x - anchor||^2
    majorizes phi at the candidate x = anchor - grad/t (prox-mapped when a
    regularizer is present).

    eval_phi(candidate, step) may evaluate phi up to an additive constant
    that does not depend on the trial block; the certificate is unaffected.
    """
    if growth <= 1.0:
        raise ValueError("growth must exceed 1")
    phi0 = eval_phi(anchor, None)
    t = seed_step
    for trial in range(1, max_trials + 1):
        cand = anchor - grad / t
        if prox is not None:
            cand = prox(cand, t)
        delta = cand - anchor
        q = phi0 + float(np.vdot(grad, delta)) + 0.5 * t * l2sq(delta)
        val = eval_phi(cand, t)
        if np.isfinite(val) and val <= q + CERT_SLACK:
            return BacktrackResult(step=t, candidate=cand, trials=trial, violation=val - q)
        t *= growth
    raise BacktrackError(
        f"no certified step after {max_trials} trials (seed {seed_step:g}); "
        "this usually signals a wrong gradient or non-finite inputs"
    )


def update_b(
    anchor_b: Matrix,
    grad: Matrix,
    layer: int,
    n_layers: int,
    nu: float,
    rho: float,
    n_samples: int = 1,
) -> Matrix:
    """Closed-form bias update: divisor nu below the output layer, rho at it.

    The divisor is scaled by the sample count because the bias is shared
    across columns while the gradient sums over them; this is the exact
    minimizer of the batched quadratic model.
    """
    if nu <= 0.0 or rho <= 0.0:
        raise ValueError("nu and rho must be positive")
    divisor = (nu if layer < n_layers - 1 else rho) * n_samples
    return anchor_b - grad / divisor


def solve_z_relu(linear_in: Matrix, a_target: Matrix, w_lin: float, w_act: float) -> Matrix:
    """Elementwise minimizer of w_lin (z - m)^2 + w_act (t - max(z, 0))^2.

    Both branch candidates are evaluated and the lower objective wins;
    ties go to the nonnegative branch.
    """
    m, t = linear_in, a_target
    z_neg = np.minimum(m, 0.0)
    obj_neg = w_lin * (z_neg - m) ** 2 + w_act * t**2
    z_pos = np.maximum((w_lin * m + w_act * t) / (w_lin + w_act), 0.0)
    obj_pos = w_lin * (z_pos - m) ** 2 + w_act * (t - z_pos) ** 2
    return np.where(obj_neg < obj_pos, z_neg, z_pos)


def solve_z_leaky_relu(
    linear_in: Matrix,
    a_target: Matrix,
    slope: float,
    w_lin: float,
    w_act: float,
) -> Matrix:
    """Elementwise minimizer for f(z) = max(z, slope*z), slope in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ValueError("slope must lie in (0, 1)")
    m, t = linear_in, a_target
    z_neg = np.minimum((w_lin * m + w_act * slope * t) / (w_lin + w_act * slope**2), 0.0)
    obj_neg = w_lin * (z_neg - m) ** 2 + w_act * (t - slope * z_neg) ** 2
    z_pos = np.maximum((w_lin * m + w_act * t) / (w_lin + w_act), 0.0)
    obj_pos = w_lin * (z_pos - m) ** 2 + w_act * (t - z_pos) ** 2
    return np.where(obj_neg < obj_pos, z_neg, z_pos)


def prox_regularizer(v: Matrix, reg: Regularizer, lambda_over_step: float) -> Matrix:
    if reg.kind == "none" or lambda_over_step == 0.0:
        return v
    if reg.kind == "l2":
        return v / (1.0 + 2.0 * lambda_over_step)
    return np.sign(v) * np.maximum(np.abs(v) - lambda_over_step, 0.0)


# ---------------------------------------------------------------------------
# Output-layer solve
# ---------------------------------------------------------------------------

@dataclass
class FistaResult:
    z: Matrix
    iterations: int
    converged: bool


def fista_minimize(grad_fn, obj_fn, anchor: Matrix, step: float, tol: float, max_iter: int) -> FistaResult:
    """Monotone (function-value) FISTA on a smooth convex objective.

    Stops when the objective gradient at the kept iterate has infinity norm
    at most tol.  A non-tight solve is flagged, not fatal.
    """
    x = anchor.copy()
    x_obj = obj_fn(x)
    y = x
    t = 1.0
    for it in range(1, max_iter + 1):
        g = grad_fn(x)
        if float(np.max(np.abs(g))) <= tol:
            return FistaResult(z=x, iterations=it - 1, converged=True)
        cand = y - step * grad_fn(y)
        cand_obj = obj_fn(cand)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if cand_obj <= x_obj:
            x_new, x_new_obj = cand, cand_obj
        else:
            x_new, x_new_obj = x, x_obj
        y = x_new + (t / t_next) * (cand - x_new) + ((t - 1.0) / t_next) * (x_new - x)
        x, x_obj, t = x_new, x_new_obj, t_next
    g = grad_fn(x)
    return FistaResult(z=x, iterations=max_iter, converged=float(np.max(np.abs(g))) <= tol)


def closed_form_z_last_squared(w_aff: Matrix, u: Matrix, rho: float, y: Matrix) -> Matrix:
    """Exact minimizer of the squared-risk output subproblem."""
    m = y.shape[1]
    return (y / m + rho * w_aff - u) / (1.0 / m + rho)


def solve_z_last(
    w_aff: Matrix,
    u: Matrix,
    rho: float,
    y: Matrix,
    kind: str,
    anchor: Matrix,
    tol: float = 1e-8,
    max_iter: int = 100,
    force_fista: bool = False,
) -> FistaResult:
    """Minimize R(z; y) + <u, z - w_aff> + (rho/2)||z - w_aff||^2.

    Squared risk takes the exact closed form; cross-entropy runs monotone
    FISTA with step 1/(H + rho).
    """
    if kind == "squared" and not force_fista:
        return FistaResult(z=closed_form_z_last_squared(w_aff, u, rho, y), iterations=0, converged=True)

    def grad_fn(z):
        return risk_grad(z, y, kind) + u + rho * (z - w_aff)

    def obj_fn(z):
        d = z - w_aff
        return risk(z, y, kind) + float(np.vdot(u, d)) + 0.5 * rho * l2sq(d)

    step = 1.0 / (RISK_LIPSCHITZ + rho)
    return fista_minimize(grad_fn, obj_fn, anchor, step, tol, max_iter)
