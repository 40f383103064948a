"""Projected least-squares calculus and the local solver.

The estimator minimizes

    L(theta) = (1/2N) |P_perp(theta) x|^2,     P_perp = Id - G(theta) G(theta)+

over the group shape parameters theta, after which amplitudes follow from
eta_hat = G(theta_hat)+ x.  Eliminating the amplitudes makes the problem
p-dimensional with p the number of groups, at the cost of theta-dependent
projectors.

Gradient.  With J the Jacobian of theta -> G(theta) eta_hat at frozen
eta_hat (column i is the group-i derivative block times the group-i
amplitudes), the envelope theorem gives the exact gradient

    dL/dtheta_i = -(1/N) <J_i, P_perp x>.

Hessian.  The evaluation reports the curvature/residual split

    hessian = (E + R) / N,   E = (P_perp J)' (P_perp J),
    R = diag(<G_{2,i} eta_i, P_perp x>).

E is the projected curvature term; projecting J onto the complement of the
dictionary span is what makes the split agree with finite differences of the
loss at a zero-residual point (where R vanishes and the formula is exact).
Away from zero residual the split is a model Hessian: R captures the
residual coupling through the diagonal second-derivative structure, and
cross terms of order |P_perp x| are dropped.  The solver only ever uses it
through a positive-definiteness gate, so the approximation is safe.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .dictionary import ProblemSpec, QrProjector, build_derivative_blocks
from .errors import ConditioningError, DomainError

TOL_GRADIENT = 1e-10
TOL_STEP = 1e-14
MAX_ITER = 500
ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60
BOUNDARY_STALL_LIMIT = 5


@dataclass(frozen=True)
class VarProEvaluation:
    """Loss, gradient and split Hessian of the projected functional at theta."""

    loss: float
    gradient: np.ndarray
    hessian: np.ndarray
    curvature_E: np.ndarray
    residual_R: np.ndarray
    eta_hat: np.ndarray
    projected_residual: np.ndarray


@dataclass(frozen=True)
class SolverOptions:
    tol_gradient: float = TOL_GRADIENT
    tol_step: float = TOL_STEP
    max_iter: int = MAX_ITER
    armijo_c: float = ARMIJO_C
    backtrack: float = BACKTRACK
    max_backtracks: int = MAX_BACKTRACKS
    boundary_stall_limit: int = BOUNDARY_STALL_LIMIT


@dataclass
class SolveResult:
    theta_hat: np.ndarray
    eta_hat: np.ndarray
    converged: bool
    termination_reason: str
    iterations: list = field(default_factory=list)  # (theta, loss, grad_inf, step_kind)

    def to_json(self, path=None):
        payload = {
            "theta_hat": self.theta_hat.tolist(),
            "eta_hat": self.eta_hat.tolist(),
            "converged": self.converged,
            "termination_reason": self.termination_reason,
            "iterations": [
                {"theta": list(th), "loss": lo, "grad_inf": gi, "step": kind}
                for th, lo, gi, kind in self.iterations
            ],
        }
        if path is None:
            return json.dumps(payload, indent=2)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def _factor(spec: ProblemSpec, theta):
    g0, blocks0 = build_derivative_blocks(spec, theta, order=0)
    return QrProjector(g0), blocks0


def _loss_grad(spec: ProblemSpec, theta, x):
    """Shared cheap path: loss, gradient, amplitudes, projected residual."""
    n = spec.grid.n_samples
    proj, _ = _factor(spec, theta)
    eta = proj.pinv_apply(x)
    resid = proj.project_complement(x)
    loss_val = float(resid @ resid) / (2.0 * n)
    j = jacobian_columns(spec, theta, eta)
    grad = -(j.T @ resid) / n
    return loss_val, grad, eta, resid, proj


def loss(spec: ProblemSpec, theta, x) -> float:
    """(1/2N) |P_perp(theta) x|^2."""
    n = spec.grid.n_samples
    proj, _ = _factor(spec, theta)
    resid = proj.project_complement(np.asarray(x, dtype=float))
    return float(resid @ resid) / (2.0 * n)


def amplitudes(spec: ProblemSpec, theta, x) -> np.ndarray:
    """Least-squares amplitudes eta_hat = G(theta)+ x."""
    proj, _ = _factor(spec, theta)
    return proj.pinv_apply(np.asarray(x, dtype=float))


def jacobian_columns(spec: ProblemSpec, theta, eta_hat) -> np.ndarray:
    """N x p Jacobian of theta -> G(theta) eta with eta frozen.

    Column i sums the order-1 atoms of group i weighted by that group's
    amplitude entries.
    """
    eta = np.asarray(eta_hat, dtype=float)
    if eta.shape != (spec.support.model_order,):
        raise DomainError(f"eta_hat must have length {spec.support.model_order}")
    _, blocks1 = build_derivative_blocks(spec, theta, order=1)
    cols = [blocks1[i] @ eta[sl] for i, sl in enumerate(spec.support.group_slices())]
    return np.column_stack(cols)


def gradient(spec: ProblemSpec, theta, x) -> np.ndarray:
    """Exact gradient of the projected loss. Entry i = -(1/N)<J_i, P_perp x>."""
    return _loss_grad(spec, theta, np.asarray(x, dtype=float))[1]


def hessian(spec: ProblemSpec, theta, x) -> VarProEvaluation:
    """Full evaluation with the curvature/residual Hessian split."""
    x = np.asarray(x, dtype=float)
    n = spec.grid.n_samples
    loss_val, grad, eta, resid, proj = _loss_grad(spec, theta, x)
    j = jacobian_columns(spec, theta, eta)
    pj = j - proj.project_span(j)
    curv = pj.T @ pj
    _, blocks2 = build_derivative_blocks(spec, theta, order=2)
    r_diag = np.array(
        [float((blocks2[i] @ eta[sl]) @ resid) for i, sl in enumerate(spec.support.group_slices())]
    )
    resid_mat = np.diag(r_diag)
    hess = (curv + resid_mat) / n
    return VarProEvaluation(
        loss=loss_val,
        gradient=grad,
        hessian=hess,
        curvature_E=curv,
        residual_R=resid_mat,
        eta_hat=eta,
        projected_residual=resid,
    )


def min_eigenvalue(matrix: np.ndarray) -> float:
    """Smallest eigenvalue of a (defensively symmetrized) matrix."""
    m = np.asarray(matrix, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


def _clip_to_domain(spec: ProblemSpec, theta: np.ndarray) -> np.ndarray:
    lo = np.nextafter(spec.kernel.theta_lo, np.inf)
    hi = np.nextafter(spec.kernel.theta_hi, -np.inf)
    return np.clip(theta, lo, hi)


def solve(spec: ProblemSpec, x, theta0, options: SolverOptions | None = None) -> SolveResult:
    """Damped Newton descent on the projected loss with box projection.

    Uses the split Hessian as the Newton model whenever it is positive
    definite, otherwise falls back to the gradient direction; steps are
    Armijo-backtracked and projected onto the open theta domain.  Terminates
    on a small gradient (converged), a vanishing step, an iteration cap, a
    boundary stall, or a conditioning failure mid-run.
    """
    opts = options or SolverOptions()
    x = np.asarray(x, dtype=float)
    theta = _clip_to_domain(spec, np.atleast_1d(np.asarray(theta0, dtype=float)).copy())
    if theta.shape != (spec.n_groups,):
        raise DomainError(f"theta0 must have one entry per group ({spec.n_groups})")

    trace = []
    eta = np.zeros(spec.support.model_order)
    stalled = 0
    force_gradient = False
    reason = "max-iterations"
    converged = False

    try:
        for _ in range(opts.max_iter):
            ev = hessian(spec, theta, x)
            eta = ev.eta_hat
            grad_inf = float(np.max(np.abs(ev.gradient)))
            if grad_inf < opts.tol_gradient:
                trace.append((tuple(theta), ev.loss, grad_inf, "converged"))
                converged, reason = True, "gradient-tolerance"
                break

            step_kind = "gradient"
            direction = -ev.gradient
            if not force_gradient:
                try:
                    c = np.linalg.cholesky(ev.hessian)
                    newton = -np.linalg.solve(c.T, np.linalg.solve(c, ev.gradient))
                    if np.all(np.isfinite(newton)):
                        direction, step_kind = newton, "newton"
                except np.linalg.LinAlgError:
                    pass

            alpha = 1.0
            accepted = False
            clipped = False
            candidate = theta
            for _bt in range(opts.max_backtracks):
                raw = theta + alpha * direction
                candidate = _clip_to_domain(spec, raw)
                clipped = clipped or bool(np.any(candidate != raw))
                actual_step = candidate - theta
                if float(np.max(np.abs(actual_step))) == 0.0:
                    break
                try:
                    cand_loss = loss(spec, candidate, x)
                except ConditioningError:
                    alpha *= opts.backtrack
                    continue
                # projected steps can flip the predicted-decrease sign, so the
                # model decrease is floored at 0 to keep the trace monotone
                model_dec = min(0.0, float(ev.gradient @ actual_step))
                if cand_loss <= ev.loss + opts.armijo_c * model_dec:
                    accepted = True
                    break
                alpha *= opts.backtrack

            trace.append((tuple(theta), ev.loss, grad_inf, step_kind if accepted else "stalled"))
            if not accepted:
                if step_kind == "newton":
                    force_gradient = True  # retry the same point along the gradient
                    continue
                stalled += 1
                if stalled >= opts.boundary_stall_limit:
                    reason = "boundary-stalled" if clipped else "line-search-stalled"
                    break
                continue
            stalled = 0
            force_gradient = False
            step_norm = float(np.linalg.norm(candidate - theta))
            theta = candidate
            if step_norm < opts.tol_step:
                reason = "step-tolerance"
                break
    except ConditioningError:
        reason = "ill-conditioned"
        converged = False

    if not trace or trace[-1][0] != tuple(theta):
        try:
            final_loss, final_grad, eta, _, _ = _loss_grad(spec, theta, x)
            grad_inf = float(np.max(np.abs(final_grad)))
            if grad_inf < opts.tol_gradient and reason != "ill-conditioned":
                converged, reason = True, "gradient-tolerance"
            trace.append((tuple(theta), final_loss, grad_inf, "final"))
        except ConditioningError:
            reason = "ill-conditioned"
            trace.append((tuple(theta), np.nan, np.nan, "final"))

    return SolveResult(
        theta_hat=theta,
        eta_hat=eta,
        converged=converged,
        termination_reason=reason,
        iterations=trace,
    )
