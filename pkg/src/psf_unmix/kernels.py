"""Parametric point-spread-function families.

Each family is an even kernel ``t -> k(theta, t)`` with a single positive
shape parameter theta, smooth in theta, together with closed-form first and
second theta-derivatives (orders 0, 1, 2).  Supported families:

* ``u-laplace``: k(theta, t) = exp(-(|t|/theta)**u), exponent u > 0 controls
  how fast the tails decay (u=1 exponential, u=2 gaussian-like, u=20 nearly
  box-shaped).
* ``gaussian``:  k(theta, t) = exp(-t**2 / (2 theta**2)).
* ``lorentzian``: k(theta, t) = theta**2 / (theta**2 + t**2).

All evaluation is vectorized over ``t``.  Exponent arguments below -745
underflow to exactly 0.0 instead of raising, so kernel tails remain
representable at any machine-feasible scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError

FAMILIES = ("u-laplace", "gaussian", "lorentzian")

# exp() underflows to 0.0 below this argument; used to short-circuit tails
_EXP_UNDERFLOW = -745.0


@dataclass(frozen=True)
class KernelFamily:
    """An even, theta-parametric PSF family with an open theta domain.

    ``u`` is only meaningful for the u-laplace family and must be None
    otherwise.  ``theta_lo``/``theta_hi`` bound the open parameter domain,
    with theta_lo > 0.
    """

    family: str
    u: float | None = None
    theta_lo: float = 1e-6
    theta_hi: float = 100.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "u-laplace":
            if self.u is None or not (self.u > 0):
                raise DomainError("u-laplace requires a positive exponent u")
        elif self.u is not None:
            raise DomainError(f"family {self.family!r} takes no exponent u")
        if not (0 < self.theta_lo < self.theta_hi):
            raise DomainError(f"invalid theta domain ({self.theta_lo}, {self.theta_hi})")

    def contains(self, theta: float) -> bool:
        return self.theta_lo < theta < self.theta_hi

    def label(self) -> str:
        if self.family == "u-laplace":
            return f"u-laplace(u={self.u:g})"
        return self.family


def u_laplace(u: float, theta_lo: float = 1e-6, theta_hi: float = 100.0) -> KernelFamily:
    return KernelFamily("u-laplace", u=float(u), theta_lo=theta_lo, theta_hi=theta_hi)


def gaussian(theta_lo: float = 1e-6, theta_hi: float = 100.0) -> KernelFamily:
    return KernelFamily("gaussian", theta_lo=theta_lo, theta_hi=theta_hi)


def lorentzian(theta_lo: float = 1e-6, theta_hi: float = 100.0) -> KernelFamily:
    return KernelFamily("lorentzian", theta_lo=theta_lo, theta_hi=theta_hi)


def from_name(name: str, u: float | None = None, **kwargs) -> KernelFamily:
    """Build a family from its string id, as used in config files."""
    name = name.strip().lower().replace("_", "-")
    if name == "u-laplace":
        if u is None:
            raise DomainError("kernel 'u-laplace' requires parameter u")
        return u_laplace(u, **kwargs)
    if name == "gaussian":
        return gaussian(**kwargs)
    if name == "lorentzian":
        return lorentzian(**kwargs)
    raise DomainError(f"unknown kernel id {name!r}")


def _u_laplace_eval(u: float, theta: float, t: np.ndarray, order: int) -> np.ndarray:
    # s = (|t|/theta)**u goes through log space so huge exponents never
    # overflow; s past the exp() underflow point forces all orders to 0
    # (s*exp(-s) and s**2*exp(-s) underflow even sooner than exp(-s)).
    at = np.abs(t)
    out = np.zeros_like(at, dtype=float)
    pos = at > 0.0
    if order == 0:
        out[~pos] = 1.0  # k(theta, 0) = 1; constant in theta, so orders 1, 2 stay 0
    if not np.any(pos):
        return out
    z = u * (np.log(at[pos]) - np.log(theta))
    live = z < np.log(-_EXP_UNDERFLOW)
    s = np.exp(np.where(live, z, 0.0))
    e = np.exp(-s)
    if order == 0:
        val = e
    elif order == 1:
        val = (u / theta) * s * e
    else:
        val = (u / theta**2) * s * (u * s - u - 1.0) * e
    out[pos] = np.where(live, val, 0.0)
    return out


def _gaussian_eval(theta: float, t: np.ndarray, order: int) -> np.ndarray:
    # s stays finite for any double t, theta in domain; exp underflows to 0
    s = t * t / (2.0 * theta * theta)
    e = np.exp(-np.minimum(s, -_EXP_UNDERFLOW + 1.0))
    if order == 0:
        return e
    if order == 1:
        return (2.0 * s / theta) * e
    return (2.0 * s / theta**2) * (2.0 * s - 3.0) * e


def _lorentzian_eval(theta: float, t: np.ndarray, order: int) -> np.ndarray:
    d = theta * theta + t * t
    if order == 0:
        return theta * theta / d
    if order == 1:
        return 2.0 * theta * t * t / (d * d)
    return 2.0 * t * t * (t * t - 3.0 * theta * theta) / (d * d * d)


def eval_kernel(family: KernelFamily, theta: float, t, order: int = 0):
    """Evaluate the order-th theta-derivative of the kernel at (theta, t).

    ``t`` may be a scalar or an array; the result has the same shape.
    Raises DomainError for theta outside the open domain or order not in
    {0, 1, 2}, NumericError if the result is non-finite.
    """
    if order not in (0, 1, 2):
        raise DomainError(f"derivative order must be 0, 1 or 2, got {order}")
    if not family.contains(theta):
        raise DomainError(
            f"theta={theta} outside domain ({family.theta_lo}, {family.theta_hi}) of {family.label()}"
        )
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    if family.family == "u-laplace":
        out = _u_laplace_eval(family.u, theta, t_arr, order)
    elif family.family == "gaussian":
        out = _gaussian_eval(theta, t_arr, order)
    else:
        out = _lorentzian_eval(theta, t_arr, order)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite kernel value for {family.label()} at theta={theta}")
    return float(out[0]) if scalar else out


def fd_step(theta: float) -> float:
    """Central-difference step used by the derivative self-check."""
    return 1e-6 * max(theta, 1e-3)


def check_derivatives(family: KernelFamily, theta_samples, t_samples) -> float:
    """Max relative error of analytic order-1/2 derivatives vs central FD.

    Order-1 values are compared against central differences of order-0 and
    order-2 against central differences of order-1, over the cartesian grid
    of the given samples.  The denominator of each relative error is floored
    at the roundoff resolution of the central difference at that theta
    (cancellation noise eps*|k|/2h): samples whose magnitude sits below that
    resolution cannot be certified tighter by an FD oracle and are measured
    against the floor instead.  Points where both values vanish contribute
    zero error.
    """
    thetas = np.atleast_1d(np.asarray(theta_samples, dtype=float))
    ts = np.atleast_1d(np.asarray(t_samples, dtype=float))
    if thetas.size == 0 or ts.size == 0:
        raise DomainError("check_derivatives needs non-empty sample sets")
    eps = float(np.finfo(float).eps)
    worst = 0.0
    for order in (1, 2):
        for th in thetas:
            h = fd_step(th)
            analytic = eval_kernel(family, th, ts, order)
            lo = eval_kernel(family, th - h, ts, order - 1)
            hi = eval_kernel(family, th + h, ts, order - 1)
            fd = (hi - lo) / (2.0 * h)
            noise = eps * float(np.max(np.abs(np.concatenate([lo, hi])))) / (2.0 * h)
            floor = max(1e7 * noise, 1e-300)
            scale = np.maximum(np.abs(analytic), np.abs(fd))
            err = np.abs(analytic - fd) / np.maximum(scale, floor)
            err[scale == 0.0] = 0.0
            worst = max(worst, float(np.max(err)))
    return worst
