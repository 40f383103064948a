"""Convergence-radius certificate for the projected estimator.

Given ground-truth shape parameters, the dictionary coherence profile and
Lipschitz estimates, this module assembles the certificate constants,
checks the noise feasibility condition, and evaluates the lower bound
``epsilon0`` on the radius of the sup-norm ball around theta* on which the
projected loss is strongly convex.

Per-order spectral surrogates (delta is the support's minimal separation,
all coherences at the ground-truth parameters):

    lambda_min[a] = 1/2 min_i { mu_a(t_i, t_i, 0) - C_a(t_i, t_i, delta) }
    lambda_max[a] = max_i   { mu_a(t_i, t_i, 0) + C_a(t_i, t_i, delta) }
    Lambda_min[a] = 1/2 min_i mu_a(t_i, t_i, 0) - S_a
    Lambda_max[a] = max_i   mu_a(t_i, t_i, 0) + S_a

Note the diagonal energies enter at separation 0.  The aggregation constants:

    alpha = [lambda_max[0] (c_mu + 2 p c_delta) + 2 Lambda_min[1] (c_mu + c_delta)] / lambda_max[0]^2
    beta  = [lambda_min[0] (c_mu + c_delta) + lambda_max[2] (c_mu + 2 c_delta)]
            / (2 sqrt(lambda_min[0]^3 lambda_min[2]))
    gamma = c_g c_g+ (1 + Lambda_min[0]) sqrt(lambda_max[2]) / sqrt(N lambda_min[0] Lambda_min[0])

Feasibility requires

    |w| < (Lambda_min[1] / lambda_max[0]) sqrt(lambda_min[0] / lambda_max[2]) |x|

and positive denominators throughout; when it holds,

    epsilon0 = [ (Lambda_min[1]/lambda_max[0]) |x|^2
                 - sqrt(lambda_max[2]/lambda_min[0]) |x| |w| ]
               / [ alpha |x|^2 + beta |x| |w| + gamma |x*| ].

Infeasible instances get epsilon0 = 0 and a cleared flag rather than an
exception, so radius maps can paint ill-posed regions cheaply.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .coherence import LipschitzEstimates, coherence, coherence_row_sum, total_coherence
from .dictionary import ProblemSpec
from .errors import DomainError

LIPSCHITZ_SAFETY = 1.5  # inflate observed-slope estimates before use in the bound

# the per-order surrogates use the separation-0 diagonal energy; recorded in
# every output so downstream consumers see the convention
SEPARATION_CONVENTION = "diagonal energies evaluated at separation 0"


@dataclass
class TheoremConstants:
    """All certificate constants for one instance, plus an input echo."""

    lambda_min: np.ndarray  # index a = 0, 1, 2
    lambda_max: np.ndarray
    big_lambda_min: np.ndarray
    big_lambda_max: np.ndarray
    row_sums: np.ndarray
    alpha_star: float
    beta_star: float
    gamma_star: float
    feasible: bool
    epsilon0: float
    norm_x: float
    norm_w: float
    norm_x_star: float
    n_samples: int
    n_groups: int
    lipschitz_safety: float
    metadata: dict = field(default_factory=dict)

    def to_json(self, path=None):
        payload = {
            "lambda_min": self.lambda_min.tolist(),
            "lambda_max": self.lambda_max.tolist(),
            "big_lambda_min": self.big_lambda_min.tolist(),
            "big_lambda_max": self.big_lambda_max.tolist(),
            "row_sums": self.row_sums.tolist(),
            "alpha_star": self.alpha_star,
            "beta_star": self.beta_star,
            "gamma_star": self.gamma_star,
            "feasible": self.feasible,
            "epsilon0": self.epsilon0,
            "norm_x": self.norm_x,
            "norm_w": self.norm_w,
            "norm_x_star": self.norm_x_star,
            "n_samples": self.n_samples,
            "n_groups": self.n_groups,
            "lipschitz_safety": self.lipschitz_safety,
            "metadata": self.metadata,
        }
        if path is None:
            return json.dumps(payload, indent=2)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def _denominators_positive(c: TheoremConstants) -> bool:
    return (
        c.lambda_max[0] > 0
        and c.lambda_min[0] > 0
        and c.lambda_min[2] > 0
        and c.big_lambda_min[0] > 0
        and c.big_lambda_min[1] > 0
    )


def theorem_constants(
    spec: ProblemSpec,
    theta_star,
    lipschitz: LipschitzEstimates,
    safety: float = LIPSCHITZ_SAFETY,
) -> TheoremConstants:
    """Assemble the per-order surrogates and aggregation constants at theta*.

    The returned object has ``feasible`` reflecting only the positivity of
    the required denominators; the noise condition and epsilon0 are filled
    in by feasibility() / radius_bound() (or compute_radius for both).
    """
    th = np.atleast_1d(np.asarray(theta_star, dtype=float))
    if th.shape != (spec.n_groups,):
        raise DomainError(f"theta_star must have one entry per group ({spec.n_groups})")
    delta = spec.support.separation
    p = spec.n_groups

    lam_min = np.empty(3)
    lam_max = np.empty(3)
    big_min = np.empty(3)
    big_max = np.empty(3)
    rows = np.empty(3)
    for a in (0, 1, 2):
        energies = np.array([coherence(spec, t, t, 0.0, a) for t in th])
        if np.isfinite(delta):
            totals = np.array([total_coherence(spec, t, t, delta, a).total for t in th])
            rows[a] = coherence_row_sum(spec, th, delta, a)
        else:
            totals = np.zeros(p)
            rows[a] = 0.0
        lam_min[a] = 0.5 * float(np.min(energies - totals))
        lam_max[a] = float(np.max(energies + totals))
        big_min[a] = 0.5 * float(np.min(energies)) - rows[a]
        big_max[a] = float(np.max(energies)) + rows[a]

    c_mu = safety * lipschitz.c_mu
    c_delta = safety * lipschitz.c_delta
    c_g = safety * lipschitz.c_g
    c_g_plus = safety * lipschitz.c_g_plus

    consts = TheoremConstants(
        lambda_min=lam_min,
        lambda_max=lam_max,
        big_lambda_min=big_min,
        big_lambda_max=big_max,
        row_sums=rows,
        alpha_star=math.nan,
        beta_star=math.nan,
        gamma_star=math.nan,
        feasible=False,
        epsilon0=0.0,
        norm_x=math.nan,
        norm_w=math.nan,
        norm_x_star=math.nan,
        n_samples=spec.grid.n_samples,
        n_groups=p,
        lipschitz_safety=float(safety),
        metadata={
            "separation": delta,
            "separation_convention": SEPARATION_CONVENTION,
            "lipschitz": {
                "c_mu": lipschitz.c_mu,
                "c_delta": lipschitz.c_delta,
                "c_g": lipschitz.c_g,
                "c_g_plus": lipschitz.c_g_plus,
                "n_probes": lipschitz.n_probes,
                "theta_range": [lipschitz.theta_lo, lipschitz.theta_hi],
            },
        },
    )
    if not _denominators_positive(consts):
        return consts

    n = spec.grid.n_samples
    consts.alpha_star = (
        lam_max[0] * (c_mu + 2.0 * p * c_delta) + 2.0 * big_min[1] * (c_mu + c_delta)
    ) / lam_max[0] ** 2
    consts.beta_star = (lam_min[0] * (c_mu + c_delta) + lam_max[2] * (c_mu + 2.0 * c_delta)) / (
        2.0 * math.sqrt(lam_min[0] ** 3 * lam_min[2])
    )
    consts.gamma_star = (
        c_g * c_g_plus * (1.0 + big_min[0]) * math.sqrt(lam_max[2])
    ) / math.sqrt(n * lam_min[0] * big_min[0])
    consts.feasible = True
    return consts


def feasibility(constants: TheoremConstants, norm_x: float, norm_w: float) -> bool:
    """Noise condition: |w| strictly below its certificate threshold."""
    if norm_x < 0 or norm_w < 0:
        raise DomainError("norms must be non-negative")
    if not _denominators_positive(constants):
        return False
    threshold = (
        constants.big_lambda_min[1]
        / constants.lambda_max[0]
        * math.sqrt(constants.lambda_min[0] / constants.lambda_max[2])
        * norm_x
    )
    return norm_w < threshold


def radius_bound(
    constants: TheoremConstants, norm_x: float, norm_w: float, norm_x_star: float
) -> float:
    """epsilon0 for the given signal/noise norms; 0 when infeasible."""
    if not feasibility(constants, norm_x, norm_w):
        return 0.0
    lam_min, lam_max = constants.lambda_min, constants.lambda_max
    numerator = (
        constants.big_lambda_min[1] / lam_max[0] * norm_x**2
        - math.sqrt(lam_max[2] / lam_min[0]) * norm_x * norm_w
    )
    denominator = (
        constants.alpha_star * norm_x**2
        + constants.beta_star * norm_x * norm_w
        + constants.gamma_star * norm_x_star
    )
    if denominator <= 0.0:
        if numerator > 0.0:
            warnings.warn(
                "degenerate radius bound: zero denominator with positive numerator "
                "(all Lipschitz estimates vanish); reporting +inf"
            )
            return math.inf
        return 0.0
    return max(0.0, numerator / denominator)


def compute_radius(
    spec: ProblemSpec,
    theta_star,
    lipschitz: LipschitzEstimates,
    norm_x: float,
    norm_w: float,
    norm_x_star: float,
    safety: float = LIPSCHITZ_SAFETY,
) -> TheoremConstants:
    """One-call certificate: constants, feasibility and epsilon0, with echo."""
    consts = theorem_constants(spec, theta_star, lipschitz, safety=safety)
    consts.norm_x = float(norm_x)
    consts.norm_w = float(norm_w)
    consts.norm_x_star = float(norm_x_star)
    consts.feasible = feasibility(consts, norm_x, norm_w)
    consts.epsilon0 = radius_bound(consts, norm_x, norm_w, norm_x_star) if consts.feasible else 0.0
    return consts
