"""Coherence, total coherence, Gramian spectrum bounds, Lipschitz estimates.

The order-a coherence between two parameter values at separation ``delta`` is
the largest absolute inner product between their sampled derivative atoms
when the centers are at least ``delta`` apart:

    mu_a(ti, tj, delta) = sup_{|d| >= delta} |<da(ti, 0), da(tj, d)>|.

The sup is taken over a dense lattice of center offsets with step equal to
the grid spacing.  All offsets are evaluated at once through one FFT
cross-correlation against the second atom sampled on an extended lattice
(so shifted atoms keep their true tails beyond the window), after which a
suffix-maximum table answers any separation query in O(1).  Values below the
FFT roundoff floor are clamped to exactly 0 so that non-overlapping atoms
report zero coherence.

Total coherence sums coherences over all nonzero integer multiples of the
minimal separation; the suffix-max construction makes every term
non-increasing, so the series is truncated once a term drops below 1e-12 of
the first one or the offset passes twice the interval length.  The last
neglected term is reported alongside the sum.

Lipschitz constants of the coherence maps and of theta -> G(theta) /
G(theta)+ have no closed form here; they are estimated as the largest
observed slope between adjacent probe points.  Refining a probe grid by
inserting midpoints can only increase these maxima, so the estimates are
monotone under nested refinement (they remain lower estimates of the true
constants; downstream users apply a safety factor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.signal

from .dictionary import ProblemSpec, SampleGrid, build_dictionary, pseudo_inverse
from .errors import DomainError
from .kernels import KernelFamily, eval_kernel

TRUNCATION_REL = 1e-12  # drop total-coherence terms below this fraction of the first
CAP_INTERVAL_MULTIPLE = 2.0  # ... or once the offset exceeds this multiple of the interval length


@dataclass(frozen=True)
class CoherenceReport:
    """One coherence/total-coherence query with its truncation diagnostics."""

    mu: float
    total: float
    order: int
    truncation_terms: int
    truncation_bound: float


@dataclass(frozen=True)
class LipschitzEstimates:
    """Observed-slope estimates of the theory's Lipschitz constants.

    All four are maxima of finite-difference slopes over a probe grid, hence
    lower estimates of the true constants.  ``c_mu``/``c_delta`` are maxima
    over derivative orders 0..2 of the coherence and total-coherence maps;
    ``c_g``/``c_g_plus`` cover theta -> G(theta) and its pseudo-inverse in
    spectral norm.
    """

    c_mu: float
    c_delta: float
    c_g: float
    c_g_plus: float
    theta_lo: float
    theta_hi: float
    n_probes: int
    delta: float
    c_mu_by_order: tuple[float, float, float]
    c_delta_by_order: tuple[float, float, float]


def _max_shift(grid: SampleGrid) -> int:
    """Lattice shifts covering offsets up to CAP_INTERVAL_MULTIPLE * interval length."""
    return int(math.ceil(CAP_INTERVAL_MULTIPLE * grid.length / grid.spacing))


@lru_cache(maxsize=128)
def _suffix_max_profile(
    kernel: KernelFamily, n_samples: int, half_width: float, theta_i: float, theta_j: float, order: int
) -> np.ndarray:
    """S[k] = max over lattice offsets |d| >= k*h of the atom inner product.

    The first atom is sampled on the window, the second on an extended
    lattice so that shifted atoms carry their true out-of-window tails.
    """
    grid = SampleGrid(n_samples, half_width)
    h = grid.spacing
    k_max = _max_shift(grid)
    a = eval_kernel(kernel, theta_i, grid.instants, order)
    ext = -half_width + h * np.arange(-k_max, n_samples + k_max)
    b_ext = eval_kernel(kernel, theta_j, ext, order)
    z = scipy.signal.correlate(b_ext, a, mode="valid", method="fft")
    # z[m] = <a, atom_j centered at (m - k_max) * h>; clamp FFT roundoff to 0
    floor = 32.0 * np.finfo(float).eps * float(np.linalg.norm(a)) * float(np.linalg.norm(b_ext))
    mags = np.abs(z)
    mags[mags < floor] = 0.0
    two_sided = np.maximum(mags[k_max:], mags[k_max::-1])
    return np.maximum.accumulate(two_sided[::-1])[::-1]


def _profile(spec: ProblemSpec, theta_i: float, theta_j: float, order: int) -> np.ndarray:
    for theta in (theta_i, theta_j):
        if not spec.kernel.contains(theta):
            raise DomainError(f"theta={theta} outside kernel domain")
    if order not in (0, 1, 2):
        raise DomainError(f"derivative order must be 0, 1 or 2, got {order}")
    lo, hi = sorted((float(theta_i), float(theta_j)))
    return _suffix_max_profile(spec.kernel, spec.grid.n_samples, spec.grid.half_width, lo, hi, order)


def _shift_index(grid: SampleGrid, delta: float) -> int:
    return int(math.ceil(delta / grid.spacing * (1.0 - 1e-12)))


def coherence(spec: ProblemSpec, theta_i: float, theta_j: float, delta: float, order: int) -> float:
    """mu_a(theta_i, theta_j, delta): sup of |atom inner products| at separation >= delta."""
    if delta < 0:
        raise DomainError("separation delta must be >= 0")
    profile = _profile(spec, theta_i, theta_j, order)
    if not np.isfinite(delta):
        return 0.0
    k0 = _shift_index(spec.grid, delta)
    return float(profile[k0]) if k0 < len(profile) else 0.0


def total_coherence(
    spec: ProblemSpec, theta_i: float, theta_j: float, delta: float, order: int
) -> CoherenceReport:
    """C_a(theta_i, theta_j, delta): sum of mu_a over nonzero multiples of delta."""
    if not (delta > 0):
        raise DomainError("total coherence needs a strictly positive separation")
    profile = _profile(spec, theta_i, theta_j, order)
    mu_at_delta = coherence(spec, theta_i, theta_j, delta, order)
    cap = CAP_INTERVAL_MULTIPLE * spec.grid.length
    if not np.isfinite(delta) or delta > cap or mu_at_delta == 0.0:
        return CoherenceReport(mu=mu_at_delta, total=0.0, order=order, truncation_terms=0, truncation_bound=0.0)
    threshold = TRUNCATION_REL * mu_at_delta
    acc = 0.0
    terms = 0
    neglected = 0.0
    m = 1
    while True:
        offset = m * delta
        if offset > cap:
            break
        k = _shift_index(spec.grid, offset)
        term = float(profile[k]) if k < len(profile) else 0.0
        if m > 1 and term < threshold:
            neglected = term
            break
        acc += term
        terms += 1
        m += 1
    return CoherenceReport(
        mu=mu_at_delta, total=2.0 * acc, order=order, truncation_terms=terms, truncation_bound=neglected
    )


def coherence_row_sum(spec: ProblemSpec, theta, delta: float, order: int) -> float:
    """S_a(theta) = max_i sum_j C_a(theta_i, theta_j, delta)."""
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    best = 0.0
    for ti in th:
        row = sum(total_coherence(spec, ti, tj, delta, order).total for tj in th)
        best = max(best, row)
    return best


@dataclass(frozen=True)
class GramianBounds:
    """Coherence-based sandwich for the derivative Gramian spectra.

    ``single_min``/``single_max`` bound the extreme eigenvalues of each
    per-group Gramian; ``full_min``/``full_max`` bound those of the full
    G_a' G_a.  Lower bounds can be negative, in which case they are vacuous
    (the sandwich test only applies when they are positive).
    """

    order: int
    single_min: np.ndarray
    single_max: np.ndarray
    full_min: float
    full_max: float


def gramian_bounds(spec: ProblemSpec, theta, order: int) -> GramianBounds:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    delta = spec.support.separation
    energies = np.array([coherence(spec, ti, ti, 0.0, order) for ti in th])
    totals = np.array([total_coherence(spec, ti, ti, delta, order).total for ti in th]) if np.isfinite(
        delta
    ) else np.zeros_like(energies)
    row_sum = coherence_row_sum(spec, th, delta, order) if np.isfinite(delta) else 0.0
    return GramianBounds(
        order=order,
        single_min=0.5 * energies - totals,
        single_max=energies + totals,
        full_min=0.5 * float(np.min(energies)) - row_sum,
        full_max=float(np.max(energies)) + row_sum,
    )


def _adjacent_slope_max(values: np.ndarray, probes: np.ndarray) -> float:
    dv = np.abs(np.diff(values))
    dt = np.diff(probes)
    return float(np.max(dv / dt))


def estimate_lipschitz(
    spec: ProblemSpec, theta_range: tuple[float, float], delta: float, n_probes: int
) -> LipschitzEstimates:
    """Largest observed slopes of the coherence and dictionary maps.

    Probes are uniform on ``theta_range``; the second coherence argument is
    pinned at the range midpoint.  The dictionary maps are probed along the
    all-groups-equal diagonal of the parameter space.
    """
    lo, hi = float(theta_range[0]), float(theta_range[1])
    if not (0 < lo < hi):
        raise DomainError(f"invalid theta range ({lo}, {hi})")
    if n_probes < 2:
        raise DomainError("need at least 2 probes")
    probes = np.linspace(lo, hi, n_probes)
    mid = 0.5 * (lo + hi)

    c_mu_by_order = []
    c_delta_by_order = []
    for order in (0, 1, 2):
        mu_vals = np.array([coherence(spec, t, mid, 0.0, order) for t in probes])
        cal_vals = np.array([total_coherence(spec, t, mid, delta, order).total for t in probes])
        c_mu_by_order.append(_adjacent_slope_max(mu_vals, probes))
        c_delta_by_order.append(_adjacent_slope_max(cal_vals, probes))

    p = spec.n_groups
    scale = math.sqrt(p)
    mats = [build_dictionary(spec, np.full(p, t)) for t in probes]
    pinvs = [pseudo_inverse(m) for m in mats]
    c_g = 0.0
    c_g_plus = 0.0
    for k in range(n_probes - 1):
        dt = (probes[k + 1] - probes[k]) * scale
        c_g = max(c_g, float(scipy.linalg.svdvals(mats[k + 1] - mats[k])[0]) / dt)
        c_g_plus = max(c_g_plus, float(scipy.linalg.svdvals(pinvs[k + 1] - pinvs[k])[0]) / dt)

    return LipschitzEstimates(
        c_mu=max(c_mu_by_order),
        c_delta=max(c_delta_by_order),
        c_g=c_g,
        c_g_plus=c_g_plus,
        theta_lo=lo,
        theta_hi=hi,
        n_probes=n_probes,
        delta=float(delta),
        c_mu_by_order=tuple(c_mu_by_order),
        c_delta_by_order=tuple(c_delta_by_order),
    )
