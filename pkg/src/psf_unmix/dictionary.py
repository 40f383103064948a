"""Sampling grids, spike supports, dictionary matrices and signal synthesis.

The dictionary ``G(theta)`` stacks sampled, translated kernel atoms
column-wise, ordered group-major then spike-major:

    G = [g_{1,1} ... g_{1,M1} | g_{2,1} ... | g_{p,Mp}],   g_{i,l}[s] = k(theta_i, u_s - t_{i,l})

where ``u_s`` are the N uniformly spaced sample instants.  Derivative
dictionaries ``G_a`` replace the kernel by its order-a theta-derivative.
Pseudo-inverses and complement projections go through a QR factorization of
G rather than the normal equations, for numerical stability; an explicit
full-column-rank check guards every factorization.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import ConditioningError, DomainError, ValidationError
from .kernels import KernelFamily, eval_kernel

RCOND_MIN = 1e-12  # reciprocal condition of G'G below this is an error


@dataclass(frozen=True)
class SampleGrid:
    """N uniformly spaced instants spanning [-half_width, half_width].

    Endpoints are included, so the spacing is T/(N-1) with T the interval
    length 2*half_width.
    """

    n_samples: int
    half_width: float

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValidationError("grid needs at least 2 samples")
        if not (self.half_width > 0):
            raise ValidationError("half_width must be positive")

    @cached_property
    def instants(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_samples)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_samples - 1)

    @property
    def length(self) -> float:
        return 2.0 * self.half_width


@dataclass(frozen=True)
class SupportSpec:
    """Known spike locations, one tuple of locations per group."""

    groups: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.groups) == 0 or any(len(g) == 0 for g in self.groups):
            raise ValidationError("support needs at least one spike in every group")
        object.__setattr__(self, "groups", tuple(tuple(float(t) for t in g) for g in self.groups))
        locs = self.all_locations
        if len(locs) > 1:
            d = np.abs(locs[:, None] - locs[None, :])
            min_d = float(np.min(d[~np.eye(len(locs), dtype=bool)]))
            if min_d == 0.0:
                raise ValidationError("duplicate spike locations (separation would be 0)")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def group_sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    @property
    def model_order(self) -> int:
        return sum(self.group_sizes)

    @cached_property
    def all_locations(self) -> np.ndarray:
        return np.concatenate([np.asarray(g) for g in self.groups])

    @cached_property
    def separation(self) -> float:
        """Minimal pairwise distance over all spikes (across and within groups)."""
        locs = self.all_locations
        if len(locs) == 1:
            return np.inf
        d = np.abs(locs[:, None] - locs[None, :])
        return float(np.min(d[~np.eye(len(locs), dtype=bool)]))

    def group_slices(self) -> list[slice]:
        """Column ranges of each group in the group-major dictionary."""
        out, start = [], 0
        for m in self.group_sizes:
            out.append(slice(start, start + m))
            start += m
        return out


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to build G(theta): kernel family, grid, support."""

    kernel: KernelFamily
    grid: SampleGrid
    support: SupportSpec

    def __post_init__(self):
        hw = self.grid.half_width
        locs = self.support.all_locations
        if np.any(locs < -hw) or np.any(locs > hw):
            raise ValidationError("spike locations must lie inside the sampling interval")
        if self.grid.n_samples <= self.support.model_order:
            raise ValidationError(
                f"need N > M, got N={self.grid.n_samples}, M={self.support.model_order}"
            )

    @property
    def n_groups(self) -> int:
        return self.support.n_groups


@dataclass(frozen=True)
class GaussianNoise:
    """White gaussian noise rescaled to an exact total-energy SNR in dB."""

    snr_db: float
    seed: int


@dataclass(frozen=True)
class Observation:
    """An observed signal, optionally with the ground truth that generated it."""

    x: np.ndarray
    theta_star: np.ndarray | None = None
    eta_star: np.ndarray | None = None
    w: np.ndarray | None = None
    x_star: np.ndarray | None = None

    def to_csv(self, path, grid: SampleGrid):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["u_s", "x_s"])
            for u, v in zip(grid.instants, self.x):
                writer.writerow([repr(float(u)), repr(float(v))])

    def to_json(self, path):
        payload = {"x": self.x.tolist()}
        for name in ("theta_star", "eta_star", "w", "x_star"):
            val = getattr(self, name)
            payload[name] = None if val is None else np.asarray(val).tolist()
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def build_atom(spec: ProblemSpec, theta: float, center: float, order: int = 0) -> np.ndarray:
    """Sampled atom: entry s is the order-a kernel derivative at u_s - center."""
    return eval_kernel(spec.kernel, theta, spec.grid.instants - center, order)


def _as_theta_vector(spec: ProblemSpec, theta) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.shape != (spec.n_groups,):
        raise DomainError(f"theta must have one entry per group ({spec.n_groups}), got shape {th.shape}")
    return th


def build_derivative_blocks(spec: ProblemSpec, theta, order: int = 0):
    """Order-a dictionary G_a plus its per-group column blocks.

    Returns ``(G_a, blocks)`` where blocks[i] is the N x M_i view of group i.
    Columns follow the group-major ordering of the support.
    """
    th = _as_theta_vector(spec, theta)
    cols = []
    for i, group in enumerate(spec.support.groups):
        for center in group:
            cols.append(build_atom(spec, th[i], center, order))
    g_a = np.column_stack(cols)
    blocks = [g_a[:, sl] for sl in spec.support.group_slices()]
    return g_a, blocks


def build_dictionary(spec: ProblemSpec, theta) -> np.ndarray:
    """The N x M dictionary G(theta) of order-0 atoms."""
    g, _ = build_derivative_blocks(spec, theta, order=0)
    return g


class QrProjector:
    """QR factorization of G exposing G+, the span projector and its complement.

    Factoring once and reusing it is the workhorse of every loss/gradient/
    Hessian evaluation.  Construction fails with ConditioningError when the
    reciprocal condition of G'G falls below RCOND_MIN.
    """

    def __init__(self, g: np.ndarray):
        g = np.asarray(g, dtype=float)
        if g.ndim != 2 or g.shape[0] < g.shape[1]:
            raise ValidationError(f"G must be a tall N x M matrix, got shape {g.shape}")
        q, r = np.linalg.qr(g, mode="reduced")
        sv = scipy.linalg.svdvals(r)
        if sv[0] == 0.0:
            raise ConditioningError("dictionary is identically zero", rcond=0.0)
        rcond_gram = (sv[-1] / sv[0]) ** 2
        if not np.isfinite(rcond_gram) or rcond_gram < RCOND_MIN:
            raise ConditioningError(
                f"dictionary Gram matrix too ill-conditioned (rcond={rcond_gram:.3e})",
                rcond=float(rcond_gram),
            )
        self.g = g
        self.q = q
        self.r = r
        self.rcond_gram = float(rcond_gram)

    def pinv_apply(self, x: np.ndarray) -> np.ndarray:
        """G+ x, i.e. the least-squares amplitudes for x."""
        return scipy.linalg.solve_triangular(self.r, self.q.T @ x)

    def pinv(self) -> np.ndarray:
        return scipy.linalg.solve_triangular(self.r, self.q.T)

    def project_span(self, x: np.ndarray) -> np.ndarray:
        return self.q @ (self.q.T @ x)

    def project_complement(self, x: np.ndarray) -> np.ndarray:
        return x - self.project_span(x)


def pseudo_inverse(g: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a full-column-rank G, via QR."""
    return QrProjector(g).pinv()


def project_complement(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Component of x orthogonal to the column span of G."""
    return QrProjector(g).project_complement(np.asarray(x, dtype=float))


def synthesize(spec: ProblemSpec, theta_star, eta_star, noise: GaussianNoise | None = None) -> Observation:
    """Noiseless mixture G(theta*) eta* plus optional SNR-exact gaussian noise.

    With noise, w is white gaussian rescaled so that
    10*log10(|x*|^2 / |w|^2) equals snr_db exactly; the draw is a pure
    function of the seed.
    """
    th = _as_theta_vector(spec, theta_star)
    eta = np.asarray(eta_star, dtype=float)
    if eta.shape != (spec.support.model_order,):
        raise ValidationError(
            f"eta_star must have length M={spec.support.model_order}, got shape {eta.shape}"
        )
    x_star = build_dictionary(spec, th) @ eta
    if noise is None:
        w = np.zeros_like(x_star)
    else:
        energy = float(x_star @ x_star)
        if energy == 0.0:
            raise ValidationError("cannot set an SNR against a zero signal")
        rng = np.random.default_rng(noise.seed)
        w = rng.standard_normal(spec.grid.n_samples)
        w *= np.sqrt(energy * 10.0 ** (-noise.snr_db / 10.0) / float(w @ w))
    return Observation(x=x_star + w, theta_star=th, eta_star=eta, w=w, x_star=x_star)


def unit_mixture_amplitudes(spec: ProblemSpec, theta_star) -> np.ndarray:
    """Equal amplitudes 1/|sum of all atoms|_2.

    This is the normalization used throughout the experiment harness: every
    spike carries the same weight and the noiseless mixture G(theta*) eta*
    has exactly unit norm.
    """
    g = build_dictionary(spec, theta_star)
    total = g @ np.ones(g.shape[1])
    norm = float(np.linalg.norm(total))
    if norm == 0.0:
        raise ValidationError("unit-amplitude mixture has zero norm")
    return np.full(g.shape[1], 1.0 / norm)
