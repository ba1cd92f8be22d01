"""Empirical risk, exact one-sided gradients and the alternating descent scheme.

The objective is ``f(h, m) = 0.5 * |y0 - G1(h) * G2(m)|^2``.  Gradients only
use the observation ``y0``; the hidden latents never enter, since
``G1(h0) * G2(m0) = y0`` covers every place they would appear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gen_net import (
    GeneratorNetwork,
    activation_masks,
    apply_masked,
    apply_masked_transpose,
    forward,
)
from .landscape import hyperbola_branches, nearest_branch

# Sign patterns in tie-break order; index 0 keeps the current signs.
SIGN_PATTERNS = ((1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0))


class DegenerateIterateError(RuntimeError):
    """An iterate collapsed to zero in h or m; restart from a new point."""


@dataclass(frozen=True)
class IteratePair:
    h: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64).reshape(-1)
        m = np.array(self.m, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(m))):
            raise ValueError("iterate has non-finite entries")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "m", m)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.h, self.m])

    def __eq__(self, other):
        if not isinstance(other, IteratePair):
            return NotImplemented
        return np.array_equal(self.h, other.h) and np.array_equal(self.m, other.m)

    __hash__ = None


@dataclass
class SolverConfig:
    step_size: Optional[float] = None   # None: scale-aware default, see default_step_size
    step_scale: float = 0.5
    max_iters: int = 10000
    rel_tol: float = 1e-10
    window: int = 10
    perturb_seed: int = 0
    perturb_scale: float = 1e-9
    record_trace: bool = True

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.step_scale > 0:
            raise ValueError("step_scale must be positive")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be >= 0")
        if self.max_iters < 1 or self.window < 1:
            raise ValueError("max_iters and window must be positive")


@dataclass
class SolveReport:
    final: IteratePair
    objective_trace: list
    sign_flips: int
    iterations_used: int
    measurement_residual: float
    nearest_hyperbola: Optional[tuple] = None   # (branch index, relative distance)
    step_size: float = 0.0
    perturb_seed: int = 0
    converged: bool = False
    flip_iterations: list = field(default_factory=list)


def _check(net1, net2, y0, x: IteratePair):
    y0 = np.asarray(y0, dtype=np.float64)
    if net1.output_dim != net2.output_dim:
        raise ValueError("generators must share the output dimension")
    if y0.shape != (net1.output_dim,):
        raise ValueError(f"y0 has shape {y0.shape}, expected ({net1.output_dim},)")
    if x.h.shape != (net1.latent_dim,) or x.m.shape != (net2.latent_dim,):
        raise ValueError("iterate dimensions do not match the generators")
    return y0


def objective(net1: GeneratorNetwork, net2: GeneratorNetwork, y0, x: IteratePair) -> float:
    y0 = _check(net1, net2, y0, x)
    r = y0 - forward(net1, x.h) * forward(net2, x.m)
    return 0.5 * float(r @ r)


def _grad_h_masked(net1, net2, y0, h, m, masks1, masks2):
    a = apply_masked(net1, masks1, h)
    b = apply_masked(net2, masks2, m)
    return apply_masked_transpose(net1, masks1, b * b * a - b * y0)


def _grad_m_masked(net1, net2, y0, h, m, masks1, masks2):
    a = apply_masked(net1, masks1, h)
    b = apply_masked(net2, masks2, m)
    return apply_masked_transpose(net2, masks2, a * a * b - a * y0)


def grad_h(net1, net2, y0, x: IteratePair) -> np.ndarray:
    y0 = _check(net1, net2, y0, x)
    return _grad_h_masked(net1, net2, y0, x.h, x.m,
                          activation_masks(net1, x.h), activation_masks(net2, x.m))


def grad_m(net1, net2, y0, x: IteratePair) -> np.ndarray:
    y0 = _check(net1, net2, y0, x)
    return _grad_m_masked(net1, net2, y0, x.h, x.m,
                          activation_masks(net1, x.h), activation_masks(net2, x.m))


def _one_sided_masks(net1, net2, x: IteratePair, w, scale):
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    n = net1.latent_dim
    if w.shape != (n + net2.latent_dim,):
        raise ValueError("perturbation direction has the wrong length")
    wn = np.linalg.norm(w)
    if wn == 0.0:
        raise ValueError("perturbation direction must be nonzero")
    delta = scale * (1.0 + np.linalg.norm(x.stacked())) / wn
    masks1 = activation_masks(net1, x.h + delta * w[:n])
    masks2 = activation_masks(net2, x.m + delta * w[n:])
    return masks1, masks2


def one_sided_grad(net1, net2, y0, x: IteratePair, w, perturb_scale: float = 1e-9) -> tuple:
    """Limit of the gradient approached from x along w.

    Masks are read at ``x + delta * w`` with a tiny relative delta; the
    gradient formulas are then evaluated at x itself.
    """
    y0 = _check(net1, net2, y0, x)
    masks1, masks2 = _one_sided_masks(net1, net2, x, w, perturb_scale)
    return (
        _grad_h_masked(net1, net2, y0, x.h, x.m, masks1, masks2),
        _grad_m_masked(net1, net2, y0, x.h, x.m, masks1, masks2),
    )


def directional_derivative(net1, net2, y0, x: IteratePair, direction,
                           perturb_scale: float = 1e-9) -> float:
    """lim_{t->0+} (f(x + t v) - f(x)) / t for v = ``direction`` (unnormalized)."""
    direction = np.asarray(direction, dtype=np.float64).reshape(-1)
    if not np.any(direction):
        raise ValueError("direction must be nonzero")
    gh, gm = one_sided_grad(net1, net2, y0, x, direction, perturb_scale)
    return float(np.concatenate([gh, gm]) @ direction)


def select_signs(values) -> int:
    """Index into SIGN_PATTERNS of the least value; ties keep the earliest pattern."""
    best = 0
    for i in range(1, len(values)):
        if values[i] < values[best]:
            best = i
    return best


def sign_objectives(net1, net2, y0, h, m) -> list:
    """Objective at (h, m), (-h, m), (h, -m), (-h, -m) from four forward passes."""
    a_pos, a_neg = forward(net1, h), forward(net1, -h)
    b_pos, b_neg = forward(net2, m), forward(net2, -m)
    out = []
    for a, b in ((a_pos, b_pos), (a_neg, b_pos), (a_pos, b_neg), (a_neg, b_neg)):
        r = y0 - a * b
        out.append(0.5 * float(r @ r))
    return out


def default_step_size(net1, net2, y0, scale: float = 0.5) -> float:
    """Step matched to the curvature of f in h near the solution curve.

    Along the balanced solution the h-curvature is about
    |h0||m0| / (2^{d+s} l), and |y0| is about |h0||m0| / sqrt(2^{d+s} l)
    for Gaussian generators, so 1/curvature ~ sqrt(2^{d+s} l) / |y0|.
    """
    y_norm = float(np.linalg.norm(y0))
    if y_norm == 0.0:
        raise ValueError("y0 is zero; nothing to recover")
    k = 2.0 ** (net1.depth + net2.depth) * net1.output_dim
    return scale * math.sqrt(k) / y_norm


def measurement_residual(net1, net2, y0, x: IteratePair) -> float:
    y0 = np.asarray(y0, dtype=np.float64)
    r = forward(net1, x.h) * forward(net2, x.m) - y0
    return float(np.linalg.norm(r) / np.linalg.norm(y0))


def run(net1: GeneratorNetwork, net2: GeneratorNetwork, y0, x_init: IteratePair,
        cfg: Optional[SolverConfig] = None, h0=None, m0=None) -> SolveReport:
    """Alternating descent with sign selection and norm balancing.

    Each iteration: pick the best of the four sign patterns, step h along the
    one-sided h-gradient, step m along the m-gradient at the *new* h, then
    rescale so |h| = |m|.  If h0, m0 are given, the report classifies the
    final iterate against the four hyperbolic branches.
    """
    cfg = cfg or SolverConfig()
    y0 = _check(net1, net2, y0, x_init)
    h, m = x_init.h.copy(), x_init.m.copy()
    if not np.any(h) or not np.any(m):
        raise DegenerateIterateError("initial iterate has h = 0 or m = 0; pick a start off the axes")
    eta = cfg.step_size if cfg.step_size is not None else default_step_size(net1, net2, y0, cfg.step_scale)

    rng = np.random.default_rng(cfg.perturb_seed)
    w = rng.standard_normal(net1.latent_dim + net2.latent_dim)
    w /= np.linalg.norm(w)
    n = net1.latent_dim

    trace = []
    flips, flip_iters = 0, []
    f_best = None
    stall = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        vals = sign_objectives(net1, net2, y0, h, m)
        k = select_signs(vals)
        if k != 0:
            sh, sm = SIGN_PATTERNS[k]
            h, m = sh * h, sm * m
            flips += 1
            flip_iters.append(it)

        x = IteratePair(h, m)
        masks1, masks2 = _one_sided_masks(net1, net2, x, w, cfg.perturb_scale)
        h = h - eta * _grad_h_masked(net1, net2, y0, h, m, masks1, masks2)
        x = IteratePair(h, m)
        masks1, masks2 = _one_sided_masks(net1, net2, x, w, cfg.perturb_scale)
        m = m - eta * _grad_m_masked(net1, net2, y0, h, m, masks1, masks2)

        nh, nm = np.linalg.norm(h), np.linalg.norm(m)
        if nh == 0.0 or nm == 0.0 or not (np.isfinite(nh) and np.isfinite(nm)):
            raise DegenerateIterateError(
                f"iterate degenerated at iteration {it}; restart from a new random point"
            )
        c = math.sqrt(nh / nm)
        h, m = h / c, m * c

        r = y0 - forward(net1, h) * forward(net2, m)
        f = 0.5 * float(r @ r)
        if cfg.record_trace:
            trace.append(f)
        if f == 0.0:
            converged = True
            break
        # round-off makes f jitter once converged, so compare to the best value seen
        if f_best is not None and f > f_best * (1.0 - cfg.rel_tol):
            stall += 1
            if stall >= cfg.window:
                converged = True
                break
        else:
            stall = 0
        if f_best is None or f < f_best:
            f_best = f

    final = IteratePair(h, m)
    if not cfg.record_trace:
        trace = [objective(net1, net2, y0, final)]
    report = SolveReport(
        final=final,
        objective_trace=trace,
        sign_flips=flips,
        iterations_used=it,
        measurement_residual=measurement_residual(net1, net2, y0, final),
        step_size=eta,
        perturb_seed=cfg.perturb_seed,
        converged=converged,
        flip_iterations=flip_iters,
    )
    if h0 is not None and m0 is not None:
        branches = hyperbola_branches(h0, m0, net1.depth, net2.depth)
        report.nearest_hyperbola = nearest_branch(h, m, branches)
    return report
