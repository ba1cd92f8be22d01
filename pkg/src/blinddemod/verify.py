"""Empirical checks of the weight conditions and concentration bounds on sampled matrices.

The sup over all direction pairs in these conditions cannot be computed, so
every deviation reported here is a sampled lower bound on the true constant:
random unit pairs plus a few structured ones (equal, opposite, orthogonal).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .gen_net import GeneratorNetwork, activation_masks, apply_masked_transpose, forward
from .landscape import q_matrix, t_vector


def spectral_norm(A, iters: int = 200, tol: float = 1e-10) -> float:
    """Largest singular value by power iteration on A^T A from the all-ones vector."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("spectral_norm needs a matrix")
    v = np.ones(A.shape[1]) / math.sqrt(A.shape[1])
    sigma = float(np.linalg.norm(A @ v))
    for _ in range(iters):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(np.linalg.norm(A @ v))
        if abs(new - sigma) <= tol * max(new, 1e-300):
            return new
        sigma = new
    return sigma


def masked_gram(W, x, y, weights=None) -> np.ndarray:
    """W_{+,x}^T diag(weights) W_{+,y}; weights default to ones."""
    W = np.asarray(W, dtype=np.float64)
    px = (W @ x) > 0
    py = (W @ y) > 0
    wt = np.ones(W.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    return (W * (px * wt)[:, None]).T @ (W * py[:, None])


def _unit(rng, n):
    while True:
        v = rng.standard_normal(n)
        nv = np.linalg.norm(v)
        if nv > 0:
            return v / nv


def _orthogonal_to(rng, x):
    if x.shape[0] == 1:
        return None
    while True:
        v = rng.standard_normal(x.shape[0])
        v -= (v @ x) * x
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            return v / nv


def _check_alpha(alpha):
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


@dataclass
class WdcReport:
    epsilon_hat: float
    alpha_used: float
    num_pairs: int
    worst_pair: tuple
    seed: int


def wdc_deviation(W, alpha: float, num_pairs: int, seed: int) -> WdcReport:
    """max over sampled unit pairs of |W_{+,x}^T W_{+,y} - alpha Q_{x,y}|.

    ``num_pairs`` random pairs are followed by the structured pairs
    (x, x), (x, -x) and (x, orthogonal) for a random x.
    """
    _check_alpha(alpha)
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[1]
    rng = np.random.default_rng(seed)
    pairs = [(_unit(rng, n), _unit(rng, n)) for _ in range(num_pairs)]
    x = _unit(rng, n)
    pairs += [(x, x), (x, -x)]
    xo = _orthogonal_to(rng, x)
    if xo is not None:
        pairs.append((x, xo))

    best, worst = -1.0, None
    for x, y in pairs:
        dev = spectral_norm(masked_gram(W, x, y) - alpha * q_matrix(x, y))
        if dev > best:
            best, worst = dev, (x, y)
    return WdcReport(epsilon_hat=best, alpha_used=alpha, num_pairs=len(pairs),
                     worst_pair=worst, seed=seed)


@dataclass
class JointWdcReport:
    epsilon_hat_1: float
    epsilon_hat_2: float
    num_quadruples: int
    seed: int


def joint_deviations(B, C, alpha, h, x, m, y) -> tuple:
    """Both joint deviations at one quadruple, scaled by l / (|m||y|) and l / (|h||x|)."""
    ell = B.shape[0]
    qh = q_matrix(h, x)
    qm = q_matrix(m, y)
    Bh, Bx = np.maximum(B @ h, 0.0), np.maximum(B @ x, 0.0)
    Cm, Cy = np.maximum(C @ m, 0.0), np.maximum(C @ y, 0.0)
    lhs1 = masked_gram(B, h, x, Cm * Cy) - alpha / ell * float(m @ qm @ y) * qh
    lhs2 = masked_gram(C, m, y, Bh * Bx) - alpha / ell * float(h @ qh @ x) * qm
    e1 = spectral_norm(lhs1) * ell / (np.linalg.norm(m) * np.linalg.norm(y))
    e2 = spectral_norm(lhs2) * ell / (np.linalg.norm(h) * np.linalg.norm(x))
    return e1, e2


def joint_wdc_deviation(B, C, alpha: float, num_quadruples: int, seed: int) -> JointWdcReport:
    """Sampled joint-condition deviations for last layers B (l x n) and C (l x p).

    Random unit quadruples are followed by the structured one (h, h, m, m).
    """
    _check_alpha(alpha)
    B = np.asarray(B, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if B.shape[0] != C.shape[0]:
        raise ValueError("B and C must have the same number of rows")
    n, p = B.shape[1], C.shape[1]
    rng = np.random.default_rng(seed)
    quads = [(_unit(rng, n), _unit(rng, n), _unit(rng, p), _unit(rng, p))
             for _ in range(num_quadruples)]
    h, m = _unit(rng, n), _unit(rng, p)
    quads.append((h, h, m, m))
    e1 = e2 = 0.0
    for q in quads:
        a, b = joint_deviations(B, C, alpha, *q)
        e1, e2 = max(e1, a), max(e2, b)
    return JointWdcReport(epsilon_hat_1=e1, epsilon_hat_2=e2,
                          num_quadruples=len(quads), seed=seed)


# ---- regularized incomplete gamma -------------------------------------------

_EPS = 1e-16
_TINY = 1e-300


def _gamma_series(a, x):
    # P(a, x) = e^{-x} x^a / Gamma(a) * sum_n x^n / (a (a+1) ... (a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise RuntimeError("incomplete gamma series did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # Q(a, x) by the modified Lentz continued fraction
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise RuntimeError("incomplete gamma continued fraction did not converge")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def _check_gamma_args(a, x):
    if not a > 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be >= 0")


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a)."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def regularized_upper_gamma(a: float, x: float) -> float:
    """Q(a, x) = 1 - P(a, x), computed directly so tiny tails keep their digits."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def _check_k(k):
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError(f"k must be an integer >= 1, got {k}")
    return int(k)


def alpha_truncation(k: int) -> float:
    """Fraction of the second moment of N(0, I_k) kept by the ball of radius 3 sqrt(k).

    E[|w|^2 1{|w| <= 3 sqrt k}] / k = P((k+2)/2, 9k/2).
    """
    k = _check_k(k)
    return regularized_lower_gamma((k + 2) / 2.0, 4.5 * k)


def alpha_truncation_complement(k: int) -> float:
    """1 - alpha_truncation(k), accurate even once alpha rounds to 1."""
    k = _check_k(k)
    return regularized_upper_gamma((k + 2) / 2.0, 4.5 * k)


# ---- concentration spot checks ----------------------------------------------

def _nonzero(v, name):
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if not np.any(v):
        raise ValueError(f"{name} must be nonzero")
    return v


def gram_apply(net: GeneratorNetwork, p, q) -> np.ndarray:
    """Lambda_p^T Lambda_q q, matrix-free."""
    return apply_masked_transpose(net, activation_masks(net, p), forward(net, q))


def check_cascade_concentration(net: GeneratorNetwork, p, q, eps_assumed: float) -> tuple:
    """(|Lambda_p^T Lambda_q q - t_{p,q}|, 24 d^3 sqrt(eps) / 2^d |q|)."""
    p, q = _nonzero(p, "p"), _nonzero(q, "q")
    if eps_assumed < 0:
        raise ValueError("eps_assumed must be >= 0")
    d = net.depth
    lhs = float(np.linalg.norm(gram_apply(net, p, q) - t_vector(p, q, d)))
    bound = 24.0 * d**3 * math.sqrt(eps_assumed) / 2.0**d * float(np.linalg.norm(q))
    return lhs, bound


class JointConcentration(NamedTuple):
    lhs1: float
    lhs2: float
    bound1: float   # for lhs1, proportional to |x||m||y|
    bound2: float   # for lhs2, proportional to |y||h||x|

    @property
    def holds(self) -> bool:
        return self.lhs1 <= self.bound1 and self.lhs2 <= self.bound2


def check_joint_concentration(net1: GeneratorNetwork, net2: GeneratorNetwork, h, x, m, y,
                              alpha: float, eps_assumed: float) -> JointConcentration:
    """Deviation of the two weighted cascade products from their closed forms.

    lhs1 = |Lambda1_h^T diag(G2(m) * G2(y)) Lambda1_x x - (alpha/l)(m . t_{m,y}) t_{h,x}|
    and lhs2 is the same with the roles of the two networks swapped.
    """
    h, x = _nonzero(h, "h"), _nonzero(x, "x")
    m, y = _nonzero(m, "m"), _nonzero(y, "y")
    if net1.output_dim != net2.output_dim:
        raise ValueError("networks must share the output dimension")
    _check_alpha(alpha)
    if eps_assumed < 0:
        raise ValueError("eps_assumed must be >= 0")
    d, s, ell = net1.depth, net2.depth, net1.output_dim
    g1h, g1x = forward(net1, h), forward(net1, x)
    g2m, g2y = forward(net2, m), forward(net2, y)
    th = t_vector(h, x, d)
    tm = t_vector(m, y, s)
    v1 = apply_masked_transpose(net1, activation_masks(net1, h), g2m * g2y * g1x)
    v2 = apply_masked_transpose(net2, activation_masks(net2, m), g1h * g1x * g2y)
    lhs1 = float(np.linalg.norm(v1 - alpha / ell * float(m @ tm) * th))
    lhs2 = float(np.linalg.norm(v2 - alpha / ell * float(h @ th) * tm))
    coef = 208.0 * d**3 * s**3 * math.sqrt(eps_assumed) / (2.0 ** (d + s) * ell)
    nx = float(np.linalg.norm(x))
    return JointConcentration(
        lhs1=lhs1, lhs2=lhs2,
        bound1=coef * nx * float(np.linalg.norm(m) * np.linalg.norm(y)),
        bound2=coef * nx * float(np.linalg.norm(y) * np.linalg.norm(h)),
    )


def network_wdc_epsilon(net: GeneratorNetwork, num_pairs: int, seed: int, alpha_last: float = 1.0) -> float:
    """Largest sampled WDC deviation over the layers; the last layer uses ``alpha_last``."""
    eps = 0.0
    for i, W in enumerate(net.layers):
        a = alpha_last if i == net.depth - 1 else 1.0
        eps = max(eps, wdc_deviation(W, a, num_pairs, seed + i).epsilon_hat)
    return eps
