"""Closed-form landscape quantities for the two-generator demodulation objective.

Everything here is deterministic geometry: how one ReLU layer contracts the
angle between two inputs, the resulting prediction of ``Lambda_p^T Lambda_q q``
after k layers, the expected descent fields, and the four hyperbolic curves
on which those fields vanish.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _vec(x, name="vector"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return x


def _nonzero(x, name="vector"):
    x = _vec(x, name)
    if not np.any(x):
        raise ValueError(f"{name} must be nonzero")
    return x


def angle_between(x, y) -> float:
    """Angle in [0, pi] via atan2(|x||y| sin, x.y), stable near 0 and pi."""
    x = _nonzero(x, "x")
    y = _nonzero(y, "y")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    u, v = x / nx, y / ny
    # |u - v| and |u + v| give sin and cos of the half angle without cancellation
    return float(2.0 * math.atan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def angle_map(theta: float) -> float:
    """One-layer angle contraction g(theta) = arccos(((pi - theta) cos theta + sin theta) / pi)."""
    theta = float(theta)
    if not (0.0 <= theta <= math.pi):
        raise ValueError(f"angle {theta} outside [0, pi]")
    c = ((math.pi - theta) * math.cos(theta) + math.sin(theta)) / math.pi
    c = min(1.0, max(-1.0, c))
    # arccos loses digits as c -> 1; form 1 - c without cancellation and use atan2
    if theta < 0.1:
        # (1 - c) / theta^2, so tiny angles do not underflow through theta^2
        t2 = theta * theta
        sinc = 0.5 if theta == 0.0 else math.sin(0.5 * theta) / theta
        # (theta cos(theta) - sin(theta)) / theta^2 as a series
        tail = -theta * (1 / 3 - t2 * (1 / 30 - t2 * (1 / 840 - t2 / 45360)))
        scaled = (2.0 * math.pi * sinc * sinc + tail) / math.pi
        return math.atan2(theta * math.sqrt(scaled * (1.0 + c)), c)
    one_minus_c = (2.0 * math.pi * math.sin(0.5 * theta) ** 2 + theta * math.cos(theta) - math.sin(theta)) / math.pi
    s = math.sqrt(max(0.0, one_minus_c) * (1.0 + c))
    return math.atan2(s, c)


@dataclass(frozen=True)
class AngleSequence:
    values: tuple

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


def angle_sequence(theta0: float, depth: int) -> AngleSequence:
    """theta_0, g(theta_0), ..., k values in total."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    vals = [float(theta0)]
    angle_map(vals[0])  # domain check even when depth == 1
    for _ in range(depth - 1):
        vals.append(angle_map(vals[-1]))
    return AngleSequence(tuple(vals))


def _tail_products(thetas):
    # tail[i] = prod_{j=i+1}^{k-1} (pi - theta_j)/pi, with tail[k-1] = 1
    k = len(thetas)
    tail = [1.0] * k
    for i in range(k - 2, -1, -1):
        tail[i] = tail[i + 1] * (math.pi - thetas[i + 1]) / math.pi
    return tail


def angle_coefficients(theta0: float, depth: int) -> tuple:
    """(xi, zeta) so that the k-layer prediction is (xi q + zeta |q|/|p| p) / 2^k.

    xi is the full product of (pi - theta_i)/pi, zeta the sum of
    sin(theta_i)/pi times the trailing product.  They satisfy
    cos(theta_k) = xi cos(theta_0) + zeta.
    """
    thetas = angle_sequence(theta0, depth).values
    tail = _tail_products(thetas)
    xi = tail[0] * (math.pi - thetas[0]) / math.pi
    zeta = sum(math.sin(t) / math.pi * tail[i] for i, t in enumerate(thetas))
    return xi, zeta


def t_vector(p, q, depth: int) -> np.ndarray:
    p = _nonzero(p, "p")
    q = _nonzero(q, "q")
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    xi, zeta = angle_coefficients(angle_between(p, q), depth)
    return (xi * q + zeta * (np.linalg.norm(q) / np.linalg.norm(p)) * p) / 2.0**depth


def rho(depth: int) -> float:
    """Scale of the spurious negated branch for a depth-k generator.

    Same sum as ``zeta`` but for the angle sequence started at pi (where the
    i = 0 term vanishes).
    """
    if depth < 2:
        raise ValueError("rho is defined for depth >= 2")
    thetas = angle_sequence(math.pi, depth).values
    tail = _tail_products(thetas)
    return sum(math.sin(thetas[i]) / math.pi * tail[i] for i in range(1, depth))


def q_matrix(x, y) -> np.ndarray:
    """Expected masked Gram matrix (pi - t)/(2 pi) I + sin(t)/(2 pi) M_{x<->y}."""
    x = _nonzero(x, "x")
    y = _nonzero(y, "y")
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    theta = angle_between(x, y)
    n = x.shape[0]
    Q = (math.pi - theta) / (2 * math.pi) * np.eye(n)
    s = math.sin(theta)
    xh = x / np.linalg.norm(x)
    if abs(s) < 1e-12:
        M = np.outer(xh, xh)
    else:
        M = _swap_matrix(xh, y / np.linalg.norm(y))
    return Q + s / (2 * math.pi) * M


def _swap_matrix(xh, yh):
    # orthonormal basis (e1, e2) of span{xh, yh}; solve M on that plane
    e1 = xh
    r = yh - (yh @ e1) * e1
    e2 = r / np.linalg.norm(r)
    B = np.stack([e1, e2], axis=1)            # n x 2
    X = np.array([[1.0, yh @ e1], [0.0, yh @ e2]])   # coords of xh, yh
    Y = X[:, ::-1]                              # images: xh -> yh, yh -> xh
    M2 = Y @ np.linalg.inv(X)
    return B @ M2 @ B.T


def expected_direction_h(h, m, h0, m0, d: int, s: int, alpha: float = 1.0, ell: int = 1) -> np.ndarray:
    """Expected h-gradient: (a/(2^{d+s} l)) |m|^2 h - (a/l) (m . t_{m,m0}) t_{h,h0}."""
    h, m = _nonzero(h, "h"), _nonzero(m, "m")
    h0, m0 = _nonzero(h0, "h0"), _nonzero(m0, "m0")
    th = t_vector(h, h0, d)
    tm = t_vector(m, m0, s)
    return alpha / (2.0 ** (d + s) * ell) * (m @ m) * h - alpha / ell * (m @ tm) * th


def expected_direction_m(h, m, h0, m0, d: int, s: int, alpha: float = 1.0, ell: int = 1) -> np.ndarray:
    h, m = _nonzero(h, "h"), _nonzero(m, "m")
    h0, m0 = _nonzero(h0, "h0"), _nonzero(m0, "m0")
    th = t_vector(h, h0, d)
    tm = t_vector(m, m0, s)
    return alpha / (2.0 ** (d + s) * ell) * (h @ h) * m - alpha / ell * (h @ th) * tm


@dataclass(frozen=True)
class HyperbolaSpec:
    """The curve {(c h_dir, m_dir / c) : c > 0} and a relative radius."""

    h_dir: np.ndarray
    m_dir: np.ndarray
    radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "h_dir", _nonzero(self.h_dir, "h_dir"))
        object.__setattr__(self, "m_dir", _nonzero(self.m_dir, "m_dir"))
        if self.radius < 0:
            raise ValueError("radius must be >= 0")

    def contains(self, h, m) -> bool:
        return hyperbola_distance(h, m, self)[1] <= self.radius


def hyperbola_branches(h0, m0, d: int, s: int, radius: float = 0.0) -> list:
    """The four curves near which minimizers concentrate, truth first.

    Order: (h0, m0), (-rho_d h0, m0), (h0, -rho_s m0), (-rho_d h0, -rho_s m0).
    Placing rho on either coordinate gives the same curve up to c.
    """
    h0, m0 = _nonzero(h0, "h0"), _nonzero(m0, "m0")
    rd, rs = rho(d), rho(s)
    return [
        HyperbolaSpec(h0, m0, radius),
        HyperbolaSpec(-rd * h0, m0, radius),
        HyperbolaSpec(h0, -rs * m0, radius),
        HyperbolaSpec(-rd * h0, -rs * m0, radius),
    ]


def _poly(coefs, c):
    out = 0.0
    for a in coefs:
        out = out * c + a
    return out


def _poly_deriv(coefs):
    k = len(coefs) - 1
    return [a * (k - i) for i, a in enumerate(coefs[:-1])]


def _bracketed_root(coefs, lo, hi, flo):
    """Safeguarded Newton on a monotone segment with a sign change."""
    dcoefs = _poly_deriv(coefs)
    x = 0.5 * (lo + hi)
    for _ in range(200):
        fx = _poly(coefs, x)
        if fx == 0.0:
            return x
        if (fx < 0) == (flo < 0):
            lo, flo = x, fx
        else:
            hi = x
        dfx = _poly(dcoefs, x)
        step = x - fx / dfx if dfx != 0.0 else None
        x = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * hi:
            break
    return x


def _positive_roots(coefs, lo, hi):
    """All roots of the polynomial in (lo, hi), by recursing on its derivative.

    Between consecutive critical points the polynomial is monotone, so each
    such segment holds at most one root and a sign test finds it.
    """
    while len(coefs) > 1 and coefs[0] == 0.0:
        coefs = coefs[1:]
    if len(coefs) <= 1:
        return []
    if len(coefs) == 2:
        r = -coefs[1] / coefs[0]
        return [r] if lo < r < hi else []
    crit = _positive_roots(_poly_deriv(coefs), lo, hi)
    knots = [lo] + sorted(crit) + [hi]
    roots = []
    for a, b in zip(knots, knots[1:]):
        fa, fb = _poly(coefs, a), _poly(coefs, b)
        if fa == 0.0:
            roots.append(a)
        elif (fa < 0) != (fb < 0) and fb != 0.0:
            roots.append(_bracketed_root(coefs, a, b, fa))
    if _poly(coefs, hi) == 0.0:
        roots.append(hi)
    return roots


def hyperbola_distance(h, m, spec: HyperbolaSpec) -> tuple:
    """(c*, relative distance) from (h, m) to the curve of ``spec``.

    c* minimizes |h - c h~|^2 + |m - m~/c|^2 over c > 0.  The relative
    distance is sqrt of that minimum over |(c* h~, m~/c*)|.
    """
    h, m = _vec(h, "h"), _vec(m, "m")
    hd, md = spec.h_dir, spec.m_dir
    if h.shape != hd.shape or m.shape != md.shape:
        raise ValueError("point and curve dimensions differ")
    a4 = float(hd @ hd)
    a3 = -float(hd @ h)
    a1 = float(md @ m)
    a0 = -float(md @ md)
    coefs = [a4, a3, 0.0, a1, a0]
    # Cauchy bounds for the roots of p(c) and of c^4 p(1/c)
    hi = 1.0 + max(abs(a3), abs(a1), abs(a0)) / a4
    lo = 1.0 / (1.0 + max(abs(a4), abs(a3), abs(a1)) / abs(a0))
    roots = [r for r in _positive_roots(coefs, 0.5 * lo, 2.0 * hi) if r > 0]
    if not roots:
        raise RuntimeError("no positive stationary point found for hyperbola distance")

    def phi(c):
        return float(np.sum((h - c * hd) ** 2) + np.sum((m - md / c) ** 2))

    c_star = min(roots, key=phi)
    scale = math.sqrt(c_star**2 * a4 + (md @ md) / c_star**2)
    return c_star, math.sqrt(phi(c_star)) / scale


def nearest_branch(h, m, branches) -> tuple:
    """Index and relative distance of the closest curve in ``branches``."""
    dists = [hyperbola_distance(h, m, b)[1] for b in branches]
    i = int(np.argmin(dists))
    return i, dists[i]
