"""Desk-scale acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (shown even when
output capture is on) and then asserts the same condition.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from blinddemod import harness
from blinddemod.gen_net import forward, sample_gaussian_network, sample_truncated_last_layer
from blinddemod.landscape import (
    angle_coefficients,
    angle_sequence,
    expected_direction_h,
    expected_direction_m,
    hyperbola_branches,
    rho,
    t_vector,
)
from blinddemod.solver import IteratePair, directional_derivative, grad_h, grad_m, objective
from blinddemod.verify import (
    alpha_truncation,
    check_cascade_concentration,
    check_joint_concentration,
    joint_wdc_deviation,
    network_wdc_epsilon,
    wdc_deviation,
)
from oracles import alpha_mc_oracle, fd_gradient


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def _problem(dims1, dims2, seed):
    net1 = sample_gaussian_network(dims1, 2 * seed)
    net2 = sample_gaussian_network(dims2, 2 * seed + 1)
    rng = np.random.default_rng(1000 + seed)
    h0, m0 = rng.standard_normal(dims1[0]), rng.standard_normal(dims2[0])
    return net1, net2, h0, m0, forward(net1, h0) * forward(net2, m0), rng


def test_criterion_1_gradient_oracle(report):
    t0 = time.perf_counter()
    good = total = 0
    for inst in range(5):
        net1, net2, _, _, y0, rng = _problem((5, 50, 500), (5, 50, 500), inst)
        n = 5
        for _ in range(100):
            z = rng.standard_normal(10)
            x = IteratePair(z[:n], z[n:])
            g = np.concatenate([grad_h(net1, net2, y0, x), grad_m(net1, net2, y0, x)])
            fun = lambda v: objective(net1, net2, y0, IteratePair(v[:n], v[n:]))
            fd = fd_gradient(fun, z, 1e-6 * (1 + np.linalg.norm(z)))
            good += np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(g)
            total += 1
    elapsed = time.perf_counter() - t0
    frac = good / total
    ok = frac >= 0.99 and elapsed < 30
    report(1, ok, f"fraction within 1e-5 = {frac:.3f} of {total}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_scaling_curve(report):
    worst = 0.0
    for seed in range(10):
        net1, net2, h0, m0, y0, _ = _problem((4, 40, 400), (3, 30, 400), seed)
        for c in (0.1, 0.5, 1.0, 2.0, 10.0):
            f = objective(net1, net2, y0, IteratePair(c * h0, m0 / c))
            worst = max(worst, f / float(y0 @ y0))
    ok = worst <= 1e-18
    report(2, ok, f"max f / |y0|^2 = {worst:.2e}")
    assert ok


@pytest.fixture(scope="module")
def batch_result():
    cfg = harness.ExperimentConfig(experiment="recover-batch", seed=0, trials=50)
    t0 = time.perf_counter()
    summary = harness.recover_batch(cfg)
    return cfg, summary, time.perf_counter() - t0


def test_criterion_3_recovery(report, batch_result):
    cfg, summary, elapsed = batch_result
    assert cfg.dims1 == (10, 250, 2500) and cfg.dims2 == (10, 250, 2500)
    assert cfg.variance_rule == "truncated_last" and cfg.solver.max_iters == 10_000
    succ = summary.successes
    far = [t.trial for t in succ if t.branch != 0 or t.distance > 0.1]
    worst = max((t.distance for t in succ), default=math.inf)
    ok = summary.success_rate >= 0.8 and not far and elapsed < 600
    report(3, ok, f"success rate {summary.success_rate:.2f}, worst truth distance {worst:.2e}, "
                  f"off-branch {far}, {elapsed:.0f}s")
    assert ok


def test_criterion_4_landscape(report):
    t0 = time.perf_counter()
    good = 0
    notes = []
    for seed in range(10):
        cfg = replace(harness.default_config("scan"), seed=seed)
        grid = harness.scan_landscape(cfg)
        clusters = harness.cluster_minima(grid.minima)
        reps = [min(c, key=lambda x: x.f) for c in clusters]
        count_ok = 2 <= len(clusters) <= 6
        near_ok = all(r.distance <= 0.2 for r in reps)
        truth_ok = bool(reps) and reps[0].branch == 0
        good += count_ok and near_ok and truth_ok
        notes.append(f"{len(clusters)}/{max((r.distance for r in reps), default=math.nan):.2f}"
                     f"/{reps[0].branch if reps else -1}")
    elapsed = time.perf_counter() - t0
    ok = good >= 8 and elapsed < 120
    report(4, ok, f"{good}/10 seeds (clusters/max dist/best branch: {' '.join(notes)}), "
                  f"rho_2 = {rho(2):.6f}, {elapsed:.0f}s")
    assert ok


def test_criterion_5_local_maximizers(report):
    net1, net2, _, _, y0, rng = _problem((4, 40, 400), (3, 30, 400), 7)
    worst = -math.inf
    for i in range(50):
        h, m = rng.standard_normal(4), rng.standard_normal(3)
        x = IteratePair(h, np.zeros(3)) if i % 2 == 0 else IteratePair(np.zeros(4), m)
        for _ in range(100):
            worst = max(worst, directional_derivative(net1, net2, y0, x, rng.standard_normal(7)))
    ok = worst <= 1e-10
    report(5, ok, f"max directional derivative on K = {worst:.2e}")
    assert ok


def test_criterion_6_wdc(report):
    W = sample_gaussian_network((5, 20000), 60).layers[0]
    g = wdc_deviation(W, 1.0, 200, 61).epsilon_hat
    T = sample_truncated_last_layer(20000, 5, 62)
    t = wdc_deviation(T, alpha_truncation(5), 200, 63).epsilon_hat
    ok = g <= 0.1 and t <= 0.1
    report(6, ok, f"epsilon_hat gaussian {g:.4f}, truncated {t:.4f}")
    assert ok


def test_criterion_7_alpha_monte_carlo(report):
    errs = {k: abs(alpha_truncation(k) - alpha_mc_oracle(k, 10**6, 70 + k)) for k in (5, 10, 20)}
    ok = max(errs.values()) <= 1e-3
    report(7, ok, "abs errors " + ", ".join(f"k={k}: {e:.1e}" for k, e in errs.items()))
    assert ok


def test_criterion_8_angle_properties(report):
    th = angle_sequence(math.pi, 101).values
    seq_ok = all(math.pi / (i + 1) - 1e-12 <= th[i] <= 3 * math.pi / (i + 3) + 1e-12 for i in range(101))
    rng = np.random.default_rng(80)
    coef_ok = norm_ok = True
    for _ in range(1000):
        k = int(rng.integers(1, 11))
        n = int(rng.integers(2, 8))
        p, q = rng.standard_normal(n), rng.standard_normal(n)
        xi, zeta = angle_coefficients(math.acos(np.clip(p @ q / np.linalg.norm(p) / np.linalg.norm(q), -1, 1)), k)
        coef_ok &= abs(xi) <= 1 + 1e-12 and abs(zeta) <= 2 + 1e-12
        norm_ok &= np.linalg.norm(t_vector(p, q, k)) <= (1 + k) / 2**k * np.linalg.norm(q) * (1 + 1e-12)
    ok = seq_ok and coef_ok and norm_ok
    report(8, ok, f"sequence bounds {seq_ok}, |xi|<=1 and |zeta|<=2 {coef_ok}, t-norm bound {norm_ok}")
    assert ok


def _field_ratios(h, m, h0, m0, d, s, ell=1):
    # |t1| / |m| and |t2| / |h| in units of max(|h||m|, |h0||m0|) / (2^{d+s} l)
    unit = max(np.linalg.norm(h) * np.linalg.norm(m), np.linalg.norm(h0) * np.linalg.norm(m0)) / (2.0 ** (d + s) * ell)
    r1 = np.linalg.norm(expected_direction_h(h, m, h0, m0, d, s, 1.0, ell)) / np.linalg.norm(m) / unit
    r2 = np.linalg.norm(expected_direction_m(h, m, h0, m0, d, s, 1.0, ell)) / np.linalg.norm(h) / unit
    return r1, r2


def test_criterion_9_expected_field_zeros(report):
    d = s = 2
    rng = np.random.default_rng(90)
    h0, m0 = rng.standard_normal(5), rng.standard_normal(5)
    worst_zero = 0.0
    for br in hyperbola_branches(h0, m0, d, s):
        for c in (0.25, 1.0, 4.0):
            worst_zero = max(worst_zero, *_field_ratios(c * br.h_dir, br.m_dir / c, h0, m0, d, s))
    # With both angles in [delta, pi - delta], a point lies outside both S-sets as soon as
    # 2 sqrt(eps) < delta and 12 pi^2 d^3 sqrt(eps) < delta; take the largest such eps.
    delta = math.pi / 8
    eps = min(delta / 2, delta / (12 * math.pi**2 * max(d, s) ** 3)) ** 2 * 0.99
    least = math.inf
    count = 0
    while count < 100:
        h, m = rng.standard_normal(5), rng.standard_normal(5)
        th = math.acos(np.clip(h @ h0 / np.linalg.norm(h) / np.linalg.norm(h0), -1, 1))
        tm = math.acos(np.clip(m @ m0 / np.linalg.norm(m) / np.linalg.norm(m0), -1, 1))
        if not (delta <= th <= math.pi - delta and delta <= tm <= math.pi - delta):
            continue
        h *= math.exp(rng.uniform(-2, 2))
        least = min(least, max(_field_ratios(h, m, h0, m0, d, s)))
        count += 1
    ok = worst_zero <= 1e-12 and least > eps
    report(9, ok, f"max scaled field on curves {worst_zero:.1e}; "
                  f"min off-curve scaled field {least:.3f} > eps {eps:.2e}")
    assert ok


def test_criterion_10_concentration(report):
    ok = True
    worst = 0.0
    for seed in range(5):
        net1 = sample_gaussian_network((5, 500, 5000), 100 + 2 * seed)
        net2 = sample_gaussian_network((5, 500, 5000), 101 + 2 * seed)
        e1 = network_wdc_epsilon(net1, 20, 10 * seed)
        e2 = network_wdc_epsilon(net2, 20, 10 * seed + 5)
        j = joint_wdc_deviation(net1.layers[-1], net2.layers[-1], 1.0, 20, seed)
        eps = max(e1, e2, j.epsilon_hat_1, j.epsilon_hat_2)
        rng = np.random.default_rng(200 + seed)
        h, x, m, y = (rng.standard_normal(5) for _ in range(4))
        for net, p, q in ((net1, h, x), (net2, m, y)):
            lhs, bound = check_cascade_concentration(net, p, q, max(e1, e2))
            ok &= lhs <= bound
            worst = max(worst, lhs / bound)
        jc = check_joint_concentration(net1, net2, h, x, m, y, 1.0, eps)
        ok &= jc.holds
        worst = max(worst, jc.lhs1 / jc.bound1, jc.lhs2 / jc.bound2)
    report(10, ok, f"max lhs / bound = {worst:.3f}")
    assert ok
