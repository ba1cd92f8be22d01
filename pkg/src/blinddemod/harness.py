"""Experiment configs, file formats and the built-in experiments.

Documents (networks, configs, reports) are JSON; grids and per-trial tables
are CSV.  Every random draw is derived from the config seed, so equal
configs give byte-identical outputs.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .gen_net import GeneratorNetwork, _check_dims, derive_seed, forward, sample_network
from .landscape import hyperbola_branches, nearest_branch
from .solver import DegenerateIterateError, IteratePair, SolveReport, SolverConfig, run
from .verify import (
    alpha_truncation,
    check_cascade_concentration,
    check_joint_concentration,
    joint_wdc_deviation,
    network_wdc_epsilon,
    wdc_deviation,
)

EXPERIMENTS = ("gen", "scan", "solve", "recover-batch", "verify")
VARIANCE_RULES = ("gaussian", "truncated_last")


# ---- configuration -----------------------------------------------------------

@dataclass
class ExperimentConfig:
    experiment: str = "solve"
    dims1: tuple = (10, 250, 2500)
    dims2: tuple = (10, 250, 2500)
    variance_rule: str = "truncated_last"
    seed: int = 0
    # scan
    grid_lo: float = -3.0
    grid_hi: float = 3.0
    resolution: int = 301
    # recover-batch
    trials: int = 50
    success_residual: float = 1e-2
    # verify
    verify_sizes: tuple = (5000, 20000)
    verify_latent: int = 5
    verify_pairs: int = 50
    solver: SolverConfig = field(default_factory=SolverConfig)
    networks: Optional[str] = None     # path written by `gen`; sampled from seed when absent
    out: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        self.dims1 = _check_dims(self.dims1)
        self.dims2 = _check_dims(self.dims2)
        if self.dims1[-1] != self.dims2[-1]:
            raise ValueError("both generators must have the same output dimension")
        if self.variance_rule not in VARIANCE_RULES:
            raise ValueError(f"unknown variance rule {self.variance_rule!r}")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if not self.grid_lo < self.grid_hi:
            raise ValueError("grid_lo must be below grid_hi")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.success_residual > 0:
            raise ValueError("success_residual must be positive")
        self.verify_sizes = tuple(int(s) for s in self.verify_sizes)
        if self.verify_latent < 1 or self.verify_pairs < 1:
            raise ValueError("verify_latent and verify_pairs must be positive")
        for ell in self.verify_sizes:
            if ell <= 10 * self.verify_latent:
                raise ValueError(f"verify size {ell} too small for latent dim {self.verify_latent}")
        if isinstance(self.solver, dict):
            self.solver = SolverConfig(**self.solver)


def default_config(experiment: str) -> ExperimentConfig:
    if experiment == "scan":
        return ExperimentConfig(experiment="scan", dims1=(1, 2000, 4000), dims2=(1, 2000, 4000),
                                variance_rule="gaussian")
    return ExperimentConfig(experiment=experiment)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["dims1"], d["dims2"] = list(cfg.dims1), list(cfg.dims2)
    d["verify_sizes"] = list(cfg.verify_sizes)
    return d


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ValueError("config document must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    extra = set(d) - known
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    d = dict(d)
    if "solver" in d:
        if not isinstance(d["solver"], dict):
            raise ValueError("solver must be a mapping")
        skeys = {f.name for f in fields(SolverConfig)}
        bad = set(d["solver"]) - skeys
        if bad:
            raise ValueError(f"unknown solver keys: {sorted(bad)}")
        d["solver"] = SolverConfig(**d["solver"])
    try:
        return ExperimentConfig(**d)
    except TypeError as e:
        raise ValueError(str(e)) from e


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"config is not valid JSON: {e}") from e
    return config_from_dict(doc)


# ---- networks ----------------------------------------------------------------

@dataclass(eq=False)
class NetworkRecord:
    """A sampled network together with how it was drawn."""
    network: GeneratorNetwork
    seed: int
    variance_rule: str

    def __eq__(self, other):
        return (isinstance(other, NetworkRecord) and self.network == other.network
                and self.seed == other.seed and self.variance_rule == other.variance_rule)


def network_to_dict(rec: NetworkRecord) -> dict:
    # float64 -> Python float -> JSON uses the shortest repr that round-trips exactly
    return {
        "dims": list(rec.network.dims),
        "seed": int(rec.seed),
        "variance_rule": rec.variance_rule,
        "layers": [W.ravel().tolist() for W in rec.network.layers],
    }


def network_from_dict(d: dict) -> NetworkRecord:
    try:
        dims = [int(k) for k in d["dims"]]
        layers = d["layers"]
        seed, rule = int(d["seed"]), d["variance_rule"]
    except (KeyError, TypeError) as e:
        raise ValueError(f"malformed network document: {e}") from e
    if rule not in VARIANCE_RULES:
        raise ValueError(f"unknown variance rule {rule!r}")
    if len(layers) != len(dims) - 1:
        raise ValueError("layer count does not match dims")
    mats = []
    for a, b, flat in zip(dims, dims[1:], layers):
        arr = np.asarray(flat, dtype=np.float64)
        if arr.size != a * b:
            raise ValueError(f"layer has {arr.size} values, expected {b}x{a}")
        mats.append(arr.reshape(b, a))
    return NetworkRecord(GeneratorNetwork(tuple(mats)), seed, rule)


def sample_pair(cfg: ExperimentConfig, seed: int) -> tuple:
    s1, s2 = derive_seed(seed, 1), derive_seed(seed, 2)
    return (NetworkRecord(sample_network(cfg.dims1, s1, cfg.variance_rule), s1, cfg.variance_rule),
            NetworkRecord(sample_network(cfg.dims2, s2, cfg.variance_rule), s2, cfg.variance_rule))


def load_pair(path: str) -> tuple:
    with open(path) as fh:
        doc = json.load(fh)
    return network_from_dict(doc["net1"]), network_from_dict(doc["net2"])


def generate(cfg: ExperimentConfig) -> dict:
    r1, r2 = sample_pair(cfg, cfg.seed)
    return {"net1": network_to_dict(r1), "net2": network_to_dict(r2)}


def _networks(cfg: ExperimentConfig, seed: int) -> tuple:
    if cfg.networks is not None:
        r1, r2 = load_pair(cfg.networks)
        if r1.network.dims != cfg.dims1 or r2.network.dims != cfg.dims2:
            raise ValueError("network file dims do not match the config")
        return r1.network, r2.network
    r1, r2 = sample_pair(cfg, seed)
    return r1.network, r2.network


# ---- landscape scan ------------------------------------------------------------

@dataclass
class GridMinimum:
    h: float
    m: float
    f: float
    branch: int
    distance: float


@dataclass(eq=False)
class ScanGrid:
    h_axis: np.ndarray
    m_axis: np.ndarray
    values: np.ndarray          # values[i, j] = f(h_axis[i], m_axis[j])
    minima: list                # interior grid-local minima, GridMinimum each

    def __eq__(self, other):
        return (isinstance(other, ScanGrid) and np.array_equal(self.h_axis, other.h_axis)
                and np.array_equal(self.m_axis, other.m_axis)
                and np.array_equal(self.values, other.values) and self.minima == other.minima)


def _scalar_outputs(net, axis):
    # G(t) = t G(1) for t >= 0 and |t| G(-1) for t < 0 (positive homogeneity)
    up, down = forward(net, np.array([1.0])), forward(net, np.array([-1.0]))
    return np.where(axis[:, None] >= 0, axis[:, None] * up, -axis[:, None] * down)


def objective_grid(net1, net2, h_axis, m_axis, y0) -> np.ndarray:
    A = _scalar_outputs(net1, h_axis)
    B = _scalar_outputs(net2, m_axis)
    out = np.empty((len(h_axis), len(m_axis)))
    for i in range(len(h_axis)):
        r = y0 - A[i] * B
        out[i] = 0.5 * np.einsum("ij,ij->i", r, r)
    return out


def grid_minima(values) -> list:
    """(i, j) of interior cells that are <= all eight neighbours."""
    V = np.asarray(values)
    c = V[1:-1, 1:-1]
    ok = np.ones_like(c, dtype=bool)
    H, M = V.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                ok &= c <= V[1 + di:H - 1 + di, 1 + dj:M - 1 + dj]
    return [(int(i) + 1, int(j) + 1) for i, j in zip(*np.nonzero(ok))]


def scan_landscape(cfg: ExperimentConfig, h0: float = 1.0, m0: float = 1.0) -> ScanGrid:
    if cfg.dims1[0] != 1 or cfg.dims2[0] != 1:
        raise ValueError("landscape scan needs latent dimension 1 for both networks")
    net1, net2 = _networks(cfg, cfg.seed)
    y0 = forward(net1, np.array([h0])) * forward(net2, np.array([m0]))
    h_axis = np.linspace(cfg.grid_lo, cfg.grid_hi, cfg.resolution)
    m_axis = np.linspace(cfg.grid_lo, cfg.grid_hi, cfg.resolution)
    values = objective_grid(net1, net2, h_axis, m_axis, y0)
    branches = hyperbola_branches(np.array([h0]), np.array([m0]), net1.depth, net2.depth)
    minima = []
    for i, j in grid_minima(values):
        h, m = h_axis[i], m_axis[j]
        if h == 0.0 or m == 0.0:
            continue   # the axes are ridges (f = |y0|^2 / 2 along them), never valleys
        b, dist = nearest_branch(np.array([h]), np.array([m]), branches)
        minima.append(GridMinimum(float(h), float(m), float(values[i, j]), b, float(dist)))
    return ScanGrid(h_axis, m_axis, values, minima)


def cluster_minima(minima, radius: float = 1.0) -> list:
    """Single-linkage groups of minima, least objective first.

    Two minima link when they share a sign quadrant and their distance in
    (log|h|, log|m|) is at most ``radius``.  The axes are ridges of f (it
    equals |y0|^2 / 2 there) so no valley crosses them, and log coordinates
    keep the spacing along a hyperbola uniform where it runs close to an axis.
    """
    pts = [(m.h > 0, m.m > 0, math.log(abs(m.h)), math.log(abs(m.m))) for m in minima]
    n = len(minima)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            pa, pb = pts[a], pts[b]
            if pa[:2] == pb[:2] and math.hypot(pa[2] - pb[2], pa[3] - pb[3]) <= radius:
                parent[find(a)] = find(b)
    groups = {}
    for a in range(n):
        groups.setdefault(find(a), []).append(minima[a])
    return sorted(groups.values(), key=lambda g: min(x.f for x in g))


def scan_to_csv(grid: ScanGrid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "m", "f"])
    for i, h in enumerate(grid.h_axis):
        for j, m in enumerate(grid.m_axis):
            w.writerow([repr(float(h)), repr(float(m)), repr(float(grid.values[i, j]))])
    return buf.getvalue()


def scan_from_csv(text: str, minima=()) -> ScanGrid:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["h", "m", "f"]:
        raise ValueError("scan CSV must start with header h,m,f")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    h_axis = np.unique(data[:, 0])
    m_axis = np.unique(data[:, 1])
    values = data[:, 2].reshape(len(h_axis), len(m_axis))
    return ScanGrid(h_axis, m_axis, values, list(minima))


def scan_report(cfg: ExperimentConfig, grid: ScanGrid) -> dict:
    return {"config": config_to_dict(cfg), "minima": [asdict(x) for x in grid.minima]}


# ---- solve / recover-batch ------------------------------------------------------

def _nonzero_latent(rng, net, dim):
    for _ in range(1000):
        z = rng.standard_normal(dim)
        if np.any(forward(net, z)):
            return z
    raise RuntimeError("could not draw a latent with nonzero generator output")


@dataclass
class TrialResult:
    trial: int
    seed: int
    residual: float
    branch: int
    distance: float
    iters: int
    flips: int
    converged: bool
    error: Optional[str] = None


def _trial_problem(cfg: ExperimentConfig, seed: int):
    net1, net2 = _networks(cfg, seed)
    rng = np.random.default_rng(derive_seed(seed, 3))
    h0 = _nonzero_latent(rng, net1, net1.latent_dim)
    m0 = _nonzero_latent(rng, net2, net2.latent_dim)
    y0 = forward(net1, h0) * forward(net2, m0)
    rng = np.random.default_rng(derive_seed(seed, 4))
    start = IteratePair(rng.standard_normal(net1.latent_dim), rng.standard_normal(net2.latent_dim))
    return net1, net2, h0, m0, y0, start


def solve(cfg: ExperimentConfig, seed: Optional[int] = None, start_at_truth: bool = False) -> SolveReport:
    """One sign-aware descent run on a problem drawn from ``seed`` (default: cfg.seed)."""
    seed = cfg.seed if seed is None else seed
    net1, net2, h0, m0, y0, start = _trial_problem(cfg, seed)
    if start_at_truth:
        start = IteratePair(h0, m0)
    scfg = replace(cfg.solver, perturb_seed=derive_seed(seed, 5))
    return run(net1, net2, y0, start, scfg, h0=h0, m0=m0)


def run_trial(cfg: ExperimentConfig, trial: int, start_at_truth: bool = False) -> TrialResult:
    seed = derive_seed(cfg.seed, trial)
    try:
        rep = solve(cfg, seed, start_at_truth)
    except (DegenerateIterateError, RuntimeError, FloatingPointError) as e:
        return TrialResult(trial, seed, math.inf, -1, math.inf, 0, 0, False,
                           f"{type(e).__name__}: {e}")
    b, dist = rep.nearest_hyperbola
    return TrialResult(trial, seed, rep.measurement_residual, b, dist, rep.iterations_used,
                       rep.sign_flips, rep.converged)


def _trial_job(args):
    cfg, trial = args
    return run_trial(cfg, trial)


@dataclass
class BatchSummary:
    trials: list
    success_rate: float
    success_residual: float

    @property
    def successes(self):
        return [t for t in self.trials if t.residual < self.success_residual]


def recover_batch(cfg: ExperimentConfig, jobs: int = 1) -> BatchSummary:
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    work = [(cfg, t) for t in range(cfg.trials)]
    if jobs == 1:
        results = [_trial_job(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_job, work))
    results.sort(key=lambda r: r.trial)
    ok = sum(r.residual < cfg.success_residual for r in results)
    return BatchSummary(results, ok / len(results), cfg.success_residual)


def batch_to_csv(summary: BatchSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "seed", "residual", "branch", "iters", "flips"])
    for r in summary.trials:
        w.writerow([r.trial, r.seed, repr(float(r.residual)), r.branch, r.iters, r.flips])
    return buf.getvalue()


def batch_to_dict(cfg: ExperimentConfig, summary: BatchSummary) -> dict:
    return {
        "config": config_to_dict(cfg),
        "success_rate": summary.success_rate,
        "success_residual": summary.success_residual,
        "trials": [_finite(asdict(t)) for t in summary.trials],
    }


def batch_from_dict(d: dict) -> tuple:
    trials = [TrialResult(**_unfinite(t)) for t in d["trials"]]
    cfg = config_from_dict(d["config"])
    return cfg, BatchSummary(trials, d["success_rate"], d["success_residual"])


def _finite(d):
    # JSON has no infinity; failed trials store None
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _unfinite(d):
    return {k: (math.inf if v is None and k in ("residual", "distance") else v) for k, v in d.items()}


def solve_report_to_dict(rep: SolveReport) -> dict:
    d = {
        "final": {"h": rep.final.h.tolist(), "m": rep.final.m.tolist()},
        "objective_trace": [float(v) for v in rep.objective_trace],
        "sign_flips": rep.sign_flips,
        "flip_iterations": list(rep.flip_iterations),
        "iterations_used": rep.iterations_used,
        "measurement_residual": rep.measurement_residual,
        "nearest_hyperbola": None if rep.nearest_hyperbola is None else
        [int(rep.nearest_hyperbola[0]), float(rep.nearest_hyperbola[1])],
        "step_size": rep.step_size,
        "perturb_seed": rep.perturb_seed,
        "converged": rep.converged,
    }
    return d


def solve_report_from_dict(d: dict) -> SolveReport:
    nh = d["nearest_hyperbola"]
    return SolveReport(
        final=IteratePair(d["final"]["h"], d["final"]["m"]),
        objective_trace=list(d["objective_trace"]),
        sign_flips=d["sign_flips"],
        iterations_used=d["iterations_used"],
        measurement_residual=d["measurement_residual"],
        nearest_hyperbola=None if nh is None else (int(nh[0]), float(nh[1])),
        step_size=d["step_size"],
        perturb_seed=d["perturb_seed"],
        converged=d["converged"],
        flip_iterations=list(d["flip_iterations"]),
    )


# ---- verification sweep --------------------------------------------------------

VERIFY_CHECKS = ("wdc_gaussian", "wdc_truncated", "joint_wdc", "cascade_concentration",
                 "joint_concentration")
VERIFY_HEADER = ["check", "size", "latent_dim", "value", "bound", "alpha_truncation"]


def verify_sweep(cfg: ExperimentConfig) -> list:
    """One row per (size, check); ``size`` is the output width l."""
    n = cfg.verify_latent
    alpha = alpha_truncation(n)
    rows = []
    for ell in cfg.verify_sizes:
        seed = derive_seed(cfg.seed, ell)
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((ell, n)) / math.sqrt(ell)
        Wt = sample_network((n, ell), derive_seed(seed, 1), "truncated_last").layers[0]
        C = rng.standard_normal((ell, n)) / math.sqrt(ell)
        joint = joint_wdc_deviation(W, C, 1.0, cfg.verify_pairs, derive_seed(seed, 2))
        mid = 10 * n
        net1 = sample_network((n, mid, ell), derive_seed(seed, 3))
        net2 = sample_network((n, mid, ell), derive_seed(seed, 4))
        last = joint_wdc_deviation(net1.layers[-1], net2.layers[-1], 1.0, cfg.verify_pairs,
                                   derive_seed(seed, 7))
        eps = max(network_wdc_epsilon(net1, cfg.verify_pairs, derive_seed(seed, 5)),
                  network_wdc_epsilon(net2, cfg.verify_pairs, derive_seed(seed, 6)),
                  last.epsilon_hat_1, last.epsilon_hat_2)
        # the joint row is the worse of lhs / bound over its two parts, so its bound is 1
        p, q, h, x, m, y = (rng.standard_normal(n) for _ in range(6))
        lhs, bound = check_cascade_concentration(net1, p, q, eps)
        jc = check_joint_concentration(net1, net2, h, x, m, y, 1.0, eps)
        values = [
            (wdc_deviation(W, 1.0, cfg.verify_pairs, derive_seed(seed, 8)).epsilon_hat, None),
            (wdc_deviation(Wt, alpha, cfg.verify_pairs, derive_seed(seed, 9)).epsilon_hat, None),
            (max(joint.epsilon_hat_1, joint.epsilon_hat_2), None),
            (lhs, bound),
            (max(jc.lhs1 / jc.bound1, jc.lhs2 / jc.bound2) if eps > 0 else math.inf, 1.0),
        ]
        for name, (value, bnd) in zip(VERIFY_CHECKS, values):
            rows.append({"check": name, "size": ell, "latent_dim": n, "value": float(value),
                         "bound": None if bnd is None else float(bnd), "alpha_truncation": alpha})
    return rows


def verify_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VERIFY_HEADER)
    for r in rows:
        w.writerow([r["check"], r["size"], r["latent_dim"], repr(r["value"]),
                    "" if r["bound"] is None else repr(r["bound"]), repr(r["alpha_truncation"])])
    return buf.getvalue()


def verify_from_csv(text: str) -> list:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != VERIFY_HEADER:
        raise ValueError("verify CSV has an unexpected header")
    out = []
    for r in rows[1:]:
        out.append({"check": r[0], "size": int(r[1]), "latent_dim": int(r[2]), "value": float(r[3]),
                    "bound": None if r[4] == "" else float(r[4]), "alpha_truncation": float(r[5])})
    return out
