"""Experiment drivers: worked bandits, Four-Room, Random MOMDP sweeps, weight perturbations.

Every driver returns an :class:`ExperimentResult`; ``ExperimentResult.write``
emits ``results.csv``, ``summary.csv``, ``config-echo.json``, ``meta.json``,
driver-specific tables and one JSON file per solver run.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import oracle
from .data import estimates_for, mixture_policy_for_optimality, sample_trajectories
from .environments import FourRoomConfig, RandomMOMDPConfig, build_four_room_env, build_random_momdp
from .evaluation import evaluate_policy
from .momdp import MOMDP, policy_from_occupancy, uniform_policy
from .scalarization import welfare_metrics
from .solver import InfeasibleSupportError, SolverConfig, solve, solve_fixed

EXPERIMENTS = ("counterexample", "four_room", "random_sweep", "perturb_mu", "perturb_grid")
ALPHA_GRID = (0.0, 0.5, 1.0, 1.25)
BETA_GRID = (1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0)
SIGMA_GRID = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0)
# multiplicative factors applied to mu_2 and mu_3; 1.0 is the grid center
OFFSET_GRID = tuple(round(2.0 ** (k / 4), 6) for k in range(-4, 5))
FULL_SWEEP_SEEDS = 1000
CI_METHOD = "normal approximation: mean +/- 1.96 * sample sd / sqrt(n)"

_DEFAULTS = {
    "counterexample": dict(seeds=[0], alpha_grid=[1.0], beta_grid=[1.0]),
    "four_room": dict(seeds=list(range(5)), alpha_grid=[1.0], beta_grid=[0.01],
                      n_trajectories=300, horizon=100, normalized_returns=False,
                      objectives=[3, 8]),
    "random_sweep": dict(seeds=list(range(50)), alpha_grid=list(ALPHA_GRID),
                         beta_grid=list(BETA_GRID), n_trajectories=100, horizon=50),
    "perturb_mu": dict(seeds=list(range(50)), alpha_grid=[1.0], beta_grid=[0.01],
                       sigma_grid=list(SIGMA_GRID), n_trajectories=100, horizon=50),
    "perturb_grid": dict(seeds=list(range(5)), alpha_grid=[1.0], beta_grid=[0.01],
                         offset_grid=list(OFFSET_GRID), n_trajectories=300, horizon=100,
                         normalized_returns=False, objectives=[3]),
}


@dataclass
class ExperimentConfig:
    experiment: str
    seeds: list = field(default_factory=lambda: [0])
    alpha_grid: list = field(default_factory=lambda: [1.0])
    beta_grid: list = field(default_factory=lambda: [0.01])
    sigma_grid: list = field(default_factory=lambda: [0.0])
    offset_grid: list = field(default_factory=lambda: [1.0])
    e_mode: str = "exact_model"
    divergence: str = "chi2"
    n_trajectories: int = 100
    horizon: int = 50
    gamma: float = 0.95
    slip_prob: float = 0.1
    objectives: list = field(default_factory=lambda: [3])
    behavior_optimality: float = 0.5
    # False reports raw discounted sums and scales solver rewards by 1 / (1 - gamma)
    normalized_returns: bool = True
    mu_clamp: float = 1e-4
    workers: int = 1
    save_solutions: bool = True

    @classmethod
    def defaults(cls, experiment: str, **overrides) -> "ExperimentConfig":
        experiment = experiment.replace("-", "_")
        if experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
        kw = dict(_DEFAULTS[experiment])
        kw.update(overrides)
        cfg = cls(experiment=experiment, **kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, d: dict, experiment: Optional[str] = None) -> "ExperimentConfig":
        d = dict(d)
        name = experiment or d.pop("experiment", None)
        d.pop("experiment", None)
        if name is None:
            raise ValueError("config does not name an experiment")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls.defaults(name, **d)

    def validate(self) -> None:
        for name in ("seeds", "alpha_grid", "beta_grid", "sigma_grid", "offset_grid", "objectives"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if any(b <= 0 for b in self.beta_grid):
            raise ValueError("beta values must be > 0")
        if self.experiment == "perturb_mu" and 0.0 not in self.sigma_grid:
            raise ValueError("sigma_grid must include 0")
        if self.experiment == "perturb_grid" and 1.0 not in self.offset_grid:
            raise ValueError("offset_grid must include the center factor 1.0")
        if not self.mu_clamp > 0:
            raise ValueError("mu_clamp must be > 0")

    @property
    def reward_scale(self) -> float:
        return 1.0 if self.normalized_returns else 1.0 / (1.0 - self.gamma)

    def solver(self, alpha: float, beta: float) -> SolverConfig:
        return SolverConfig(beta=beta, alpha=alpha, divergence=self.divergence,
                            e_mode=self.e_mode, reward_scale=self.reward_scale)

    def to_dict(self) -> dict:
        return asdict(self)


def _num_key(*xs):
    return tuple(-math.inf if x is None else x for x in xs)


@dataclass
class ResultRow:
    experiment: str
    seed: int
    alpha: Optional[float]
    beta: Optional[float]
    sigma: Optional[float]
    returns: tuple
    nsw: float
    util: float
    jain: float
    df: float = 0.0
    iters: int = 0
    converged: bool = True

    def sort_key(self):
        return (self.experiment, self.seed, *_num_key(self.alpha, self.beta, self.sigma))

    def metrics(self) -> list:
        return [*self.returns, self.nsw, self.util, self.jain, self.df]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class ExperimentResult:
    experiment: str
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    solutions: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows.sort(key=ResultRow.sort_key)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def select(self, experiment: str) -> list:
        return [r for r in self.rows if r.experiment == experiment]

    def summary(self) -> list:
        """Mean and normal-approximation 95% CI half-width per (experiment, alpha, beta, sigma)."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r.experiment, r.alpha, r.beta, r.sigma), []).append(r)
        out = []
        for key in sorted(groups, key=lambda k: (k[0], *_num_key(*k[1:]))):
            rs = groups[key]
            vals = np.array([r.metrics() for r in rs])
            n = len(rs)
            mean = vals.mean(axis=0)
            half = 1.96 * vals.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
            n_ret = len(rs[0].returns)
            names = [f"ret_{i + 1}" for i in range(n_ret)] + ["nsw", "util", "jain", "df"]
            entry = {"experiment": key[0], "alpha": key[1], "beta": key[2], "sigma": key[3], "n": n}
            for name, m_, h in zip(names, mean, half):
                entry[name] = float(m_)
                entry[f"{name}_ci"] = float(h)
            out.append(entry)
        return out

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows_csv(self.rows, out / "results.csv")
        summary = self.summary()
        if summary:
            _write_dicts(summary, out / "summary.csv")
        (out / "config-echo.json").write_text(json.dumps(self.config.to_dict(), indent=2, sort_keys=True))
        meta = {"experiment": self.experiment, "ci_method": CI_METHOD, "failures": self.failures,
                "checks": [asdict(c) for c in self.checks], **self.meta}
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        for name, table in self.tables.items():
            _write_dicts(table, out / f"{name}.csv")
        if self.config.save_solutions and self.solutions:
            sol_dir = out / "solutions"
            sol_dir.mkdir(exist_ok=True)
            for name, sol in sorted(self.solutions.items()):
                (sol_dir / f"{name}.json").write_text(json.dumps(sol, sort_keys=True))
        return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_rows_csv(rows: list, path) -> None:
    n_ret = max((len(r.returns) for r in rows), default=0)
    header = (["experiment", "seed", "alpha", "beta", "sigma"]
              + [f"ret_{i + 1}" for i in range(n_ret)]
              + ["nsw", "util", "jain", "df", "iters", "converged"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in sorted(rows, key=ResultRow.sort_key):
            if not np.all(np.isfinite(r.metrics())):
                raise ValueError(f"non-finite metric in row {r}")
            rets = [_fmt(float(x)) for x in r.returns] + [""] * (n_ret - len(r.returns))
            writer.writerow([r.experiment, r.seed, _fmt(r.alpha), _fmt(r.beta), _fmt(r.sigma),
                             *rets, _fmt(r.nsw), _fmt(r.util), _fmt(r.jain), _fmt(r.df),
                             r.iters, _fmt(r.converged)])


def read_rows_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            def opt(k):
                return None if rec[k] == "" else float(rec[k])
            rets = tuple(float(rec[k]) for k in rec if k.startswith("ret_") and rec[k] != "")
            rows.append(ResultRow(rec["experiment"], int(rec["seed"]), opt("alpha"), opt("beta"),
                                  opt("sigma"), rets, float(rec["nsw"]), float(rec["util"]),
                                  float(rec["jain"]), float(rec["df"]), int(rec["iters"]),
                                  rec["converged"] == "true"))
    return rows


def _write_dicts(records: list, path) -> None:
    keys = list(records[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys)
        for rec in records:
            writer.writerow([_fmt(rec[k]) for k in keys])


def _run_jobs(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _eval_row(m: MOMDP, pi, cfg: ExperimentConfig, experiment, seed, alpha=None, beta=None,
              sigma=None, sol=None) -> ResultRow:
    ev = evaluate_policy(m, pi, normalized=cfg.normalized_returns)
    diag = sol.diagnostics if sol is not None else {}
    return ResultRow(experiment, int(seed), alpha, beta, sigma,
                     tuple(float(x) for x in ev.returns), ev.metrics.nsw, ev.metrics.utilitarian,
                     ev.metrics.jain, float(diag.get("divergence", 0.0)),
                     int(diag.get("iterations", 0)), bool(diag.get("converged", True)))


def _quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kwargs)


# counterexample


def cmd_counterexample(cfg: Optional[ExperimentConfig] = None, tol: float = 1e-3) -> ExperimentResult:
    """Worked two-action bandits: fairness/linear-scalarization counterexample and its regularized version."""
    cfg = cfg or ExperimentConfig.defaults("counterexample")
    beta = float(cfg.beta_grid[0])
    checks, rows, sols = [], [], {}

    def check(name, got, want):
        got, want = np.asarray(got, float), np.asarray(want, float)
        err = float(np.max(np.abs(got - want)))
        checks.append(Check(name, err <= tol, f"got {np.round(got, 4).tolist()}, "
                                              f"want {want.tolist()}, err {err:.2e}"))

    # unregularized: proportional fairness and its implicit weights
    p1 = oracle.solve_primal(oracle.appendix_b_problem())
    mu_p1 = 1.0 / p1.k
    R = np.asarray(oracle.APPENDIX_B_REWARDS)
    check("P1 occupancy", p1.d[0], [0.5834, 0.4166])
    check("P1 returns", p1.k, [1.8332, 2.7500])
    check("P1 implicit weights", mu_p1, [0.5455, 0.3636])
    check("P1 scalarized rewards", R @ mu_p1, [2.0, 2.0])

    # regularized with chi2 around d_D = (0.7, 0.3)
    prob = oracle.appendix_c1_problem(beta=beta)
    d_data = np.asarray([oracle.APPENDIX_C1_DATA])
    p2 = oracle.solve_primal(prob)
    scfg = SolverConfig(beta=beta, alpha=1.0, divergence="chi2", e_mode="exact_model")
    dual = solve(scfg, d_data, prob.m)
    sols["appendix_c1_dual"] = dual.to_dict()
    if beta == 1.0:
        check("P2-reg weights (dual solver)", dual.mu, [0.5959, 0.3352])
        check("P2-reg occupancy (dual solver)", dual.d_star[0], [0.6609, 0.3390])
        check("P2-reg occupancy (primal oracle)", p2.d[0], [0.6609, 0.3390])
    p3 = oracle.solve_primal(oracle.appendix_c1_problem(beta=beta, variant="P3_reg", weights=dual.mu))
    fixed = solve_fixed(scfg, dual.mu, d_data, prob.m)
    check("P3-reg occupancy at mu* (primal oracle)", p3.d[0], p2.d[0])
    check("P3-reg occupancy at mu* (dual solver)", fixed.d_star[0], dual.d_star[0])

    # stronger regularization pulls d* toward d_D
    strong = oracle.solve_primal(oracle.appendix_c1_problem(beta=10.0 * beta))
    gap_weak = float(np.max(np.abs(p2.d - d_data)))
    gap_strong = float(np.max(np.abs(strong.d - d_data)))
    checks.append(Check("beta x10 moves d* toward d_D", gap_strong < gap_weak,
                        f"|d*-d_D| {gap_weak:.4f} -> {gap_strong:.4f}"))

    # alpha = 0 is linear: mu is pinned to 1 with a warning
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lin = solve(SolverConfig(beta=beta, alpha=0.0, e_mode="exact_model"), d_data, prob.m)
    warned = any("alpha = 0" in str(w.message) for w in caught)
    checks.append(Check("alpha=0 takes the linear path", warned and np.allclose(lin.mu, 1.0),
                        f"warning={warned}, mu={lin.mu.tolist()}"))

    for name, d, alpha in (("P1", p1.d, 1.0), ("P2_reg", p2.d, 1.0), ("dual", dual.d_star, 1.0),
                           ("P3_reg", p3.d, 1.0), ("fixed", fixed.d_star, 1.0)):
        k = np.einsum("sa,sai->i", d, prob.m.reward)
        wm = welfare_metrics(k)
        rows.append(ResultRow(f"counterexample/{name}", 0, alpha, None if name == "P1" else beta,
                              None, tuple(float(x) for x in k), wm.nsw, wm.utilitarian, wm.jain))
    return ExperimentResult("counterexample", cfg, rows, checks, solutions=sols)


# Four-Room


def _four_room_seed(cfg: ExperimentConfig, n_obj: int, seed: int):
    env = build_four_room_env(FourRoomConfig.with_objectives(
        n_obj, slip_prob=cfg.slip_prob, gamma=cfg.gamma))
    m = env.momdp
    pi_b = uniform_policy(m)
    ds = sample_trajectories(m, pi_b, cfg.n_trajectories, cfg.horizon, seed)
    return env, pi_b, estimates_for(m, ds)


def _four_room_prefix(n_obj: int) -> str:
    return "four_room" if n_obj == 3 else f"four_room_{n_obj}obj"


def goal_reach_probability(m: MOMDP, pi, horizon: int = 2000) -> np.ndarray:
    """Undiscounted probability of collecting each one-hot goal reward within ``horizon`` steps."""
    pi = np.asarray(pi, dtype=float)
    r_pi = np.einsum("sa,sai->si", pi, m.reward)
    P = np.einsum("sa,sat->st", pi, m.transition)
    rho = np.asarray(m.p0, dtype=float).copy()
    total = np.zeros(m.n_objectives)
    for _ in range(horizon):
        total += rho @ r_pi
        rho = rho @ P
        if m.sink is not None and rho.sum() - rho[m.sink] < 1e-12:
            break
    return total


def _four_room_job(cfg: ExperimentConfig, n_obj: int, seed: int):
    env, pi_b, est = _four_room_seed(cfg, n_obj, seed)
    m = env.momdp
    alpha, beta = float(cfg.alpha_grid[0]), float(cfg.beta_grid[0])
    prefix = _four_room_prefix(n_obj)
    e_mode = cfg.e_mode
    try:
        nsw = solve(cfg.solver(alpha, beta), est, m)
    except InfeasibleSupportError:
        # the true model reaches cells the data never visited; fall back to the MLE model
        warnings.warn(f"{prefix} seed {seed}: exact_model support is infeasible; using mle_model",
                      stacklevel=2)
        e_mode = "mle_model"
        cfg = replace(cfg, e_mode=e_mode)
        nsw = solve(cfg.solver(alpha, beta), est, m)
    util = solve_fixed(cfg.solver(0.0, beta), np.ones(n_obj), est, m)
    policies = (("behavior", pi_b, None, None, None),
                ("utilitarian", util.policy, 0.0, beta, util),
                ("fairdice_nsw", nsw.policy, alpha, beta, nsw))
    rows, visits = [], []
    for name, pi, a, b, sol in policies:
        rows.append(_eval_row(m, pi, cfg, f"{prefix}/{name}", seed, a, b, None, sol))
        reach = goal_reach_probability(m, pi)
        for i, cell in enumerate(env.cells[g] for g in env.goal_states):
            visits.append({"variant": prefix, "seed": seed, "policy": name, "goal": i + 1,
                           "row": cell[0], "col": cell[1], "reach_probability": float(reach[i])})
    sols = {f"{prefix}_seed{seed}_fairdice_nsw": nsw.to_dict(),
            f"{prefix}_seed{seed}_utilitarian": util.to_dict()}
    return rows, visits, sols, {"variant": prefix, "seed": seed, "e_mode": e_mode}


def cmd_four_room(cfg: Optional[ExperimentConfig] = None) -> ExperimentResult:
    """Behavior vs utilitarian (mu = 1) vs FairDICE-NSW on MO-Four-Room, plus goal visitation."""
    cfg = cfg or ExperimentConfig.defaults("four_room")
    jobs = [(cfg, n, s) for n in cfg.objectives for s in cfg.seeds]
    rows, visits, sols, modes = [], [], {}, []
    for r, v, s, mode in _run_jobs(_four_room_job, jobs, cfg.workers):
        rows += r
        visits += v
        sols.update(s)
        modes.append(mode)
    res = ExperimentResult("four_room", cfg, rows, solutions=sols,
                           meta={"returns": "normalized" if cfg.normalized_returns else "discounted sum",
                                 "e_mode_used": modes})
    table = []
    for entry in res.summary():
        variant, policy = entry["experiment"].split("/")
        table.append({"variant": variant, "policy": policy, "n_seeds": entry["n"],
                      "nsw": entry["nsw"], "util": entry["util"], "jain": entry["jain"]})
    res.tables["table"] = table
    res.tables["goal_visitation"] = visits
    return res


# Random MOMDP


def _random_setup(cfg: ExperimentConfig, seed: int):
    m = build_random_momdp(RandomMOMDPConfig(seed=seed, gamma=cfg.gamma))
    pi_b = mixture_policy_for_optimality(m, cfg.behavior_optimality)
    ds = sample_trajectories(m, pi_b, cfg.n_trajectories, cfg.horizon, seed)
    return m, pi_b, estimates_for(m, ds)


def _sweep_job(cfg: ExperimentConfig, seed: int):
    rows, failures, sols = [], [], {}
    try:
        m, pi_b, est = _random_setup(cfg, seed)
    except Exception as exc:  # noqa: BLE001 - recorded, run continues
        return rows, [{"seed": seed, "stage": "setup", "error": repr(exc)}], sols
    rows.append(_eval_row(m, pi_b, cfg, "random_sweep/behavior", seed))
    rows.append(_eval_row(m, policy_from_occupancy(est.d_data), cfg, "random_sweep/data_policy", seed))
    for alpha in cfg.alpha_grid:
        for beta in cfg.beta_grid:
            try:
                sol = _quiet(solve, cfg.solver(alpha, beta), est, m)
            except Exception as exc:  # noqa: BLE001
                failures.append({"seed": seed, "alpha": alpha, "beta": beta, "error": repr(exc)})
                continue
            rows.append(_eval_row(m, sol.policy, cfg, "random_sweep/fairdice", seed,
                                  float(alpha), float(beta), None, sol))
            sols[f"seed{seed}_alpha{alpha:g}_beta{beta:g}"] = sol.to_dict()
    return rows, failures, sols


def cmd_random_sweep(cfg: Optional[ExperimentConfig] = None) -> ExperimentResult:
    """alpha x beta sweep on Random MOMDPs; behavior and data-policy rows serve as references."""
    cfg = cfg or ExperimentConfig.defaults("random_sweep")
    rows, failures, sols = [], [], {}
    for r, f, s in _run_jobs(_sweep_job, [(cfg, s) for s in cfg.seeds], cfg.workers):
        rows += r
        failures += f
        sols.update(s)
    return ExperimentResult("random_sweep", cfg, rows, solutions=sols, failures=failures)


def _perturb_mu_job(cfg: ExperimentConfig, seed: int):
    m, _, est = _random_setup(cfg, seed)
    alpha, beta = float(cfg.alpha_grid[0]), float(cfg.beta_grid[0])
    base = _quiet(solve, cfg.solver(alpha, beta), est, m)
    rows, clamps = [], []
    for j, sigma in enumerate(cfg.sigma_grid):
        rng = np.random.default_rng([seed, j])
        mu = base.mu * (1.0 + rng.normal(0.0, sigma, size=base.mu.shape))
        n_clamped = int(np.sum(mu < cfg.mu_clamp))
        mu = np.maximum(mu, cfg.mu_clamp)
        sol = _quiet(solve_fixed, cfg.solver(alpha, beta), mu, est, m)
        rows.append(_eval_row(m, sol.policy, cfg, "perturb_mu", seed, alpha, beta,
                              float(sigma), sol))
        clamps.append({"seed": seed, "sigma": float(sigma), "clamped": n_clamped})
    return rows, clamps, {f"seed{seed}_mu_star": base.to_dict()}


def cmd_perturb_mu(cfg: Optional[ExperimentConfig] = None) -> ExperimentResult:
    """FairDICE-fixed at mu* (1 + noise), noise ~ N(0, sigma^2) per objective, on Random MOMDPs."""
    cfg = cfg or ExperimentConfig.defaults("perturb_mu")
    rows, clamps, sols = [], [], {}
    for r, c, s in _run_jobs(_perturb_mu_job, [(cfg, s) for s in cfg.seeds], cfg.workers):
        rows += r
        clamps += c
        sols.update(s)
    per_sigma = {}
    for c in clamps:
        per_sigma[c["sigma"]] = per_sigma.get(c["sigma"], 0) + c["clamped"]
    res = ExperimentResult("perturb_mu", cfg, rows, solutions=sols)
    res.tables["clamp_events"] = [{"sigma": s, "clamped": n} for s, n in sorted(per_sigma.items())]
    return res


def _grid_label(f2: float, f3: float) -> str:
    return f"perturb_grid/mu2x{f2:g}/mu3x{f3:g}"


def _perturb_grid_job(cfg: ExperimentConfig, seed: int):
    env, _, est = _four_room_seed(cfg, 3, seed)
    m = env.momdp
    alpha, beta = float(cfg.alpha_grid[0]), float(cfg.beta_grid[0])
    base = solve(cfg.solver(alpha, beta), est, m)
    rows = []
    for f2 in cfg.offset_grid:
        for f3 in cfg.offset_grid:
            mu = base.mu * np.array([1.0, f2, f3])
            sol = _quiet(solve_fixed, cfg.solver(alpha, beta), mu, est, m)
            rows.append(_eval_row(m, sol.policy, cfg, _grid_label(f2, f3), seed, alpha, beta,
                                  None, sol))
    return rows, {f"seed{seed}_mu_star": base.to_dict()}


def cmd_perturb_grid(cfg: Optional[ExperimentConfig] = None) -> ExperimentResult:
    """Multiplicative offsets on (mu_2, mu_3) around the Four-Room FairDICE-NSW weights; mu_1 fixed."""
    cfg = cfg or ExperimentConfig.defaults("perturb_grid")
    rows, sols = [], {}
    for r, s in _run_jobs(_perturb_grid_job, [(cfg, s) for s in cfg.seeds], cfg.workers):
        rows += r
        sols.update(s)
    res = ExperimentResult("perturb_grid", cfg, rows, solutions=sols)
    grids = perturb_grid_heatmaps(res)
    for name, grid in grids.items():
        res.tables[f"heatmap_{name}"] = [
            {"mu2_factor": f2, **{f"mu3x{f3:g}": float(grid[i, j])
                                  for j, f3 in enumerate(cfg.offset_grid)}}
            for i, f2 in enumerate(cfg.offset_grid)]
    return res


def perturb_grid_heatmaps(res: ExperimentResult) -> dict:
    """Seed-averaged grids indexed [mu_2 factor, mu_3 factor] for ret_1..3, nsw, util, jain."""
    offsets = res.config.offset_grid
    names = ["ret_1", "ret_2", "ret_3", "nsw", "util", "jain"]
    grids = {n: np.zeros((len(offsets), len(offsets))) for n in names}
    for i, f2 in enumerate(offsets):
        for j, f3 in enumerate(offsets):
            rs = res.select(_grid_label(f2, f3))
            vals = np.mean([[*r.returns[:3], r.nsw, r.util, r.jain] for r in rs], axis=0)
            for n, v in zip(names, vals):
                grids[n][i, j] = v
    return grids


COMMANDS = {
    "counterexample": cmd_counterexample,
    "four_room": cmd_four_room,
    "random_sweep": cmd_random_sweep,
    "perturb_mu": cmd_perturb_mu,
    "perturb_grid": cmd_perturb_grid,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    cfg.validate()
    return COMMANDS[cfg.experiment](cfg)
