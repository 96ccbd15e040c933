"""Command-line entry point: ``fairdice <verb> ...`` (also ``python -m fairdice``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .data import estimates_for, load_dataset, mixture_policy_for_optimality, sample_trajectories, save_dataset
from .environments import FourRoomConfig, RandomMOMDPConfig, build_four_room, build_random_momdp
from .evaluation import evaluate_policy
from .experiments import FULL_SWEEP_SEEDS, ExperimentConfig, run_experiment
from .momdp import MOMDP, load_momdp, save_momdp, uniform_policy, validate_policy
from .solver import SolverConfig, config_dict, solve

log = logging.getLogger("fairdice")


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


def cmd_gen_env(args) -> int:
    if args.kind == "four-room":
        m = build_four_room(FourRoomConfig.with_objectives(args.objectives, slip_prob=args.slip,
                                                           gamma=args.gamma))
    else:
        m = build_random_momdp(RandomMOMDPConfig(seed=args.seed, gamma=args.gamma))
    save_momdp(m, args.out)
    log.info("wrote %s (%d states, %d objectives)", args.out, m.n_states, m.n_objectives)
    return 0


def _behavior_policy(m: MOMDP, name: str) -> np.ndarray:
    if name == "uniform":
        return uniform_policy(m)
    if name.startswith("optimality:"):
        return mixture_policy_for_optimality(m, float(name.split(":", 1)[1]))
    raise ValueError(f"unknown policy {name!r}; use 'uniform' or 'optimality:<level>'")


def cmd_collect(args) -> int:
    m = load_momdp(args.env)
    ds = sample_trajectories(m, _behavior_policy(m, args.policy), args.n, args.horizon, args.seed)
    ds.meta = {"policy": args.policy}
    save_dataset(ds, args.out)
    log.info("wrote %d trajectories (%d steps) to %s", len(ds.trajectories), ds.n_steps, args.out)
    return 0


def cmd_solve(args) -> int:
    m = load_momdp(args.env)
    est = estimates_for(m, load_dataset(args.data, env=m))
    cfg = SolverConfig(beta=args.beta, alpha=args.alpha, divergence=args.divergence,
                       e_mode=args.e_mode, method=args.method, reward_scale=args.reward_scale)
    sol = solve(cfg, est, m)
    out = sol.to_dict()
    out["config"] = config_dict(cfg)
    _write_json(out, args.out)
    return 0


def cmd_eval(args) -> int:
    m = load_momdp(args.env)
    if args.policy == "uniform":
        pi = uniform_policy(m)
    else:
        pi = np.asarray(json.loads(Path(args.policy).read_text())["policy"], dtype=float)
    problems = validate_policy(pi, m.shape)
    if problems:
        raise ValueError("invalid policy: " + "; ".join(problems))
    ev = evaluate_policy(m, pi, clamp_eps=args.clamp_eps, normalized=not args.unnormalized)
    _write_json({"returns": ev.returns.tolist(), "nsw": ev.metrics.nsw,
                 "util": ev.metrics.utilitarian, "jain": ev.metrics.jain,
                 "normalized": not args.unnormalized}, args.out)
    return 0


def _oracle_problem(args) -> oracle.PrimalProblem:
    variant = args.variant
    if args.problem in ("appendix-b", "appendix-c1"):
        # both share the bandit; the regularized variants use the d_D = (0.7, 0.3) data
        if variant == "p1":
            return oracle.appendix_b_problem()
        return oracle.appendix_c1_problem(args.beta or 1.0, variant, _weights(args))
    doc = json.loads(Path(args.problem).read_text())
    m = MOMDP.from_dict(doc["momdp"])
    weights = _weights(args) if args.weights else doc.get("weights")
    d_data = doc.get("d_data")
    beta = args.beta or doc.get("beta", 0.0)
    if variant == "p3reg" and weights is None:
        weights = solve(SolverConfig(beta=beta, alpha=doc.get("alpha", 1.0),
                                     divergence=doc.get("divergence", "chi2")),
                        np.asarray(d_data, dtype=float), m).mu
    return oracle.PrimalProblem(m, variant, d_data, beta, doc.get("alpha", 1.0),
                                doc.get("divergence", "chi2"), weights)


def _weights(args):
    if args.weights:
        return np.asarray([float(x) for x in args.weights.split(",")])
    if args.variant == "p3reg":
        # default to the implicit weights of the regularized NSW problem
        prob = oracle.appendix_c1_problem(args.beta or 1.0)
        return solve(SolverConfig(beta=prob.beta, alpha=1.0), prob.d_data, prob.m).mu
    return None


def cmd_oracle(args) -> int:
    prob = _oracle_problem(args)
    res = oracle.solve_primal(prob)
    _write_json({"variant": prob.variant, "d": res.d.tolist(), "k": res.k.tolist(),
                 "welfare": res.welfare, "iterations": res.iterations,
                 "converged": res.converged}, args.out)
    return 0 if res.converged else 1


def cmd_experiment(args) -> int:
    name = args.name.replace("-", "_")
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.full_seeds:
        raw["seeds"] = list(range(FULL_SWEEP_SEEDS))
    if args.workers:
        raw["workers"] = args.workers
    cfg = ExperimentConfig.from_dict(raw, experiment=name)
    res = run_experiment(cfg)
    out = res.write(args.out)
    for c in res.checks:
        print(c.line())
    if res.failures:
        print(f"{len(res.failures)} run(s) failed; see {out / 'meta.json'}")
    print(f"wrote {len(res.rows)} rows to {out / 'results.csv'}")
    return 0 if res.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairdice", description="Tabular FairDICE toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-env", help="write an environment as MOMDP JSON")
    g.add_argument("kind", choices=["four-room", "random-momdp"])
    g.add_argument("--objectives", type=int, default=3, choices=[3, 8])
    g.add_argument("--slip", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gamma", type=float, default=0.95)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_env)

    c = sub.add_parser("collect", help="sample an offline dataset")
    c.add_argument("--env", required=True)
    c.add_argument("--policy", default="uniform", help="uniform | optimality:<level>")
    c.add_argument("--n", type=int, default=300)
    c.add_argument("--horizon", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_collect)

    s = sub.add_parser("solve", help="run the FairDICE dual solver on a dataset")
    s.add_argument("--env", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--beta", type=float, default=0.01)
    s.add_argument("--divergence", default="chi2", choices=["chi2", "soft_chi2"])
    s.add_argument("--e-mode", default="mle_model",
                   choices=["exact_model", "mle_model", "sampled", "exact", "mle"])
    s.add_argument("--method", default="newton", choices=["newton", "gd"])
    s.add_argument("--reward-scale", type=float, default=1.0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="evaluate a policy exactly under the true model")
    e.add_argument("--env", required=True)
    e.add_argument("--policy", required=True, help="solution.json or 'uniform'")
    e.add_argument("--clamp-eps", type=float, default=1e-6)
    e.add_argument("--unnormalized", action="store_true",
                   help="report discounted sums instead of occupancy-normalized returns")
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle", help="solve a small primal problem directly")
    o.add_argument("--problem", required=True, help="appendix-b | appendix-c1 | problem.json")
    o.add_argument("--variant", default="p1", choices=["p1", "p2reg", "p3reg"])
    o.add_argument("--beta", type=float, default=None)
    o.add_argument("--weights", default=None, help="comma-separated weights for p3reg")
    o.add_argument("--out", default="-")
    o.set_defaults(func=cmd_oracle)

    x = sub.add_parser("experiment", help="run an experiment and write result tables")
    x.add_argument("name", choices=["counterexample", "four-room", "random-sweep",
                                    "perturb-mu", "perturb-grid"])
    x.add_argument("--config", default=None, help="JSON overrides of the experiment defaults")
    x.add_argument("--out", required=True)
    x.add_argument("--full-seeds", action="store_true",
                   help=f"use {FULL_SWEEP_SEEDS} seeds instead of the default")
    x.add_argument("--workers", type=int, default=None)
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
