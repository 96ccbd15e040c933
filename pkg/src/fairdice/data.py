"""Behavior policies, trajectory sampling, dataset files, and empirical estimates."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .momdp import MOMDP, policy_occupancy, uniform_policy

SCHEMA = "fairdice-dataset"
SCHEMA_VERSION = 1


class DatasetSchemaError(ValueError):
    pass


# behavior policies


def optimal_scalar_policy(m: MOMDP, weights, tol: float = 1e-10, max_iters: int = 100_000,
                          tie_tol: float = 1e-9) -> np.ndarray:
    """Deterministic greedy policy for the scalar reward sum_i w_i r_i (value iteration).

    Ties within ``tie_tol`` go to the lowest action index.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (m.n_objectives,) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be a finite vector with one entry per objective")
    r = m.reward @ w
    V = np.zeros(m.n_states)
    for _ in range(max_iters):
        Q = r + m.gamma * m.transition @ V
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    else:
        raise RuntimeError(f"value iteration did not converge in {max_iters} iterations")
    Q = r + m.gamma * m.transition @ V
    best = np.argmax(Q >= Q.max(axis=1, keepdims=True) - tie_tol, axis=1)
    pi = np.zeros(m.shape)
    pi[np.arange(m.n_states), best] = 1.0
    return pi


def scalar_return(m: MOMDP, pi, weights) -> float:
    d = policy_occupancy(m, pi)
    return float(np.einsum("sa,sai,i->", d, m.reward, np.asarray(weights, dtype=float)))


def mixture_policy_for_optimality(m: MOMDP, target: float, weights=None,
                                  tol: float = 1e-4, max_iters: int = 200) -> np.ndarray:
    """zeta * pi_opt + (1 - zeta) * pi_unif with normalized performance equal to ``target``.

    Performance is the scalar return under ``weights`` (all ones by default),
    rescaled so the uniform policy scores 0 and the optimal policy scores 1.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError("target optimality must lie in [0, 1]")
    if weights is None:
        weights = np.ones(m.n_objectives)
    pi_u = uniform_policy(m)
    pi_opt = optimal_scalar_policy(m, weights)
    j_u = scalar_return(m, pi_u, weights)
    j_opt = scalar_return(m, pi_opt, weights)
    span = j_opt - j_u
    if target == 0.0 or abs(span) < 1e-15:
        return pi_u
    if target == 1.0:
        return pi_opt

    def perf(z):
        return (scalar_return(m, z * pi_opt + (1 - z) * pi_u, weights) - j_u) / span

    lo, hi = 0.0, 1.0
    z = target
    for _ in range(max_iters):
        z = 0.5 * (lo + hi)
        p = perf(z)
        if abs(p - target) <= tol:
            break
        if p < target:
            lo = z
        else:
            hi = z
    return z * pi_opt + (1 - z) * pi_u


# datasets


@dataclass
class OfflineDataset:
    """Trajectories of (s, a, reward vector, s_next, done) steps."""

    trajectories: list
    env_fingerprint: str = ""
    horizon: int = 0
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("dataset must contain at least one trajectory")

    @property
    def n_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def __eq__(self, other):
        if not isinstance(other, OfflineDataset):
            return NotImplemented
        return (self.env_fingerprint == other.env_fingerprint and self.horizon == other.horizon
                and self.seed == other.seed and _norm(self.trajectories) == _norm(other.trajectories))


def _norm(trajs):
    return [[(int(s), int(a), [float(x) for x in r], int(s2), bool(done))
             for s, a, r, s2, done in traj] for traj in trajs]


def sample_trajectories(m: MOMDP, pi, n: int, horizon: int, seed: int) -> OfflineDataset:
    """Roll out ``n`` episodes from p0, stopping at the sink or after ``horizon`` steps.

    Each trajectory has its own generator seeded by (seed, index), so the output
    does not depend on the order in which trajectories are produced. Rewards are
    the expected reward vectors r(s, a) of the model.
    """
    if n < 1 or horizon < 1:
        raise ValueError("need n >= 1 and horizon >= 1")
    pi = np.asarray(pi, dtype=float)
    pi_cdf = np.cumsum(pi, axis=1)
    T_cdf = np.cumsum(m.transition, axis=2)
    p0_cdf = np.cumsum(m.p0)
    A, S = m.n_actions, m.n_states
    trajectories = []
    for k in range(n):
        rng = np.random.default_rng([seed, k])
        s = min(int(np.searchsorted(p0_cdf, rng.random() * p0_cdf[-1], side="right")), S - 1)
        steps = []
        for _ in range(horizon):
            a = min(int(np.searchsorted(pi_cdf[s], rng.random() * pi_cdf[s, -1], side="right")), A - 1)
            u = rng.random() * T_cdf[s, a, -1]
            s2 = min(int(np.searchsorted(T_cdf[s, a], u, side="right")), S - 1)
            done = m.sink is not None and s2 == m.sink
            steps.append((s, a, m.reward[s, a].tolist(), s2, done))
            s = s2
            if done:
                break
        trajectories.append(steps)
    return OfflineDataset(trajectories, m.fingerprint(), horizon, seed)


def save_dataset(ds: OfflineDataset, path) -> None:
    header = {"schema": SCHEMA, "version": SCHEMA_VERSION, "env_fingerprint": ds.env_fingerprint,
              "horizon": ds.horizon, "seed": ds.seed, "meta": ds.meta}
    lines = [json.dumps(header, sort_keys=True)]
    for traj in _norm(ds.trajectories):
        lines.append(json.dumps({"steps": [[s, a, r, s2, done] for s, a, r, s2, done in traj]}))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path, env: Optional[MOMDP] = None) -> OfflineDataset:
    """Read a JSON-lines dataset; warns if ``env`` does not match the stored fingerprint."""
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        header = json.loads(lines[0])
        if header.get("schema") != SCHEMA:
            raise DatasetSchemaError(f"not a dataset file: schema={header.get('schema')!r}")
        if header.get("version") != SCHEMA_VERSION:
            raise DatasetSchemaError(f"unsupported dataset version {header.get('version')!r}")
        trajs = []
        for ln in lines[1:]:
            steps = json.loads(ln)["steps"]
            trajs.append([(int(s), int(a), [float(x) for x in r], int(s2), bool(done))
                          for s, a, r, s2, done in steps])
    except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
        if isinstance(exc, DatasetSchemaError):
            raise
        raise DatasetSchemaError(f"corrupt dataset file {path}: {exc}") from exc
    ds = OfflineDataset(trajs, header.get("env_fingerprint", ""), int(header.get("horizon", 0)),
                        header.get("seed"), header.get("meta", {}))
    if env is not None and env.fingerprint() != ds.env_fingerprint:
        warnings.warn(f"dataset fingerprint {ds.env_fingerprint} does not match environment "
                      f"{env.fingerprint()}", stacklevel=2)
    return ds


# empirical estimates


@dataclass
class EmpiricalEstimates:
    """Data distribution and MLE model estimated from an offline dataset.

    ``transitions`` holds the weighted per-sample view used by the sampled
    solver mode: arrays ``s, a, r, s_next, weight`` with weights summing to one.
    It includes virtual sink self-loops that carry the discounted tail mass of
    episodes that terminated.
    """

    d_data: np.ndarray
    p0_hat: np.ndarray
    T_hat: np.ndarray
    r_hat: np.ndarray
    counts: np.ndarray
    visited: np.ndarray
    gamma: float
    transitions: dict
    sink: Optional[int] = None

    @property
    def shape(self):
        return self.d_data.shape


def empirical_estimates(ds: OfflineDataset, n_states: int, n_actions: int, gamma: float,
                        n_objectives: Optional[int] = None, sink: Optional[int] = None,
                        weighting: str = "discounted") -> EmpiricalEstimates:
    """d_D, p0_hat and the MLE transition model.

    Step t of an episode has weight gamma**t ("discounted") or 1 ("uniform").
    An episode that enters ``sink`` at step t continues there forever, so the sink
    receives the tail weight sum_{k > t} of the per-step weights under the discounted
    scheme, i.e. gamma**(t+1) / (1 - gamma), spread evenly over actions. The uniform
    scheme uses the same geometric tail so that the sink stays represented.
    Unvisited (s, a) rows of T_hat are self-loops and are flagged in ``visited``.
    """
    if weighting not in ("discounted", "uniform"):
        raise ValueError("weighting must be 'discounted' or 'uniform'")
    S, A = n_states, n_actions
    if n_objectives is None:
        n_objectives = len(ds.trajectories[0][0][2])
    I = n_objectives

    cols = {k: [] for k in ("s", "a", "r", "s_next", "weight")}
    p0_counts = np.zeros(S)
    counts = np.zeros((S, A, S))
    r_sum = np.zeros((S, A, I))
    for traj in ds.trajectories:
        p0_counts[traj[0][0]] += 1
        for t, (s, a, r, s2, done) in enumerate(traj):
            w = gamma**t if weighting == "discounted" else 1.0
            cols["s"].append(s)
            cols["a"].append(a)
            cols["r"].append(r)
            cols["s_next"].append(s2)
            cols["weight"].append(w)
            counts[s, a, s2] += 1
            r_sum[s, a] += r
            if done and sink is not None and s2 == sink:
                tail = gamma ** (t + 1) / (1.0 - gamma)
                for b in range(A):
                    cols["s"].append(sink)
                    cols["a"].append(b)
                    cols["r"].append([0.0] * I)
                    cols["s_next"].append(sink)
                    cols["weight"].append(tail / A)
    trans = {
        "s": np.asarray(cols["s"], dtype=int),
        "a": np.asarray(cols["a"], dtype=int),
        "r": np.asarray(cols["r"], dtype=float).reshape(-1, I),
        "s_next": np.asarray(cols["s_next"], dtype=int),
        "weight": np.asarray(cols["weight"], dtype=float),
    }
    trans["weight"] /= trans["weight"].sum()

    d_data = np.zeros((S, A))
    np.add.at(d_data, (trans["s"], trans["a"]), trans["weight"])
    d_data /= d_data.sum()

    n_sa = counts.sum(axis=2)
    visited = n_sa > 0
    if sink is not None:
        # sink dynamics are known by construction
        visited[sink] = True
    T_hat = np.zeros((S, A, S))
    T_hat[visited] = counts[visited] / np.maximum(n_sa[visited], 1)[:, None]
    r_hat = np.zeros((S, A, I))
    r_hat[n_sa > 0] = r_sum[n_sa > 0] / n_sa[n_sa > 0][:, None]
    idle = ~(T_hat.sum(axis=2) > 0)
    ss, aa = np.nonzero(idle)
    T_hat[ss, aa, ss] = 1.0

    return EmpiricalEstimates(
        d_data=d_data,
        p0_hat=p0_counts / p0_counts.sum(),
        T_hat=T_hat,
        r_hat=r_hat,
        counts=counts,
        visited=visited,
        gamma=gamma,
        transitions=trans,
        sink=sink,
    )


def estimates_for(m: MOMDP, ds: OfflineDataset, weighting: str = "discounted") -> EmpiricalEstimates:
    return empirical_estimates(ds, m.n_states, m.n_actions, m.gamma, m.n_objectives,
                               sink=m.sink, weighting=weighting)
