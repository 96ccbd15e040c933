"""Finite multi-objective MDPs and occupancy-measure algebra.

Occupancies and tabular policies are plain ``(n_states, n_actions)`` arrays.
Occupancies are normalized: a valid one satisfies the Bellman flow
constraint with initial mass ``(1 - gamma) * p0`` and therefore sums to one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

PROB_TOL = 1e-9
MASS_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class MOMDP:
    """Tabular MOMDP.

    transition has shape (S, A, S) with ``transition[s, a, s']``; reward has
    shape (S, A, I). ``sink`` is the index of the absorbing state added by
    :func:`augment_absorbing`, if any.
    """

    transition: np.ndarray
    reward: np.ndarray
    p0: np.ndarray
    gamma: float
    sink: Optional[int] = None
    terminal_states: tuple = field(default=())

    def __post_init__(self):
        for name in ("transition", "reward", "p0"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "terminal_states", tuple(int(s) for s in self.terminal_states))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_objectives(self) -> int:
        return self.reward.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_states, self.n_actions

    def to_dict(self) -> dict:
        out = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "n_objectives": self.n_objectives,
            "gamma": self.gamma,
            "p0": self.p0.tolist(),
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
        }
        if self.sink is not None:
            out["sink"] = self.sink
            out["terminal_states"] = list(self.terminal_states)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "MOMDP":
        try:
            m = cls(
                transition=np.asarray(doc["transition"], dtype=float),
                reward=np.asarray(doc["reward"], dtype=float),
                p0=np.asarray(doc["p0"], dtype=float),
                gamma=doc["gamma"],
                sink=doc.get("sink"),
                terminal_states=tuple(doc.get("terminal_states", ())),
            )
        except KeyError as exc:
            raise ValueError(f"MOMDP document missing field {exc}") from None
        expected = (doc.get("n_states"), doc.get("n_actions"), doc.get("n_objectives"))
        actual = (m.n_states, m.n_actions, m.n_objectives)
        if any(e is not None and e != a for e, a in zip(expected, actual)):
            raise ValueError(f"declared sizes {expected} do not match arrays {actual}")
        return m

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def save_momdp(m: MOMDP, path) -> None:
    Path(path).write_text(m.to_json())


def load_momdp(path) -> MOMDP:
    return MOMDP.from_dict(json.loads(Path(path).read_text()))


def validate_momdp(m: MOMDP) -> list[str]:
    """Return a list of violated invariants; empty means valid."""
    problems = []
    T, R, p0 = m.transition, m.reward, m.p0
    if T.ndim != 3 or T.shape[0] != T.shape[2]:
        return [f"transition must have shape (S, A, S), got {T.shape}"]
    S, A, _ = T.shape
    if R.ndim != 3 or R.shape[:2] != (S, A):
        problems.append(f"reward must have shape ({S}, {A}, I), got {R.shape}")
    if p0.shape != (S,):
        problems.append(f"p0 must have shape ({S},), got {p0.shape}")
    if not 0.0 <= m.gamma < 1.0:
        problems.append(f"gamma={m.gamma} outside [0, 1)")
    if S == 0 or A == 0:
        problems.append("need at least one state and one action")
        return problems

    row_sums = T.sum(axis=2)
    for s, a in zip(*np.nonzero(~(np.abs(row_sums - 1.0) <= PROB_TOL))):
        problems.append(f"T[{s}][{a}] sums to {row_sums[s, a]:.12g}, expected 1")
    for s, a, t in zip(*np.nonzero(~(T >= 0))):
        problems.append(f"T[{s}][{a}][{t}] = {T[s, a, t]!r} is negative or not finite")
    if R.ndim == 3:
        for s, a, i in zip(*np.nonzero(~np.isfinite(R))):
            problems.append(f"reward[{s}][{a}][{i}] = {R[s, a, i]!r} is not finite")
    if p0.shape == (S,):
        if not abs(p0.sum() - 1.0) <= PROB_TOL:
            problems.append(f"p0 sums to {p0.sum():.12g}, expected 1")
        for s in np.nonzero(~(p0 >= 0))[0]:
            problems.append(f"p0[{s}] = {p0[s]!r} is negative or not finite")
    if m.sink is not None and not 0 <= m.sink < S:
        problems.append(f"sink index {m.sink} out of range")
    return problems


def validate_policy(pi: np.ndarray, shape: Optional[tuple[int, int]] = None) -> list[str]:
    pi = np.asarray(pi, dtype=float)
    problems = []
    if pi.ndim != 2:
        return [f"policy must be 2-D, got shape {pi.shape}"]
    if shape is not None and pi.shape != tuple(shape):
        problems.append(f"policy shape {pi.shape} != {tuple(shape)}")
    if not np.all(pi >= 0):
        problems.append("policy has negative or non-finite entries")
    bad = np.nonzero(~(np.abs(pi.sum(axis=1) - 1.0) <= PROB_TOL))[0]
    problems.extend(f"pi[{s}] sums to {pi[s].sum():.12g}" for s in bad)
    return problems


def uniform_policy(m: MOMDP) -> np.ndarray:
    return np.full(m.shape, 1.0 / m.n_actions)


def augment_absorbing(m: MOMDP, terminal_states: Iterable[int]) -> MOMDP:
    """Append an absorbing sink; terminal states and the sink jump to it with zero reward."""
    terminal = sorted({int(s) for s in terminal_states})
    S, A, _ = m.transition.shape
    for s in terminal:
        if not 0 <= s < S:
            raise IndexError(f"terminal state {s} out of range for {S} states")
    sink = S
    T = np.zeros((S + 1, A, S + 1))
    T[:S, :, :S] = m.transition
    R = np.zeros((S + 1, A, m.n_objectives))
    R[:S] = m.reward
    for s in terminal + [sink]:
        T[s] = 0.0
        T[s, :, sink] = 1.0
        R[s] = 0.0
    p0 = np.append(m.p0, 0.0)
    return MOMDP(T, R, p0, m.gamma, sink=sink, terminal_states=tuple(terminal))


def policy_occupancy(m: MOMDP, pi: np.ndarray) -> np.ndarray:
    """Exact normalized occupancy of ``pi`` via a dense solve on state marginals."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != m.shape:
        raise ValueError(f"policy shape {pi.shape} does not match MOMDP {m.shape}")
    P_pi = np.einsum("sa,sat->st", pi, m.transition)
    lhs = np.eye(m.n_states) - m.gamma * P_pi.T
    try:
        rho = np.linalg.solve(lhs, (1.0 - m.gamma) * m.p0)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular flow system, malformed MOMDP: {exc}") from exc
    return np.clip(rho, 0.0, None)[:, None] * pi


def _check_occupancy_shape(m: MOMDP, d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.shape != m.shape:
        raise ValueError(f"occupancy shape {d.shape} does not match MOMDP {m.shape}")
    return d


def occupancy_returns(m: MOMDP, d: np.ndarray) -> np.ndarray:
    """Per-objective return ``J_i = sum_{s,a} d(s,a) r_i(s,a)``."""
    d = _check_occupancy_shape(m, d)
    return np.einsum("sa,sai->i", d, m.reward)


def bellman_flow_residual(m: MOMDP, d: np.ndarray) -> np.ndarray:
    """(1-g) p0(s) + g sum T(s|s',a') d(s',a') - sum_a d(s,a), per state."""
    d = _check_occupancy_shape(m, d)
    inflow = np.einsum("sat,sa->t", m.transition, d)
    return (1.0 - m.gamma) * m.p0 + m.gamma * inflow - d.sum(axis=1)


def policy_from_occupancy(d: np.ndarray, fallback: Optional[np.ndarray] = None,
                          mass_eps: float = MASS_EPS) -> np.ndarray:
    """Normalize occupancy rows; rows with mass <= mass_eps copy ``fallback`` (uniform by default)."""
    d = np.clip(np.asarray(d, dtype=float), 0.0, None)
    if fallback is None:
        fallback = np.full(d.shape, 1.0 / d.shape[1])
    mass = d.sum(axis=1, keepdims=True)
    has_mass = mass[:, 0] > mass_eps
    pi = np.array(fallback, dtype=float, copy=True)
    pi[has_mass] = d[has_mass] / mass[has_mass]
    return pi


def bandit(rewards, gamma: float = 0.0) -> MOMDP:
    """Single-state MOMDP whose actions have the given reward vectors."""
    R = np.asarray(rewards, dtype=float)[None, :, :]
    A = R.shape[1]
    return MOMDP(np.ones((1, A, 1)), R, np.ones(1), gamma)
