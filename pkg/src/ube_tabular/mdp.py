"""Finite MDPs, exact policy evaluation and trajectory sampling.

Arrays follow the ``P[s, a, s']`` / ``r[s, a]`` / ``pi[s, a]`` layout throughout
the package. Terminal states are zero-reward self-loops whose rows are pinned to
zero in every linear system, so ``V(terminal) = 0`` even when ``gamma = 1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ROW_TOL = 1e-12


class NonEpisodicError(ValueError):
    """Raised when ``gamma = 1`` and some nonterminal state never reaches a terminal."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """A fully specified finite MDP.

    ``transitions`` has shape (S, A, S), ``rewards`` (S, A), ``initial_dist`` (S,)
    and ``terminal`` is a boolean mask over states.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    initial_dist: np.ndarray
    terminal: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        P = _frozen(self.transitions)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transitions must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        r = _frozen(self.rewards)
        if r.shape != (S, A):
            raise ValueError(f"rewards must have shape {(S, A)}, got {r.shape}")
        rho = _frozen(self.initial_dist)
        if rho.shape != (S,):
            raise ValueError(f"initial_dist must have shape {(S,)}, got {rho.shape}")
        term = np.zeros(S, dtype=bool) if self.terminal is None else self.terminal
        term = _frozen(term, dtype=bool)
        if term.shape != (S,):
            raise ValueError(f"terminal mask must have shape {(S,)}, got {term.shape}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if np.any(P < 0) or np.max(np.abs(P.sum(-1) - 1.0)) > ROW_TOL:
            raise ValueError("every transition row must be a probability vector")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > ROW_TOL:
            raise ValueError("initial_dist must be a probability vector")
        for s in np.flatnonzero(term):
            if np.any(P[s, :, s] != 1.0) or np.any(r[s] != 0.0):
                raise ValueError(f"terminal state {s} must be an absorbing zero-reward state")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "terminal", term)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    def replace(self, **changes) -> "TabularMdp":
        kwargs = dict(
            transitions=self.transitions,
            rewards=self.rewards,
            gamma=self.gamma,
            initial_dist=self.initial_dist,
            terminal=self.terminal,
        )
        kwargs.update(changes)
        return TabularMdp(**kwargs)

    def to_dict(self) -> dict:
        return {
            "S": self.num_states,
            "A": self.num_actions,
            "gamma": self.gamma,
            "P": self.transitions.tolist(),
            "r": self.rewards.tolist(),
            "rho": self.initial_dist.tolist(),
            "terminal": [bool(t) for t in self.terminal],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMdp":
        mdp = cls(
            transitions=doc["P"],
            rewards=doc["r"],
            gamma=doc["gamma"],
            initial_dist=doc["rho"],
            terminal=doc.get("terminal"),
        )
        if (mdp.num_states, mdp.num_actions) != (doc["S"], doc["A"]):
            raise ValueError("declared S/A do not match the array shapes")
        return mdp

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TabularMdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def check_policy(policy: np.ndarray, num_states: int, num_actions: int) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (num_states, num_actions):
        raise ValueError(f"policy must have shape {(num_states, num_actions)}, got {policy.shape}")
    if np.any(policy < 0) or np.max(np.abs(policy.sum(-1) - 1.0)) > ROW_TOL:
        raise ValueError("policy rows must be probability vectors")
    return policy


def uniform_policy(num_states: int, num_actions: int) -> np.ndarray:
    return np.full((num_states, num_actions), 1.0 / num_actions)


def one_hot_policy(actions: Sequence[int], num_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    policy = np.zeros((actions.size, num_actions))
    policy[np.arange(actions.size), actions] = 1.0
    return policy


def _reaches_terminal(P_pi: np.ndarray, terminal: np.ndarray) -> np.ndarray:
    """States (per leading batch index) from which a terminal state is reachable."""
    reach = np.broadcast_to(terminal, P_pi.shape[:-1]).copy()
    adj = P_pi > 0
    while True:
        new = reach | np.any(adj & reach[..., None, :], axis=-1)
        if np.array_equal(new, reach):
            return reach
        reach = new


def solve_policy_system(
    P_pi: np.ndarray, rhs: np.ndarray, discount: float, terminal: np.ndarray
) -> np.ndarray:
    """Solve ``x = rhs + discount * P_pi x`` with ``x = 0`` on terminal states.

    Accepts a leading batch dimension on ``P_pi`` and ``rhs``.
    """
    S = P_pi.shape[-1]
    if discount >= 1.0:
        if not np.all(_reaches_terminal(P_pi, terminal)):
            raise NonEpisodicError(
                "non-episodic with gamma=1: a nonterminal recurrent class never reaches a terminal state"
            )
    live = ~terminal
    M = np.eye(S) - discount * P_pi
    M[..., terminal, :] = 0.0
    M[..., terminal, terminal] = 1.0
    b = np.where(live, rhs, 0.0)
    return np.linalg.solve(M, b[..., None])[..., 0]


def solve_values(mdp: TabularMdp, policy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact policy evaluation by a dense linear solve; returns ``(V, Q)``."""
    policy = check_policy(policy, mdp.num_states, mdp.num_actions)
    V, Q = evaluate_batch(mdp.transitions, mdp.rewards, policy, mdp.gamma, mdp.terminal)
    return V, Q


def evaluate_batch(
    P: np.ndarray, r: np.ndarray, policy: np.ndarray, gamma: float, terminal: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Policy evaluation for a stack of MDPs sharing ``gamma`` and terminal mask.

    ``P`` is (..., S, A, S) and ``r`` is (..., S, A); no validation is done here.
    """
    P_pi = np.matmul(policy[:, None, :], P)[..., 0, :]
    r_pi = np.einsum("sa,...sa->...s", policy, r)
    V = solve_policy_system(P_pi, r_pi, gamma, terminal)
    Q = r + gamma * np.einsum("...sat,...t->...sa", P, V)
    Q[..., terminal, :] = 0.0
    return V, Q


def greedy_actions(Q: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Lowest-index argmax per state, treating values within ``tol`` of the max as tied."""
    best = Q.max(axis=-1, keepdims=True)
    return np.argmax(Q >= best - tol, axis=-1)


def value_iteration(
    mdp: TabularMdp, tol: float = 1e-10, max_iters: int = 100_000
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal values and a deterministic greedy policy (ties to the lowest action)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    P, r, g = mdp.transitions, mdp.rewards, mdp.gamma
    live = ~mdp.terminal
    V = np.zeros(mdp.num_states)
    residual = np.inf
    for _ in range(max_iters):
        Q = r + g * P @ V
        V_new = np.where(live, Q.max(axis=1), 0.0)
        residual = float(np.max(np.abs(V_new - V)))
        V = V_new
        if residual <= tol:
            break
    else:
        raise ConvergenceError("value iteration did not converge", residual)
    Q = r + g * P @ V
    policy = one_hot_policy(greedy_actions(Q, tol=1e-12), mdp.num_actions)
    return V, policy


def finite_horizon_optimal_values(mdp: TabularMdp, horizon: int) -> np.ndarray:
    """Optimal undiscounted expected return over ``horizon`` steps, per start state."""
    V = np.zeros(mdp.num_states)
    live = ~mdp.terminal
    for _ in range(horizon):
        V = np.where(live, (mdp.rewards + mdp.transitions @ V).max(axis=1), 0.0)
    return V


def finite_horizon_policy_values(mdp: TabularMdp, policy: np.ndarray, horizon: int) -> np.ndarray:
    V = np.zeros(mdp.num_states)
    live = ~mdp.terminal
    for _ in range(horizon):
        V = np.where(live, np.sum(policy * (mdp.rewards + mdp.transitions @ V), axis=1), 0.0)
    return V


@dataclass
class Trajectory:
    transitions: list[tuple[int, int, float, int]]
    ret: float

    def discounted_return(self, gamma: float) -> float:
        return float(sum(gamma**t * r for t, (_, _, r, _) in enumerate(self.transitions)))


def _sample_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), probs.size - 1))


def rollout(
    mdp: TabularMdp,
    policy: np.ndarray,
    start_state: int,
    horizon: int,
    rng: np.random.Generator,
) -> Trajectory:
    """Sample one trajectory; stops on entering a terminal state or after ``horizon`` steps."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    s = int(start_state)
    steps = []
    total = 0.0
    for _ in range(horizon):
        if mdp.terminal[s]:
            break
        a = _sample_index(rng, policy[s])
        s_next = _sample_index(rng, mdp.transitions[s, a])
        r = float(mdp.rewards[s, a])
        steps.append((s, a, r, s_next))
        total += r
        s = s_next
    return Trajectory(steps, total)


def _sample_rows(rng: np.random.Generator, cdf_rows: np.ndarray) -> np.ndarray:
    u = rng.random(cdf_rows.shape[0]) * cdf_rows[:, -1]
    idx = (cdf_rows < u[:, None]).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def sample_returns(
    mdp: TabularMdp,
    policy: np.ndarray,
    start_state: int,
    horizon: int,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Discounted returns of ``n`` independent rollouts, simulated in lockstep."""
    S, A = mdp.num_states, mdp.num_actions
    pol_cdf = np.cumsum(policy, axis=1)
    P_cdf = np.cumsum(mdp.transitions.reshape(S * A, S), axis=1)
    states = np.full(n, int(start_state))
    returns = np.zeros(n)
    disc = 1.0
    for _ in range(horizon):
        alive = ~mdp.terminal[states]
        if not alive.any():
            break
        actions = _sample_rows(rng, pol_cdf[states])
        returns += disc * mdp.rewards[states, actions]
        states = _sample_rows(rng, P_cdf[states * A + actions])
        disc *= mdp.gamma
    return returns


def mean_of_ensemble(mdps: Sequence[TabularMdp], weights: Sequence[float] | None = None) -> TabularMdp:
    """Weighted elementwise average of transitions and rewards (uniform by default)."""
    if len(mdps) == 0:
        raise ValueError("empty ensemble")
    ref = mdps[0]
    for m in mdps[1:]:
        if (
            m.transitions.shape != ref.transitions.shape
            or m.gamma != ref.gamma
            or not np.array_equal(m.initial_dist, ref.initial_dist)
            or not np.array_equal(m.terminal, ref.terminal)
        ):
            raise ValueError("ensemble members must share S, A, gamma, rho and terminal mask")
    w = np.full(len(mdps), 1.0 / len(mdps)) if weights is None else np.asarray(weights, dtype=float)
    P = np.einsum("n,nsat->sat", w, np.stack([m.transitions for m in mdps]))
    r = np.einsum("n,nsa->sa", w, np.stack([m.rewards for m in mdps]))
    P /= P.sum(-1, keepdims=True)
    return ref.replace(transitions=P, rewards=r)
