"""Local uncertainty rewards and the uncertainty Bellman equation (Q-form).

An ensemble is treated as the full support of a discrete posterior: the
expectation over MDPs is the (weighted) average over members and variances
across members are population variances. Inner moments over the next
state-action pair ``(s', a') ~ p(.|s, a) pi(.|s')`` are exact finite sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mdp import TabularMdp, check_policy, evaluate_batch, solve_policy_system

EXACT_VARIANTS = (1, 2, 3)


@dataclass(frozen=True)
class UncertaintyRewards:
    values: np.ndarray
    variant: str
    u_min: float = -np.inf

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class UValues:
    values: np.ndarray
    variant: str = ""


@dataclass(eq=False)
class SolvedEnsemble:
    """Members stacked as arrays together with their Q-functions under ``policy``.

    ``P`` is (N, S, A, S), ``r`` and ``q`` are (N, S, A), ``weights`` (N,).
    ``mean_P``/``mean_r`` are the weighted member averages and ``q_mean`` the
    weighted average of member Q-functions.
    """

    P: np.ndarray
    r: np.ndarray
    q: np.ndarray
    weights: np.ndarray
    policy: np.ndarray
    gamma: float
    terminal: np.ndarray
    initial_dist: np.ndarray | None = None
    mean_P: np.ndarray = field(init=False)
    mean_r: np.ndarray = field(init=False)
    q_mean: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mean_P = np.einsum("n,nsat->sat", self.weights, self.P)
        self.mean_r = np.einsum("n,nsa->sa", self.weights, self.r)
        self.q_mean = np.einsum("n,nsa->sa", self.weights, self.q)

    @property
    def size(self) -> int:
        return self.P.shape[0]

    def mean_mdp(self) -> TabularMdp:
        P = self.mean_P / self.mean_P.sum(-1, keepdims=True)
        S = P.shape[0]
        rho = self.initial_dist if self.initial_dist is not None else np.full(S, 1.0 / S)
        return TabularMdp(P, self.mean_r, self.gamma, rho, self.terminal)


def solve_ensemble(
    P: np.ndarray,
    r: np.ndarray,
    policy: np.ndarray,
    gamma: float,
    terminal: np.ndarray,
    weights: np.ndarray | None = None,
    initial_dist: np.ndarray | None = None,
) -> SolvedEnsemble:
    """Solve the Bellman expectation equation for every member of a stacked ensemble."""
    n = P.shape[0]
    if n == 0:
        raise ValueError("empty ensemble")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    _, q = evaluate_batch(P, r, policy, gamma, terminal)
    return SolvedEnsemble(P, r, q, w, policy, gamma, np.asarray(terminal, bool), initial_dist)


def solve_mdps(
    mdps: Sequence[TabularMdp], policy: np.ndarray, weights: Sequence[float] | None = None
) -> SolvedEnsemble:
    ref = mdps[0]
    policy = check_policy(policy, ref.num_states, ref.num_actions)
    P = np.stack([m.transitions for m in mdps])
    r = np.stack([m.rewards for m in mdps])
    w = None if weights is None else np.asarray(weights, dtype=float)
    return solve_ensemble(P, r, policy, ref.gamma, ref.terminal, w, ref.initial_dist)


def _next_mean(P: np.ndarray, policy: np.ndarray, f: np.ndarray) -> np.ndarray:
    """E_{s'~P(.|s,a), a'~pi(.|s')}[f(s', a')] for (stacks of) P and f."""
    return np.einsum("...sat,...t->...sa", P, np.einsum("ta,...ta->...t", policy, f))


def _next_var(P: np.ndarray, policy: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Var_{s'~P(.|s,a), a'~pi(.|s')}[f(s', a')], exact finite sum."""
    m1 = _next_mean(P, policy, f)
    m2 = _next_mean(P, policy, f * f)
    return m2 - m1 * m1


def _across_members_var(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    mean = np.einsum("n,n...->...", weights, x)
    return np.einsum("n,n...->...", weights, (x - mean) ** 2)


def _expect(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("n,n...->...", weights, x)


def _require_members(ens: SolvedEnsemble, minimum: int) -> None:
    if ens.size < minimum:
        raise ValueError(f"estimator needs an ensemble of at least {minimum} members, got {ens.size}")


def u_pombu(ens: SolvedEnsemble) -> UncertaintyRewards:
    """Upper-bound local uncertainty: variance over members of the one-step mean-value backup."""
    _require_members(ens, 1)
    backups = _next_mean(ens.P, ens.policy, np.broadcast_to(ens.q_mean, ens.q.shape))
    w = _across_members_var(ens.weights, backups)
    return UncertaintyRewards(_zero_terminal(w, ens.terminal), "pombu")


def _avg_aleatoric(ens: SolvedEnsemble, which: str) -> np.ndarray:
    qbar = np.broadcast_to(ens.q_mean, ens.q.shape)
    if which == "q":
        inner = _next_var(ens.P, ens.policy, ens.q)
    elif which == "qbar":
        inner = _next_var(ens.P, ens.policy, qbar)
    elif which == "diff":
        inner = _next_var(ens.P, ens.policy, ens.q - qbar)
    else:  # pragma: no cover - internal
        raise ValueError(which)
    return _expect(ens.weights, inner)


def gap(ens: SolvedEnsemble) -> np.ndarray:
    """Average excess aleatoric variance of member values over the mean values."""
    _require_members(ens, 1)
    g = _avg_aleatoric(ens, "q") - _avg_aleatoric(ens, "qbar")
    return _zero_terminal(g, ens.terminal)


def u_exact(ens: SolvedEnsemble, variant: int = 3) -> UncertaintyRewards:
    """Exact local uncertainty; the three algebraic forms differ once expectations are estimated.

    1: Var_{p_mean}[Q_mean] - E[Var_p[Q_p]]
    2: w - E[Var_p[Q_p] - Var_p[Q_mean]]
    3: w - E[Var_p[Q_p - Q_mean]]
    """
    if variant not in EXACT_VARIANTS:
        raise ValueError(f"unknown exact-ube variant {variant}")
    _require_members(ens, 2)
    if variant == 1:
        total = _next_var(ens.mean_P, ens.policy, ens.q_mean)
        u = total - _avg_aleatoric(ens, "q")
    elif variant == 2:
        u = u_pombu(ens).values - gap(ens)
    else:
        u = u_pombu(ens).values - _avg_aleatoric(ens, "diff")
    return UncertaintyRewards(_zero_terminal(u, ens.terminal), f"exact_ube_{variant}")


def u_ensemble_var(q_ensemble, weights: np.ndarray | None = None) -> UncertaintyRewards:
    """Disagreement of member Q-values at the same (s, a)."""
    if isinstance(q_ensemble, SolvedEnsemble):
        q, weights = q_ensemble.q, q_ensemble.weights
    else:
        q = np.asarray(q_ensemble, dtype=float)
    if weights is None:
        weights = np.full(q.shape[0], 1.0 / q.shape[0])
    return UncertaintyRewards(_across_members_var(np.asarray(weights), q), "ensemble_var")


def total_next_variance(ens: SolvedEnsemble) -> np.ndarray:
    """Var_{(s',a') ~ pi, p_mean}[Q_mean], the left side of the variance decomposition."""
    return _next_var(ens.mean_P, ens.policy, ens.q_mean)


def aleatoric_of_mean(ens: SolvedEnsemble) -> np.ndarray:
    """E_p[Var_{(s',a') ~ pi, p}[Q_mean]]."""
    return _avg_aleatoric(ens, "qbar")


def add_reward_uncertainty(u: UncertaintyRewards, posterior=None, policy=None) -> UncertaintyRewards:
    """Add the posterior variance of each mean reward; ``posterior=None`` means known rewards."""
    if posterior is None:
        return u
    var = np.array(posterior.reward_variances(), dtype=float)
    var[np.asarray(posterior.terminal, bool)] = 0.0
    return UncertaintyRewards(np.asarray(u.values) + var, u.variant, u.u_min)


def clip(u: UncertaintyRewards, u_min: float) -> UncertaintyRewards:
    return UncertaintyRewards(np.maximum(u.values, u_min), u.variant, float(u_min))


def solve_ube(
    mean_P, policy: np.ndarray, u, gamma: float | None = None, terminal: np.ndarray | None = None
) -> UValues:
    """Solve U(s,a) = g^2 u(s,a) + g^2 sum_{s',a'} pi(a'|s') p_mean(s'|s,a) U(s',a').

    ``mean_P`` may be a transition array or a :class:`TabularMdp` (whose gamma
    and terminal mask are then used as defaults). Terminal states get ``U = 0``.
    """
    if isinstance(mean_P, TabularMdp):
        gamma = mean_P.gamma if gamma is None else gamma
        terminal = mean_P.terminal if terminal is None else terminal
        mean_P = mean_P.transitions
    if gamma is None:
        raise ValueError("gamma is required when passing a raw transition array")
    S, A, _ = mean_P.shape
    terminal = np.zeros(S, bool) if terminal is None else np.asarray(terminal, bool)
    variant = getattr(u, "variant", "")
    u = np.array(u.values if isinstance(u, UncertaintyRewards) else u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("uncertainty rewards must be finite")
    u[terminal] = 0.0
    g2 = gamma * gamma
    P_pi = np.matmul(policy[:, None, :], mean_P)[..., 0, :]
    u_pi = np.sum(policy * u, axis=1)
    x = solve_policy_system(P_pi, g2 * u_pi, g2, terminal)
    U = g2 * (u + mean_P @ x)
    U[terminal] = 0.0
    return UValues(U, variant)


def _zero_terminal(x: np.ndarray, terminal: np.ndarray) -> np.ndarray:
    x = np.array(x)
    x[terminal] = 0.0
    return x
