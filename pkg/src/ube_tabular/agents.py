"""Variance estimation pipeline, optimistic policy iteration and baseline agents."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import ube
from .mdp import TabularMdp, one_hot_policy, uniform_policy, value_iteration

ESTIMATORS = (
    "exact_ube",
    "exact_ube_1",
    "exact_ube_2",
    "exact_ube_3",
    "pombu",
    "ensemble_var",
    "upper_bound",
    "ensemble_mean",
    "psrl",
    "oracle",
)
TIE_TOL = 1e-9


def normalize_name(name: str) -> str:
    return name.strip().lower().replace("-", "_")


@dataclass(frozen=True)
class AgentConfig:
    estimator: str = "exact_ube"
    risk_gain: float = 1.0
    ensemble_size: int = 5
    u_min: float = 0.0
    max_policy_iters: int = 40
    gamma: float = 0.99
    exact_variant: int = 3
    reward_uncertainty: bool = True
    resample_each_iter: bool = False
    tie_tol: float = TIE_TOL

    def __post_init__(self):
        est = normalize_name(self.estimator)
        object.__setattr__(self, "estimator", est)
        if est not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; choose from {', '.join(ESTIMATORS)}")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.max_policy_iters < 1:
            raise ValueError("max_policy_iters must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.exact_variant not in ube.EXACT_VARIANTS:
            raise ValueError("exact_variant must be 1, 2 or 3")

    @property
    def variant(self) -> int:
        if self.estimator.startswith("exact_ube_"):
            return int(self.estimator[-1])
        return self.exact_variant

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "AgentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown agent config keys: {sorted(unknown)}")
        return cls(**doc)


def _separate_reward_term(config: AgentConfig) -> bool:
    return config.reward_uncertainty and (config.estimator == "pombu" or config.estimator.startswith("exact_ube"))


def sample_ensemble(posterior, config: AgentConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(P, r)`` for the ensemble.

    Estimators that add the reward variance as a separate term get transition
    samples paired with the posterior-mean reward, so reward noise is not
    counted twice. The others use joint draws.
    """
    P, r = posterior.sample_arrays(config.ensemble_size, rng)
    if _separate_reward_term(config):
        r = np.broadcast_to(posterior.posterior_mean().rewards, r.shape).copy()
    return P, r


def _estimate(ens: ube.SolvedEnsemble, posterior, config: AgentConfig) -> np.ndarray:
    est = config.estimator
    if est in ("ensemble_mean", "psrl", "oracle"):
        return np.zeros_like(ens.q_mean)
    if est == "ensemble_var":
        return ube.u_ensemble_var(ens).values
    if est == "upper_bound":
        u = ube.u_ensemble_var(ens)
    else:
        u = ube.u_pombu(ens) if est == "pombu" else ube.u_exact(ens, config.variant)
        if config.reward_uncertainty:
            u = ube.add_reward_uncertainty(u, posterior)
    u = ube.clip(u, config.u_min)
    return ube.solve_ube(ens.mean_P, ens.policy, u, ens.gamma, ens.terminal).values


def qvariance_pipeline(
    posterior,
    policy: np.ndarray,
    config: AgentConfig,
    rng: np.random.Generator | None = None,
    ensemble: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample an ensemble, solve every member and return ``(Q_mean, U_hat)``.

    Pass ``ensemble`` to reuse previously sampled ``(P, r)`` arrays.
    """
    if ensemble is None:
        if rng is None:
            raise ValueError("need an rng or a pre-sampled ensemble")
        ensemble = sample_ensemble(posterior, config, rng)
    P, r = ensemble
    ens = ube.solve_ensemble(P, r, policy, config.gamma, posterior.terminal)
    return ens.q_mean, _estimate(ens, posterior, config)


def ucb_scores(q_mean: np.ndarray, u_hat: np.ndarray, risk_gain: float) -> np.ndarray:
    if risk_gain == 0.0:
        return q_mean
    return q_mean + risk_gain * np.sqrt(np.maximum(u_hat, 0.0))


def _improve(scores: np.ndarray, current: np.ndarray | None, tol: float, rng: np.random.Generator) -> np.ndarray:
    """Greedy actions with random tie-breaking; keeps the current action when it is still tied for best."""
    ties = scores >= scores.max(axis=1, keepdims=True) - tol
    S = scores.shape[0]
    if current is not None:
        keep = ties[np.arange(S), current]
    else:
        keep = np.zeros(S, bool)
    # uniform choice among tied actions via random keys
    keys = np.where(ties, rng.random(scores.shape), -1.0)
    choice = keys.argmax(axis=1)
    return np.where(keep, current if current is not None else choice, choice)


def ucb_policy_iteration(posterior, config: AgentConfig, rng: np.random.Generator) -> np.ndarray:
    """Policy iteration on Q_mean + gain * sqrt(max(U_hat, 0)); returns a one-hot policy."""
    S, A = posterior.num_states, posterior.num_actions
    policy = uniform_policy(S, A)
    actions = None
    ensemble = sample_ensemble(posterior, config, rng)
    for _ in range(config.max_policy_iters):
        if config.resample_each_iter and actions is not None:
            ensemble = sample_ensemble(posterior, config, rng)
        q_mean, u_hat = qvariance_pipeline(posterior, policy, config, ensemble=ensemble)
        new = _improve(ucb_scores(q_mean, u_hat, config.risk_gain), actions, config.tie_tol, rng)
        if actions is not None and np.array_equal(new, actions):
            break
        actions = new
        policy = one_hot_policy(actions, A)
    return policy


def psrl_policy(posterior, rng: np.random.Generator, config: AgentConfig | None = None) -> np.ndarray:
    """Optimal policy (by policy iteration) of a single MDP drawn from the posterior."""
    base = config if config is not None else AgentConfig()
    cfg = AgentConfig(
        estimator="psrl",
        risk_gain=0.0,
        ensemble_size=1,
        max_policy_iters=base.max_policy_iters,
        gamma=base.gamma,
        tie_tol=base.tie_tol,
    )
    return ucb_policy_iteration(posterior, cfg, rng)


class Agent:
    """Plans one policy per episode from the current posterior."""

    def __init__(self, config: AgentConfig, true_mdp: TabularMdp | None = None):
        self.config = config
        self._oracle_policy = None
        if config.estimator == "oracle":
            if true_mdp is None:
                raise ValueError("the oracle agent needs the true MDP")
            _, self._oracle_policy = value_iteration(true_mdp.replace(gamma=config.gamma))

    def plan(self, posterior, rng: np.random.Generator) -> np.ndarray:
        if self._oracle_policy is not None:
            return self._oracle_policy
        if self.config.estimator == "psrl":
            return psrl_policy(posterior, rng, self.config)
        return ucb_policy_iteration(posterior, self.config, rng)
