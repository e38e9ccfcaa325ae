"""Posteriors over tabular MDPs.

Two flavours share the same small surface (``posterior_mean``, ``sample_mdps``,
``reward_variance``):

* :class:`DirichletNormalPosterior` - conjugate Dirichlet rows and Normal mean
  rewards, updated from counts.
* :class:`FiniteSupportPosterior` - an explicit weighted list of MDPs, or an
  independent product of per-(s, a) candidate rows which is expanded lazily.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .mdp import TabularMdp

GAMMA_FLOOR = 1e-300


def sample_dirichlet_rows(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet draws along the last axis via normalised Gamma variates."""
    g = rng.standard_gamma(alpha)
    np.maximum(g, GAMMA_FLOOR, out=g)
    return g / g.sum(axis=-1, keepdims=True)


class DirichletNormalPosterior:
    """Dirichlet transitions and Normal mean rewards, independent per (s, a).

    The reward model is ``r_obs ~ N(mu, noise_var)`` with ``mu ~ N(0, prior_var)``.
    Terminal rows are never learned: they stay absorbing with zero reward.
    """

    def __init__(
        self,
        num_states: int,
        num_actions: int,
        gamma: float,
        initial_dist: np.ndarray,
        terminal: np.ndarray | None = None,
        alpha0: float | None = None,
        noise_var: float = 1.0,
        prior_var: float = 1.0,
    ):
        if num_states < 1 or num_actions < 1:
            raise ValueError("need at least one state and one action")
        if alpha0 is None:
            alpha0 = 1.0 / math.sqrt(num_states)
        if alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if noise_var <= 0 or prior_var <= 0:
            raise ValueError("variances must be positive")
        self.num_states = num_states
        self.num_actions = num_actions
        self.gamma = float(gamma)
        self.initial_dist = np.asarray(initial_dist, dtype=float)
        self.terminal = (
            np.zeros(num_states, dtype=bool) if terminal is None else np.asarray(terminal, dtype=bool)
        )
        self.alpha0 = float(alpha0)
        self.noise_var = float(noise_var)
        self.prior_var = float(prior_var)
        self.alpha = np.full((num_states, num_actions, num_states), self.alpha0)
        self.reward_sum = np.zeros((num_states, num_actions))
        self.count = np.zeros((num_states, num_actions), dtype=np.int64)

    @classmethod
    def new_prior(cls, S, A, gamma, rho, terminal=None, alpha0=None, **kwargs):
        return cls(S, A, gamma, rho, terminal, alpha0=alpha0, **kwargs)

    def observe(self, s: int, a: int, s_next: int, r: float, repeat: int = 1) -> None:
        if repeat < 1:
            raise ValueError("repeat must be >= 1")
        if self.terminal[s]:
            return
        self.alpha[s, a, s_next] += repeat
        self.reward_sum[s, a] += repeat * r
        self.count[s, a] += repeat

    def observe_many(self, transitions, repeat: int = 1) -> None:
        for s, a, r, s_next in transitions:
            self.observe(s, a, s_next, r, repeat)

    # reward posterior: precision-weighted combination of prior and observations
    def _reward_precision(self) -> np.ndarray:
        return 1.0 / self.prior_var + self.count / self.noise_var

    def reward_mean(self) -> np.ndarray:
        mean = (self.reward_sum / self.noise_var) / self._reward_precision()
        mean[self.terminal] = 0.0
        return mean

    def reward_variances(self) -> np.ndarray:
        var = 1.0 / self._reward_precision()
        var[self.terminal] = 0.0
        return var

    def reward_variance(self, s: int, a: int) -> float:
        return float(self.reward_variances()[s, a])

    def transition_mean(self) -> np.ndarray:
        P = self.alpha / self.alpha.sum(-1, keepdims=True)
        return self._pin_terminal(P)

    def _pin_terminal(self, P: np.ndarray) -> np.ndarray:
        for s in np.flatnonzero(self.terminal):
            P[..., s, :, :] = 0.0
            P[..., s, :, s] = 1.0
        return P

    def posterior_mean(self) -> TabularMdp:
        return TabularMdp(self.transition_mean(), self.reward_mean(), self.gamma, self.initial_dist, self.terminal)

    def sample_arrays(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """``n`` joint draws as stacked arrays ``(P[n,S,A,S], r[n,S,A])``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        P = sample_dirichlet_rows(np.broadcast_to(self.alpha, (n,) + self.alpha.shape), rng)
        P = self._pin_terminal(P)
        r = self.reward_mean() + np.sqrt(self.reward_variances()) * rng.standard_normal((n,) + self.count.shape)
        return P, r

    def sample_mdps(self, n: int, rng: np.random.Generator) -> list[TabularMdp]:
        P, r = self.sample_arrays(n, rng)
        return [TabularMdp(P[i], r[i], self.gamma, self.initial_dist, self.terminal) for i in range(n)]

    def to_dict(self) -> dict:
        return {
            "S": self.num_states,
            "A": self.num_actions,
            "gamma": self.gamma,
            "rho": self.initial_dist.tolist(),
            "terminal": [bool(t) for t in self.terminal],
            "alpha0": self.alpha0,
            "noise_var": self.noise_var,
            "prior_var": self.prior_var,
            "alpha": self.alpha.tolist(),
            "reward_sum": self.reward_sum.tolist(),
            "count": self.count.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DirichletNormalPosterior":
        post = cls(
            doc["S"], doc["A"], doc["gamma"], doc["rho"], doc["terminal"],
            alpha0=doc["alpha0"], noise_var=doc["noise_var"], prior_var=doc["prior_var"],
        )
        post.alpha = np.array(doc["alpha"], dtype=float)
        post.reward_sum = np.array(doc["reward_sum"], dtype=float)
        post.count = np.array(doc["count"], dtype=np.int64)
        return post

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "DirichletNormalPosterior":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Candidate:
    """One support point for a single (s, a) factor of a product posterior."""

    row: np.ndarray
    weight: float
    reward: float | None = None


class SupportTooLargeError(ValueError):
    pass


class FiniteSupportPosterior:
    """A discrete posterior over MDPs.

    Built either from explicit ``members``/``weights`` or, via :meth:`product`,
    from a base MDP whose listed (s, a) rows are replaced by independent
    candidate sets. The product form satisfies row-wise independence by
    construction and is only expanded to its joint support on request.
    """

    def __init__(self, members: Sequence[TabularMdp], weights: Sequence[float] | None = None):
        if len(members) == 0:
            raise ValueError("posterior needs at least one member")
        w = np.full(len(members), 1.0 / len(members)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(members),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        ref = members[0]
        for m in members[1:]:
            if (
                m.transitions.shape != ref.transitions.shape
                or m.gamma != ref.gamma
                or not np.array_equal(m.initial_dist, ref.initial_dist)
                or not np.array_equal(m.terminal, ref.terminal)
            ):
                raise ValueError("members must share S, A, gamma, rho and terminal mask")
        self._members = list(members)
        self._weights = w
        self.base = ref
        self.factors: dict[tuple[int, int], list[Candidate]] = {}

    @classmethod
    def product(
        cls, base: TabularMdp, factors: Mapping[tuple[int, int], Sequence[Candidate | tuple]]
    ) -> "FiniteSupportPosterior":
        post = cls.__new__(cls)
        post.base = base
        post.factors = {}
        for (s, a), cands in factors.items():
            if base.terminal[s]:
                raise ValueError(f"cannot place uncertainty on terminal state {s}")
            cands = [c if isinstance(c, Candidate) else Candidate(np.asarray(c[0], float), *c[1:]) for c in cands]
            wsum = sum(c.weight for c in cands)
            if abs(wsum - 1.0) > 1e-12 or any(c.weight < 0 for c in cands):
                raise ValueError(f"candidate weights for {(s, a)} must sum to 1")
            for c in cands:
                if c.row.shape != (base.num_states,) or abs(c.row.sum() - 1.0) > 1e-12 or np.any(c.row < 0):
                    raise ValueError(f"candidate row for {(s, a)} is not a distribution")
            post.factors[(int(s), int(a))] = cands
        post._members = None
        post._weights = None
        return post

    @property
    def gamma(self) -> float:
        return self.base.gamma

    @property
    def num_states(self) -> int:
        return self.base.num_states

    @property
    def num_actions(self) -> int:
        return self.base.num_actions

    @property
    def terminal(self) -> np.ndarray:
        return self.base.terminal

    @property
    def initial_dist(self) -> np.ndarray:
        return self.base.initial_dist

    @property
    def support_size(self) -> int:
        if self._members is not None:
            return len(self._members)
        return math.prod(len(c) for c in self.factors.values())

    def _build(self, choice: Sequence[Candidate]) -> TabularMdp:
        P = np.array(self.base.transitions)
        r = np.array(self.base.rewards)
        for (s, a), c in zip(self.factors, choice):
            P[s, a] = c.row
            if c.reward is not None:
                r[s, a] = c.reward
        return self.base.replace(transitions=P, rewards=r)

    def expand(self, max_support: int = 1_000_000) -> tuple[list[TabularMdp], np.ndarray]:
        """Joint support ``(members, weights)``."""
        if self._members is not None:
            return self._members, self._weights
        size = self.support_size
        if size > max_support:
            raise SupportTooLargeError(
                f"joint support has {size} members (> {max_support}); use Monte-Carlo estimation instead"
            )
        members, weights = [], []
        for choice in itertools.product(*self.factors.values()):
            members.append(self._build(choice))
            weights.append(math.prod(c.weight for c in choice))
        return members, np.asarray(weights)

    def posterior_mean(self) -> TabularMdp:
        if self._members is not None:
            P = np.einsum("n,nsat->sat", self._weights, np.stack([m.transitions for m in self._members]))
            r = np.einsum("n,nsa->sa", self._weights, np.stack([m.rewards for m in self._members]))
            P /= P.sum(-1, keepdims=True)
            return self.base.replace(transitions=P, rewards=r)
        P = np.array(self.base.transitions)
        r = np.array(self.base.rewards)
        for (s, a), cands in self.factors.items():
            P[s, a] = sum(c.weight * c.row for c in cands)
            P[s, a] /= P[s, a].sum()
            r[s, a] = sum(c.weight * (r[s, a] if c.reward is None else c.reward) for c in cands)
        return self.base.replace(transitions=P, rewards=r)

    def reward_variances(self) -> np.ndarray:
        if self._members is not None:
            R = np.stack([m.rewards for m in self._members])
            mean = np.einsum("n,nsa->sa", self._weights, R)
            return np.einsum("n,nsa->sa", self._weights, (R - mean) ** 2)
        var = np.zeros((self.num_states, self.num_actions))
        for (s, a), cands in self.factors.items():
            vals = np.array([self.base.rewards[s, a] if c.reward is None else c.reward for c in cands])
            w = np.array([c.weight for c in cands])
            var[s, a] = np.sum(w * (vals - np.sum(w * vals)) ** 2)
        return var

    def reward_variance(self, s: int, a: int) -> float:
        return float(self.reward_variances()[s, a])

    def sample_arrays(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self._members is not None:
            idx = rng.choice(len(self._members), size=n, p=self._weights)
            P = np.stack([self._members[i].transitions for i in idx])
            r = np.stack([self._members[i].rewards for i in idx])
            return P, r
        P = np.broadcast_to(self.base.transitions, (n,) + self.base.transitions.shape).copy()
        r = np.broadcast_to(self.base.rewards, (n,) + self.base.rewards.shape).copy()
        for (s, a), cands in self.factors.items():
            idx = rng.choice(len(cands), size=n, p=[c.weight for c in cands])
            rows = np.stack([c.row for c in cands])
            P[:, s, a] = rows[idx]
            rew = np.array([self.base.rewards[s, a] if c.reward is None else c.reward for c in cands])
            r[:, s, a] = rew[idx]
        return P, r

    def sample_mdps(self, n: int, rng: np.random.Generator) -> list[TabularMdp]:
        P, r = self.sample_arrays(n, rng)
        return [self.base.replace(transitions=P[i], rewards=r[i]) for i in range(n)]

    def to_dict(self) -> dict:
        members, weights = self.expand()
        return {"members": [{"weight": float(w), "mdp": m.to_dict()} for m, w in zip(members, weights)]}

    @classmethod
    def from_dict(cls, doc: dict) -> "FiniteSupportPosterior":
        members = [TabularMdp.from_dict(m["mdp"]) for m in doc["members"]]
        return cls(members, [m["weight"] for m in doc["members"]])
