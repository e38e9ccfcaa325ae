"""Random test instances: layered acyclic MDPs with product posteriors, and cyclic ones."""
from __future__ import annotations

import numpy as np

from .mdp import TabularMdp
from .posterior import Candidate, FiniteSupportPosterior


def random_policy(S: int, A: int, rng: np.random.Generator, deterministic: bool = False) -> np.ndarray:
    if deterministic:
        return np.eye(A)[rng.integers(A, size=S)]
    return rng.dirichlet(np.ones(A), size=S)


def random_mdp(S: int, A: int, gamma: float, rng: np.random.Generator) -> TabularMdp:
    """Dense random MDP without terminal states (requires ``gamma < 1``)."""
    P = rng.dirichlet(np.ones(S), size=(S, A))
    r = rng.normal(size=(S, A))
    return TabularMdp(P, r, gamma, np.eye(S)[0])


def _forward_row(S: int, targets: np.ndarray, rng: np.random.Generator, deterministic: bool) -> np.ndarray:
    row = np.zeros(S)
    if deterministic:
        row[rng.choice(targets)] = 1.0
    else:
        row[targets] = rng.dirichlet(np.ones(targets.size))
    return row


def layered_posterior(
    rng: np.random.Generator,
    layers: int | None = None,
    width: int | None = None,
    num_actions: int = 2,
    uncertain_rows: int | None = None,
    gamma: float | None = None,
    deterministic: bool = False,
) -> FiniteSupportPosterior:
    """Acyclic MDP whose states sit in layers; every transition moves one layer forward.

    The last layer is terminal. Up to four non-terminal (s, a) rows carry two
    candidate successor distributions each, so the joint support has at most
    16 members. Rewards are known.
    """
    layers = int(rng.integers(3, 6)) if layers is None else layers
    width = int(rng.integers(2, 5)) if width is None else width
    gamma = float(rng.choice([0.9, 0.99, 1.0])) if gamma is None else gamma
    S = layers * width
    A = num_actions
    layer_of = np.repeat(np.arange(layers), width)
    terminal = layer_of == layers - 1
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            if terminal[s]:
                P[s, a, s] = 1.0
            else:
                nxt = np.flatnonzero(layer_of == layer_of[s] + 1)
                P[s, a] = _forward_row(S, nxt, rng, deterministic)
    r = np.where(terminal[:, None], 0.0, rng.normal(size=(S, A)))
    base = TabularMdp(P, r, gamma, np.eye(S)[0], terminal)
    live = [(s, a) for s in range(S) for a in range(A) if not terminal[s]]
    k = int(rng.integers(1, 5)) if uncertain_rows is None else uncertain_rows
    picks = rng.choice(len(live), size=min(k, len(live)), replace=False)
    factors = {}
    for i in picks:
        s, a = live[i]
        nxt = np.flatnonzero(layer_of == layer_of[s] + 1)
        w = float(rng.uniform(0.2, 0.8))
        factors[(s, a)] = [
            Candidate(_forward_row(S, nxt, rng, deterministic), w),
            Candidate(_forward_row(S, nxt, rng, deterministic), 1.0 - w),
        ]
    return FiniteSupportPosterior.product(base, factors)


def cyclic_posterior(rng: np.random.Generator, gamma: float = 0.9) -> FiniteSupportPosterior:
    """Three recurrent states, two actions; every row has two random candidates."""
    S, A = 3, 2
    base = random_mdp(S, A, gamma, rng)
    factors = {}
    for s in range(S):
        for a in range(A):
            w = float(rng.uniform(0.2, 0.8))
            factors[(s, a)] = [Candidate(rng.dirichlet(np.ones(S)), w), Candidate(rng.dirichlet(np.ones(S)), 1.0 - w)]
    return FiniteSupportPosterior.product(base, factors)
