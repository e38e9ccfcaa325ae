"""Numerical checks of the variance identities against the enumeration oracle."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import ube
from .envs import toy_mrp
from .instances import cyclic_posterior, layered_posterior, random_mdp, random_policy
from .mdp import sample_returns, solve_values
from .oracle import enumerate_variance, independence_residual

TOY_TABLE = {
    "u": (-0.6, 25.0),
    "w": (5.0, 25.0),
    "W": (21.3, 25.0),
    "U": (15.7, 25.0),
}
TOY_TOL = 0.05


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def toy_quantities(posterior=None) -> dict[str, np.ndarray]:
    """u, w, g, W, U and the enumerated Var[V] per state of the toy chain (single action)."""
    post = toy_mrp() if posterior is None else posterior
    policy = np.ones((post.num_states, 1))
    members, weights = post.expand()
    ens = ube.solve_mdps(members, policy, weights)
    pbar = post.posterior_mean()
    u = ube.u_exact(ens, 3)
    w = ube.u_pombu(ens)
    return {
        "u": u.values[:, 0],
        "w": w.values[:, 0],
        "g": ube.gap(ens)[:, 0],
        "W": ube.solve_ube(pbar, policy, w).values[:, 0],
        "U": ube.solve_ube(pbar, policy, u).values[:, 0],
        "var_v": enumerate_variance(post, policy).var_v,
    }


def check_toy_table():
    q = toy_quantities()
    errs = []
    for key, (v0, v2) in TOY_TABLE.items():
        errs += [abs(q[key][0] - v0), abs(q[key][2] - v2)]
    consistency = abs(q["var_v"][0] - q["U"][0])
    ok = max(errs) <= TOY_TOL and consistency <= 1e-10
    return ok, f"max table error {max(errs):.4f}, |Var[V(s0)] - U(s0)| = {consistency:.1e}"


def _layered_cases(n: int, seed: int, deterministic: bool = False):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        post = layered_posterior(rng, deterministic=deterministic)
        policy = random_policy(post.num_states, post.num_actions, rng, deterministic=deterministic)
        members, weights = post.expand()
        yield post, policy, ube.solve_mdps(members, policy, weights)


def check_oracle_equivalence(n: int = 100, seed: int = 0):
    worst = 0.0
    for post, policy, ens in _layered_cases(n, seed):
        U = ube.solve_ube(post.posterior_mean(), policy, ube.u_exact(ens)).values
        worst = max(worst, float(np.abs(U - enumerate_variance(post, policy).var_q).max()))
    return worst <= 1e-8, f"max |U - Var[Q]| = {worst:.1e} over {n} instances"


def check_gap_identities(n: int = 100, seed: int = 0):
    id_err, g_min, var_err = 0.0, np.inf, 0.0
    for _, _, ens in _layered_cases(n, seed):
        u = [ube.u_exact(ens, k).values for k in ube.EXACT_VARIANTS]
        g = ube.gap(ens)
        id_err = max(id_err, float(np.abs(u[2] - (ube.u_pombu(ens).values - g)).max()))
        g_min = min(g_min, float(g.min()))
        var_err = max(var_err, float(np.abs(u[0] - u[2]).max()), float(np.abs(u[1] - u[2]).max()))
    ok = id_err <= 1e-10 and g_min >= -1e-12 and var_err <= 1e-10
    return ok, f"|u-(w-g)| {id_err:.1e}, min g {g_min:.1e}, variant spread {var_err:.1e}"


def check_bound_chain(n: int = 100, seed: int = 0):
    worst = np.inf
    for post, policy, ens in _layered_cases(n, seed):
        pbar = post.posterior_mean()
        W = ube.solve_ube(pbar, policy, ube.u_pombu(ens)).values
        u = ube.u_exact(ens)
        U0 = ube.solve_ube(pbar, policy, ube.clip(u, 0.0)).values
        U = ube.solve_ube(pbar, policy, u).values
        worst = min(worst, float((W - U0).min()), float((U0 - U).min()))
    tight = 0.0
    for _, _, ens in _layered_cases(n, seed + 1, deterministic=True):
        tight = max(tight, float(np.abs(ube.u_pombu(ens).values - ube.u_exact(ens).values).max()))
    ok = worst >= -1e-10 and tight <= 1e-10
    return ok, f"min chain slack {worst:.1e}, deterministic |w-u| {tight:.1e}"


def check_decomposition(n: int = 100, seed: int = 0):
    worst = 0.0
    for post, _, ens in _layered_cases(n, seed):
        lhs = ube.total_next_variance(ens)
        rhs = ube.u_pombu(ens).values + ube.aleatoric_of_mean(ens)
        live = ~post.terminal
        worst = max(worst, float(np.abs(lhs - rhs)[live].max()))
    return worst <= 1e-10, f"max decomposition error {worst:.1e}"


def check_value_independence(n: int = 100, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n):
        post = cyclic_posterior(rng) if i % 2 else layered_posterior(rng)
        policy = random_policy(post.num_states, post.num_actions, rng)
        worst = max(worst, independence_residual(post, policy))
    return worst <= 1e-10, f"max residual {worst:.1e} (half the instances cyclic)"


def check_bellman_mc(n_mdps: int = 10, n_rollouts: int = 100_000, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst_z = 0.0
    for _ in range(n_mdps):
        mdp = random_mdp(5, 2, 0.9, rng)
        policy = random_policy(5, 2, rng)
        V, _ = solve_values(mdp, policy)
        horizon = int(np.ceil(np.log(1e-9 * (1 - mdp.gamma)) / np.log(mdp.gamma)))
        G = sample_returns(mdp, policy, 0, horizon, n_rollouts, rng)
        z = abs(G.mean() - V[0]) / (G.std(ddof=1) / np.sqrt(n_rollouts))
        worst_z = max(worst_z, float(z))
    return worst_z <= 3.0, f"max |V - MC mean| = {worst_z:.2f} SE over {n_mdps} MDPs"


CHECKS = {
    "toy-table": check_toy_table,
    "oracle-equivalence": check_oracle_equivalence,
    "gap-identities": check_gap_identities,
    "bound-chain": check_bound_chain,
    "decomposition": check_decomposition,
    "value-independence": check_value_independence,
    "bellman-mc": check_bellman_mc,
}


def run_checks(names=None) -> list[CheckResult]:
    names = list(CHECKS) if names is None else names
    return [_timed(name, CHECKS[name]) for name in names]
