"""Ground-truth posterior variance of values by enumeration or Monte-Carlo."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import check_policy, evaluate_batch
from .posterior import FiniteSupportPosterior

MC_CHUNK = 4096


@dataclass(frozen=True)
class VarianceReport:
    var_v: np.ndarray
    var_q: np.ndarray
    method: str
    n_samples: int
    se_v: np.ndarray | None = None
    se_q: np.ndarray | None = None
    mean_v: np.ndarray | None = None
    mean_q: np.ndarray | None = None


def _weighted_var(w: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = np.einsum("n,n...->...", w, x)
    var = np.einsum("n,n...->...", w, (x - mean) ** 2)
    return mean, np.maximum(var, 0.0)


def enumerate_variance(posterior: FiniteSupportPosterior, policy: np.ndarray, max_support: int = 1_000_000) -> VarianceReport:
    """Exact weighted variance of V and Q over the joint support of ``posterior``."""
    members, weights = posterior.expand(max_support)
    policy = check_policy(policy, posterior.num_states, posterior.num_actions)
    P = np.stack([m.transitions for m in members])
    r = np.stack([m.rewards for m in members])
    V, Q = evaluate_batch(P, r, policy, posterior.gamma, posterior.terminal)
    mv, vv = _weighted_var(weights, V)
    mq, vq = _weighted_var(weights, Q)
    return VarianceReport(vv, vq, "enumeration", len(members), np.zeros_like(vv), np.zeros_like(vq), mv, mq)


def _jackknife_var(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased sample variance along axis 0 and its jackknife standard error."""
    n = x.shape[0]
    mean = x.mean(axis=0)
    var = x.var(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    if n < 3:
        return var, np.full_like(mean, np.nan)
    s1 = x.sum(axis=0)
    s2 = (x * x).sum(axis=0)
    loo_mean = (s1 - x) / (n - 1)
    loo_var = (s2 - x * x - (n - 1) * loo_mean**2) / (n - 2)
    dev = loo_var - loo_var.mean(axis=0)
    se = np.sqrt((n - 1) / n * np.sum(dev * dev, axis=0))
    return np.maximum(var, 0.0), se


def mc_variance(posterior, policy: np.ndarray, n: int, rng: np.random.Generator) -> VarianceReport:
    """Sample ``n`` MDPs from any posterior exposing ``sample_arrays`` and solve each."""
    if n < 2:
        raise ValueError("need n >= 2 samples for an unbiased variance")
    policy = check_policy(policy, posterior.num_states, posterior.num_actions)
    Vs, Qs = [], []
    for start in range(0, n, MC_CHUNK):
        P, r = posterior.sample_arrays(min(MC_CHUNK, n - start), rng)
        V, Q = evaluate_batch(P, r, policy, posterior.gamma, posterior.terminal)
        Vs.append(V)
        Qs.append(Q)
    V = np.concatenate(Vs)
    Q = np.concatenate(Qs)
    vv, se_v = _jackknife_var(V)
    vq, se_q = _jackknife_var(Q)
    return VarianceReport(vv, vq, "monte_carlo", n, se_v, se_q, V.mean(axis=0), Q.mean(axis=0))


@dataclass(frozen=True)
class IndependenceReport:
    cov: np.ndarray  # (S, A, S): Cov[p(s'|s,a), V(s')]
    se: np.ndarray
    max_abs_cov: float
    max_z: float
    n_samples: int


def check_independence(posterior, policy: np.ndarray, n: int, rng: np.random.Generator) -> IndependenceReport:
    """Sampled covariance between each transition entry p(s'|s,a) and the next-state value V(s').

    Moments are streamed in chunks so memory stays bounded for large ``n``.
    """
    policy = check_policy(policy, posterior.num_states, posterior.num_actions)
    S, A = posterior.num_states, posterior.num_actions
    keys = ("x", "y", "xy", "xx", "yy", "xxy", "xyy", "xxyy")
    m = {k: np.zeros((S, A, S)) for k in keys}
    for start in range(0, n, MC_CHUNK):
        P, r = posterior.sample_arrays(min(MC_CHUNK, n - start), rng)
        V, _ = evaluate_batch(P, r, policy, posterior.gamma, posterior.terminal)
        x = P
        y = np.broadcast_to(V[:, None, None, :], P.shape)
        xy = x * y
        m["x"] += x.sum(0)
        m["y"] += y.sum(0)
        m["xy"] += xy.sum(0)
        m["xx"] += (x * x).sum(0)
        m["yy"] += (y * y).sum(0)
        m["xxy"] += (xy * x).sum(0)
        m["xyy"] += (xy * y).sum(0)
        m["xxyy"] += (xy * xy).sum(0)
    e = {k: v / n for k, v in m.items()}
    a, b = e["x"], e["y"]
    cov = e["xy"] - a * b
    # second moment of (x - a)(y - b)
    z2 = (
        e["xxyy"] - 2 * b * e["xxy"] - 2 * a * e["xyy"] + b * b * e["xx"] + a * a * e["yy"]
        + 4 * a * b * e["xy"] - 3 * a * a * b * b
    )
    se = np.sqrt(np.maximum(z2 - cov * cov, 0.0) / n)
    # floating-point noise where an entry is constant across samples
    scale = np.sqrt(np.maximum(e["xx"] - a * a, 0.0) * np.maximum(e["yy"] - b * b, 0.0))
    cov = np.where(scale <= 1e-12, 0.0, cov)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(cov) / se, 0.0)
    return IndependenceReport(cov, se, float(np.abs(cov).max()), float(z.max()), n)


def independence_residual(posterior: FiniteSupportPosterior, policy: np.ndarray) -> float:
    """max_s |Var[V(s)] - g^2 (E[(P_pi V)(s)^2] - E[(P_pi V)(s)]^2)| for known-reward posteriors."""
    members, w = posterior.expand()
    policy = check_policy(policy, posterior.num_states, posterior.num_actions)
    P = np.stack([m.transitions for m in members])
    r = np.stack([m.rewards for m in members])
    if np.ptp(r, axis=0).max() > 0:
        raise ValueError("identity assumes rewards known (shared by all members)")
    V, _ = evaluate_batch(P, r, policy, posterior.gamma, posterior.terminal)
    nxt = np.einsum("sa,nsat,nt->ns", policy, P, V)
    g2 = posterior.gamma**2
    rhs = g2 * (np.einsum("n,ns->s", w, nxt**2) - np.einsum("n,ns->s", w, nxt) ** 2)
    _, lhs = _weighted_var(w, V)
    rhs[posterior.terminal] = 0.0
    return float(np.max(np.abs(lhs - rhs)))
