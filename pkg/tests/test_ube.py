import itertools

import numpy as np
import pytest

from conftest import naive_values
from ube_tabular import ube
from ube_tabular.envs import toy_mrp
from ube_tabular.instances import layered_posterior, random_policy
from ube_tabular.posterior import DirichletNormalPosterior, FiniteSupportPosterior


def ensemble_of(post, policy):
    members, w = post.expand()
    return ube.solve_mdps(members, policy, w)


def brute_force(post, policy):
    """Loop-level recomputation of w, u and Var[Q] from the joint support."""
    members, w = post.expand()
    S, A = post.num_states, post.num_actions
    qs = [naive_values(m.transitions, m.rewards, policy, m.gamma, m.terminal)[1] for m in members]
    qbar = sum(wi * q for wi, q in zip(w, qs))
    pbar = sum(wi * m.transitions for wi, m in zip(w, members))
    out_w = np.zeros((S, A))
    out_u = np.zeros((S, A))
    for s, a in itertools.product(range(S), range(A)):
        if post.terminal[s]:
            continue
        pairs = list(itertools.product(range(S), range(A)))

        def mean_var(p, f):
            m1 = sum(p[t] * policy[t, b] * f[t, b] for t, b in pairs)
            m2 = sum(p[t] * policy[t, b] * f[t, b] ** 2 for t, b in pairs)
            return m1, m2 - m1 * m1

        backups = [mean_var(m.transitions[s, a], qbar)[0] for m in members]
        mb = sum(wi * b for wi, b in zip(w, backups))
        out_w[s, a] = sum(wi * (b - mb) ** 2 for wi, b in zip(w, backups))
        total = mean_var(pbar[s, a], qbar)[1]
        aleatoric = sum(wi * mean_var(m.transitions[s, a], q)[1] for wi, m, q in zip(w, members, qs))
        out_u[s, a] = total - aleatoric
    var_q = sum(wi * (q - qbar) ** 2 for wi, q in zip(w, qs))
    return out_w, out_u, var_q


class TestToyTable:
    @pytest.fixture
    def toy(self):
        post = toy_mrp()
        policy = np.ones((5, 1))
        return post, policy, ensemble_of(post, policy)

    def test_local_rewards(self, toy):
        _, _, ens = toy
        u = ube.u_exact(ens).values[:, 0]
        w = ube.u_pombu(ens).values[:, 0]
        assert u[0] == pytest.approx(-0.6, abs=0.05) and u[2] == pytest.approx(25.0, abs=0.05)
        assert w[0] == pytest.approx(5.0, abs=0.05) and w[2] == pytest.approx(25.0, abs=0.05)
        assert u[1] == u[3] == 0.0 and w[1] == w[3] == 0.0

    def test_solutions(self, toy):
        post, policy, ens = toy
        pbar = post.posterior_mean()
        U = ube.solve_ube(pbar, policy, ube.u_exact(ens)).values[:, 0]
        W = ube.solve_ube(pbar, policy, ube.u_pombu(ens)).values[:, 0]
        assert U[0] == pytest.approx(15.7, abs=0.05) and U[2] == pytest.approx(25.0, abs=0.05)
        assert W[0] == pytest.approx(21.3, abs=0.05) and W[2] == pytest.approx(25.0, abs=0.05)

    def test_gap(self, toy):
        _, _, ens = toy
        g = ube.gap(ens)[:, 0]
        assert g[0] == pytest.approx(5.6, abs=0.05) and abs(g[2]) < 1e-12

    def test_frozen_derived_values(self, toy):
        # by hand: delta has variance 0.0025 and the two successors of s0 differ in mean value
        # by E[V(s2)] - V(s1) = 0.45 * 100 - 0.1 = 44.9
        _, _, ens = toy
        assert ube.u_pombu(ens).values[0, 0] == pytest.approx(0.0025 * 44.9**2, abs=1e-10)
        assert ube.u_exact(ens).values[2, 0] == pytest.approx(25.0, abs=1e-10)

    def test_variants_agree(self, toy):
        _, _, ens = toy
        vals = [ube.u_exact(ens, k).values for k in (1, 2, 3)]
        np.testing.assert_allclose(vals[0], vals[2], atol=1e-10)
        np.testing.assert_allclose(vals[1], vals[2], atol=1e-10)


class TestEstimators:
    def test_identical_members(self, rng):
        post = layered_posterior(rng)
        m = post.base
        pi = random_policy(m.num_states, 2, rng)
        ens = ube.solve_mdps([m, m, m], pi)
        for est in (ube.u_pombu(ens), ube.u_ensemble_var(ens), *(ube.u_exact(ens, k) for k in (1, 2, 3))):
            np.testing.assert_allclose(est.values, 0.0, atol=1e-12)
        np.testing.assert_allclose(ube.gap(ens), 0.0, atol=1e-12)

    def test_exact_needs_two(self, rng):
        post = layered_posterior(rng)
        ens = ube.solve_mdps([post.base], random_policy(post.num_states, 2, rng))
        with pytest.raises(ValueError):
            ube.u_exact(ens)
        with pytest.raises(ValueError):
            ube.u_exact(ens, variant=4)

    def test_ensemble_var_hand(self):
        q = np.stack([np.zeros((1, 1)), np.full((1, 1), 2.0)])
        assert ube.u_ensemble_var(q).values[0, 0] == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_against_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        post = layered_posterior(rng, layers=3, width=2)
        pi = random_policy(post.num_states, 2, rng)
        ens = ensemble_of(post, pi)
        w, u, var_q = brute_force(post, pi)
        np.testing.assert_allclose(ube.u_pombu(ens).values, w, atol=1e-10)
        np.testing.assert_allclose(ube.u_exact(ens, 1).values, u, atol=1e-10)
        U = ube.solve_ube(post.posterior_mean(), pi, ube.u_exact(ens)).values
        np.testing.assert_allclose(U, var_q, atol=1e-8)

    def test_exact_variants_differ_off_assumptions(self):
        # a cyclic posterior breaks the independence that equates variant 3 with 1 and 2
        from ube_tabular.instances import cyclic_posterior

        rng = np.random.default_rng(0)
        post = cyclic_posterior(rng)
        ens = ensemble_of(post, random_policy(3, 2, rng))
        v1, v2, v3 = (ube.u_exact(ens, k).values for k in (1, 2, 3))
        np.testing.assert_allclose(v1, v2, atol=1e-10)
        assert np.max(np.abs(v1 - v3)) > 1e-6


class TestRewardTermAndClip:
    def test_known_rewards_unchanged(self):
        u = ube.UncertaintyRewards(np.ones((2, 2)), "pombu")
        assert ube.add_reward_uncertainty(u, None) is u

    def test_prior_and_counts(self):
        post = DirichletNormalPosterior.new_prior(2, 2, 0.9, np.array([1.0, 0.0]))
        post.observe(0, 1, 1, 0.0, repeat=3)
        u = ube.UncertaintyRewards(np.zeros((2, 2)), "pombu")
        out = ube.add_reward_uncertainty(u, post).values
        assert out[0, 0] == pytest.approx(1.0) and out[0, 1] == pytest.approx(0.25)

    def test_clip(self):
        u = ube.UncertaintyRewards(np.array([[-0.6], [3.0]]), "exact_ube_3")
        assert ube.clip(u, -np.inf).values.tolist() == [[-0.6], [3.0]]
        assert ube.clip(u, 0.0).values[0, 0] == 0.0
        clipped = ube.clip(u, -0.05)
        assert clipped.values[0, 0] == -0.05 and clipped.u_min == -0.05


class TestSolveUbe:
    def test_zero(self, rng):
        post = layered_posterior(rng)
        pi = random_policy(post.num_states, 2, rng)
        assert np.all(ube.solve_ube(post.posterior_mean(), pi, np.zeros((post.num_states, 2))).values == 0)

    def test_satisfies_linear_system(self, rng):
        post = layered_posterior(rng, gamma=0.9)
        pbar = post.posterior_mean()
        pi = random_policy(post.num_states, 2, rng)
        u = rng.normal(size=(post.num_states, 2))
        U = ube.solve_ube(pbar, pi, u).values
        live = ~post.terminal
        rhs = 0.81 * (u + pbar.transitions @ np.sum(pi * U, axis=1))
        np.testing.assert_allclose(U[live], rhs[live], atol=1e-10)
        assert np.all(U[post.terminal] == 0)

    def test_raw_arrays_need_gamma(self, rng):
        post = layered_posterior(rng)
        with pytest.raises(ValueError):
            ube.solve_ube(post.base.transitions, np.full((post.num_states, 2), 0.5), np.zeros((post.num_states, 2)))

    def test_nonfinite_rewards(self, rng):
        post = layered_posterior(rng)
        u = np.full((post.num_states, 2), np.nan)
        with pytest.raises(ValueError):
            ube.solve_ube(post.posterior_mean(), np.full((post.num_states, 2), 0.5), u)

    def test_single_member_zero(self, rng):
        post = FiniteSupportPosterior([layered_posterior(rng).base])
        pi = random_policy(post.num_states, 2, rng)
        ens = ensemble_of(post, pi)
        np.testing.assert_allclose(ube.u_pombu(ens).values, 0.0)
