import numpy as np
import pytest

from ube_tabular.envs import toy_mrp
from ube_tabular.instances import layered_posterior
from ube_tabular.mdp import TabularMdp
from ube_tabular.posterior import (
    Candidate,
    DirichletNormalPosterior,
    FiniteSupportPosterior,
    SupportTooLargeError,
    sample_dirichlet_rows,
)


def prior(S=4, A=2, **kw):
    return DirichletNormalPosterior.new_prior(S, A, 0.9, np.eye(S)[0], **kw)


class TestDirichletNormal:
    def test_default_concentration(self):
        post = prior(S=4)
        assert np.all(post.alpha == 0.5)

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            prior(alpha0=0.0)

    def test_prior_mean(self):
        m = prior().posterior_mean()
        np.testing.assert_allclose(m.transitions, 0.25)
        assert np.all(m.rewards == 0)
        np.testing.assert_allclose(prior().reward_variances(), 1.0)

    def test_single_observation(self):
        post = prior()
        post.observe(0, 1, 2, 2.0)
        assert post.transition_mean()[0, 1, 2] == pytest.approx(1.5 / 3.0)
        assert post.reward_mean()[0, 1] == pytest.approx(1.0)
        assert post.reward_variance(0, 1) == pytest.approx(0.5)

    def test_repeat_equals_individual(self):
        a, b = prior(), prior()
        a.observe(1, 0, 3, 0.7, repeat=10)
        for _ in range(10):
            b.observe(1, 0, 3, 0.7)
        np.testing.assert_array_equal(a.alpha, b.alpha)
        np.testing.assert_allclose(a.reward_sum, b.reward_sum)
        np.testing.assert_array_equal(a.count, b.count)

    def test_observe_is_local(self):
        post = prior()
        before = post.to_dict()
        post.observe(2, 1, 0, 1.0)
        after = post.to_dict()
        alpha0, alpha1 = np.array(before["alpha"]), np.array(after["alpha"])
        changed = np.argwhere(alpha0 != alpha1)
        assert changed.tolist() == [[2, 1, 0]]

    def test_contraction(self):
        post = prior()
        means, variances = [], []
        for _ in range(5):
            post.observe(0, 0, 1, 0.3)
            means.append(post.transition_mean()[0, 0, 1])
            variances.append(post.reward_variance(0, 0))
        assert np.all(np.diff(means) > 0) and np.all(np.diff(variances) < 0)

    def test_terminal_not_learned(self):
        post = prior(terminal=np.array([False, False, False, True]))
        post.observe(3, 0, 1, 5.0)
        assert post.count[3, 0] == 0
        P, r = post.sample_arrays(3, np.random.default_rng(0))
        assert np.all(P[:, 3, :, 3] == 1.0) and np.all(r[:, 3] == 0)

    def test_noise_knob(self):
        post = prior(noise_var=4.0)
        post.observe(0, 0, 0, 2.0)
        assert post.reward_variance(0, 0) == pytest.approx(1 / (1 + 1 / 4))

    def test_rows_on_simplex(self, rng):
        P, _ = prior(S=6, alpha0=0.05).sample_arrays(2000, rng)
        assert np.max(np.abs(P.sum(-1) - 1)) <= 1e-12 and np.all(P >= 0)

    def test_concentrated_samples(self, rng):
        post = prior()
        post.observe(0, 0, 2, 0.0, repeat=1_000_000)
        P, _ = post.sample_arrays(100, rng)
        assert np.all(P[:, 0, 0, 2] >= 0.999)

    def test_sample_mean_matches_posterior_mean(self, rng):
        post = prior()
        post.observe(0, 0, 2, 1.0, repeat=3)
        P, r = post.sample_arrays(100_000, rng)
        x = P[:, 0, 0, 2]
        assert abs(x.mean() - post.transition_mean()[0, 0, 2]) <= 3 * x.std() / np.sqrt(x.size)
        y = r[:, 0, 0]
        assert abs(y.mean() - post.reward_mean()[0, 0]) <= 3 * y.std() / np.sqrt(y.size)

    def test_sampling_deterministic(self):
        a = prior().sample_arrays(3, np.random.default_rng(5))
        b = prior().sample_arrays(3, np.random.default_rng(5))
        np.testing.assert_array_equal(a[0], b[0])

    def test_sampled_members_valid(self, rng):
        for m in prior().sample_mdps(5, rng):
            assert isinstance(m, TabularMdp)

    def test_tiny_alpha_never_degenerate(self, rng):
        rows = sample_dirichlet_rows(np.full((1000, 5), 1e-6), rng)
        assert np.all(np.isfinite(rows)) and np.allclose(rows.sum(-1), 1.0)

    def test_json_round_trip(self, tmp_path):
        post = prior()
        post.observe(1, 1, 2, -0.5, repeat=3)
        post.save(tmp_path / "p.json")
        back = DirichletNormalPosterior.load(tmp_path / "p.json")
        np.testing.assert_array_equal(back.alpha, post.alpha)
        np.testing.assert_array_equal(back.count, post.count)
        assert back.reward_variance(1, 1) == post.reward_variance(1, 1)


class TestFiniteSupport:
    def test_toy_members(self):
        members, w = toy_mrp().expand()
        assert len(members) == 4
        np.testing.assert_allclose(w, 0.25)

    def test_toy_mean(self):
        assert toy_mrp().posterior_mean().transitions[0, 0, 2] == pytest.approx(0.65)

    def test_product_mean_equals_joint_mean(self, rng):
        post = layered_posterior(rng)
        members, w = post.expand()
        joint = FiniteSupportPosterior(members, w)
        np.testing.assert_allclose(post.posterior_mean().transitions, joint.posterior_mean().transitions, atol=1e-14)

    def test_bad_weights(self, rng):
        post = layered_posterior(rng)
        members, _ = post.expand()
        with pytest.raises(ValueError):
            FiniteSupportPosterior(members, np.full(len(members), 0.9))

    def test_support_guard(self):
        base = toy_mrp().base
        row = np.zeros(5)
        row[4] = 1.0
        cands = [Candidate(row, 0.5), Candidate(row, 0.5)]
        big = FiniteSupportPosterior.product(base, {(0, 0): cands, (2, 0): cands})
        with pytest.raises(SupportTooLargeError):
            big.expand(max_support=3)

    def test_no_uncertainty_on_terminal(self):
        base = toy_mrp().base
        with pytest.raises(ValueError):
            FiniteSupportPosterior.product(base, {(4, 0): [Candidate(np.eye(5)[4], 1.0)]})

    def test_single_member_has_no_variance(self, rng):
        post = FiniteSupportPosterior([layered_posterior(rng).base])
        assert np.all(post.reward_variances() == 0)

    def test_reward_candidates(self):
        base = toy_mrp().base
        post = FiniteSupportPosterior.product(
            base, {(1, 0): [Candidate(np.eye(5)[4], 0.5, reward=0.0), Candidate(np.eye(5)[4], 0.5, reward=2.0)]}
        )
        assert post.reward_variance(1, 0) == pytest.approx(1.0)
        assert post.posterior_mean().rewards[1, 0] == pytest.approx(1.0)

    def test_product_sampling_frequencies(self, rng):
        P, _ = toy_mrp().sample_arrays(40_000, rng)
        hi = P[:, 0, 0, 2] == 0.7
        assert abs(hi.mean() - 0.5) <= 3 * 0.5 / np.sqrt(hi.size)

    def test_fixture_round_trip(self):
        post = toy_mrp()
        back = FiniteSupportPosterior.from_dict(post.to_dict())
        np.testing.assert_allclose(back.posterior_mean().transitions, post.posterior_mean().transitions)
