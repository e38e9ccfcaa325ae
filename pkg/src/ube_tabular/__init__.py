"""Exact posterior value variance for tabular MDPs via uncertainty Bellman equations."""
from .agents import AgentConfig, Agent, psrl_policy, qvariance_pipeline, ucb_policy_iteration
from .envs import EnvSpec, EpisodeLog, deep_sea, n_room, simulate_episode, toy_mrp
from .harness import EnvConfig, ExperimentConfig, RegretCurve, export, learning_time, run_experiment
from .mdp import (
    ConvergenceError,
    NonEpisodicError,
    TabularMdp,
    mean_of_ensemble,
    rollout,
    solve_values,
    value_iteration,
)
from .oracle import VarianceReport, check_independence, enumerate_variance, mc_variance
from .posterior import Candidate, DirichletNormalPosterior, FiniteSupportPosterior, SupportTooLargeError
from .ube import (
    UncertaintyRewards,
    UValues,
    add_reward_uncertainty,
    clip,
    gap,
    solve_ensemble,
    solve_mdps,
    solve_ube,
    u_ensemble_var,
    u_exact,
    u_pombu,
)

__version__ = "0.1.0"
