"""Experiment orchestration: episode loop, regret metrics and result export."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .agents import Agent, AgentConfig, normalize_name
from .envs import EnvSpec, make_env
from .mdp import TabularMdp, _sample_index, finite_horizon_optimal_values
from .posterior import DirichletNormalPosterior

CSV_COLUMNS = (
    "run_id",
    "env",
    "agent",
    "seed",
    "episode",
    "ret",
    "regret",
    "cum_regret",
    "reached_goal",
    "learning_time",
)
TAG_PLAN, TAG_ENV = 0, 1
LEARNING_FRACTION = 10  # goal found in at least 1/10 of episodes so far


@dataclass(frozen=True)
class EnvConfig:
    kind: str = "deep_sea"
    size: int | None = 10
    rooms: int | None = None
    room_size: int | None = None
    horizon: int | None = None
    repeat: int | None = None
    source: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_name(self.kind))

    def build(self) -> tuple[TabularMdp, EnvSpec]:
        mdp, spec = make_env(
            self.kind,
            size=self.size,
            rooms=self.rooms,
            room_size=self.room_size,
            horizon=self.horizon,
            repeat=self.repeat,
            source=self.source,
        )
        changes = {}
        if self.horizon is not None and self.kind != "custom_json":
            changes["horizon"] = self.horizon
        if self.repeat is not None:
            changes["repeat"] = self.repeat
        return mdp, replace(spec, **changes)


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    episodes: int = 1000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    master_seed: int = 0
    workers: int = 1
    noise_var: float = 1.0
    alpha0: float | None = None
    replan_each_step: bool = False
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be non-empty and distinct")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")

    @property
    def run_id(self) -> str:
        e, a = self.env, self.agent
        size = e.size if e.kind == "deep_sea" else (e.rooms or 7)
        return f"{e.kind}-{size}-{a.estimator}-l{a.risk_gain:g}-n{a.ensemble_size}-u{a.u_min:g}"

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["seeds"] = list(self.seeds)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        if "env" in doc:
            doc["env"] = EnvConfig(**doc["env"])
        if "agent" in doc:
            doc["agent"] = AgentConfig.from_dict(doc["agent"])
        return cls(**doc)


@dataclass
class RegretCurve:
    run_id: str
    env: str
    agent: str
    seed: int
    returns: list[float]
    regrets: list[float]
    reached_goal: list[bool]

    @property
    def cum_regret(self) -> list[float]:
        return np.cumsum(self.regrets).tolist()

    @property
    def total_regret(self) -> float:
        return float(np.sum(self.regrets))

    @property
    def learning_time(self) -> int | None:
        return learning_time(self.reached_goal)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "env": self.env,
            "agent": self.agent,
            "seed": self.seed,
            "returns": self.returns,
            "regrets": self.regrets,
            "reached_goal": self.reached_goal,
            "learning_time": self.learning_time,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RegretCurve":
        return cls(
            doc["run_id"], doc["env"], doc["agent"], int(doc["seed"]),
            [float(x) for x in doc["returns"]],
            [float(x) for x in doc["regrets"]],
            [bool(x) for x in doc["reached_goal"]],
        )


def learning_time(reached) -> int | None:
    """First 1-based episode t with at least t/10 goal episodes among 1..t, else None."""
    if isinstance(reached, RegretCurve):
        reached = reached.reached_goal
    hits = np.cumsum(np.asarray(reached, dtype=int))
    t = np.arange(1, hits.size + 1)
    ok = np.flatnonzero(LEARNING_FRACTION * hits >= t)
    return int(ok[0] + 1) if ok.size else None


def episode_rng(master: int, seed: int, episode: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([master, seed, episode, tag])


def new_posterior(config: ExperimentConfig, mdp: TabularMdp) -> DirichletNormalPosterior:
    return DirichletNormalPosterior.new_prior(
        mdp.num_states,
        mdp.num_actions,
        config.agent.gamma,
        mdp.initial_dist,
        mdp.terminal,
        alpha0=config.alpha0,
        noise_var=config.noise_var,
    )


def _play_episode(agent, posterior, mdp, spec, config, seed, episode):
    """Returns (transitions, return). Posterior is updated in place."""
    plan_rng = episode_rng(config.master_seed, seed, episode, TAG_PLAN)
    env_rng = episode_rng(config.master_seed, seed, episode, TAG_ENV)
    policy = agent.plan(posterior, plan_rng)
    s = spec.start_state
    transitions = []
    total = 0.0
    for _ in range(spec.horizon):
        if mdp.terminal[s]:
            break
        a = _sample_index(env_rng, policy[s])
        s_next = _sample_index(env_rng, mdp.transitions[s, a])
        rew = float(mdp.rewards[s, a])
        transitions.append((s, a, rew, s_next))
        total += rew
        if config.replan_each_step:
            posterior.observe(s, a, s_next, rew, spec.repeat)
            policy = agent.plan(posterior, plan_rng)
        s = s_next
    if not config.replan_each_step:
        posterior.observe_many(transitions, spec.repeat)
    return transitions, total


def run_seed(config: ExperimentConfig, seed: int) -> RegretCurve:
    mdp, spec = config.env.build()
    optimum = float(finite_horizon_optimal_values(mdp, spec.horizon)[spec.start_state])
    agent = Agent(config.agent, mdp)
    posterior = new_posterior(config, mdp)
    returns, regrets, reached = [], [], []
    for ep in range(config.episodes):
        transitions, ret = _play_episode(agent, posterior, mdp, spec, config, seed, ep)
        returns.append(ret)
        regrets.append(optimum - ret)
        reached.append(spec.reached_goal(transitions))
    return RegretCurve(config.run_id, spec.kind, config.agent.estimator, seed, returns, regrets, reached)


def _run_seed_args(args):
    return run_seed(*args)


def run_experiment(config: ExperimentConfig) -> list[RegretCurve]:
    """One curve per seed, in seed order; results do not depend on ``workers``."""
    jobs = [(config, s) for s in config.seeds]
    if config.workers == 1 or len(jobs) == 1:
        return [run_seed(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(config.workers, len(jobs))) as pool:
        return list(pool.map(_run_seed_args, jobs))


def curves_to_csv(curves: list[RegretCurve]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in curves:
        lt = c.learning_time
        for ep, (ret, reg, cum, hit) in enumerate(zip(c.returns, c.regrets, c.cum_regret, c.reached_goal), 1):
            writer.writerow([c.run_id, c.env, c.agent, c.seed, ep, repr(ret), repr(reg), repr(cum), int(hit), "" if lt is None else lt])
    return buf.getvalue()


def summarize(curves: list[RegretCurve]) -> dict:
    totals = np.array([c.total_regret for c in curves])
    n = totals.size
    return {
        "mean_total_regret": float(totals.mean()),
        "se_total_regret": float(totals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        "learning_times": [c.learning_time for c in curves],
    }


def export(curves: list[RegretCurve], path, format: str = "csv", config: ExperimentConfig | None = None) -> None:
    path = Path(path)
    if format == "csv":
        path.write_text(curves_to_csv(curves))
    elif format == "json":
        doc = {
            "config": None if config is None else config.to_dict(),
            "summary": summarize(curves),
            "curves": [c.to_dict() for c in curves],
        }
        path.write_text(json.dumps(doc, indent=1))
    else:
        raise ValueError(f"unknown export format {format!r}")


def load_json(path) -> tuple[dict | None, list[RegretCurve]]:
    doc = json.loads(Path(path).read_text())
    return doc.get("config"), [RegretCurve.from_dict(c) for c in doc["curves"]]
