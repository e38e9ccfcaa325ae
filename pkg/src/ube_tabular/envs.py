"""Benchmark environments as true tabular MDPs, plus episode simulation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .mdp import TabularMdp, _sample_index
from .posterior import Candidate, FiniteSupportPosterior

DEEP_SEA_COST = 0.01
N_ROOM_HORIZON = 40
N_ROOM_SUCCESS = 0.95

LEFT, RIGHT = 0, 1
UP, DOWN, WEST, EAST = 0, 1, 2, 3
_MOVES = {UP: (-1, 0), DOWN: (1, 0), WEST: (0, -1), EAST: (0, 1)}


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    horizon: int
    start_state: int
    repeat: int = 1
    size: int | None = None
    rooms: int | None = None
    room_size: int | None = None
    goal_pairs: frozenset = field(default_factory=frozenset)
    goal_states: frozenset = field(default_factory=frozenset)
    source: str | None = None

    def reached_goal(self, transitions) -> bool:
        return any((s, a) in self.goal_pairs or s_next in self.goal_states for s, a, _, s_next in transitions)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "horizon": self.horizon,
            "start_state": self.start_state,
            "repeat": self.repeat,
            "size": self.size,
            "rooms": self.rooms,
            "room_size": self.room_size,
            "source": self.source,
        }


@dataclass
class EpisodeLog:
    transitions: list[tuple[int, int, float, int]]
    ret: float
    reached_goal: bool

    @property
    def steps(self) -> int:
        return len(self.transitions)


def deep_sea(L: int, repeat: int | None = None) -> tuple[TabularMdp, EnvSpec]:
    """Deterministic L x L DeepSea with an extra absorbing terminal state.

    State ``row * L + col``; the terminal state has index ``L * L``. Every action
    descends one row; going right costs ``0.01 / L`` and going right from the
    bottom-right cell pays 1.
    """
    if L < 2:
        raise ValueError("DeepSea needs L >= 2")
    S = L * L + 1
    term = S - 1
    P = np.zeros((S, 2, S))
    r = np.zeros((S, 2))
    for row in range(L):
        for col in range(L):
            s = row * L + col
            for a, step in ((LEFT, -1), (RIGHT, 1)):
                ncol = min(max(col + step, 0), L - 1)
                nxt = term if row == L - 1 else (row + 1) * L + ncol
                P[s, a, nxt] = 1.0
            r[s, RIGHT] = -DEEP_SEA_COST / L
    r[L * L - 1, RIGHT] += 1.0
    P[term, :, term] = 1.0
    terminal = np.zeros(S, dtype=bool)
    terminal[term] = True
    mdp = TabularMdp(P, r, 0.99, np.eye(S)[0], terminal)
    spec = EnvSpec(
        kind="deep_sea",
        horizon=L,
        start_state=0,
        repeat=L if repeat is None else repeat,
        size=L,
        goal_pairs=frozenset({(L * L - 1, RIGHT)}),
    )
    return mdp, spec


def n_room_layout(rooms: int = 7, room_size: int = 5) -> np.ndarray:
    """Boolean grid of walkable cells: rooms in a row joined by mid-wall doors."""
    if rooms < 3 or rooms % 2 == 0 or room_size < 3 or room_size % 2 == 0:
        raise ValueError("n_room needs an odd number (>= 3) of odd-sized (>= 3) rooms")
    width = rooms * room_size + rooms - 1
    grid = np.ones((room_size, width), dtype=bool)
    for k in range(1, rooms):
        col = k * (room_size + 1) - 1
        grid[:, col] = False
        grid[room_size // 2, col] = True
    return grid


def n_room(
    rooms: int = 7,
    room_size: int = 5,
    success_prob: float = N_ROOM_SUCCESS,
    horizon: int = N_ROOM_HORIZON,
) -> tuple[TabularMdp, EnvSpec]:
    """Chain of square rooms with slippery moves.

    The intended move succeeds with ``success_prob``; otherwise one of the
    three other directions is taken uniformly. Moves into walls stay put.
    Rewards (per step spent in the cell): start 0.01, left-most room centre
    0.1, right-most room centre 1 (absorbing).
    """
    grid = n_room_layout(rooms, room_size)
    cells = [tuple(c) for c in np.argwhere(grid)]
    index = {c: i for i, c in enumerate(cells)}
    S = len(cells)
    mid = room_size // 2

    def centre(room: int) -> int:
        return index[(mid, room * (room_size + 1) + mid)]

    start, small, goal = centre(rooms // 2), centre(0), centre(rooms - 1)
    P = np.zeros((S, 4, S))
    for i, (y, x) in enumerate(cells):
        dest = {}
        for d, (dy, dx) in _MOVES.items():
            nxt = (y + dy, x + dx)
            dest[d] = index.get(nxt, i)
        for a in _MOVES:
            for d in _MOVES:
                P[i, a, dest[d]] += success_prob if d == a else (1.0 - success_prob) / 3.0
    P[goal] = 0.0
    P[goal, :, goal] = 1.0
    r = np.zeros((S, 4))
    r[start] = 0.01
    r[small] = 0.1
    r[goal] = 1.0
    mdp = TabularMdp(P, r, 0.99, np.eye(S)[start])
    spec = EnvSpec(
        kind="n_room",
        horizon=horizon,
        start_state=start,
        repeat=1,
        rooms=rooms,
        room_size=room_size,
        goal_states=frozenset({goal}),
    )
    return mdp, spec


def custom_json(path, horizon: int, repeat: int = 1) -> tuple[TabularMdp, EnvSpec]:
    mdp = TabularMdp.load(path)
    start = int(np.argmax(mdp.initial_dist))
    return mdp, EnvSpec(kind="custom_json", horizon=horizon, start_state=start, repeat=repeat, source=str(path))


TOY_DELTAS = (0.7, 0.6)
TOY_BETAS = (0.5, 0.4)


def toy_mrp_base() -> TabularMdp:
    """Single-action MRP: s0 -> {s2 w.p. delta, s1}, s2 -> {s3 w.p. beta, s}, s1, s3 -> s.

    States 0..3 are s0..s3 and state 4 is the absorbing terminal ``s``. The
    base rows for s0 and s2 hold the posterior means; rewards are r(s1) = 0.1
    and r(s3) = 100, zero elsewhere.
    """
    S = 5
    P = np.zeros((S, 1, S))
    P[0, 0, [2, 1]] = [0.65, 0.35]
    P[1, 0, 4] = 1.0
    P[2, 0, [3, 4]] = [0.45, 0.55]
    P[3, 0, 4] = 1.0
    P[4, 0, 4] = 1.0
    r = np.array([[0.0], [0.1], [0.0], [100.0], [0.0]])
    terminal = np.array([False, False, False, False, True])
    return TabularMdp(P, r, 1.0, np.eye(S)[0], terminal)


def toy_mrp() -> FiniteSupportPosterior:
    """The four equally likely MRPs obtained from delta in {0.7, 0.6} and beta in {0.5, 0.4}."""
    base = toy_mrp_base()

    def row(**probs):
        x = np.zeros(base.num_states)
        for k, v in probs.items():
            x[int(k[1:])] = v
        return x

    return FiniteSupportPosterior.product(
        base,
        {
            (0, 0): [Candidate(row(s2=d, s1=1.0 - d), 0.5) for d in TOY_DELTAS],
            (2, 0): [Candidate(row(s3=b, s4=1.0 - b), 0.5) for b in TOY_BETAS],
        },
    )


def load_toy_mrp_fixture() -> FiniteSupportPosterior:
    text = resources.files("ube_tabular").joinpath("data/toy_mrp.json").read_text()
    return FiniteSupportPosterior.from_dict(json.loads(text))


def write_toy_mrp_fixture(path) -> None:
    Path(path).write_text(json.dumps(toy_mrp().to_dict(), indent=1))


def make_env(kind: str, size: int | None = None, **kwargs) -> tuple[TabularMdp, EnvSpec]:
    kind = kind.replace("-", "_")
    if kind == "deep_sea":
        return deep_sea(size if size is not None else 10, repeat=kwargs.get("repeat"))
    if kind in ("n_room", "7_room"):
        return n_room(kwargs.get("rooms") or 7, kwargs.get("room_size") or 5)
    if kind == "custom_json":
        return custom_json(kwargs["source"], kwargs["horizon"], kwargs.get("repeat") or 1)
    raise ValueError(f"unknown environment kind {kind!r}")


def simulate_episode(
    true_mdp: TabularMdp, spec: EnvSpec, policy: np.ndarray, rng: np.random.Generator
) -> EpisodeLog:
    s = spec.start_state
    transitions = []
    total = 0.0
    for _ in range(spec.horizon):
        if true_mdp.terminal[s]:
            break
        a = _sample_index(rng, policy[s])
        s_next = _sample_index(rng, true_mdp.transitions[s, a])
        r = float(true_mdp.rewards[s, a])
        transitions.append((s, a, r, s_next))
        total += r
        s = s_next
    return EpisodeLog(transitions, total, spec.reached_goal(transitions))
