"""DQN search over syscall traces.

The agent walks a cursor cyclically over the trace positions and, at each step,
picks the syscall that replaces the call under the cursor. The reward of a
replacement is the mean per-position log-ratio of new to old coverage. An
episode ends once the cumulative reward rises above ``t1`` (the trace is
archived), falls below ``t2``, or the step cap is hit.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .oracle import CoverageReport, Oracle
from .qnet import QNetwork, Transition, train_step
from .trace import DEFAULT_TRACE_LEN, Trace, encode, pack_corpus, random_trace, replace, write_corpus
from .universe import SyscallUniverse

log = logging.getLogger(__name__)

# Corpus header timestamp for training archives. Wall-clock time goes to the
# summary instead so that archives stay byte-identical across seeded runs.
ARCHIVE_EPOCH = "1970-01-01T00:00:00+00:00"


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.9
    learning_rate: float = 0.01
    epsilon_start: float = 0.95
    epsilon_end: float = 0.0
    epsilon_decay_steps: int = 10_000
    replay_capacity: int = 10_000
    batch_size: int = 64
    target_sync_interval: int = 200
    hidden: tuple[int, ...] = (512, 512)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if min(self.replay_capacity, self.batch_size, self.target_sync_interval) < 1:
            raise ValueError("replay capacity, batch size and sync interval must be >= 1")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size cannot exceed replay_capacity")
        if self.epsilon_decay_steps < 0:
            raise ValueError("epsilon_decay_steps must be >= 0")


@dataclass(frozen=True)
class EpisodeConfig:
    t1: float = 10.0
    t2: float = -5.0
    max_steps_per_episode: int = 200
    episodes: int = 480
    trace_len: int = DEFAULT_TRACE_LEN
    # keep the previous trace when a replacement lowers coverage
    revert_decreasing: bool = False

    def __post_init__(self):
        if not self.t2 < 0.0 < self.t1:
            raise ValueError("thresholds must satisfy t2 < 0 < t1")
        if self.max_steps_per_episode < 1 or self.trace_len < 1 or self.episodes < 0:
            raise ValueError("invalid episode sizes")


def epsilon_at(step: int, config: AgentConfig) -> float:
    """Linear decay from ``epsilon_start`` to ``epsilon_end``, flat afterwards."""
    if config.epsilon_decay_steps == 0 or step >= config.epsilon_decay_steps:
        return config.epsilon_end
    frac = step / config.epsilon_decay_steps
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


def reward(prev: CoverageReport, nxt: CoverageReport) -> float:
    if len(prev) != len(nxt):
        raise ValueError(f"report lengths differ: {len(prev)} vs {len(nxt)}")
    c = np.asarray(prev.per_call, dtype=np.float64)
    c_new = np.asarray(nxt.per_call, dtype=np.float64)
    if (c <= 0).any() or (c_new <= 0).any():
        raise ValueError("coverage entries must be positive")
    # log(c') - log(c) keeps reward(a, b) == -reward(b, a) exactly
    return float(np.sum(np.log(c_new) - np.log(c)) / len(c))


def select_action(
    net: QNetwork, state: np.ndarray, cursor: int, epsilon: float, rng: np.random.Generator
) -> int:
    """Epsilon-greedy over the N replacement calls. The cursor does not enter
    the value estimate; it is accepted so callers can log decisions per slot."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(net.n_out))
    return int(np.argmax(net.forward(state)))


class ReplayBuffer:
    def __init__(self, capacity: int):
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t: Transition) -> None:
        if not math.isfinite(t.reward):
            raise ValueError("non-finite reward")
        self._items.append(t)

    def sample(self, k: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]


class DQNAgent:
    """Online and target networks, replay, and the global step counter that
    drives the epsilon schedule and target syncs."""

    def __init__(self, n: int, config: AgentConfig, rng: np.random.Generator):
        self.n = n
        self.config = config
        self.rng = rng
        self.net = QNetwork.init(n, rng, config.hidden)
        self.target_net = self.net.copy()
        self.replay = ReplayBuffer(config.replay_capacity)
        self.steps = 0
        self.losses: list[tuple[int, float]] = []

    @property
    def epsilon(self) -> float:
        return epsilon_at(self.steps, self.config)

    def act(self, state: np.ndarray, cursor: int) -> int:
        return select_action(self.net, state, cursor, self.epsilon, self.rng)

    def observe(self, transition: Transition) -> float | None:
        self.replay.push(transition)
        self.steps += 1
        loss = None
        if len(self.replay) >= self.config.batch_size:
            batch = self.replay.sample(self.config.batch_size, self.rng)
            loss = train_step(self.net, self.target_net, batch, self.config.gamma, self.config.learning_rate)
            self.losses.append((self.steps, loss))
        if self.steps % self.config.target_sync_interval == 0:
            self.target_net.load_from(self.net)
        return loss


@dataclass
class StepRecord:
    cursor: int
    action: int
    reward: float
    cumulative: float
    per_call: tuple[int, ...]


@dataclass
class EpisodeLog:
    initial: Trace
    steps: list[StepRecord] = field(default_factory=list)
    outcome: str = "running"  # "archived" | "below_t2" | "step_cap" | "error"
    trace: Trace | None = None
    archived: Trace | None = None
    coverage: int | None = None
    error: str | None = None

    @property
    def cumulative_reward(self) -> float:
        return self.steps[-1].cumulative if self.steps else 0.0


def run_episode(
    agent: DQNAgent, oracle: Oracle, config: EpisodeConfig, rng: np.random.Generator | None = None
) -> EpisodeLog:
    rng = rng if rng is not None else agent.rng
    n = agent.n
    trace = random_trace(config.trace_len, n, rng)
    episode = EpisodeLog(initial=trace)
    try:
        report = oracle.evaluate(trace)
        cumulative = 0.0
        for step in range(config.max_steps_per_episode):
            cursor = step % config.trace_len
            state = encode(trace, n)
            action = agent.act(state, cursor)
            candidate = replace(trace, cursor, action, n)
            cand_report = oracle.evaluate(candidate)
            r = reward(report, cand_report)
            cumulative += r
            done = cumulative > config.t1 or cumulative < config.t2
            if not (config.revert_decreasing and r < 0):
                trace, report = candidate, cand_report
            agent.observe(Transition(state, action, r, encode(trace, n), done))
            episode.steps.append(StepRecord(cursor, action, r, cumulative, report.per_call))
            if done:
                break
    except Exception as exc:
        episode.outcome, episode.error = "error", f"{type(exc).__name__}: {exc}"
        log.error("episode aborted: %s", episode.error)
        raise
    episode.trace, episode.coverage = trace, report.total
    if cumulative > config.t1:
        episode.outcome, episode.archived = "archived", trace
    elif cumulative < config.t2:
        episode.outcome = "below_t2"
    else:
        episode.outcome = "step_cap"
    return episode


@dataclass
class TrainingSummary:
    episodes: int
    steps: int
    archived: int
    outcomes: dict[str, int]
    best_trace: list[str] | None
    best_coverage: int | None
    wall_time_s: float
    seed: int
    universe: str


def train(
    universe: SyscallUniverse,
    oracle: Oracle,
    agent_config: AgentConfig,
    episode_config: EpisodeConfig,
    out: Path | str | None = None,
    seed: int = 0,
) -> tuple[TrainingSummary, list[EpisodeLog], DQNAgent]:
    """Run the episode loop. When ``out`` is given, writes ``archive.corpus``
    (plus its ``.meta.json``), ``loss.csv``, ``episodes.csv`` and
    ``summary.json`` there."""
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    agent = DQNAgent(universe.n, agent_config, rng)
    logs: list[EpisodeLog] = []
    for ep in range(episode_config.episodes):
        episode = run_episode(agent, oracle, episode_config)
        logs.append(episode)
        log.debug(
            "episode %d: %s after %d steps, R=%.4f eps=%.3f",
            ep, episode.outcome, len(episode.steps), episode.cumulative_reward, agent.epsilon,
        )
    archived = [e for e in logs if e.archived is not None]
    outcomes = {k: sum(e.outcome == k for e in logs) for k in ("archived", "below_t2", "step_cap")}
    best = max(archived, key=lambda e: e.coverage, default=None)
    summary = TrainingSummary(
        episodes=len(logs),
        steps=agent.steps,
        archived=len(archived),
        outcomes=outcomes,
        best_trace=None if best is None else [universe.name_of(c) for c in best.archived],
        best_coverage=None if best is None else best.coverage,
        wall_time_s=time.perf_counter() - started,
        seed=seed,
        universe=universe.universe_id,
    )
    if out is not None:
        write_training_outputs(Path(out), universe, logs, agent, summary, agent_config, episode_config)
    return summary, logs, agent


def archive_corpus(universe: SyscallUniverse, logs: Sequence[EpisodeLog], params: dict):
    archived = [e for e in logs if e.archived is not None]
    return pack_corpus(
        [e.archived for e in archived],
        universe,
        trace_len=params.get("trace_len", DEFAULT_TRACE_LEN),
        created=ARCHIVE_EPOCH,
        params=params,
        coverage=[e.coverage for e in archived],
    )


def write_training_outputs(
    out: Path,
    universe: SyscallUniverse,
    logs: Sequence[EpisodeLog],
    agent: DQNAgent,
    summary: TrainingSummary,
    agent_config: AgentConfig,
    episode_config: EpisodeConfig,
) -> None:
    out.mkdir(parents=True, exist_ok=True)
    params = {**asdict(agent_config), **asdict(episode_config), "seed": summary.seed}
    params["hidden"] = list(agent_config.hidden)
    write_corpus(archive_corpus(universe, logs, params), out / "archive.corpus", universe)
    with open(out / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"])
        w.writerows((s, repr(l)) for s, l in agent.losses)
    with open(out / "episodes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "steps", "cum_reward", "outcome"])
        for i, e in enumerate(logs):
            w.writerow([i, len(e.steps), repr(e.cumulative_reward), e.outcome])
    (out / "summary.json").write_text(json.dumps(asdict(summary), indent=1) + "\n")
