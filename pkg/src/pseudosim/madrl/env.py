"""Pseudonym-generation environment for the multi-manager decision problem.

Each agent (district manager) observes only its own last L slots of
(mean distribution overhead, overproduction, demand), picks a generation
count, and shares a team reward: the summed social welfare of the slot,
zeroed whenever the joint generation exceeds the authority's
registration budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..economics import EconomicParams, welfare_terms


class InvalidAction(ValueError):
    pass


@dataclass(frozen=True)
class StepRecord:
    """Raw draw log for one slot, kept for reward-consistency checks."""

    t: int
    demand: tuple[float, ...]
    generated: tuple[int, ...]
    overhead: tuple[float, ...]
    per_agent_welfare: tuple[float, ...]
    team_reward: float
    violated: bool


class PseudonymGenEnv:
    def __init__(
        self,
        params: EconomicParams,
        h_bar: float,
        history_len: int = 3,
        episode_len: int = 120,
        overhead_high: float = 0.2,
        seed: int = 0,
        demand_kind: str = "poisson",
    ):
        if demand_kind not in ("poisson", "fixed"):
            raise ValueError("demand_kind must be 'poisson' or 'fixed'")
        self.params = params
        self.h_bar = h_bar
        self.history_len = history_len
        self.episode_len = episode_len
        self.overhead_high = overhead_high
        self.demand_kind = demand_kind
        self.n_agents = params.n_metaverses
        self.n_actions = params.g_max + 1
        self.rng = np.random.default_rng(seed)
        # normalization bounds, fixed for the whole run
        self.demand_hi = 2.0 * max(params.demand_means) + 40.0
        self.over_lo = -self.demand_hi
        self.over_hi = float(params.g_max)
        self._means = np.asarray(params.demand_means, dtype=float)
        self._vmu_counts = np.asarray(params.vmu_counts, dtype=float)
        # normalized (c, overproduction, demand) windows, one row per slot
        self._history = np.zeros((self.n_agents, history_len, 3))
        self._norm_lo = np.array([0.0, self.over_lo, 0.0])
        self._norm_span = np.array(
            [self.overhead_high, self.over_hi - self.over_lo, self.demand_hi]
        )
        self.t = 0
        self.step_log: list[StepRecord] = []

    @property
    def obs_dim(self) -> int:
        return 3 * self.history_len

    @property
    def central_dim(self) -> int:
        """Joint observations plus the other agents' scalar-encoded actions."""
        return self.n_agents * self.obs_dim + (self.n_agents - 1)

    def reset(self, seed: int | None = None) -> list[np.ndarray]:
        """Seed (optionally), clear history, and run unrewarded warm-up
        slots under random actions to fill every observation window."""
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.t = 0
        self.step_log = []
        self._history[:] = 0.0
        for _ in range(self.history_len):
            actions = self.rng.integers(0, self.n_actions, size=self.n_agents).astype(float)
            demand = self._draw_demand()
            overhead = self.rng.uniform(0.0, self.overhead_high, size=self.n_agents)
            self._push_slot(overhead, actions - demand, demand)
        return self.observations()

    def _draw_demand(self, size: int | None = None) -> np.ndarray:
        if self.demand_kind == "fixed":
            if size is None:
                return self._means.copy()
            return np.tile(self._means, (size, 1))
        if size is None:
            return self.rng.poisson(self._means).astype(float)
        return self.rng.poisson(self._means, size=(size, self.n_agents)).astype(float)

    def _push_slot(self, overhead: np.ndarray, over: np.ndarray, demand: np.ndarray) -> None:
        raw = np.stack([overhead, over, demand], axis=1)
        normalized = np.clip((raw - self._norm_lo) / self._norm_span, 0.0, 1.0)
        self._history[:, :-1] = self._history[:, 1:]
        self._history[:, -1] = normalized

    def observations(self) -> list[np.ndarray]:
        return [self._history[j].ravel().copy() for j in range(self.n_agents)]

    def joint_observation(self) -> np.ndarray:
        return np.concatenate(self.observations())

    def step(self, actions) -> tuple[list[np.ndarray], float, bool, dict]:
        actions = [int(a) for a in actions]
        if len(actions) != self.n_agents:
            raise InvalidAction(f"need {self.n_agents} actions")
        for a in actions:
            if not (0 <= a < self.n_actions):
                raise InvalidAction(f"action {a} outside [0, {self.n_actions - 1}]")
        demand = self._draw_demand()
        overhead = self.rng.uniform(0.0, self.overhead_high, size=self.n_agents)
        gen = np.asarray(actions, dtype=float)
        _, _, sw = welfare_terms(
            self.params, self.h_bar, demand, gen, self._vmu_counts, comm_overhead=overhead
        )
        violated = float(gen.sum()) > self.params.registration_budget
        team_reward = 0.0 if violated else float(sw.sum())
        self._push_slot(overhead, gen - demand, demand)
        self.t += 1
        record = StepRecord(
            t=self.t,
            demand=tuple(demand),
            generated=tuple(actions),
            overhead=tuple(overhead),
            per_agent_welfare=tuple(float(x) for x in sw),
            team_reward=team_reward,
            violated=violated,
        )
        self.step_log.append(record)
        done = self.t >= self.episode_len
        info = {
            "per_agent_welfare": record.per_agent_welfare,
            "demand": record.demand,
            "overhead": record.overhead,
            "violated": violated,
        }
        return self.observations(), team_reward, done, info

    def evaluate_constant(self, actions, episodes: int = 1) -> np.ndarray:
        """Mean team reward per episode for a fixed joint action.

        Vectorized over all slots; used by search-based baselines where
        stepping the environment one slot at a time would dominate the
        runtime.  Draws come from the env's own generator, so results
        stay reproducible for a given seed.
        """
        gen = np.asarray([int(a) for a in actions], dtype=float)
        if gen.shape != (self.n_agents,):
            raise InvalidAction("one action per agent required")
        total = self.episode_len * episodes
        demand = self._draw_demand(size=total)
        overhead = self.rng.uniform(0.0, self.overhead_high, size=(total, self.n_agents))
        _, _, sw = welfare_terms(
            self.params, self.h_bar, demand, gen[None, :], self._vmu_counts[None, :],
            comm_overhead=overhead,
        )
        team = sw.sum(axis=1)
        if float(gen.sum()) > self.params.registration_budget:
            team = np.zeros_like(team)
        return team.reshape(episodes, self.episode_len).mean(axis=1)
