"""Non-learning generation policies used as comparison baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..economics import EconomicParams, FixedDemand, PoissonDemand, optimal_generation
from .env import PseudonymGenEnv


class RandomPolicy:
    """Uniform draw over the whole action set, per agent, per slot."""

    def __init__(self, n_agents: int, n_actions: int, seed: int = 0):
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.rng = np.random.default_rng(seed)

    def act(self, obs, info=None) -> np.ndarray:
        return self.rng.integers(0, self.n_actions, size=self.n_agents)

    def update(self, actions, info) -> None:
        pass


class GreedyPolicy:
    """Replay each agent's own best-welfare action so far, with epsilon
    exploration."""

    def __init__(self, n_agents: int, n_actions: int, seed: int = 0, epsilon: float = 0.1):
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.epsilon = epsilon
        self.rng = np.random.default_rng(seed)
        self.best_welfare = np.full(n_agents, -np.inf)
        self.best_action = np.zeros(n_agents, dtype=int)

    def act(self, obs, info=None) -> np.ndarray:
        actions = self.best_action.copy()
        for j in range(self.n_agents):
            if not np.isfinite(self.best_welfare[j]) or self.rng.random() < self.epsilon:
                actions[j] = self.rng.integers(0, self.n_actions)
        return actions

    def update(self, actions, info) -> None:
        welfare = info["per_agent_welfare"]
        for j in range(self.n_agents):
            if welfare[j] > self.best_welfare[j]:
                self.best_welfare[j] = welfare[j]
                self.best_action[j] = actions[j]


class NewsvendorOraclePolicy:
    """Clairvoyant stocking: the analytic optimum for each district's true
    demand law, proportionally scaled into the registration budget."""

    def __init__(self, params: EconomicParams, h_bar: float, demand_kind: str = "poisson"):
        model = FixedDemand if demand_kind == "fixed" else PoissonDemand
        stars = np.asarray(
            [
                optimal_generation(params, h_bar, model(mean))
                for mean in params.demand_means
            ],
            dtype=float,
        )
        budget = params.registration_budget
        if stars.sum() > budget:
            stars = np.floor(stars * budget / stars.sum())
        self.actions = stars.astype(int)

    def act(self, obs, info=None) -> np.ndarray:
        return self.actions.copy()

    def update(self, actions, info) -> None:
        pass


@dataclass
class GeneticConfig:
    population: int = 50
    generations: int = 100
    crossover_prob: float = 0.8
    mutation_prob: float = 0.05
    tournament: int = 3
    seed: int = 0


class GeneticPolicy:
    """Evolves constant joint generation vectors; fitness is the episode
    team welfare under one environment episode per evaluation."""

    def __init__(self, env: PseudonymGenEnv, cfg: GeneticConfig | None = None):
        self.cfg = cfg or GeneticConfig()
        self.env = env
        self.best_genome: np.ndarray | None = None
        self.history: list[float] = []

    def fit(self) -> np.ndarray:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        n_agents = self.env.n_agents
        n_actions = self.env.n_actions
        population = rng.integers(0, n_actions, size=(cfg.population, n_agents))
        fitness = np.array([self._fitness(genome) for genome in population])
        best_idx = int(np.argmax(fitness))
        best_genome, best_fit = population[best_idx].copy(), float(fitness[best_idx])
        self.history = [best_fit]

        for _ in range(cfg.generations):
            children = np.zeros_like(population)
            for i in range(cfg.population):
                a = self._tournament(population, fitness, rng)
                b = self._tournament(population, fitness, rng)
                child = a.copy()
                if rng.random() < cfg.crossover_prob and n_agents > 1:
                    point = int(rng.integers(1, n_agents))
                    child[point:] = b[point:]
                mutate = rng.random(n_agents) < cfg.mutation_prob
                child[mutate] = rng.integers(0, n_actions, size=int(mutate.sum()))
                children[i] = child
            children[0] = best_genome  # elitism
            population = children
            fitness = np.array([self._fitness(genome) for genome in population])
            gen_best = int(np.argmax(fitness))
            if fitness[gen_best] > best_fit:
                best_fit = float(fitness[gen_best])
                best_genome = population[gen_best].copy()
            self.history.append(best_fit)

        self.best_genome = best_genome
        return best_genome

    def _tournament(self, population, fitness, rng) -> np.ndarray:
        contenders = rng.integers(0, len(population), size=self.cfg.tournament)
        return population[contenders[np.argmax(fitness[contenders])]]

    def _fitness(self, genome) -> float:
        return float(self.env.evaluate_constant(genome, episodes=1)[0])

    def act(self, obs, info=None) -> np.ndarray:
        if self.best_genome is None:
            raise RuntimeError("call fit() before acting")
        return self.best_genome.copy()

    def update(self, actions, info) -> None:
        pass


def baseline_policy(
    kind: str,
    env: PseudonymGenEnv,
    params: EconomicParams,
    h_bar: float,
    seed: int = 0,
    genetic_cfg: GeneticConfig | None = None,
):
    """Factory for the comparison policies: Random, Greedy, Genetic,
    NewsvendorOracle."""
    kind = kind.lower()
    if kind == "random":
        return RandomPolicy(env.n_agents, env.n_actions, seed=seed)
    if kind == "greedy":
        return GreedyPolicy(env.n_agents, env.n_actions, seed=seed)
    if kind == "newsvendororacle" or kind == "oracle":
        return NewsvendorOraclePolicy(params, h_bar, demand_kind=env.demand_kind)
    if kind == "genetic":
        cfg = genetic_cfg or GeneticConfig(seed=seed)
        policy = GeneticPolicy(env, cfg)
        policy.fit()
        return policy
    raise ValueError(f"unknown baseline {kind!r}")


def evaluate_policy(env: PseudonymGenEnv, policy, episodes: int) -> np.ndarray:
    """Mean team reward per episode; the policy's update hook sees every
    step so adaptive baselines keep learning while being measured."""
    curve = np.zeros(episodes)
    for e in range(episodes):
        obs = env.reset()
        total = 0.0
        for _ in range(env.episode_len):
            actions = policy.act(obs)
            obs, reward, done, info = env.step(actions)
            policy.update(actions, info)
            total += reward
        curve[e] = total / env.episode_len
    return curve
