"""Per-slot pseudonym economics and the single-period stocking optimum.

User-side utility pays a request cost per registered user and earns the
privacy margin (beta * average_metric - delta) per acquired pseudonym.
The manager's utility is a classic newsvendor trade-off: generation cost,
supply margin, storage cost on surplus, penalty on shortfall.  Social
welfare is their sum, maximized at the inverse demand CDF evaluated at
the critical ratio; a common-random-number Monte Carlo sweep serves as
the independent optimum oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .privacy import DomainError


class CapViolation(ValueError):
    """Generation above the per-manager cap."""


class DegenerateRatio(ValueError):
    """Critical ratio outside (0, 1); carries the offending value."""

    def __init__(self, ratio: float):
        super().__init__(f"critical ratio {ratio} outside (0, 1)")
        self.ratio = ratio


@dataclass(frozen=True)
class EconomicParams:
    """Cost/profit coefficients and system-wide limits.

    ``c`` is the mean per-pseudonym distribution overhead used by the
    analytic optimum; realized per-slot overheads (uniform on
    [0, 2c] by default) are passed explicitly where they matter.
    """

    epsilon: float = 0.1       # request base cost per user
    beta: float = 0.2          # privacy profit per pseudonym per unit metric
    delta: float = 0.5         # routing-table update cost per change
    p0: float = 1.5            # supply price per pseudonym
    g: float = 0.2             # generation cost per pseudonym
    c: float = 0.1             # mean distribution overhead per pseudonym
    h: float = 0.1             # storage cost per surplus pseudonym
    r: float = 0.5             # penalty per unit of unmet demand
    theta: float = 5.0         # registration rate cap, pseudonyms per second
    g_max: int = 120           # per-manager generation cap per slot
    slot_seconds: float = 60.0
    vmu_counts: tuple[int, ...] = (80, 70, 60)
    demand_means: tuple[float, ...] = (80.0, 90.0, 100.0)

    def __post_init__(self) -> None:
        if not (0.0 < self.c < self.p0):
            raise DomainError("require 0 < c < p0")
        for name in ("epsilon", "beta", "delta", "g", "h", "r", "theta"):
            if getattr(self, name) < 0.0:
                raise DomainError(f"{name} must be non-negative")
        if self.g_max <= 0 or self.slot_seconds <= 0:
            raise DomainError("g_max and slot_seconds must be positive")
        if len(self.vmu_counts) != len(self.demand_means):
            raise DomainError("vmu_counts and demand_means must align")

    @property
    def n_metaverses(self) -> int:
        return len(self.demand_means)

    @property
    def registration_budget(self) -> float:
        """Global per-slot generation budget theta * slot length."""
        return self.theta * self.slot_seconds

    def with_overrides(self, **kwargs) -> "EconomicParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class SlotOutcome:
    """Realized economics of one manager in one slot."""

    j: int
    t: int
    demand: float
    generated: float
    acquired: float
    vmu_total_utility: float
    lmm_utility: float
    social_welfare: float


def welfare_terms(params: EconomicParams, h_bar: float, demand, generated, vmu_count, comm_overhead=None):
    """Vectorized (user utility, manager utility, social welfare) triple.

    Accepts scalars or broadcastable numpy arrays; no cap checking here.
    """
    d = np.asarray(demand, dtype=float)
    gen = np.asarray(generated, dtype=float)
    i_count = np.asarray(vmu_count, dtype=float)
    c = params.c if comm_overhead is None else np.asarray(comm_overhead, dtype=float)
    acquired = np.minimum(d, gen)
    vmu_utility = -i_count * params.epsilon + (params.beta * h_bar - params.delta) * acquired
    lmm_utility = (
        -params.g * gen
        + (params.p0 - c) * acquired
        - params.h * np.maximum(gen - d, 0.0)
        - params.r * np.maximum(d - gen, 0.0)
    )
    return vmu_utility, lmm_utility, vmu_utility + lmm_utility


def slot_welfare(
    params: EconomicParams,
    h_bar: float,
    demand: float,
    generated: float,
    vmu_count: float,
    comm_overhead: float | None = None,
    j: int = 0,
    t: int = 0,
) -> SlotOutcome:
    """Single-slot outcome; raises CapViolation when generation exceeds the cap."""
    if demand < 0 or generated < 0:
        raise DomainError("demand and generation must be non-negative")
    if generated > params.g_max:
        raise CapViolation(f"generated {generated} exceeds cap {params.g_max}")
    u, lmm, sw = welfare_terms(params, h_bar, demand, generated, vmu_count, comm_overhead)
    return SlotOutcome(
        j=j,
        t=t,
        demand=float(demand),
        generated=float(generated),
        acquired=float(min(demand, generated)),
        vmu_total_utility=float(u),
        lmm_utility=float(lmm),
        social_welfare=float(sw),
    )


def critical_ratio(params: EconomicParams, h_bar: float) -> float:
    """Newsvendor critical ratio including the privacy margin."""
    margin = params.beta * h_bar - params.delta
    num = params.p0 - params.c + params.r - params.g + margin
    den = params.p0 - params.c + params.r + params.h + margin
    if den == 0.0:
        raise DegenerateRatio(math.inf)
    return num / den


# --- demand models -----------------------------------------------------------

@dataclass(frozen=True)
class PoissonDemand:
    mean: float

    def cdf(self, k: float) -> float:
        return float(stats.poisson.cdf(k, self.mean))

    def ppf(self, q: float) -> int:
        return int(stats.poisson.ppf(q, self.mean))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.poisson(self.mean, size=size).astype(float)


@dataclass(frozen=True)
class FixedDemand:
    value: float

    def cdf(self, k: float) -> float:
        return 1.0 if k >= self.value else 0.0

    def ppf(self, q: float) -> int:
        return int(math.ceil(self.value)) if q > 0 else 0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, float(self.value))


def optimal_generation(params: EconomicParams, h_bar: float, demand_cdf) -> int:
    """Smallest integer G with F(G) >= critical ratio, clamped to [0, g_max]."""
    ratio = critical_ratio(params, h_bar)
    if not (0.0 < ratio < 1.0):
        raise DegenerateRatio(ratio)
    if hasattr(demand_cdf, "ppf"):
        g_star = demand_cdf.ppf(ratio)
    else:
        g_star = 0
        while demand_cdf(g_star) < ratio:
            g_star += 1
            if g_star > 10 * params.g_max:
                break
    return int(min(max(g_star, 0), params.g_max))


@dataclass(frozen=True)
class WelfareEstimate:
    mean: float
    stderr: float
    n_samples: int


def expected_welfare(
    params: EconomicParams,
    h_bar: float,
    generated: float,
    demand_model,
    n_samples: int,
    seed: int | None = None,
    vmu_count: float | None = None,
    demand_samples: np.ndarray | None = None,
) -> WelfareEstimate:
    """Monte Carlo mean social welfare at a fixed generation level.

    Passing ``demand_samples`` fixes the draws (common random numbers);
    otherwise ``seed`` drives a fresh generator.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    if demand_samples is None:
        rng = np.random.default_rng(seed)
        demand_samples = demand_model.sample(rng, n_samples)
    i_count = params.vmu_counts[0] if vmu_count is None else vmu_count
    _, _, sw = welfare_terms(params, h_bar, demand_samples, generated, i_count)
    mean = float(np.mean(sw))
    stderr = float(np.std(sw, ddof=1) / math.sqrt(len(sw))) if len(sw) > 1 else 0.0
    return WelfareEstimate(mean=mean, stderr=stderr, n_samples=int(len(sw)))


def welfare_curve(
    params: EconomicParams,
    h_bar: float,
    demand_model,
    g_range: Sequence[int],
    n_samples: int,
    seed: int | None = None,
    vmu_count: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean SW and stderr over a grid of generation levels, common random numbers."""
    rng = np.random.default_rng(seed)
    samples = demand_model.sample(rng, n_samples)
    i_count = params.vmu_counts[0] if vmu_count is None else vmu_count
    g_grid = np.asarray(list(g_range), dtype=float)
    _, _, sw = welfare_terms(
        params, h_bar, samples[None, :], g_grid[:, None], i_count
    )
    means = sw.mean(axis=1)
    stderrs = sw.std(axis=1, ddof=1) / math.sqrt(n_samples)
    return means, stderrs


def brute_force_optimum(
    params: EconomicParams,
    h_bar: float,
    demand_model,
    g_range: Sequence[int],
    n_samples: int,
    seed: int | None = None,
    vmu_count: float | None = None,
) -> int:
    """Argmax of Monte Carlo expected welfare over ``g_range``.

    Ties break toward the smaller generation level.
    """
    g_list = list(g_range)
    means, _ = welfare_curve(params, h_bar, demand_model, g_list, n_samples, seed, vmu_count)
    return int(g_list[int(np.argmax(means))])


@dataclass(frozen=True)
class ConstraintViolation:
    constraint: str
    severity: str  # "error" or "warning"
    detail: str


def validate_constraints(
    params: EconomicParams,
    h_bar: float,
    generation_per_lmm: Sequence[float],
) -> list[ConstraintViolation]:
    """Diagnostic check of the welfare problem's feasibility constraints.

    Returns every violation; the privacy-margin condition
    0 < delta < beta * h_bar reports as a warning rather than an error so
    low-rate sweeps can still be evaluated.
    """
    violations: list[ConstraintViolation] = []
    for j, gen in enumerate(generation_per_lmm):
        if not (0 <= gen <= params.g_max):
            violations.append(
                ConstraintViolation(
                    constraint="generation_cap",
                    severity="error",
                    detail=f"G[{j}]={gen} outside [0, {params.g_max}]",
                )
            )
    total = float(np.sum(np.asarray(generation_per_lmm, dtype=float)))
    budget = params.registration_budget
    if total > budget:
        violations.append(
            ConstraintViolation(
                constraint="registration_budget",
                severity="error",
                detail=f"sum G = {total} exceeds theta*slot = {budget}",
            )
        )
    if not (0.0 < params.c < params.p0):
        violations.append(
            ConstraintViolation(
                constraint="overhead_below_price",
                severity="error",
                detail=f"require 0 < c < p0, got c={params.c}, p0={params.p0}",
            )
        )
    margin = params.beta * h_bar
    if not (0.0 < params.delta < margin):
        violations.append(
            ConstraintViolation(
                constraint="privacy_margin",
                severity="warning",
                detail=f"require 0 < delta < beta*H = {margin:.6f}, got delta={params.delta}",
            )
        )
    return violations
