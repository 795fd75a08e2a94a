"""Calibration algebra for the nested estimator.

Given per-trunk/per-replication variance components (v1, v2) and costs
(rho1, rho2), the budget-constrained variance of the estimator at
replication count R is V(R)/C with

    V(R) = (rho1 + rho2 * R) * (v1 + v2 / R).

Everything here is closed form: the optimal R, the achievable variance
ratio against plain Monte Carlo, how flat the optimum is (so pilot noise in
R is harmless), and the path-count allocations for the control-variate and
multilevel compositions.  All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence


class DegenerateParamsError(ValueError):
    """Raised when a variance or cost component is not strictly positive."""


@dataclass(frozen=True, slots=True)
class CalibParams:
    """Pilot-estimated variance components and per-sample costs.

    All four components must be strictly positive.  ``degenerate`` marks
    parameter sets where a pilot had to floor an exactly-zero estimate (for
    instance when the two rules never disagreed); the algebra still runs,
    but downstream code should treat R as meaningless there.
    """

    v1: float
    v2: float
    rho1: float
    rho2: float
    p_differ: Optional[float] = None
    degenerate: bool = False

    def __post_init__(self) -> None:
        for name in ("v1", "v2", "rho1", "rho2"):
            x = getattr(self, name)
            if not (x > 0.0 and math.isfinite(x)):
                raise DegenerateParamsError(f"{name} must be strictly positive, got {x!r}")


@dataclass(frozen=True, slots=True)
class CalibReport:
    """Outcome of the R calibration.

    R_star is the real-valued optimum (1 when the gain condition fails),
    R_rounded the integer actually used.  gamma_star = V(R_star)/V(1) is the
    variance ratio at matched budget; (gain_lower, gain_upper) bracket it.
    n_star_per_budget is the trunk count per unit of budget at R_star.
    """

    R_star: float
    R_rounded: int
    gamma_star: float
    gain_lower: float
    gain_upper: float
    condition_holds: bool
    n_star_per_budget: float


def v_profile(p: CalibParams, R: float) -> float:
    """Budget-normalized variance profile V(R) = (rho1+rho2 R)(v1+v2/R)."""
    if R < 1:
        raise ValueError(f"R must be >= 1, got {R!r}")
    return (p.rho1 + p.rho2 * R) * (p.v1 + p.v2 / R)


def _condition_holds(p: CalibParams) -> bool:
    # Replication pays off iff (rho1/rho2) * (v2/v1) > 1.
    return p.rho1 * p.v2 > p.rho2 * p.v1


def gain(p: CalibParams) -> float:
    """Variance ratio V(R*)/V(1) at matched budget; 1 if replication cannot help."""
    if not _condition_holds(p):
        return 1.0
    a = math.sqrt(p.v1 / p.v2) + math.sqrt(p.rho2 / p.rho1)
    return a * a / ((1.0 + p.v1 / p.v2) * (1.0 + p.rho2 / p.rho1))


def optimal_R(p: CalibParams) -> CalibReport:
    """Optimal replication count, rounded to the integer grid, with bounds.

    Rounding is to the nearest integer with ties up: overshooting R* is
    always at least as good as undershooting by the same factor.
    """
    cond = _condition_holds(p)
    if cond:
        R_star = math.sqrt((p.rho1 / p.rho2) * (p.v2 / p.v1))
    else:
        R_star = 1.0
    R_rounded = max(1, math.floor(R_star + 0.5))
    lower = max(p.rho2 / (p.rho1 + p.rho2), p.v1 / (p.v1 + p.v2))
    return CalibReport(
        R_star=R_star,
        R_rounded=R_rounded,
        gamma_star=gain(p),
        gain_lower=lower,
        gain_upper=4.0 * lower,
        condition_holds=cond,
        n_star_per_budget=1.0 / (p.rho1 + p.rho2 * R_star),
    )


def robustness_bound(alpha: float) -> float:
    """Worst-case V(R)/V(R*) over R in [R*/alpha, alpha*R*].

    Equals 1/2 + (alpha + 1/alpha)/4; 1 at alpha = 1.  The profile is so
    flat near the optimum that a factor-2 error in R costs only 12.5%.
    """
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha!r}")
    return 0.5 + (alpha + 1.0 / alpha) / 4.0


def qcv_allocation(
    vB: float, rhoB: float, p: CalibParams, R: int, budget: float
) -> tuple[int, int]:
    """Split a budget between baseline paths and correction trunks.

    The baseline estimates E[X_{tau_B}] at per-path variance vB and cost
    rhoB; the correction estimates the rule difference at per-trunk variance
    v1 + v2/R and cost rho1 + R*rho2.  Returns (N_B, N) with
    N_B/N = sqrt((vB/v(R)) * (rho(R)/rhoB)), which is budget-free; counts
    are integers >= 1 and the leftover budget is less than one path's cost.
    """
    if not (vB > 0 and rhoB > 0):
        raise ValueError("vB and rhoB must be strictly positive")
    if R < 1:
        raise ValueError("R must be >= 1")
    vR = p.v1 + p.v2 / R
    rhoR = p.rho1 + p.rho2 * R
    if budget < rhoR + rhoB:
        raise ValueError(f"budget {budget!r} cannot afford one path of each kind")
    ratio = math.sqrt((vB / vR) * (rhoR / rhoB))
    n = budget / (ratio * rhoB + rhoR)
    counts = [max(1, math.floor(ratio * n)), max(1, math.floor(n))]
    variances = (vB, vR)
    costs = (rhoB, rhoR)
    _greedy_fill(counts, variances, costs, budget)
    return counts[0], counts[1]


def ml_allocation(levels: Sequence[tuple[float, float]], budget: float) -> list[int]:
    """Per-level path counts N_i proportional to sqrt(variance_i / cost_i).

    Scaled so that sum N_i * cost_i meets the budget to within one sample's
    cost; each level gets at least one path.  levels is a sequence of
    (variance per sample, cost per sample) pairs.
    """
    if not levels:
        raise ValueError("need at least one level")
    for k, (v, c) in enumerate(levels):
        if not (v > 0 and c > 0):
            raise ValueError(f"level {k}: variance and cost must be strictly positive")
    total_cost = sum(c for _, c in levels)
    if budget < total_cost:
        raise ValueError(f"budget {budget!r} cannot afford one sample per level")
    lam = budget / sum(math.sqrt(v * c) for v, c in levels)
    counts = [max(1, math.floor(lam * math.sqrt(v / c))) for v, c in levels]
    variances = tuple(v for v, _ in levels)
    costs = tuple(c for _, c in levels)
    _greedy_fill(counts, variances, costs, budget)
    return counts


def _greedy_fill(counts: list[int], variances, costs, budget: float) -> None:
    """Spend leftover budget one sample at a time, best variance drop first.

    Adding a path to component i at count N removes variance
    v_i/N - v_i/(N+1) = v_i/(N(N+1)) at cost c_i; pick the affordable
    component maximizing that ratio.  Mutates counts in place.
    """
    remaining = budget - sum(n * c for n, c in zip(counts, costs))
    while True:
        best = -1
        best_score = -1.0
        for k, c in enumerate(costs):
            if c <= remaining:
                n = counts[k]
                score = variances[k] / (n * (n + 1)) / c
                if score > best_score:
                    best = k
                    best_score = score
        if best < 0:
            break
        counts[best] += 1
        remaining -= costs[best]
