"""Self-contained statistics: aggregates, Mann-Whitney U, and Welch's t.

The Mann-Whitney statistic reported here is U for the first sample: the
number of (a, b) pairs with a > b, counting ties as one half. For small
problems (n*m <= 400) the two-sided p-value is exact under the permutation
null: the distribution of U over all C(n+m, n) equally likely group
assignments of the pooled values, computed by a counting recursion over tie
groups (identical to exhaustive enumeration, ties handled via midranks).
Larger problems use the normal approximation with tie correction and a 0.5
continuity correction.

Welch's t uses the Welch-Satterthwaite degrees of freedom and a two-sided
p-value from the t survival function, evaluated through the regularized
incomplete beta function (Lentz's continued fraction, accurate to ~1e-10).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

EXACT_CUTOFF = 400  # exact Mann-Whitney when n*m is at most this


@dataclass(frozen=True)
class Aggregate:
    n: int
    mean: float
    std_error: float
    values: tuple[float, ...]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    test_kind: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value outside [0, 1]")


def aggregate(values: Sequence[float]) -> Aggregate:
    """Mean and standard error (sample sd / sqrt(n)); SE is 0 for n = 1."""
    vals = tuple(float(v) for v in values)
    n = len(vals)
    if n == 0:
        raise ValueError("cannot aggregate an empty sample")
    mean = sum(vals) / n
    if n == 1:
        return Aggregate(n=1, mean=mean, std_error=0.0, values=vals)
    var = sum((v - mean) ** 2 for v in vals) / (n - 1)
    return Aggregate(n=n, mean=mean, std_error=math.sqrt(var / n), values=vals)


def _midranks(pooled: Sequence[float]) -> list[float]:
    order = sorted(range(len(pooled)), key=lambda i: pooled[i])
    ranks = [0.0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def _tie_group_counts(pooled: Sequence[float]) -> list[int]:
    counts: list[int] = []
    last: float | None = None
    for v in sorted(pooled):
        if counts and v == last:
            counts[-1] += 1
        else:
            counts.append(1)
            last = v
    return counts


def _u_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    pooled = list(a) + list(b)
    ranks = _midranks(pooled)
    rank_sum_a = sum(ranks[: len(a)])
    return rank_sum_a - len(a) * (len(a) + 1) / 2.0


def _exact_u_distribution(counts: list[int], n_a: int) -> dict[tuple[int, int], int]:
    """Number of group assignments per (chosen for A, 2*U_a) over tie groups.

    Processing tie groups in ascending value order, choosing k of a group's c
    members for sample A contributes k*(c - k) half-ties plus k wins over
    every B member in strictly lower groups.
    """
    states: dict[tuple[int, int], int] = {(0, 0): 1}
    processed = 0
    for c in counts:
        next_states: dict[tuple[int, int], int] = {}
        for (chosen, u2), ways in states.items():
            b_lower = processed - chosen
            for k in range(0, min(c, n_a - chosen) + 1):
                add = 2 * k * b_lower + k * (c - k)
                key = (chosen + k, u2 + add)
                next_states[key] = next_states.get(key, 0) + ways * math.comb(c, k)
        states = next_states
        processed += c
    return states


def _exact_two_sided_p(a: Sequence[float], b: Sequence[float], u_a: float) -> float:
    n_a, n_b = len(a), len(b)
    counts = _tie_group_counts(list(a) + list(b))
    states = _exact_u_distribution(counts, n_a)
    total = math.comb(n_a + n_b, n_a)
    center2 = n_a * n_b  # 2 * (n*m / 2)
    observed_dev = abs(round(2 * u_a) - center2)
    extreme = sum(
        ways
        for (chosen, u2), ways in states.items()
        if chosen == n_a and abs(u2 - center2) >= observed_dev
    )
    return extreme / total


def normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> TestResult:
    if not sample_a or not sample_b:
        raise ValueError("both samples must be non-empty")
    a = [float(v) for v in sample_a]
    b = [float(v) for v in sample_b]
    n_a, n_b = len(a), len(b)
    u_a = _u_statistic(a, b)
    if n_a * n_b <= EXACT_CUTOFF:
        p = _exact_two_sided_p(a, b, u_a)
        return TestResult(statistic=u_a, p_value=p, test_kind="mann_whitney_u")
    n = n_a + n_b
    tie_term = sum(t**3 - t for t in _tie_group_counts(a + b))
    sigma_sq = (n_a * n_b / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma_sq <= 0:
        return TestResult(statistic=u_a, p_value=1.0, test_kind="mann_whitney_u")
    dev = abs(u_a - n_a * n_b / 2.0) - 0.5  # continuity correction
    if dev < 0:
        dev = 0.0
    z = dev / math.sqrt(sigma_sq)
    p = min(1.0, 2.0 * normal_sf(z))
    return TestResult(statistic=u_a, p_value=p, test_kind="mann_whitney_u")


def _betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) by Lentz's continued fraction."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-14) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    return h


def t_sf(t: float, df: float) -> float:
    """Survival function of Student's t."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * _betainc_regularized(df / 2.0, 0.5, x)
    return tail if t > 0 else 1.0 - tail


def welch_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> TestResult:
    if len(sample_a) < 2 or len(sample_b) < 2:
        raise ValueError("welch_t needs at least 2 observations per sample")
    a = [float(v) for v in sample_a]
    b = [float(v) for v in sample_b]
    n_a, n_b = len(a), len(b)
    mean_a = sum(a) / n_a
    mean_b = sum(b) / n_b
    var_a = sum((v - mean_a) ** 2 for v in a) / (n_a - 1)
    var_b = sum((v - mean_b) ** 2 for v in b) / (n_b - 1)
    se_sq = var_a / n_a + var_b / n_b
    if se_sq == 0.0:
        # Degenerate constant samples: identical means carry no evidence.
        p = 1.0 if mean_a == mean_b else 0.0
        return TestResult(statistic=0.0 if mean_a == mean_b else math.inf, p_value=p, test_kind="welch_t")
    t = (mean_a - mean_b) / math.sqrt(se_sq)
    df = se_sq**2 / (
        (var_a / n_a) ** 2 / (n_a - 1) + (var_b / n_b) ** 2 / (n_b - 1)
    )
    p = min(1.0, 2.0 * t_sf(abs(t), df))
    return TestResult(statistic=t, p_value=p, test_kind="welch_t")
