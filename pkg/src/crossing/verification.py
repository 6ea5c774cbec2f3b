"""Built-in oracle suite: independent checks behind the `verify` command.

Each check pits an implementation against an independently-coded oracle:
central finite differences for gradients, the closed-form discount power for
return spreading, point-grid sampling for collision geometry, exact value
iteration on a small deterministic MDP for Q-learning, and exhaustive
rank-assignment enumeration for the Mann-Whitney test.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .agent import ModelPair, ReplayHistory, new_model_pair, train_after_trial
from .mdp import (
    Action,
    EpisodeTrace,
    MusicCondition,
    RewardParams,
    StateVector,
    Transition,
    backpropagate_returns,
)
from .net import Network, NetworkSpec, backward, forward, init_network
from .sim import TrialOutcome, VehicleState, WorldConfig, detect_collision


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


# --------------------------------------------------------------------------
# 1. Gradient check vs central finite differences
# --------------------------------------------------------------------------

def _loss_at(net: Network, x: np.ndarray, action: int, target: float) -> float:
    q = forward(net, x)
    diff = q[action] - target
    return float(diff * diff)


def check_gradients(
    n_samples: int = 100,
    h: float = 1e-5,
    tol: float = 1e-4,
    seed: int = 2024,
    perturb: Callable | None = None,
) -> CheckResult:
    """Analytic gradients vs central differences on random nets and inputs.

    Samples whose pre-activations sit within 10h of a rectifier kink are
    redrawn; finite differences straddle the kink there and measure nothing.
    `perturb` lets a negative-control test corrupt the analytic gradient.
    """
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = 0.0
    checked = 0
    while checked < n_samples:
        input_dim = 8 if checked % 2 == 0 else 9
        spec = NetworkSpec(input_dim=input_dim)
        net = init_network(spec, rng)
        x = rng.uniform(-1.0, 1.0, size=input_dim)
        action = int(rng.integers(0, spec.output_dim))
        target = float(rng.uniform(-5.0, 5.0))
        zs, _ = _trace(net, x)
        if min(abs(z) for layer in zs[:-1] for z in layer) < 10 * h:
            continue
        _, grads = backward(net, x, action, target)
        if perturb is not None:
            grads = perturb(grads)
        for layer in range(len(net.weights)):
            for arrays, ganalytic in (
                (net.weights[layer], grads.weights[layer]),
                (net.biases[layer], grads.biases[layer]),
            ):
                flat = arrays.reshape(-1)
                gflat = ganalytic.reshape(-1)
                for i in range(flat.shape[0]):
                    keep = flat[i]
                    flat[i] = keep + h
                    up = _loss_at(net, x, action, target)
                    flat[i] = keep - h
                    down = _loss_at(net, x, action, target)
                    flat[i] = keep
                    fd = (up - down) / (2.0 * h)
                    err = abs(fd - gflat[i]) / max(1.0, abs(fd), abs(gflat[i]))
                    if err > worst:
                        worst = err
                    if err > tol:
                        return CheckResult(
                            "gradient_check",
                            False,
                            f"relative error {err:.3e} > {tol} at sample {checked}",
                            time.perf_counter() - start,
                        )
        checked += 1
    return CheckResult(
        "gradient_check",
        True,
        f"{n_samples} samples, worst relative error {worst:.3e}",
        time.perf_counter() - start,
    )


def _trace(net: Network, x: np.ndarray):
    inputs = [np.asarray(x, dtype=np.float64)]
    zs = []
    a = inputs[0]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        zs.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        inputs.append(a)
    return zs, inputs


# --------------------------------------------------------------------------
# 2. Return backprop vs the closed form
# --------------------------------------------------------------------------

def _dummy_state(phase: float = 0.0) -> StateVector:
    features = np.linspace(-0.9 + phase, 0.9, 9)
    features[5:] = np.round(np.abs(features[5:]))
    return StateVector(features=features, aware=True)


def make_episode(rewards_set: bool, length: int, terminal_time: float, crashed: bool) -> EpisodeTrace:
    transitions = tuple(
        Transition(
            s=_dummy_state(0.05 * i),
            a=Action.FAST,
            r=terminal_time * 0.9 ** (length - 1 - i) if rewards_set else 0.0,
            s_next=_dummy_state(0.05 * (i + 1)),
            terminal=(i == length - 1),
        )
        for i in range(length)
    )
    outcome = TrialOutcome(
        crashed=crashed,
        timed_out=False,
        agent_completion_time=None if crashed else terminal_time,
        human_completion_time=None if crashed else terminal_time,
    )
    return EpisodeTrace(
        transitions=transitions,
        outcome=outcome,
        block_index=0,
        trial_index=0,
        condition=MusicCondition.HAPPY,
        terminal_time=terminal_time,
    )


def check_return_backprop(n_episodes: int = 1000, seed: int = 7) -> CheckResult:
    from .mdp import terminal_reward

    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    params = RewardParams()
    worst = 0.0
    for _ in range(n_episodes):
        length = int(rng.integers(1, 7))
        terminal_time = float(rng.uniform(0.0, 60.0))
        crashed = bool(rng.random() < 0.3)
        episode = make_episode(False, length, terminal_time, crashed)
        spread = backpropagate_returns(episode, params)
        r_terminal = terminal_reward(terminal_time, crashed, params)
        big_t = length - 1
        for i, tr in enumerate(spread.transitions):
            expected = params.gamma ** (big_t - i) * r_terminal  # closed-form oracle
            err = abs(tr.r - expected)
            worst = max(worst, err)
            if err >= 1e-12:
                return CheckResult(
                    "return_backprop",
                    False,
                    f"|r - closed form| = {err:.3e} at index {i}",
                    time.perf_counter() - start,
                )
        for i in range(len(spread.transitions) - 1):
            if spread.transitions[i].r != params.gamma * spread.transitions[i + 1].r:
                return CheckResult(
                    "return_backprop",
                    False,
                    f"telescoping identity broken at index {i}",
                    time.perf_counter() - start,
                )
    return CheckResult(
        "return_backprop",
        True,
        f"{n_episodes} episodes, worst closed-form error {worst:.2e}",
        time.perf_counter() - start,
    )


# --------------------------------------------------------------------------
# 3. Collision detection vs grid-sampling oracle
# --------------------------------------------------------------------------

def grid_overlap_oracle(
    agent_progress: float, human_progress: float, cfg: WorldConfig, n: int = 200
) -> bool:
    """Point-sample the agent rectangle on an n x n grid; overlap iff any
    sampled point falls strictly inside the human rectangle."""
    c = cfg.intersection_center
    half_w = cfg.vehicle_width / 2.0
    length = cfg.vehicle_length
    ax0, ax1 = agent_progress, agent_progress + length
    ay0, ay1 = c - half_w, c + half_w
    hx0, hx1 = c - half_w, c + half_w
    hy0, hy1 = human_progress, human_progress + length
    xs = ax0 + (np.arange(n) + 0.5) * (ax1 - ax0) / n
    ys = ay0 + (np.arange(n) + 0.5) * (ay1 - ay0) / n
    return bool(((xs > hx0) & (xs < hx1)).any() and ((ys > hy0) & (ys < hy1)).any())


def _edge_gap(agent_progress: float, human_progress: float, cfg: WorldConfig) -> float:
    """Smallest |separation| between any facing rectangle edges."""
    c = cfg.intersection_center
    half_w = cfg.vehicle_width / 2.0
    length = cfg.vehicle_length
    gaps = [
        abs(agent_progress - (c + half_w)),
        abs(agent_progress + length - (c - half_w)),
        abs(human_progress - (c + half_w)),
        abs(human_progress + length - (c - half_w)),
    ]
    return min(gaps)


def check_collision_oracle(
    n_pairs: int = 1000, seed: int = 11, boundary_band: float = 1e-9
) -> CheckResult:
    cfg = WorldConfig()
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    skipped = 0
    for i in range(n_pairs):
        # Quantized placements keep true overlaps wider than the oracle's
        # grid cell; sub-cell slivers cannot occur off the boundary band.
        agent_p = int(rng.integers(0, 1001)) / 1000.0
        human_p = int(rng.integers(0, 1001)) / 1000.0
        if i % 5 == 0:  # bias toward the interesting near-center region
            agent_p = 0.38 + int(rng.integers(0, 181)) / 1000.0
            human_p = 0.38 + int(rng.integers(0, 181)) / 1000.0
        if _edge_gap(agent_p, human_p, cfg) < boundary_band:
            skipped += 1
            continue
        got = detect_collision(
            VehicleState(progress=agent_p), VehicleState(progress=human_p), cfg
        )
        expected = grid_overlap_oracle(agent_p, human_p, cfg)
        if got != expected:
            return CheckResult(
                "collision_oracle",
                False,
                f"disagreement at agent={agent_p}, human={human_p}: "
                f"detect={got}, oracle={expected}",
                time.perf_counter() - start,
            )
    return CheckResult(
        "collision_oracle",
        True,
        f"{n_pairs} pairs agree ({skipped} within boundary band skipped)",
        time.perf_counter() - start,
    )


# --------------------------------------------------------------------------
# 4. Toy-MDP Q convergence vs exact value iteration
# --------------------------------------------------------------------------

# Two sequential decisions, three actions each, deterministic terminal-only
# reward R[first][second]. Rows sum to zero so the return-backprop training
# target for the first decision has the same fixed point as value iteration;
# magnitudes stay small because single-sample SGD's steady-state jitter
# scales with the per-row reward variance.
TOY_REWARDS = (
    (0.4, 0.0, -0.4),
    (0.3, 0.1, -0.4),
    (0.5, -0.1, -0.4),
)
TOY_GAMMA = 0.9


def _toy_state(kind: str, j: int = 0) -> StateVector:
    base = np.zeros(9)
    base[8] = 1.0  # fixed music flag; condition is constant in the toy task
    if kind == "root":
        base[0] = -1.0
        base[1] = -1.0
        base[4] = -1.0
    elif kind == "mid":
        base[0] = -0.4 + 0.4 * j
        base[2] = 0.5
        base[4] = -0.6
    else:  # terminal
        base[0] = 1.0
        base[1] = 1.0
        base[5] = 1.0
        base[6] = 1.0
    return StateVector(features=base, aware=True)


def toy_history() -> ReplayHistory:
    history = ReplayHistory()
    outcome = TrialOutcome(
        crashed=False, timed_out=False, agent_completion_time=1.0, human_completion_time=1.0
    )
    root = _toy_state("root")
    terminal = _toy_state("terminal")
    for j in range(3):
        mid = _toy_state("mid", j)
        for k in range(3):
            r_final = TOY_REWARDS[j][k]
            transitions = (
                Transition(s=root, a=Action(j), r=TOY_GAMMA * r_final, s_next=mid, terminal=False),
                Transition(s=mid, a=Action(k), r=r_final, s_next=terminal, terminal=True),
            )
            history.append(
                EpisodeTrace(
                    transitions=transitions,
                    outcome=outcome,
                    block_index=0,
                    trial_index=3 * j + k,
                    condition=MusicCondition.HAPPY,
                    terminal_time=1.0,
                )
            )
    return history


def toy_value_iteration() -> tuple[np.ndarray, np.ndarray]:
    """Exact Q* for the toy MDP: reward only at the terminal transition.

    Q*(mid_j, k) = R[j][k]; Q*(root, j) = gamma * max_k Q*(mid_j, k).
    Computed by plain value iteration over the 4-state MDP.
    """
    q_mid = np.zeros((3, 3))
    q_root = np.zeros(3)
    for _ in range(50):
        for j in range(3):
            for k in range(3):
                q_mid[j, k] = TOY_REWARDS[j][k]  # terminal successor has value 0
        for j in range(3):
            q_root[j] = 0.0 + TOY_GAMMA * q_mid[j].max()
    return q_root, q_mid


def toy_q_error(pair: ModelPair) -> float:
    q_root_star, q_mid_star = toy_value_iteration()
    worst = 0.0
    for network, take in ((pair.unaware, lambda sv: sv.features[:8]), (pair.aware, lambda sv: sv.features)):
        q_root = forward(network, take(_toy_state("root")))
        worst = max(worst, float(np.max(np.abs(q_root - q_root_star))))
        for j in range(3):
            q_mid = forward(network, take(_toy_state("mid", j)))
            worst = max(worst, float(np.max(np.abs(q_mid - q_mid_star[j]))))
    return worst


def check_toy_mdp(
    calls: int = 500, tol: float = 0.05, seed: int = 5, lr0: float = 0.02
) -> CheckResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    pair = new_model_pair(rng)
    history = toy_history()
    params = RewardParams(gamma=TOY_GAMMA)
    for call in range(calls):
        lr = lr0 / (1.0 + call / 3.0)  # annealed so SGD noise decays
        train_after_trial(pair, history, params, lr, rng)
    err = toy_q_error(pair)
    elapsed = time.perf_counter() - start
    return CheckResult(
        "toy_mdp_convergence",
        err < tol,
        f"max |Q - Q*| = {err:.4f} after {calls} training calls ({elapsed:.1f}s)",
        elapsed,
    )


# --------------------------------------------------------------------------
# 5. Mann-Whitney vs exhaustive rank-assignment enumeration
# --------------------------------------------------------------------------

def mann_whitney_enumeration_oracle(a: list[float], b: list[float]) -> tuple[float, float]:
    """Brute-force U and two-sided p over all C(n+m, n) group assignments."""
    pooled = a + b
    n, total_n = len(a), len(a) + len(b)
    wins = np.zeros((total_n, total_n))
    for i in range(total_n):
        for j in range(total_n):
            if pooled[i] > pooled[j]:
                wins[i, j] = 1.0
            elif pooled[i] == pooled[j]:
                wins[i, j] = 0.5
    combos = list(itertools.combinations(range(total_n), n))
    masks = np.zeros((len(combos), total_n), dtype=bool)
    for row, combo in enumerate(combos):
        masks[row, list(combo)] = True
    u_all = np.einsum("ci,ij,cj->c", masks, wins, ~masks)
    u_obs = float(
        sum(
            1.0 if x > y else (0.5 if x == y else 0.0)
            for x in a
            for y in b
        )
    )
    center = len(a) * len(b) / 2.0
    p = float(np.mean(np.abs(u_all - center) >= abs(u_obs - center) - 1e-12))
    return u_obs, p


def check_mann_whitney(max_n: int = 8, seed: int = 3) -> CheckResult:
    from .stats import mann_whitney_u

    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = 0.0
    cases = 0
    for n in range(1, max_n + 1):
        for m in range(1, max_n + 1):
            samples = [
                (list(rng.normal(size=n)), list(rng.normal(size=m))),
                (
                    [float(v) for v in rng.integers(0, 3, size=n)],  # heavy ties
                    [float(v) for v in rng.integers(0, 3, size=m)],
                ),
            ]
            for a, b in samples:
                got = mann_whitney_u(a, b)
                u_oracle, p_oracle = mann_whitney_enumeration_oracle(a, b)
                if abs(got.statistic - u_oracle) > 1e-12 or abs(got.p_value - p_oracle) > 1e-12:
                    return CheckResult(
                        "mann_whitney_enumeration",
                        False,
                        f"n={n} m={m}: got (U={got.statistic}, p={got.p_value}), "
                        f"oracle (U={u_oracle}, p={p_oracle})",
                        time.perf_counter() - start,
                    )
                worst = max(worst, abs(got.p_value - p_oracle))
                cases += 1
    return CheckResult(
        "mann_whitney_enumeration",
        True,
        f"{cases} sample pairs across n,m <= {max_n}, worst |dp| = {worst:.2e}",
        time.perf_counter() - start,
    )


def run_all_checks(fast: bool = False) -> list[CheckResult]:
    if fast:
        return [
            check_gradients(n_samples=10),
            check_return_backprop(n_episodes=100),
            check_collision_oracle(n_pairs=200),
            check_toy_mdp(calls=60),
            check_mann_whitney(max_n=5),
        ]
    return [
        check_gradients(),
        check_return_backprop(),
        check_collision_oracle(),
        check_toy_mdp(),
        check_mann_whitney(),
    ]
