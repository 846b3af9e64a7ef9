"""Seeded training runs, brute-force baselines, and campaign artifacts.

A trial wires one environment to one network and runs the four-step
loop: read action values at the current state, act, read the next
state's values to build the target score, then contrast-train toward the
label vector. Updates are batched; gates are constant within a batch
window, which lets the free solve at a given state be cached until the
next batch application.

Oracles are independent of the learned system: the four-state task is
small enough to enumerate all 256 deterministic strategies, and the grid
task's optimal up-or-left policy class is evaluated exactly and
cross-checked against finite-horizon dynamic programming.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path

import numpy as np

from .circuit import (
    Boundary,
    DeviceModel,
    NotConvergedError,
    SolverConfig,
    Topology,
    solve_equilibrium,
)
from .envs import Environment, FourStateMDP, GridNav
from .learning import (
    ContrastPair,
    LearnConfig,
    UpdateBatch,
    accumulate,
    apply_batch,
    contrastive_value,
    local_deltas,
    nudged_targets,
)
from .qagent import AgentConfig, clamp_labels, epsilon_at, select_action, target_score
from .seeding import stream

__all__ = [
    "TrialConfig",
    "TrialRecord",
    "OracleReport",
    "TrialAbort",
    "log_bins",
    "run_trial",
    "greedy_policy",
    "enumerate_strategies_fourstate",
    "grid_policy_oracle",
    "occupancy_heatmap",
    "evaluate_policy_fourstate",
    "run_campaign",
]

# retried dampings after a failed solve; each rung gets 4x the iterations
FALLBACK_DAMPINGS = (0.5, 0.25, 0.125, 0.0625)


class TrialAbort(RuntimeError):
    """A trial died mid-run; carries the step and state for diagnosis."""

    def __init__(self, step: int, state, message: str):
        super().__init__(f"step {step}, state {state}: {message}")
        self.step = step
        self.state = state


@dataclass(frozen=True)
class TrialConfig:
    environment: Environment
    topology: Topology
    total_steps: int
    trial_seed: int
    model: DeviceModel
    solver: SolverConfig
    learn: LearnConfig
    agent: AgentConfig
    gate_init_mean: float = 1.5
    gate_init_std: float = 0.1
    reuse_free_solve: bool = True

    def __post_init__(self):
        if self.total_steps < self.learn.batch_size:
            raise ValueError(
                f"total_steps {self.total_steps} below batch_size "
                f"{self.learn.batch_size}"
            )


@dataclass
class TrialRecord:
    trial_seed: int
    steps: np.ndarray
    states: list
    actions: np.ndarray
    rewards: np.ndarray
    epsilons: np.ndarray
    targets: np.ndarray
    contrastive_values: np.ndarray
    final_gates: np.ndarray
    policy: dict
    bins: list  # (start, end, mean reward) triples


@dataclass(frozen=True)
class OracleReport:
    values: tuple  # ((strategy tuple, value), ...) in enumeration order
    best_value: float
    worst_value: float
    best_strategy: tuple


def log_bins(total_steps: int, min_size: int = 10, per_decade: int = 10) -> list:
    """Logarithmically spaced step-interval boundaries.

    Boundaries partition [0, total_steps); every bin is at least min_size
    steps wide and widths never decrease, so late-training averages pool
    more samples.
    """
    if total_steps < min_size:
        raise ValueError(f"total_steps {total_steps} below min bin size {min_size}")
    ratio = 10.0 ** (1.0 / per_decade)
    bounds = [0]
    prev_width = 0
    cand = float(min_size)
    while cand < total_steps:
        edge = int(round(cand))
        width = edge - bounds[-1]
        if width >= min_size and width >= prev_width:
            bounds.append(edge)
            prev_width = width
        cand *= ratio
    # close the partition, merging a too-small trailing bin
    last_width = total_steps - bounds[-1]
    if last_width >= max(min_size, prev_width):
        bounds.append(total_steps)
    else:
        bounds[-1] = total_steps
        if len(bounds) == 1:
            bounds.insert(0, 0)
    return bounds


def _solve_robust(topology, gates, boundary, model, cfg):
    """Solve, retrying with reduced damping if the sweep oscillates."""
    try:
        return solve_equilibrium(topology, gates, boundary, model, cfg)
    except NotConvergedError as exc:
        last = exc
    for damping in FALLBACK_DAMPINGS:
        if damping >= cfg.damping:
            continue
        retry = replace(cfg, damping=damping, max_iterations=cfg.max_iterations * 4)
        try:
            return solve_equilibrium(topology, gates, boundary, model, retry)
        except NotConvergedError as exc:
            last = exc
    raise last


class _FreeSolver:
    """State-keyed cache of free equilibria, valid while gates are fixed."""

    def __init__(self, cfg: TrialConfig):
        self.cfg = cfg
        self.cache = {}

    def solve(self, state, gates):
        if self.cfg.reuse_free_solve and state in self.cache:
            return self.cache[state]
        boundary = Boundary(
            tuple(
                zip(
                    self.cfg.topology.input_nodes,
                    self.cfg.environment.encode(state),
                )
            )
        )
        eq = _solve_robust(
            self.cfg.topology, gates, boundary, self.cfg.model, self.cfg.solver
        )
        if self.cfg.reuse_free_solve:
            self.cache[state] = eq
        return eq

    def invalidate(self):
        self.cache.clear()


def _contrast_from_free(cfg: TrialConfig, gates, state, free_eq, labels):
    """Clamped twin of an already-solved free state."""
    free_outputs = free_eq.node_voltages[list(cfg.topology.output_nodes)]
    targets = nudged_targets(free_outputs, labels, cfg.learn.eta)
    boundary = Boundary(
        tuple(zip(cfg.topology.input_nodes, cfg.environment.encode(state)))
        + tuple(zip(cfg.topology.output_nodes, targets.tolist()))
    )
    clamped = _solve_robust(cfg.topology, gates, boundary, cfg.model, cfg.solver)
    return ContrastPair(
        free=free_eq,
        clamped=clamped,
        labels=tuple(np.asarray(labels, dtype=float).tolist()),
        nudged_targets=tuple(targets.tolist()),
    )


def run_trial(cfg: TrialConfig) -> TrialRecord:
    """One seeded training run of the four-step loop."""
    env = cfg.environment
    topology = cfg.topology
    n_steps = cfg.total_steps

    gate_rng = stream(cfg.trial_seed, "gate_init")
    action_rng = stream(cfg.trial_seed, "action")
    noise_rng = stream(cfg.trial_seed, "reward_noise")
    reset_rng = stream(cfg.trial_seed, "reset")

    gates = np.clip(
        gate_rng.normal(cfg.gate_init_mean, cfg.gate_init_std, topology.edge_count),
        cfg.learn.gate_min,
        cfg.learn.gate_max,
    )
    free_solver = _FreeSolver(cfg)
    batch = UpdateBatch.empty(topology.edge_count)
    out_nodes = list(topology.output_nodes)

    states = []
    actions = np.zeros(n_steps, dtype=np.int64)
    rewards = np.zeros(n_steps)
    epsilons = np.zeros(n_steps)
    targets = np.zeros(n_steps)
    cvalues = np.zeros(n_steps)

    state = env.reset(reset_rng)
    for t in range(n_steps):
        if env.reset_period is not None and t > 0 and t % env.reset_period == 0:
            state = env.reset(reset_rng)
        epsilon = epsilon_at(cfg.agent, t, n_steps)
        try:
            free_eq = free_solver.solve(state, gates)
            values = free_eq.node_voltages[out_nodes]
            action = select_action(values, epsilon, action_rng)
            next_state, reward = env.step(state, action, noise_rng)
            next_values = free_solver.solve(next_state, gates).node_voltages[out_nodes]
            score = target_score(reward, next_values, cfg.agent.gamma)
            labels = clamp_labels(values, action, score)
            pair = _contrast_from_free(cfg, gates, state, free_eq, labels)
        except NotConvergedError as exc:
            raise TrialAbort(t, state, str(exc)) from exc
        accumulate(batch, local_deltas(pair, cfg.learn.alpha))

        states.append(state)
        actions[t] = action
        rewards[t] = reward
        epsilons[t] = epsilon
        targets[t] = score
        cvalues[t] = contrastive_value(pair)

        if batch.steps_accumulated == cfg.learn.batch_size:
            gates = apply_batch(gates, batch, cfg.learn)
            free_solver.invalidate()
        state = next_state

    if batch.steps_accumulated > 0:
        gates = apply_batch(gates, batch, cfg.learn)  # warns: partial batch

    policy = greedy_policy(cfg, gates)
    bounds = log_bins(n_steps)
    bins = [
        (lo, hi, float(rewards[lo:hi].mean()))
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
    return TrialRecord(
        trial_seed=cfg.trial_seed,
        steps=np.arange(n_steps, dtype=np.int64),
        states=states,
        actions=actions,
        rewards=rewards,
        epsilons=epsilons,
        targets=targets,
        contrastive_values=cvalues,
        final_gates=gates,
        policy=policy,
        bins=bins,
    )


def greedy_policy(cfg: TrialConfig, gates) -> dict:
    """Greedy action per state at fixed gates (ties to lowest index)."""
    env = cfg.environment
    out_nodes = list(cfg.topology.output_nodes)
    solver = _FreeSolver(cfg)
    policy = {}
    for state in env.all_states():
        values = solver.solve(state, gates).node_voltages[out_nodes]
        policy[state] = int(np.argmax(values))
    return policy


def evaluate_policy_fourstate(env: FourStateMDP, policy, eval_steps: int, rng) -> float:
    """Mean reward of one deterministic strategy, simulated with noise."""
    state = 0
    total = 0.0
    for _ in range(eval_steps):
        state, reward = env.step(state, policy[state], rng)
        total += reward
    return total / eval_steps


def enumerate_strategies_fourstate(
    env: FourStateMDP, eval_steps: int = 10_000, oracle_seed: int = 0
) -> OracleReport:
    """Simulate every deterministic strategy (4^4 = 256) with reward noise."""
    rng = stream(oracle_seed, "oracle")
    entries = []
    for strategy in product(range(4), repeat=4):
        value = evaluate_policy_fourstate(env, strategy, eval_steps, rng)
        entries.append((strategy, value))
    values = [v for _, v in entries]
    best_index = int(np.argmax(values))
    return OracleReport(
        values=tuple(entries),
        best_value=float(max(values)),
        worst_value=float(min(values)),
        best_strategy=entries[best_index][0],
    )


def _grid_episode_total(env: GridNav, policy, start, horizon: int) -> float:
    state = start
    total = 0.0
    for _ in range(horizon):
        state, reward = env.step(state, policy[state])
        total += reward
    return total


def _grid_policy_value(env: GridNav, policy) -> float:
    """Exact mean per-step reward under uniform resets every reset_period."""
    horizon = env.reset_period
    starts = list(env.all_states())
    total = sum(_grid_episode_total(env, policy, s, horizon) for s in starts)
    return total / (len(starts) * horizon)


def _grid_dp_value(env: GridNav) -> tuple:
    """Finite-horizon optimal value by backward induction; independent of
    the policy-class enumeration above."""
    horizon = env.reset_period
    states = list(env.all_states())
    value = {s: 0.0 for s in states}
    first_actions = {}
    for k in range(horizon):
        new_value = {}
        for s in states:
            returns = []
            for a in range(env.action_count):
                nxt, reward = env.step(s, a)
                returns.append(reward + value[nxt])
            new_value[s] = max(returns)
            if k == horizon - 1:
                best = max(returns)
                first_actions[s] = tuple(
                    a for a in range(env.action_count) if returns[a] == best
                )
        value = new_value
    mean_per_step = sum(value.values()) / (len(states) * horizon)
    return mean_per_step, first_actions


UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3


def optimal_grid_actions(env: GridNav, state) -> tuple:
    """The up-or-left moves that actually approach the target (walls
    excluded); empty for the target cell, where anything goes."""
    row, col = state
    if state == env.target:
        return ()
    moves = []
    if row > 0:
        moves.append(UP)
    if col > 0:
        moves.append(LEFT)
    return tuple(moves)


def is_optimal_grid_policy(env: GridNav, policy) -> bool:
    return all(
        policy[s] in optimal_grid_actions(env, s)
        for s in env.all_states()
        if s != env.target
    )


def grid_policy_oracle(env: GridNav) -> OracleReport:
    """Evaluate the optimal up-or-left policy class exactly, cross-check
    with dynamic programming, and add adversarial reference policies."""
    states = list(env.all_states())
    choice_lists = []
    for s in states:
        moves = optimal_grid_actions(env, s)
        choice_lists.append(moves if moves else (UP,))
    entries = []
    for combo in product(*choice_lists):
        policy = dict(zip(states, combo))
        entries.append((combo, _grid_policy_value(env, policy)))

    class_values = [v for _, v in entries]
    best_value = max(class_values)

    dp_value, dp_actions = _grid_dp_value(env)
    if abs(dp_value - best_value) > 1e-12:
        raise AssertionError(
            f"policy-class value {best_value!r} disagrees with dynamic "
            f"programming {dp_value!r}"
        )
    for s in states:
        if s == env.target:
            continue
        if not set(dp_actions[s]) & set(optimal_grid_actions(env, s)):
            raise AssertionError(f"DP optimal action at {s} is not up-or-left")

    for action in (DOWN, RIGHT, UP, LEFT):
        policy = {s: action for s in states}
        entries.append(
            (tuple(policy[s] for s in states), _grid_policy_value(env, policy))
        )
    values = [v for _, v in entries]
    best_index = int(np.argmax(values))
    return OracleReport(
        values=tuple(entries),
        best_value=float(best_value),
        worst_value=float(min(values)),
        best_strategy=entries[best_index][0],
    )


def occupancy_for_policy(env: GridNav, policy, steps: int, rng) -> np.ndarray:
    """Time fraction per cell under a fixed policy with periodic resets."""
    counts = np.zeros((env.height, env.width))
    state = env.reset(rng)
    for t in range(steps):
        if t > 0 and t % env.reset_period == 0:
            state = env.reset(rng)
        counts[state] += 1
        state, _ = env.step(state, policy[state])
    return counts / steps


def occupancy_heatmap(
    env: GridNav,
    cfg: TrialConfig,
    gates,
    steps: int = 10_000,
    eval_seed: int = 0,
) -> np.ndarray:
    """Time fraction per cell under the greedy policy of the given gates."""
    policy = greedy_policy(cfg, gates)
    return occupancy_for_policy(env, policy, steps, stream(eval_seed, "eval"))


def _state_str(state) -> str:
    if isinstance(state, tuple):
        return "-".join(str(x) for x in state)
    return str(state)


def _write_trial_files(trial_dir: Path, record: TrialRecord):
    trial_dir.mkdir(parents=True, exist_ok=True)
    with open(trial_dir / "steps.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "state", "action", "reward", "epsilon", "target",
             "contrastive_value"]
        )
        for i in range(len(record.steps)):
            writer.writerow(
                [
                    int(record.steps[i]),
                    _state_str(record.states[i]),
                    int(record.actions[i]),
                    float(record.rewards[i]),
                    float(record.epsilons[i]),
                    float(record.targets[i]),
                    float(record.contrastive_values[i]),
                ]
            )
    with open(trial_dir / "binned.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_start", "bin_end", "mean_reward"])
        for lo, hi, mean in record.bins:
            writer.writerow([lo, hi, mean])
    payload = {
        "trial_seed": record.trial_seed,
        "gates": [float(g) for g in record.final_gates],
        "policy": {_state_str(s): int(a) for s, a in record.policy.items()},
    }
    with open(trial_dir / "gates.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_heatmap(path: Path, heatmap: np.ndarray):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in heatmap:
            writer.writerow([float(x) for x in row])


def _write_oracle_files(out_dir: Path, report: OracleReport):
    with open(out_dir / "oracle.json", "w") as fh:
        json.dump(
            {
                "best_value": report.best_value,
                "worst_value": report.worst_value,
                "best_strategy": list(report.best_strategy),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    with open(out_dir / "oracle_strategies.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "mean_reward"])
        for strategy, value in report.values:
            writer.writerow(["".join(str(a) for a in strategy), value])


def _run_trial_worker(cfg: TrialConfig):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return run_trial(cfg)
    except TrialAbort as exc:
        return exc


def run_campaign(
    base_cfg: TrialConfig,
    seed_list,
    out_dir=None,
    parallel: bool = True,
    oracle_seed: int = 0,
    eval_steps: int = 10_000,
) -> dict:
    """Run seeded trials, compare to the environment's oracle, and write
    campaign artifacts. Serial and parallel execution are byte-identical
    because results are collected and written in seed-list order."""
    seeds = list(seed_list)
    if len(set(seeds)) != len(seeds):
        raise ValueError("seed list contains duplicates")
    env = base_cfg.environment
    configs = [replace(base_cfg, trial_seed=seed) for seed in seeds]

    if parallel:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_run_trial_worker, configs))
    else:
        results = [_run_trial_worker(cfg) for cfg in configs]

    if isinstance(env, FourStateMDP):
        oracle = enumerate_strategies_fourstate(
            env, eval_steps=eval_steps, oracle_seed=oracle_seed
        )
    elif isinstance(env, GridNav):
        oracle = grid_policy_oracle(env)
    else:
        raise TypeError(f"no oracle for environment {type(env).__name__}")

    rows = []
    heatmaps = {}
    for seed, result in zip(seeds, results):
        if isinstance(result, TrialAbort):
            rows.append({"seed": seed, "failed": True, "error": str(result)})
            continue
        row = {
            "seed": seed,
            "failed": False,
            "policy": {_state_str(s): int(a) for s, a in result.policy.items()},
            "final_bin_mean": result.bins[-1][2],
        }
        if isinstance(env, FourStateMDP):
            strategy = tuple(result.policy[s] for s in range(4))
            row["matches_oracle_best"] = strategy == oracle.best_strategy
            row["policy_value"] = evaluate_policy_fourstate(
                env, strategy, eval_steps, stream(oracle_seed, "eval")
            )
        else:
            optimal = is_optimal_grid_policy(env, result.policy)
            row["is_optimal_policy"] = optimal
            heatmap = occupancy_heatmap(
                env, replace(base_cfg, trial_seed=seed), result.final_gates,
                steps=eval_steps, eval_seed=seed,
            )
            heatmaps[seed] = heatmap
            row["target_occupancy"] = float(heatmap[env.target])
        rows.append(row)

    succeeded = [r for r in rows if not r["failed"]]
    aggregate = {
        "n_trials": len(seeds),
        "n_failed": sum(r["failed"] for r in rows),
        "oracle_best_value": oracle.best_value,
        "oracle_worst_value": oracle.worst_value,
        "oracle_best_strategy": list(oracle.best_strategy),
        "trials": rows,
    }
    if succeeded:
        aggregate["mean_final_bin_reward"] = float(
            np.mean([r["final_bin_mean"] for r in succeeded])
        )
    if isinstance(env, FourStateMDP):
        aggregate["n_matching_oracle_best"] = sum(
            r.get("matches_oracle_best", False) for r in succeeded
        )
    else:
        aggregate["n_optimal_policies"] = sum(
            r.get("is_optimal_policy", False) for r in succeeded
        )

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_oracle_files(out_dir, oracle)
        if isinstance(env, FourStateMDP):
            with open(out_dir / "reward_table.json", "w") as fh:
                json.dump(
                    {
                        "table_seed": env.table_seed,
                        "noise_std": env.noise_std,
                        "reward_table": [
                            [float(x) for x in row] for row in env.reward_table
                        ],
                    },
                    fh,
                    indent=2,
                    sort_keys=True,
                )
                fh.write("\n")
        for seed, result in zip(seeds, results):
            if isinstance(result, TrialAbort):
                continue
            trial_dir = out_dir / "trials" / f"trial_{seed}"
            _write_trial_files(trial_dir, result)
            if seed in heatmaps:
                _write_heatmap(trial_dir / "heatmap.csv", heatmaps[seed])
        _write_curves(out_dir / "curves.csv", seeds, results)
        with open(out_dir / "aggregate.json", "w") as fh:
            json.dump(aggregate, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return aggregate


def _write_curves(path: Path, seeds, results):
    ok = [
        (seed, res)
        for seed, res in zip(seeds, results)
        if not isinstance(res, TrialAbort)
    ]
    if not ok:
        return
    bins = ok[0][1].bins
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["bin_start", "bin_end"]
            + [f"trial_{seed}" for seed, _ in ok]
            + ["mean"]
        )
        for i, (lo, hi, _) in enumerate(bins):
            per_trial = [res.bins[i][2] for _, res in ok]
            writer.writerow([lo, hi] + per_trial + [float(np.mean(per_trial))])
