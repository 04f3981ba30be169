"""Finite-N agent populations on graphon-sampled interaction graphs.

Agents are stored 0-based; agent ``j`` sits at position ``(j + 1) / N``.
Each step every agent sees

    mu_i = (1/N) * sum_j xi_ij * delta(s_j)        (self-loop included)

computed from the frozen time-t states, samples an action from the policy of
its assigned block, collects ``r(s_i, mu_i, a_i)`` and moves according to
``P(. | s_i, mu_i, a_i)``.  All agents update synchronously.

Randomness of one episode comes from a single generator seeded with the
episode seed, consumed in a fixed order: the C2 edge draw (``N x N``
uniforms, upper triangle used), ``N`` uniforms for the initial states, then
``T x 2 x N`` uniforms for actions and transitions.  Episodes are simulated in
vectorised batches, and ``run_episode(seed)`` reproduces the matching run of
:func:`monte_carlo`.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .env import EnvironmentSpec
from .graphon import COUPLINGS, Graphon, agent_positions, discretize, sample_edges
from .mfc import check_policy_ensemble, replicate, rollout
from .seeding import derive_seed

_CHUNK_BUDGET = 4_000_000


@dataclass
class PopulationState:
    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.intp)
        self.weights = np.asarray(self.weights, dtype=float)
        n = self.states.shape[0]
        if self.weights.shape != (n, n):
            raise ValueError(f"weights must be {n} x {n}, got {self.weights.shape}")
        if not np.array_equal(self.weights, self.weights.T):
            raise ValueError("interaction weights must be symmetric")
        if self.weights.size and (self.weights.min() < 0.0 or self.weights.max() > 1.0):
            raise ValueError("interaction weights must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.states.shape[0]


def empirical_neighborhood(pop: PopulationState, i: int, n_states: int) -> np.ndarray:
    """Neighbourhood measure of agent ``i`` (0-based)."""
    if not 0 <= i < pop.n:
        raise IndexError(f"agent index {i} out of range for {pop.n} agents")
    if pop.states.size and (pop.states.min() < 0 or pop.states.max() >= n_states):
        raise ValueError("agent states out of range")
    return np.bincount(pop.states, weights=pop.weights[i], minlength=n_states) / pop.n


def deploy_policy(pi_or_blocks, n: int) -> np.ndarray:
    """Block index of every agent: the anchor ``(m+1)/M`` nearest to the
    agent position ``(i+1)/N``, ties to the smaller block.  Exact integer
    arithmetic on ``|i*M - m*N|``."""
    m = pi_or_blocks if isinstance(pi_or_blocks, (int, np.integer)) else len(pi_or_blocks)
    if n < 1 or m < 1:
        raise ValueError("need at least one agent and one block")
    i = np.arange(1, n + 1, dtype=np.int64)[:, None]
    k = np.arange(1, m + 1, dtype=np.int64)[None, :]
    return np.argmin(np.abs(i * m - k * n), axis=1)


@dataclass
class EpisodeResult:
    step_rewards: np.ndarray  # population-average reward per step
    total: float
    seed: int
    states: np.ndarray | None = None  # (T + 1, N) when traced

    def trace_csv(self, n_states: int, header_lines: Iterable[str] = ()) -> str:
        if self.states is None:
            raise ValueError("episode was not traced")
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mean_reward"] + [f"count_{s}" for s in range(n_states)])
        for t, st in enumerate(self.states):
            r = format(self.step_rewards[t], ".17g") if t < len(self.step_rewards) else ""
            w.writerow([t, r] + np.bincount(st, minlength=n_states).tolist())
        return buf.getvalue()


@dataclass
class MonteCarloSummary:
    runs: int
    mean: float
    std: float
    totals: np.ndarray
    seeds: list[int] = field(default_factory=list)

    @classmethod
    def from_totals(cls, totals, seeds=()):
        totals = np.asarray(totals, dtype=float)
        return cls(len(totals), float(np.mean(totals)), float(np.std(totals)), totals, list(seeds))

    @property
    def stderr(self) -> float:
        return self.std / np.sqrt(self.runs)


class _Coupling:
    """Interaction structure shared by a batch of runs."""

    def __init__(self, graphon: Graphon, n: int, mode: str, fixed_weights=None):
        self.n = n
        self.mode = mode
        self.dense = None
        self.labels = None
        if mode == "C2":
            self.dense = fixed_weights
            return
        structure = graphon.block_structure(agent_positions(n))
        if structure is None:
            self.dense = sample_edges(graphon, n, "C1")
        else:
            self.labels, self.class_weights = structure
            self.membership = np.eye(self.class_weights.shape[0])[self.labels].T  # (C, N)

    @property
    def per_run(self) -> bool:
        return self.mode == "C2" and self.dense is None

    def measures(self, onehot, batch_weights=None):
        if batch_weights is not None:
            return batch_weights @ onehot / self.n
        if self.dense is not None:
            return self.dense @ onehot / self.n
        counts = self.membership @ onehot  # (R, C, S)
        return (self.class_weights @ counts / self.n)[:, self.labels]


def _validate(env, graphon, n, mode, pi, mu0, horizon, reward_mode):
    if mode not in COUPLINGS:
        raise ValueError(f"mode must be one of {COUPLINGS}, got {mode!r}")
    if reward_mode not in ("episode", "discounted"):
        raise ValueError(f"reward_mode must be 'episode' or 'discounted', got {reward_mode!r}")
    if int(n) != n or n < 1:
        raise ValueError("agent count must be a positive integer")
    if int(horizon) != horizon or horizon < 1:
        raise ValueError("horizon must be a positive integer")
    pi = check_policy_ensemble(pi, None, env.n_states, env.n_actions)
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.shape != (env.n_states,) or mu0.min() < 0 or abs(mu0.sum() - 1.0) > 1e-12:
        raise ValueError("mu0 must be a probability vector over the states")
    return pi, mu0


def _inverse_cdf(u, probs):
    """Index of the first cumulative probability above ``u``."""
    cdf = np.cumsum(probs, axis=-1)
    return np.minimum((u[..., None] >= cdf).sum(axis=-1), probs.shape[-1] - 1)


def _simulate_batch(env, graphon, coupling, agent_pi, mu0, horizon, seeds, discount, trace=False):
    n = coupling.n
    S = env.n_states
    R = len(seeds)
    init_u = np.empty((R, n))
    step_u = np.empty((R, horizon, 2, n))
    weights = np.empty((R, n, n)) if coupling.per_run else None
    for r, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        if weights is not None:
            weights[r] = sample_edges(graphon, n, "C2", rng)
        init_u[r] = rng.random(n)
        step_u[r] = rng.random((horizon, 2, n))

    eye = np.eye(S)
    agents = np.arange(n)
    rows = np.arange(R)[:, None]
    states = _inverse_cdf(init_u, mu0)
    history = [states] if trace else None
    step_rewards = np.empty((R, horizon))
    for t in range(horizon):
        nbh = coupling.measures(eye[states], weights)  # (R, N, S)
        flat = nbh.reshape(-1, S)
        actions = _inverse_cdf(step_u[:, t, 0], agent_pi[agents, states])
        rew = env.reward_table(flat).reshape(R, n, S, -1)[rows, agents, states, actions]
        step_rewards[:, t] = rew.mean(axis=1)
        p = env.transition_table(flat).reshape(R, n, S, -1, S)[rows, agents, states, actions]
        states = _inverse_cdf(step_u[:, t, 1], p)
        if trace:
            history.append(states)
    totals = (step_rewards * discount ** np.arange(horizon)).sum(axis=1)
    return step_rewards, totals, (np.stack(history, axis=1) if trace else None)


def _discount(env, reward_mode):
    return 1.0 if reward_mode == "episode" else env.discount


def run_episode(env: EnvironmentSpec, graphon: Graphon, n: int, mode: str, pi, mu0,
                horizon: int, seed: int, reward_mode: str = "episode",
                trace: bool = False, weights: np.ndarray | None = None) -> EpisodeResult:
    """One seeded episode of the deployed block policy.

    Under C2 the graph is drawn once from the episode generator unless a fixed
    realisation is passed in ``weights``.
    """
    pi, mu0 = _validate(env, graphon, n, mode, pi, mu0, horizon, reward_mode)
    coupling = _Coupling(graphon, int(n), mode, weights)
    agent_pi = pi[deploy_policy(pi, int(n))]
    rewards, totals, hist = _simulate_batch(env, graphon, coupling, agent_pi, mu0, int(horizon),
                                            [seed], _discount(env, reward_mode), trace)
    return EpisodeResult(rewards[0], float(totals[0]), int(seed), None if hist is None else hist[0])


def _chunk_size(n, horizon, env):
    per_run = max(n * n, 2 * horizon * n, n * env.n_states ** 2 * env.n_actions)
    return max(1, _CHUNK_BUDGET // per_run)


def monte_carlo(env: EnvironmentSpec, graphon: Graphon, n: int, mode: str, pi, mu0,
                horizon: int, runs: int, base_seed: int, reward_mode: str = "episode",
                fixed_graph: bool = False, workers: int = 1) -> MonteCarloSummary:
    """``runs`` episodes with seeds ``derive_seed(base_seed, run)``.

    With ``fixed_graph`` one C2 realisation (seeded by
    :func:`fixed_graph_seed`) is shared by all runs instead of being redrawn
    per run.
    """
    if int(runs) != runs or runs < 1:
        raise ValueError("runs must be a positive integer")
    pi, mu0 = _validate(env, graphon, n, mode, pi, mu0, horizon, reward_mode)
    n, horizon, runs = int(n), int(horizon), int(runs)
    fixed = None
    if fixed_graph and mode == "C2":
        fixed = sample_edges(graphon, n, "C2", fixed_graph_seed(base_seed))
    coupling = _Coupling(graphon, n, mode, fixed)
    agent_pi = pi[deploy_policy(pi, n)]
    seeds = [derive_seed(base_seed, r) for r in range(runs)]
    size = _chunk_size(n, horizon, env)
    chunks = [seeds[i:i + size] for i in range(0, runs, size)]
    disc = _discount(env, reward_mode)

    def work(chunk):
        return _simulate_batch(env, graphon, coupling, agent_pi, mu0, horizon, chunk, disc)[1]

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return MonteCarloSummary.from_totals(np.concatenate(parts), seeds)


def fixed_graph_seed(base_seed: int) -> int:
    """Seed of the shared graph when ``fixed_graph`` is requested; stream
    ``(0, 0)`` is never used by per-run seeds, which are single-index."""
    return derive_seed(base_seed, 0, 0)


@dataclass
class ConvergenceTable:
    rows: list[dict]
    slope: float

    def csv(self, header_lines: Iterable[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = ["N", "runs", "mc_mean", "mc_std", "gmfc_return", "gap"]
        w.writerow(cols)
        for row in self.rows:
            w.writerow([row["N"], row["runs"]] + [format(row[c], ".17g") for c in cols[2:]])
        w.writerow(["slope", "", "", "", "", format(self.slope, ".17g")])
        return buf.getvalue()

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r["gap"] for r in self.rows])

    @property
    def ns(self) -> np.ndarray:
        return np.array([r["N"] for r in self.rows])


def loglog_slope(ns: Sequence[float], gaps: Sequence[float]) -> float:
    """Least-squares slope of ``log gap`` against ``log N``; NaN if any gap is 0."""
    ns = np.asarray(ns, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if len(ns) < 2 or np.any(gaps <= 0):
        return float("nan")
    return float(np.polyfit(np.log(ns), np.log(gaps), 1)[0])


def block_return(env, graphon, pi, mu0, horizon, reward_mode="episode") -> float:
    """Block-model return of ``pi`` with ``mu0`` replicated in every block."""
    pi = np.asarray(pi, dtype=float)
    kernel = discretize(graphon, pi.shape[0])
    traj = rollout(replicate(mu0, kernel.m), pi, kernel, env, horizon, discount=_discount(env, reward_mode))
    return traj.discounted_return


def convergence_study(env: EnvironmentSpec, graphon: Graphon, pi, mu0, horizon: int,
                      n_list: Sequence[int], mode: str, runs: int, base_seed: int,
                      reward_mode: str = "episode", fixed_graph: bool = False,
                      workers: int = 1) -> ConvergenceTable:
    """Finite-N Monte Carlo means against the block-model return, per ``N``.

    The Monte Carlo base seed for ``N`` is ``derive_seed(base_seed, N)``.
    """
    n_list = [int(x) for x in n_list]
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be non-empty and strictly increasing")
    target = block_return(env, graphon, pi, mu0, horizon, reward_mode)
    rows = []
    for n in n_list:
        mc = monte_carlo(env, graphon, n, mode, pi, mu0, horizon, runs, derive_seed(base_seed, n),
                         reward_mode=reward_mode, fixed_graph=fixed_graph, workers=workers)
        rows.append(dict(N=n, runs=mc.runs, mc_mean=mc.mean, mc_std=mc.std,
                         gmfc_return=target, gap=abs(mc.mean - target)))
    return ConvergenceTable(rows, loglog_slope([r["N"] for r in rows], [r["gap"] for r in rows]))


__all__ = [
    "PopulationState", "empirical_neighborhood", "deploy_policy", "EpisodeResult",
    "MonteCarloSummary", "run_episode", "monte_carlo", "fixed_graph_seed",
    "ConvergenceTable", "loglog_slope", "block_return", "convergence_study",
]
