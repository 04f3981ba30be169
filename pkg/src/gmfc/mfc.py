"""Block graphon mean-field control as a deterministic MDP.

State: a distribution ensemble ``mu`` of shape ``(M, S)``, one state
distribution per block.  Action: a policy ensemble ``pi`` of shape
``(M, S, A)``.  Block ``m`` sees the neighbourhood measure
``(1/M) * sum_l W[m, l] * mu[l]`` (a sub-probability vector).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .env import MASS_TOL, PROB_TOL, EnvironmentSpec
from .graphon import BlockKernel


def check_distribution_ensemble(mu, n_states: int | None = None, tol: float = PROB_TOL) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 2:
        raise ValueError(f"distribution ensemble must have shape (M, S), got {mu.shape}")
    if n_states is not None and mu.shape[1] != n_states:
        raise ValueError(f"distribution ensemble has {mu.shape[1]} states, expected {n_states}")
    if mu.min() < 0.0 or np.abs(mu.sum(axis=1) - 1.0).max() > tol:
        raise ValueError("each block of a distribution ensemble must be a probability vector")
    return mu


def check_policy_ensemble(pi, n_blocks: int | None = None, n_states: int | None = None,
                          n_actions: int | None = None, tol: float = PROB_TOL) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 3:
        raise ValueError(f"policy ensemble must have shape (M, S, A), got {pi.shape}")
    for got, want, what in zip(pi.shape, (n_blocks, n_states, n_actions), ("blocks", "states", "actions")):
        if want is not None and got != want:
            raise ValueError(f"policy ensemble has {got} {what}, expected {want}")
    if pi.min() < 0.0 or np.abs(pi.sum(axis=2) - 1.0).max() > tol:
        raise ValueError("every (block, state) row of a policy ensemble must be a probability vector")
    return pi


def _check_inputs(mu, pi, kernel: BlockKernel, env: EnvironmentSpec):
    mu = check_distribution_ensemble(mu, env.n_states)
    if mu.shape[0] != kernel.m:
        raise ValueError(f"ensemble has {mu.shape[0]} blocks but kernel has {kernel.m}")
    pi = check_policy_ensemble(pi, kernel.m, env.n_states, env.n_actions)
    return mu, pi


def replicate(mu0, m: int) -> np.ndarray:
    """Copy a single state distribution into every one of ``m`` blocks."""
    mu0 = np.asarray(mu0, dtype=float)
    return np.repeat(mu0[None, :], m, axis=0)


def uniform_policy(m: int, env: EnvironmentSpec) -> np.ndarray:
    return np.full((m, env.n_states, env.n_actions), 1.0 / env.n_actions)


def constant_policy(m: int, env: EnvironmentSpec, action) -> np.ndarray:
    pi = np.zeros((m, env.n_states, env.n_actions))
    pi[..., env.action_index(action)] = 1.0
    return pi


def neighborhood_measures(mu, kernel: BlockKernel) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 2 or mu.shape[0] != kernel.m:
        raise ValueError(f"ensemble with shape {mu.shape} does not match a {kernel.m}-block kernel")
    return kernel.weights @ mu / kernel.m


def neighborhood_measure(mu, kernel: BlockKernel, m: int) -> np.ndarray:
    """The neighbourhood measure seen by block ``m`` (0-based)."""
    if not 0 <= m < kernel.m:
        raise ValueError(f"block index {m} out of range for {kernel.m} blocks")
    return neighborhood_measures(mu, kernel)[m]


def _reward(mu, pi, weights, env):
    nbh = weights @ mu / len(mu)
    r = env.reward_table(nbh)
    return float(np.einsum("msa,ms,msa->", r, mu, pi) / len(mu))


def _transition(mu, pi, weights, env):
    nbh = weights @ mu / len(mu)
    p = env.transition_table(nbh)
    return np.einsum("msa,msat->mt", mu[:, :, None] * pi, p)


def aggregated_reward(mu, pi, kernel: BlockKernel, env: EnvironmentSpec) -> float:
    """Block-averaged expected one-step reward."""
    mu, pi = _check_inputs(mu, pi, kernel, env)
    return _reward(mu, pi, kernel.weights, env)


def aggregated_transition(mu, pi, kernel: BlockKernel, env: EnvironmentSpec) -> np.ndarray:
    """Push every block distribution one step forward."""
    mu, pi = _check_inputs(mu, pi, kernel, env)
    return _transition(mu, pi, kernel.weights, env)


@dataclass
class MeanFieldTrajectory:
    distributions: np.ndarray  # (T + 1, M, S)
    rewards: np.ndarray  # (T,)
    discount: float

    @property
    def horizon(self) -> int:
        return len(self.rewards)

    @property
    def discounted_return(self) -> float:
        return float(np.sum(self.discount ** np.arange(self.horizon) * self.rewards))

    @property
    def total(self) -> float:
        return float(np.sum(self.rewards))

    def to_csv(self, fh=None, header_lines: Iterable[str] = ()) -> str:
        """Rows ``t, m, s, mu, reward``; ``reward`` is empty at the final time."""
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "m", "s", "mu", "reward"])
        for t, mu in enumerate(self.distributions):
            r = format(self.rewards[t], ".17g") if t < self.horizon else ""
            for m, row in enumerate(mu):
                for s, v in enumerate(row):
                    w.writerow([t, m, s, format(v, ".17g"), r])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def rollout(mu0, pi, kernel: BlockKernel, env: EnvironmentSpec, horizon: int,
            discount: float | None = None) -> MeanFieldTrajectory:
    """Iterate the aggregated dynamics for ``horizon`` steps from ``mu0``.

    ``discount`` defaults to ``env.discount``; pass ``1.0`` for the plain
    episode sum.
    """
    if int(horizon) != horizon or horizon < 1:
        raise ValueError("horizon must be a positive integer")
    mu, pi = _check_inputs(mu0, pi, kernel, env)
    w = kernel.weights
    dists = np.empty((int(horizon) + 1,) + mu.shape)
    rewards = np.empty(int(horizon))
    dists[0] = mu
    for t in range(int(horizon)):
        rewards[t] = _reward(mu, pi, w, env)
        mu = _transition(mu, pi, w, env)
        dists[t + 1] = mu
    return MeanFieldTrajectory(dists, rewards, env.discount if discount is None else float(discount))


class TabulatedQ:
    """A Q-function stored on a finite set of ``(mu, pi)`` points and read by
    nearest-neighbour lookup (L1 distance over the concatenated arrays; ties
    go to the lowest point index).  Used to exercise the Bellman operator."""

    def __init__(self, mus: Sequence[np.ndarray], pis: Sequence[np.ndarray], values):
        self.mus = np.asarray(mus, dtype=float)
        self.pis = np.asarray(pis, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if not len(self.mus) == len(self.pis) == len(self.values) or len(self.values) == 0:
            raise ValueError("need the same positive number of mus, pis and values")

    def lookup(self, mu, pi) -> int:
        d = (np.abs(self.mus - mu).sum(axis=(1, 2)) + np.abs(self.pis - pi).sum(axis=(1, 2, 3)))
        return int(np.argmin(d))

    def __call__(self, mu, pi) -> float:
        return float(self.values[self.lookup(mu, pi)])

    def with_values(self, values) -> "TabulatedQ":
        return TabulatedQ(self.mus, self.pis, values)


def bellman_apply(q, mu, pi, candidates: Sequence[np.ndarray], kernel: BlockKernel,
                  env: EnvironmentSpec) -> float:
    """``R(mu, pi) + gamma * max_{pi'} q(Phi(mu, pi), pi')`` over ``candidates``.

    ``q`` is any callable ``q(mu, pi) -> float``.
    """
    if len(candidates) == 0:
        raise ValueError("candidate set must not be empty")
    mu, pi = _check_inputs(mu, pi, kernel, env)
    nxt = _transition(mu, pi, kernel.weights, env)
    cont = max(q(nxt, c) for c in candidates)
    return _reward(mu, pi, kernel.weights, env) + env.discount * cont


def expansion_ratio(mu1, mu2, pi, kernel: BlockKernel, env: EnvironmentSpec) -> float:
    """``sum_m |Phi_m(mu1) - Phi_m(mu2)|_1 / sum_m |mu1_m - mu2_m|_1``."""
    num = np.abs(aggregated_transition(mu1, pi, kernel, env)
                 - aggregated_transition(mu2, pi, kernel, env)).sum()
    den = np.abs(np.asarray(mu1) - np.asarray(mu2)).sum()
    return float(num / den)


__all__ = [
    "MASS_TOL", "check_distribution_ensemble", "check_policy_ensemble", "replicate",
    "uniform_policy", "constant_policy", "neighborhood_measures", "neighborhood_measure",
    "aggregated_reward", "aggregated_transition", "MeanFieldTrajectory", "rollout",
    "TabulatedQ", "bellman_apply", "expansion_ratio",
]
