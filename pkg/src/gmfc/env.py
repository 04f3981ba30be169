"""Finite mean-field environments and their declared regularity constants.

An environment is described by two vectorised tables.  Given a batch of
neighbourhood measures ``mu`` of shape ``(B, S)`` (each a sub-probability
vector), ``transition_table(mu)`` returns ``P[b, s, a, s']`` with shape
``(B, S, A, S)`` and ``reward_table(mu)`` returns ``r[b, s, a]`` with shape
``(B, S, A)``.  Both the mean-field model and the finite-agent simulator use
these tables, so an environment is written once.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Sequence

import numpy as np

MASS_TOL = 1e-9
PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    name: str
    states: tuple
    actions: tuple
    transition_table: Callable[[np.ndarray], np.ndarray]
    reward_table: Callable[[np.ndarray], np.ndarray]
    reward_bound: float
    reward_lipschitz: float
    transition_lipschitz: float
    episode_length: int
    discount: float
    params: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def state_index(self, s: Hashable) -> int:
        return _index(self.states, s, "state")

    def action_index(self, a: Hashable) -> int:
        return _index(self.actions, a, "action")

    def transition(self, s, mu, a) -> np.ndarray:
        """``P(. | s, mu, a)`` as a probability vector over the states."""
        mu = check_subprobability(mu, self.n_states)
        return self.transition_table(mu[None, :])[0, self.state_index(s), self.action_index(a)]

    def reward(self, s, mu, a) -> float:
        mu = check_subprobability(mu, self.n_states)
        return float(self.reward_table(mu[None, :])[0, self.state_index(s), self.action_index(a)])

    def contraction_condition(self) -> bool:
        """Whether ``discount * (L_P + 1) < 1``."""
        return self.discount * (self.transition_lipschitz + 1.0) < 1.0

    def warn_if_not_contractive(self) -> bool:
        ok = self.contraction_condition()
        if not ok:
            warnings.warn(
                f"{self.name}: discount*(L_P+1) = "
                f"{self.discount * (self.transition_lipschitz + 1.0):.4g} >= 1; "
                "block-to-population approximation guarantees do not apply",
                stacklevel=2,
            )
        return ok

    def infinite_horizon(self, eps: float = 1e-6) -> int:
        """Horizon after which the discounted tail is below ``eps``."""
        g = self.discount
        tail = math.ceil(math.log(eps * (1.0 - g) / self.reward_bound) / math.log(g))
        return max(self.episode_length, tail)

    def to_config(self) -> dict:
        return {"kind": self.name, **self.params}


def _index(labels: Sequence, x, what: str) -> int:
    if x in labels:
        return labels.index(x)
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool) and 0 <= x < len(labels):
        return int(x)
    raise ValueError(f"unknown {what} {x!r}; expected one of {list(labels)}")


def check_subprobability(mu, n_states: int | None = None) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if n_states is not None and mu.shape[-1] != n_states:
        raise ValueError(f"measure has {mu.shape[-1]} entries, expected {n_states}")
    if np.any(mu < 0.0) or np.any(mu.sum(axis=-1) > 1.0 + MASS_TOL):
        raise ValueError("neighbourhood measure must be non-negative with mass <= 1")
    return mu


def sis_env(beta1: float = 0.8, beta2: float = 0.0, delta: float = 0.3,
            c1: float = 2.0, c2: float = 0.3, c3: float = 0.5,
            T: int = 50, gamma: float = 0.95) -> EnvironmentSpec:
    """Susceptible/infected model with contact (C) or distancing (NC)."""
    if not 0.0 <= beta2 <= beta1 <= 1.0:
        raise ValueError("need 0 <= beta2 <= beta1 <= 1")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if min(c1, c2, c3) < 0.0:
        raise ValueError("costs must be non-negative")
    _check_horizon(T, gamma)

    def transition_table(mu):
        mu = np.asarray(mu, dtype=float)
        p = np.empty(mu.shape[:-1] + (2, 2, 2))
        infected = mu[..., 1]
        for a, rate in ((0, beta1), (1, beta2)):
            risk = rate * infected
            p[..., 0, a, 1] = risk
            p[..., 0, a, 0] = 1.0 - risk
            p[..., 1, a, 0] = delta
            p[..., 1, a, 1] = 1.0 - delta
        return p

    table = np.array([[0.0, -c2], [-c1 - c3, -c1 - c2]])

    def reward_table(mu):
        mu = np.asarray(mu)
        return np.broadcast_to(table, mu.shape[:-1] + (2, 2)).copy()

    return EnvironmentSpec(
        name="sis", states=("S", "I"), actions=("C", "NC"),
        transition_table=transition_table, reward_table=reward_table,
        reward_bound=c1 + c2 + c3, reward_lipschitz=0.0,
        transition_lipschitz=2.0 * beta1, episode_length=int(T), discount=float(gamma),
        params=dict(beta1=beta1, beta2=beta2, delta=delta, c1=c1, c2=c2, c3=c3,
                    T=int(T), gamma=gamma),
    )


def malware_env(k: int = 3, c1: float = 0.3, c2: float = 0.5, chi: float = 0.7,
                T: int = 10, gamma: float = 0.95) -> EnvironmentSpec:
    """Health levels ``0..k-1``; action 1 repairs to level 0.

    Damage under action 0 is ``floor((k - s) * chi)`` with a fixed ``chi``.
    The neighbourhood risk ``<mu> = sum_s s * mu(s)`` uses the unnormalised
    neighbourhood measure.
    """
    if int(k) != k or k < 2:
        raise ValueError("k must be an integer >= 2")
    if not 0.0 <= chi < 1.0:
        raise ValueError("chi must lie in [0, 1)")
    if min(c1, c2) < 0.0:
        raise ValueError("costs must be non-negative")
    _check_horizon(T, gamma)
    k = int(k)
    levels = np.arange(k)
    nxt = np.minimum(levels + np.floor((k - levels) * chi).astype(int), k - 1)
    base = np.zeros((k, 2, k))
    base[levels, 0, nxt] = 1.0
    base[:, 1, 0] = 1.0

    def transition_table(mu):
        mu = np.asarray(mu)
        return np.broadcast_to(base, mu.shape[:-1] + base.shape).copy()

    def reward_table(mu):
        mu = np.asarray(mu, dtype=float)
        risk = mu @ levels.astype(float)
        r = -(c1 + risk)[..., None] * levels / k
        return np.stack([r, r - c2], axis=-1)

    return EnvironmentSpec(
        name="malware", states=tuple(range(k)), actions=(0, 1),
        transition_table=transition_table, reward_table=reward_table,
        reward_bound=(c1 + (k - 1)) * (k - 1) / k + c2,
        reward_lipschitz=(k - 1) ** 2 / k, transition_lipschitz=0.0,
        episode_length=int(T), discount=float(gamma),
        params=dict(k=k, c1=c1, c2=c2, chi=chi, T=int(T), gamma=gamma),
    )


def _check_horizon(T, gamma):
    if int(T) != T or T < 1:
        raise ValueError("episode length must be a positive integer")
    if not 0.0 < gamma < 1.0:
        raise ValueError("discount must lie in (0, 1)")


ENVIRONMENTS = {"sis": sis_env, "malware": malware_env}


def env_from_config(cfg: dict) -> EnvironmentSpec:
    if not isinstance(cfg, dict):
        raise ValueError("env spec must be a mapping")
    kind = cfg.get("kind")
    if kind not in ENVIRONMENTS:
        raise ValueError(f"unknown env kind {kind!r}; expected one of {sorted(ENVIRONMENTS)}")
    params = {k: v for k, v in cfg.items() if k != "kind"}
    try:
        return ENVIRONMENTS[kind](**params)
    except TypeError as exc:
        raise ValueError(f"bad {kind} parameters: {exc}") from None


def random_subprobability(rng: np.random.Generator, n_states: int, size: int) -> np.ndarray:
    """Random measures with uniform total mass in [0, 1] and flat-Dirichlet shape."""
    shape = rng.dirichlet(np.ones(n_states), size=size)
    return shape * rng.random((size, 1))


@dataclass
class ValidationReport:
    samples: int
    normalization_violations: int
    max_normalization_error: float
    min_probability: float
    max_abs_reward: float
    reward_bound_violations: int
    empirical_transition_lipschitz: float
    empirical_reward_lipschitz: float
    declared: dict
    contraction_condition: bool

    @property
    def ok(self) -> bool:
        tol = 1e-9
        return (self.normalization_violations == 0 and self.reward_bound_violations == 0
                and self.empirical_transition_lipschitz <= self.declared["L_P"] + tol
                and self.empirical_reward_lipschitz <= self.declared["L_r"] + tol)

    def rows(self) -> list[tuple[str, object]]:
        return [
            ("samples", self.samples),
            ("normalization_violations", self.normalization_violations),
            ("max_normalization_error", self.max_normalization_error),
            ("min_probability", self.min_probability),
            ("max_abs_reward", self.max_abs_reward),
            ("declared_M_r", self.declared["M_r"]),
            ("reward_bound_violations", self.reward_bound_violations),
            ("empirical_L_P", self.empirical_transition_lipschitz),
            ("declared_L_P", self.declared["L_P"]),
            ("empirical_L_r", self.empirical_reward_lipschitz),
            ("declared_L_r", self.declared["L_r"]),
            ("contraction_condition", self.contraction_condition),
            ("ok", self.ok),
        ]


def validate(env: EnvironmentSpec, samples: int, rng_seed: int = 0) -> ValidationReport:
    """Check normalisation, the reward bound and the Lipschitz constants on
    ``samples`` random ``(s, mu1, mu2, a)`` tuples.  Violations are reported,
    never raised."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    S, A = env.n_states, env.n_actions
    mu1 = random_subprobability(rng, S, samples)
    mu2 = random_subprobability(rng, S, samples)
    s = rng.integers(S, size=samples)
    a = rng.integers(A, size=samples)
    idx = np.arange(samples)

    p1 = env.transition_table(mu1)[idx, s, a]
    p2 = env.transition_table(mu2)[idx, s, a]
    r1 = env.reward_table(mu1)[idx, s, a]
    r2 = env.reward_table(mu2)[idx, s, a]

    both_p = np.concatenate([p1, p2])
    norm_err = np.abs(both_p.sum(axis=1) - 1.0)
    bad_rows = (norm_err > PROB_TOL) | (both_p.min(axis=1) < 0.0)
    both_r = np.abs(np.concatenate([r1, r2]))
    dmu = np.abs(mu1 - mu2).sum(axis=1)
    keep = dmu > 1e-12
    lp = np.abs(p1 - p2).sum(axis=1)[keep] / dmu[keep]
    lr = np.abs(r1 - r2)[keep] / dmu[keep]

    return ValidationReport(
        samples=samples,
        normalization_violations=int(bad_rows.sum()),
        max_normalization_error=float(norm_err.max()),
        min_probability=float(both_p.min()),
        max_abs_reward=float(both_r.max()),
        reward_bound_violations=int((both_r > env.reward_bound + 1e-12).sum()),
        empirical_transition_lipschitz=float(lp.max()) if lp.size else 0.0,
        empirical_reward_lipschitz=float(lr.max()) if lr.size else 0.0,
        declared={"M_r": env.reward_bound, "L_P": env.transition_lipschitz,
                  "L_r": env.reward_lipschitz},
        contraction_condition=env.contraction_condition(),
    )


class ConservationMonitor:
    """Wraps an environment and records the worst mass/normalisation
    deviations of every table evaluation made through it."""

    def __init__(self, env: EnvironmentSpec):
        self.base = env
        self.max_row_error = 0.0
        self.min_entry = np.inf
        self.max_measure_mass = 0.0
        self.min_measure_entry = np.inf
        self.evaluations = 0
        self.env = replace(env, transition_table=self._transition, reward_table=self._reward)

    def _see(self, mu):
        mu = np.asarray(mu, dtype=float)
        self.evaluations += 1
        if mu.size:
            self.max_measure_mass = max(self.max_measure_mass, float(mu.sum(axis=-1).max()))
            self.min_measure_entry = min(self.min_measure_entry, float(mu.min()))

    def _transition(self, mu):
        self._see(mu)
        p = self.base.transition_table(mu)
        if p.size:
            self.max_row_error = max(self.max_row_error, float(np.abs(p.sum(axis=-1) - 1.0).max()))
            self.min_entry = min(self.min_entry, float(p.min()))
        return p

    def _reward(self, mu):
        self._see(mu)
        return self.base.reward_table(mu)

    def observe_distribution(self, dist):
        """Record a state or action distribution (last axis sums to one)."""
        dist = np.asarray(dist, dtype=float)
        self.max_row_error = max(self.max_row_error, float(np.abs(dist.sum(axis=-1) - 1.0).max()))
        self.min_entry = min(self.min_entry, float(dist.min()))

    @property
    def ok(self) -> bool:
        return (self.max_row_error <= PROB_TOL and self.min_entry >= 0.0
                and self.min_measure_entry >= 0.0 and self.max_measure_mass <= 1.0 + MASS_TOL)
