"""Tabular Q-learning, WoLF-PHC and fuzzy state aggregation.

The fuzzy layer treats the bin centres of the discrete state grid as fuzzy
states. For an observation, the ``L`` grid states with the largest triangular
memberships (the observation's own bin always first) form its fuzzy
neighbourhood; values and policy weights of those states are blended with the
normalized memberships. With ``L = 1`` the neighbourhood is the observation's
own bin and every fuzzy operation reduces to its tabular counterpart.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

CHECKPOINT_VERSION = 1


class Variant(str, enum.Enum):
    Q_ONLY = "q_only"
    PHC_FIXED = "phc_fixed"
    WOLF_PHC = "wolf_phc"
    FUZZY_WOLF_PHC = "fuzzy_wolf_phc"


@dataclass(frozen=True)
class LearnerConfig:
    alpha: float = 0.5
    gamma: float = 0.9
    epsilon: float = 0.1
    xi_win: float = 0.01
    xi_loss: float = 0.04
    xi_fixed: float = 0.02  # PHC_FIXED step size
    variant: Variant = Variant.FUZZY_WOLF_PHC
    n_fuzzy: int = 8
    # triangle half-width in bins: one value, or one per feature (jam, gain, SINR)
    fuzzy_width: float | tuple = 1.0
    selection: str = "egreedy"  # or "fsa_softmax"
    softmax_temperature: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if not self.xi_loss > self.xi_win > 0:
            raise ValueError("need xi_loss > xi_win > 0")
        if not np.isscalar(self.fuzzy_width):
            object.__setattr__(self, "fuzzy_width", tuple(float(v) for v in self.fuzzy_width))
        if np.any(np.asarray(self.fuzzy_width) <= 0):
            raise ValueError("fuzzy widths must be positive")
        if self.n_fuzzy < 1:
            raise ValueError("need at least one fuzzy state")
        if self.selection not in ("egreedy", "fsa_softmax"):
            raise ValueError(f"unknown selection mode {self.selection!r}")


# ---------------------------------------------------------------- primitives


def egreedy_select(values, epsilon: float, rng: np.random.Generator) -> int:
    """Greedy action w.p. 1 - epsilon, else uniform over the other actions.

    Ties among maxima are broken uniformly at random.
    """
    values = np.asarray(values)
    n = values.shape[0]
    if n == 0:
        raise ValueError("no actions to choose from")
    if n == 1:
        return 0
    best = np.flatnonzero(values == values.max())
    greedy = int(best[0]) if best.shape[0] == 1 else int(best[rng.integers(best.shape[0])])
    if epsilon > 0 and rng.random() < epsilon:
        j = int(rng.integers(n - 1))
        return j if j < greedy else j + 1
    return greedy


def q_update(q_sa: float, r: float, max_q_next: float, alpha: float, gamma: float) -> float:
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    return (1 - alpha) * q_sa + alpha * (r + gamma * max_q_next)


def project_row(row: np.ndarray, greedy: int) -> np.ndarray:
    """Clamp negative entries to zero and take the added mass back from ``greedy``."""
    neg = row < 0
    if neg.any():
        deficit = -row[neg].sum()
        row[neg] = 0.0
        row[greedy] -= deficit
    return row


def phc_update(pi_row, q_row, xi: float) -> np.ndarray:
    """Move ``xi`` of probability mass onto argmax Q, spread evenly off the rest."""
    pi = np.array(pi_row, dtype=float)
    n = pi.shape[0]
    if n == 1:
        return np.ones(1)
    greedy = int(np.argmax(q_row))
    delta = np.full(n, -xi / (n - 1))
    delta[greedy] = xi
    pi += delta
    return project_row(pi, greedy)


def wolf_rate(pi_row, pi_avg_row, q_row, xi_win: float, xi_loss: float) -> float:
    """Small step when the current policy strictly beats the average policy."""
    q = np.asarray(q_row, dtype=float)
    if float(np.dot(pi_row, q)) > float(np.dot(pi_avg_row, q)):
        return xi_win
    return xi_loss


def avg_policy_update(pi_avg_row, pi_row, count: int) -> np.ndarray:
    if count < 1:
        raise ValueError("visit count must be >= 1")
    pi_avg = np.asarray(pi_avg_row, dtype=float)
    return pi_avg + (np.asarray(pi_row, dtype=float) - pi_avg) / count


@dataclass
class FuzzyTables:
    """Fuzzy states active for one observation."""

    centers: np.ndarray  # (L, d) in bin units
    widths: np.ndarray  # (d,)
    q_l: np.ndarray  # (L, |A|)
    pi_l: np.ndarray  # (L, |A|)

    @property
    def L(self) -> int:
        return self.centers.shape[0]


def fuzzy_membership(features, tables: FuzzyTables) -> np.ndarray:
    """Normalized product-of-triangles membership of ``features`` in each fuzzy state."""
    x = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("fuzzy features must be finite")
    if tables.L == 1:
        return np.ones(1)
    dist = np.abs(tables.centers - x[None, :]) / np.asarray(tables.widths)[None, :]
    mu = np.prod(np.clip(1.0 - dist, 0.0, None), axis=1)
    total = mu.sum()
    if total == 0:
        psi = np.zeros(tables.L)
        psi[int(np.argmin(dist.sum(axis=1)))] = 1.0
        return psi
    return mu / total


def fuzzy_q(psi, q_l_column) -> float:
    return float(np.dot(psi, q_l_column))


def fuzzy_q_row(psi: np.ndarray, q_l: np.ndarray) -> np.ndarray:
    """FQ(s, .) for every action."""
    if q_l.shape[0] == 1:
        return q_l[0]
    return psi @ q_l


def fsa_policy_score(psi, pi_l, q_l, a: int) -> float:
    return float(np.sum(np.asarray(pi_l)[:, a] * np.asarray(q_l)[:, a] * np.asarray(psi)))


def fsa_aggregate(psi, pi_l) -> np.ndarray:
    """Membership-weighted policy mass per action."""
    return np.asarray(psi) @ np.asarray(pi_l)


def fsa_policy_update(tables: FuzzyTables, psi, greedy_action: int, xi: float) -> FuzzyTables:
    """Shift fuzzy policy weights towards ``greedy_action``.

    Each fuzzy state moves in proportion to its membership, scaled by
    ``1 / sum(psi^2)`` so that the membership-weighted aggregate gains exactly
    ``xi`` on the greedy action and loses ``xi / (|A| - 1)`` on every other.
    Rows are then clamped back onto the simplex.
    """
    psi = np.asarray(psi, dtype=float)
    pi_l = np.array(tables.pi_l, dtype=float)
    n = pi_l.shape[1]
    step = xi * psi / np.dot(psi, psi)
    if n > 1:
        delta = np.repeat((-step / (n - 1))[:, None], n, axis=1)
        delta[:, greedy_action] = step
        pi_l += delta
        for l in np.flatnonzero(psi > 0):
            project_row(pi_l[l], greedy_action)
    return FuzzyTables(tables.centers, tables.widths, tables.q_l, pi_l)


def fuzzy_q_update(tables: FuzzyTables, psi, action: int, r: float, max_fq_next: float, alpha: float, gamma: float):
    """Move FQ(s, a) to its TD target, crediting each fuzzy state by its membership."""
    psi = np.asarray(psi, dtype=float)
    fq = fuzzy_q(psi, tables.q_l[:, action])
    target = q_update(fq, r, max_fq_next, alpha, gamma)
    q_l = np.array(tables.q_l, dtype=float)
    if q_l.shape[0] == 1:
        q_l[0, action] = target
    else:
        q_l[:, action] += (target - fq) * psi / np.dot(psi, psi)
    return FuzzyTables(tables.centers, tables.widths, q_l, tables.pi_l)


# ---------------------------------------------------------------- neighbourhoods


class FuzzyGrid:
    """Fuzzy states at the bin centres of a mixed-radix state grid."""

    def __init__(self, radix, n_fuzzy: int, width=1.0):
        self.radix = np.asarray(radix, dtype=int)
        self.L = int(n_fuzzy)
        self.widths = np.broadcast_to(np.asarray(width, dtype=float), self.radix.shape).copy()
        if np.any(self.widths <= 0):
            raise ValueError("fuzzy widths must be positive")
        self.strides = np.array([int(np.prod(self.radix[i + 1 :])) for i in range(len(self.radix))])
        self._memo: dict = {}

    def neighbourhood(self, positions) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = np.asarray(positions, dtype=float)
        key = pos.tobytes()
        hit = self._memo.get(key)
        if hit is None:
            if len(self._memo) >= 100_000:
                self._memo.clear()
            hit = self._memo[key] = self._neighbourhood(pos)
        return hit

    def _neighbourhood(self, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(state indices, centres, memberships) of the active fuzzy states.

        Candidates are the observation's own bin and the bins one step away
        from it along a single axis; the ``L - 1`` candidates with the largest
        membership join the own bin, which is always first.
        """
        own = np.clip(np.floor(pos), 0, self.radix - 1).astype(int)
        own_index = int(own @ self.strides)
        if self.L == 1:
            return np.array([own_index]), (own + 0.5)[None, :], np.ones(1)
        x = np.clip(pos, 0.5, self.radix - 0.5)
        w = self.widths
        own_factor = 1.0 - np.abs(x - (own + 0.5)) / w
        axes, steps, ratios = [], [], []
        for step in (-1, 1):
            nb = own + step
            factor = 1.0 - np.abs(x - (nb + 0.5)) / w
            ok = np.flatnonzero((nb >= 0) & (nb < self.radix) & (factor > 0))
            axes.append(ok)
            steps.append(np.full(ok.shape[0], step))
            ratios.append(factor[ok] / own_factor[ok])
        axes, steps, ratios = (np.concatenate(v) for v in (axes, steps, ratios))
        order = np.argsort(-ratios, kind="stable")[: self.L - 1]
        combos = np.repeat(own[None, :], order.shape[0] + 1, axis=0)
        combos[np.arange(1, order.shape[0] + 1), axes[order]] += steps[order]
        centers = combos + 0.5
        tables = FuzzyTables(centers, w, np.zeros((len(combos), 1)), np.zeros((len(combos), 1)))
        psi = fuzzy_membership(x, tables)
        return combos @ self.strides, centers, psi


# ---------------------------------------------------------------- learner


@dataclass
class LearnerBundle:
    config: LearnerConfig
    num_states: int
    num_actions: int
    radix: np.ndarray
    q: np.ndarray = field(default=None)  # Q(s, a), or the fuzzy-state values q_l in the fuzzy variant
    pi: np.ndarray = field(default=None)
    pi_avg: np.ndarray = field(default=None)
    counts: np.ndarray = field(default=None)
    pi_fuzzy: np.ndarray = field(default=None)  # fuzzy-state policy weights pi_l
    xi: float = 0.0

    def __post_init__(self):
        S, A = self.num_states, self.num_actions
        variant = self.config.variant
        if self.q is None:
            self.q = np.zeros((S, A))
        if variant != Variant.Q_ONLY:
            if self.pi is None:
                self.pi = np.full((S, A), 1.0 / A)
            if self.pi_avg is None:
                self.pi_avg = self.pi.copy()
            if self.counts is None:
                self.counts = np.zeros(S, dtype=np.int64)
        if variant == Variant.FUZZY_WOLF_PHC and self.pi_fuzzy is None:
            self.pi_fuzzy = np.full((S, A), 1.0 / A)
        if not self.xi:
            self.xi = self.config.xi_fixed if variant == Variant.PHC_FIXED else self.config.xi_loss
        self.radix = np.asarray(self.radix, dtype=int)
        self.grid = (
            FuzzyGrid(self.radix, self.config.n_fuzzy, self._axis_widths())
            if variant == Variant.FUZZY_WOLF_PHC
            else None
        )

    def _axis_widths(self) -> np.ndarray:
        w = np.atleast_1d(np.asarray(self.config.fuzzy_width, dtype=float))
        if w.shape[0] == 1:
            return np.full(self.radix.shape[0], w[0])
        if self.radix.shape[0] % w.shape[0]:
            raise ValueError("need one fuzzy width per state feature")
        return np.repeat(w, self.radix.shape[0] // w.shape[0])

    @property
    def fuzzy(self) -> bool:
        return self.grid is not None

    def values(self, obs) -> tuple[np.ndarray, tuple | None]:
        """Action values at an observation and the fuzzy neighbourhood used."""
        if not self.fuzzy:
            return self.q[obs.index], None
        hood = self.neighbourhood(obs)
        return fuzzy_q_row(hood[2], self.q[hood[0]]), hood

    def neighbourhood(self, obs) -> tuple:
        # observations are revisited (act, update, next update); memoize per grid
        cached = getattr(obs, "_hood", None)
        if cached is None or cached[0] is not self.grid:
            cached = (self.grid, self.grid.neighbourhood(obs.positions))
            obs._hood = cached
        return cached[1]

    def act(self, obs, rng: np.random.Generator, epsilon: float | None = None) -> int:
        eps = self.config.epsilon if epsilon is None else epsilon
        values, hood = self.values(obs)
        if self.config.selection == "fsa_softmax" and self.fuzzy:
            idx, _, psi = hood
            score = psi @ (self.pi_fuzzy[idx] * self.q[idx])
            z = (score - score.max()) / self.config.softmax_temperature
            p = np.exp(z)
            return int(rng.choice(len(p), p=p / p.sum()))
        return egreedy_select(values, eps, rng)

    def update(self, obs, action: int, r: float, next_obs) -> None:
        """Policy, step-size, average-policy and value updates for one transition."""
        cfg = self.config
        variant = cfg.variant
        s = obs.index
        values, hood = self.values(obs)
        if variant != Variant.Q_ONLY:
            # policy hill-climbing with the current step size
            self.pi[s] = phc_update(self.pi[s], values, self.xi)
            # win-or-learn-fast step size for the next update
            if variant == Variant.PHC_FIXED:
                self.xi = cfg.xi_fixed
            else:
                self.xi = wolf_rate(self.pi[s], self.pi_avg[s], values, cfg.xi_win, cfg.xi_loss)
            # average policy, then visit count
            self.pi_avg[s] = avg_policy_update(self.pi_avg[s], self.pi[s], int(self.counts[s]) + 1)
            self.counts[s] += 1
        next_values, _ = self.values(next_obs)
        max_next = float(next_values.max())
        if not self.fuzzy:
            # tabular value update
            self.q[s, action] = q_update(self.q[s, action], r, max_next, cfg.alpha, cfg.gamma)
            return
        idx, centers, psi = hood
        tables = FuzzyTables(centers, self.grid.widths, self.q[idx], self.pi_fuzzy[idx])
        tables = fsa_policy_update(tables, psi, int(np.argmax(values)), self.xi)
        tables = fuzzy_q_update(tables, psi, action, r, max_next, cfg.alpha, cfg.gamma)
        self.q[idx] = tables.q_l
        self.pi_fuzzy[idx] = tables.pi_l

    def greedy_policy_score(self, obs) -> np.ndarray:
        """Fuzzy policy score of every action at ``obs`` (fuzzy variant only)."""
        idx, _, psi = self.neighbourhood(obs)
        return psi @ (self.pi_fuzzy[idx] * self.q[idx])

    # -- checkpoints

    def config_hash(self) -> str:
        payload = json.dumps(
            {"config": {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in asdict(self.config).items()},
             "radix": self.radix.tolist(), "actions": self.num_actions},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def save(self, path) -> Path:
        path = Path(path)
        arrays = {
            name: getattr(self, name)
            for name in ("q", "pi", "pi_avg", "counts", "pi_fuzzy")
            if getattr(self, name) is not None
        }
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in asdict(self.config).items()},
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "radix": self.radix.tolist(),
            "xi": self.xi,
            "config_hash": self.config_hash(),
        }
        with open(path, "wb") as fh:
            np.savez_compressed(fh, meta=np.array(json.dumps(meta)), **arrays)
        return path

    @classmethod
    def load(cls, path) -> "LearnerBundle":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta['version']}")
            arrays = {k: data[k].copy() for k in data.files if k != "meta"}
        bundle = cls(
            config=LearnerConfig(**meta["config"]),
            num_states=meta["num_states"],
            num_actions=meta["num_actions"],
            radix=np.array(meta["radix"]),
            xi=meta["xi"],
            **arrays,
        )
        if bundle.config_hash() != meta["config_hash"]:
            raise ValueError("checkpoint config hash mismatch")
        return bundle


def new_bundle(cfg: LearnerConfig, env) -> LearnerBundle:
    radix = env.bins.radix(env.cfg.num_users)
    return LearnerBundle(cfg, int(np.prod(radix)), len(env.space), radix)


@dataclass
class EpisodeMetrics:
    episode: int
    rate: float
    protection: float
    reward: float
    actions: list[int] = field(default_factory=list, repr=False)
    rewards: list[float] = field(default_factory=list, repr=False)


def run_episode(env, horizon: int, choose: Callable, learn: Callable | None = None, episode: int = 0,
                keep_trace: bool = False) -> EpisodeMetrics:
    obs = env.reset()
    rates, prot, rewards, actions = [], [], [], []
    for _ in range(horizon):
        a, out = choose(env, obs)
        if learn is not None:
            learn(obs, a, out.reward, out.next_obs)
        rates.append(out.rate)
        prot.append(float(np.mean(out.protected)))
        rewards.append(out.reward)
        actions.append(a)
        obs = out.next_obs
    return EpisodeMetrics(
        episode,
        float(np.mean(rates)),
        float(np.mean(prot)),
        float(np.mean(rewards)),
        actions if keep_trace else [],
        rewards if keep_trace else [],
    )


def train(env, learner_cfg: LearnerConfig, episodes: int, horizon: int, rng: np.random.Generator,
          bundle: LearnerBundle | None = None, keep_trace: bool = False):
    """Online training; returns the learner and one metrics record per episode."""
    if bundle is None:
        bundle = new_bundle(learner_cfg, env)
    if bundle.num_actions != len(env.space):
        raise ValueError("learner and environment disagree on the action space")

    def choose(env_, obs):
        a = bundle.act(obs, rng)
        return a, env_.step(a)

    records = [
        run_episode(env, horizon, choose, bundle.update, episode=j, keep_trace=keep_trace)
        for j in range(episodes)
    ]
    return bundle, records
