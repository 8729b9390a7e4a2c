"""Comparison approaches: alternating optimization, no-IRS power allocation, fast Q-learning."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelSet, PhaseConfig, TWO_PI, effective_channels
from .learning import LearnerConfig, Variant, train
from .signals import (
    JammerAction,
    PowerAllocation,
    gain_matrix,
    sinr_from_parts,
    sum_rate,
    transmit_beamformers,
)


@dataclass(frozen=True)
class AOConfig:
    max_outer_iters: int = 5
    phase_levels: int = 4
    convergence_tol: float = 1e-9
    perfect_jam_knowledge: bool = False  # ablation: AO sees the current slot's jamming

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.phase_levels < 1:
            raise ValueError("phase_levels must be >= 1")


@dataclass(frozen=True)
class Constraints:
    profiles: np.ndarray  # (n_profiles, K) candidate powers in watts
    sinr_min: np.ndarray  # (K,) linear
    noise: float
    beamforming: str = "mrt"

    def __post_init__(self):
        profiles = np.atleast_2d(np.asarray(self.profiles, dtype=float))
        if profiles.size == 0:
            raise ValueError("empty power-profile set")
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "sinr_min", np.asarray(self.sinr_min, dtype=float).reshape(-1))
        if self.noise <= 0:
            raise ValueError("noise power must be positive")


def constraints_for(env) -> Constraints:
    return Constraints(env.space.profiles, env.rp.sinr_min, env.cfg.noise, env.cfg.beamforming)


def _sinrs(ch: ChannelSet, phi: PhaseConfig, p: np.ndarray, jam_rx: np.ndarray, c: Constraints) -> np.ndarray:
    if not np.any(p > 0):
        return np.zeros(len(p))
    H = effective_channels(ch, phi)
    W = transmit_beamformers(ch, phi, c.beamforming, p, c.noise, h_eff=H)
    return sinr_from_parts(gain_matrix(H, W), p, jam_rx, c.noise)


def objective(sinrs: np.ndarray, c: Constraints) -> tuple[int, float]:
    """Lexicographic score: users meeting their target first, then sum rate."""
    return int(np.sum(sinrs >= c.sinr_min)), sum_rate(sinrs)


def best_profile(ch: ChannelSet, phi: PhaseConfig, jam_rx: np.ndarray, c: Constraints) -> tuple[int, tuple]:
    """Exhaustive search over profiles; the first profile wins ties."""
    best_i, best_score = 0, None
    for i, p in enumerate(c.profiles):
        score = objective(_sinrs(ch, phi, p, jam_rx, c), c)
        if best_score is None or score > best_score:
            best_i, best_score = i, score
    return best_i, best_score


@dataclass
class AOResult:
    power: PowerAllocation
    phase: PhaseConfig
    rate: float
    profile_id: int
    trace: list  # objective after every half-step


def alternating_optimize(
    ch: ChannelSet,
    jam_estimate: JammerAction,
    cfg: AOConfig,
    constraints: Constraints,
    phase0: PhaseConfig | None = None,
) -> AOResult:
    """Per-slot coordinate ascent over the discrete power profiles and phase levels.

    Each outer iteration does an exhaustive power search with the phases
    fixed, then one pass of element-wise phase search with the powers fixed.
    An element only changes when a level strictly improves the objective, so
    the trace is non-decreasing.
    """
    M = ch.G.shape[0]
    jam_rx = jam_estimate.received(ch)
    phi = PhaseConfig.zeros(M) if phase0 is None else phase0.copy()
    levels = TWO_PI * np.arange(cfg.phase_levels) / cfg.phase_levels
    pid, score = best_profile(ch, phi, jam_rx, constraints)
    trace = [score]
    for _ in range(cfg.max_outer_iters):
        start = score
        p = constraints.profiles[pid]
        for m in range(M):
            current = phi.theta[m]
            for lv in levels:
                if lv == current:
                    continue
                theta = phi.theta.copy()
                theta[m] = lv
                cand = PhaseConfig(theta)
                s = objective(_sinrs(ch, cand, p, jam_rx, constraints), constraints)
                if s > score:
                    phi, score = cand, s
        trace.append(score)
        pid, score = best_profile(ch, phi, jam_rx, constraints)
        trace.append(score)
        if score[0] == start[0] and score[1] - start[1] <= cfg.convergence_tol:
            break
    return AOResult(PowerAllocation(constraints.profiles[pid]), phi, score[1], pid, trace)


def optimal_pa_no_irs(ch: ChannelSet, jam: JammerAction, constraints: Constraints) -> tuple[PowerAllocation, float]:
    """Best discrete power profile with the IRS links removed and the jamming known exactly."""
    bare = ch.without_irs()
    phi = PhaseConfig.zeros(ch.G.shape[0])
    pid, score = best_profile(bare, phi, jam.received(bare), constraints)
    return PowerAllocation(constraints.profiles[pid]), score[1]


def fast_q_baseline(env, cfg: LearnerConfig, episodes: int, horizon: int, rng: np.random.Generator, **kwargs):
    """Plain Q-learning on the same state/action space and reward."""
    return train(env, replace(cfg, variant=Variant.Q_ONLY), episodes, horizon, rng, **kwargs)
