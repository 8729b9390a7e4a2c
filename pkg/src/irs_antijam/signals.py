"""Transmit beamformers, per-user SINR, sum rate and the anti-jamming reward."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, PhaseConfig, effective_channels

POWER_SLACK = 1e-12


@dataclass(frozen=True)
class PowerAllocation:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError(f"powers must be finite and nonnegative, got {p}")
        object.__setattr__(self, "p", p)

    @property
    def total(self) -> float:
        return float(self.p.sum())

    def check(self, p_max: float) -> "PowerAllocation":
        if self.total > p_max + POWER_SLACK:
            raise ValueError(f"total power {self.total} W exceeds P_max {p_max} W")
        return self


@dataclass(frozen=True)
class JammerAction:
    p_j: np.ndarray  # (K,) watts
    z: np.ndarray  # (K, N_J) unit jamming directions

    def __post_init__(self):
        p_j = np.asarray(self.p_j, dtype=float).reshape(-1)
        z = np.atleast_2d(np.asarray(self.z, dtype=complex))
        if np.any(p_j < 0):
            raise ValueError("jamming powers must be nonnegative")
        if z.shape[0] != p_j.shape[0]:
            raise ValueError("one jamming direction per UE is required")
        norms = np.sqrt(np.sum(z.real**2 + z.imag**2, axis=1))
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("jamming directions must have unit norm")
        object.__setattr__(self, "p_j", p_j)
        object.__setattr__(self, "z", z)

    def received(self, ch: ChannelSet) -> np.ndarray:
        """Jamming power reaching each UE, ``p_J,k |h_J,k^H z_k|^2``."""
        return self.p_j * np.abs(np.sum(ch.h_J.conj() * self.z, axis=1)) ** 2


def worst_case_directions(ch: ChannelSet) -> np.ndarray:
    return ch.h_J / np.linalg.norm(ch.h_J, axis=1, keepdims=True)


def random_directions(K: int, NJ: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((K, NJ)) + 1j * rng.standard_normal((K, NJ))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@dataclass(frozen=True)
class RewardParams:
    sinr_min: np.ndarray  # linear thresholds, one per UE
    lambda1: float = 1.0
    lambda2: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "sinr_min", np.asarray(self.sinr_min, dtype=float).reshape(-1))
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("reward weights must be nonnegative")


def transmit_beamformers(
    ch: ChannelSet,
    phi: PhaseConfig,
    mode: str = "mrt",
    powers=None,
    noise: float | None = None,
    h_eff: np.ndarray | None = None,
) -> np.ndarray:
    """Unit-norm beamformers as rows of a (K, N) array.

    ``mrt`` uses the normalized effective channel. ``mmse`` whitens it by the
    regularized covariance of the other users' channels,
    ``(sum_{i != k} p_i h_i h_i^H + noise I)^-1 h_k``, and needs ``powers`` and
    ``noise``.
    """
    H = effective_channels(ch, phi) if h_eff is None else h_eff
    norms = np.linalg.norm(H, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero effective channel: degenerate geometry")
    if mode == "mrt":
        return H / norms[:, None]
    if mode != "mmse":
        raise ValueError(f"unknown beamforming mode {mode!r}")
    if powers is None or noise is None:
        raise ValueError("mmse beamforming needs powers and noise")
    p = np.asarray(powers, dtype=float)
    K, N = H.shape
    # scaled by 1/noise to keep the system well conditioned
    outer = np.einsum("i,ia,ib->iab", p / noise, H, H.conj())
    total = outer.sum(axis=0)
    W = np.empty_like(H)
    eye = np.eye(N)
    for k in range(K):
        v = np.linalg.solve(eye + total - outer[k], H[k])
        W[k] = v / np.linalg.norm(v)
    return W


def gain_matrix(h_eff: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``|h_k^H w_i|^2`` indexed [k, i]."""
    return np.abs(h_eff.conj() @ W.T) ** 2


def sinr_from_parts(gains: np.ndarray, p, jam_rx, noise: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    weighted = gains * p[None, :]
    desired = np.diag(weighted)
    iui = weighted.sum(axis=1) - desired
    return desired / (iui + jam_rx + noise)


def sinr_all(
    pa: PowerAllocation,
    phi: PhaseConfig,
    ch: ChannelSet,
    w: np.ndarray,
    ja: JammerAction,
    noise: float,
) -> np.ndarray:
    if noise <= 0:
        raise ValueError("noise power must be positive")
    H = effective_channels(ch, phi)
    return sinr_from_parts(gain_matrix(H, w), pa.p, ja.received(ch), noise)


def sinr(
    k: int,
    pa: PowerAllocation,
    phi: PhaseConfig,
    ch: ChannelSet,
    w: np.ndarray,
    ja: JammerAction,
    noise: float,
) -> float:
    """Received SINR of UE ``k``: desired power over IUI + jamming + noise."""
    return float(sinr_all(pa, phi, ch, w, ja, noise)[k])


def sum_rate(sinrs) -> float:
    s = np.asarray(sinrs, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINR values must be nonnegative")
    return float(np.sum(np.log2(1.0 + s)))


def outage_indicator(sinrs, rp: RewardParams) -> np.ndarray:
    # equality with the threshold counts as satisfied
    return (np.asarray(sinrs, dtype=float) < rp.sinr_min).astype(int)


def reward_parts(sinrs, pa: PowerAllocation, rp: RewardParams) -> tuple[float, float, float]:
    """(rate utility, power cost, outage cost)."""
    return (
        sum_rate(sinrs),
        rp.lambda1 * pa.total,
        rp.lambda2 * float(outage_indicator(sinrs, rp).sum()),
    )


def reward(sinrs, pa: PowerAllocation, rp: RewardParams) -> float:
    rate, power_cost, outage_cost = reward_parts(sinrs, pa, rp)
    return rate - power_cost - outage_cost
