"""Geometry, large-scale path loss and small-scale fading for the BS / IRS / UE / jammer links."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PathLossParams:
    pl0_db: float = 30.0
    d0: float = 1.0
    beta_bu: float = 3.75
    beta_br: float = 2.2
    beta_ru: float = 2.2
    beta_ju: float = 2.5
    # "attenuation": gain = -(PL0 + 10 beta log10(d/d0)), i.e. -30 dB at 1 m.
    # "as_printed": gain = PL0 - 10 beta log10(d/d0), the log-distance formula
    # taken literally as a gain. See README "Link budget".
    convention: str = "attenuation"

    def __post_init__(self):
        if self.d0 <= 0:
            raise ValueError(f"reference distance must be positive, got {self.d0}")
        if self.convention not in ("attenuation", "as_printed"):
            raise ValueError(f"unknown path-loss convention {self.convention!r}")


def channel_gain_db(d: float, beta: float, params: PathLossParams = PathLossParams()) -> float:
    """Large-scale channel gain in dB at distance ``d``.

    With the default attenuation convention this is
    ``-(PL0 + 10 beta log10(d / d0))``. Distances below the reference distance
    are rejected rather than clamped.
    """
    if not np.isfinite(d) or d < params.d0:
        raise ValueError(f"distance {d} m is below the reference distance {params.d0} m")
    loss = 10.0 * beta * np.log10(d / params.d0)
    if params.convention == "as_printed":
        return params.pl0_db - loss
    return -(params.pl0_db + loss)


Rect = tuple[float, float, float, float]  # (x_min, x_max, y_min, y_max)

# UE area to the right of the BS, jammer strip beyond it; see README "Geometry".
DEFAULT_UE_REGION: Rect = (50.0, 150.0, 0.0, 100.0)
DEFAULT_JAMMER_REGION: Rect = (160.0, 210.0, 0.0, 100.0)


@dataclass
class Geometry:
    bs_position: np.ndarray
    irs_position: np.ndarray
    ue_positions: np.ndarray  # (K, 2)
    jammer_position: np.ndarray
    ue_region: Rect = DEFAULT_UE_REGION
    jammer_region: Rect = DEFAULT_JAMMER_REGION

    def __post_init__(self):
        self.bs_position = np.asarray(self.bs_position, dtype=float).reshape(2)
        self.irs_position = np.asarray(self.irs_position, dtype=float).reshape(2)
        self.ue_positions = np.atleast_2d(np.asarray(self.ue_positions, dtype=float))
        self.jammer_position = np.asarray(self.jammer_position, dtype=float).reshape(2)
        if self.ue_positions.shape[0] < 1 or self.ue_positions.shape[1] != 2:
            raise ValueError("need at least one 2-D UE position")
        for arr in (self.bs_position, self.irs_position, self.ue_positions, self.jammer_position):
            if not np.all(np.isfinite(arr)):
                raise ValueError("positions must be finite")

    @property
    def num_users(self) -> int:
        return self.ue_positions.shape[0]

    @classmethod
    def random(
        cls,
        num_users: int,
        rng: np.random.Generator,
        bs_position=(0.0, 0.0),
        irs_position=(75.0, 100.0),
        ue_region: Rect = DEFAULT_UE_REGION,
        jammer_region: Rect = DEFAULT_JAMMER_REGION,
        min_distance: float = 1.0,
    ) -> "Geometry":
        """Uniform UE and jammer placement inside their rectangles.

        Draws that put a UE closer than ``min_distance`` to the BS, IRS or
        jammer are rejected and redrawn.
        """
        if num_users < 1:
            raise ValueError("num_users must be >= 1")
        bs = np.asarray(bs_position, dtype=float)
        irs = np.asarray(irs_position, dtype=float)
        for _ in range(1000):
            ux = rng.uniform(ue_region[0], ue_region[1], size=num_users)
            uy = rng.uniform(ue_region[2], ue_region[3], size=num_users)
            jx = rng.uniform(jammer_region[0], jammer_region[1])
            jy = rng.uniform(jammer_region[2], jammer_region[3])
            ues = np.column_stack([ux, uy])
            jam = np.array([jx, jy])
            nearest = min(np.linalg.norm(ues - p, axis=1).min() for p in (bs, irs, jam))
            if nearest >= min_distance:
                break
        else:
            raise ValueError("could not place UEs away from the transmitters; regions overlap")
        return cls(bs, irs, ues, jam, ue_region=ue_region, jammer_region=jammer_region)


@dataclass
class ChannelSet:
    """Complex channels of one coherence realization.

    Vectors are stored as columns of the conjugate-transposed rows used in the
    received-signal model, e.g. ``g_bu[k]`` is the vector whose Hermitian is
    the BS -> UE_k row channel.
    """

    G: np.ndarray  # (M, N) BS -> IRS
    g_bu: np.ndarray  # (K, N)
    g_ru: np.ndarray  # (K, M)
    h_J: np.ndarray  # (K, N_J)
    gains: dict = field(default_factory=dict)  # linear large-scale gains per link

    def __post_init__(self):
        self.G = np.atleast_2d(np.asarray(self.G, dtype=complex))
        self.g_bu = np.atleast_2d(np.asarray(self.g_bu, dtype=complex))
        self.g_ru = np.asarray(self.g_ru, dtype=complex).reshape(self.g_bu.shape[0], -1)
        self.h_J = np.atleast_2d(np.asarray(self.h_J, dtype=complex))
        M, N = self.G.shape
        K = self.g_bu.shape[0]
        if self.g_bu.shape != (K, N):
            raise ValueError(f"g_bu shape {self.g_bu.shape} inconsistent with N={N}")
        if self.g_ru.shape != (K, M):
            raise ValueError(f"g_ru shape {self.g_ru.shape} inconsistent with K={K}, M={M}")
        if self.h_J.shape[0] != K:
            raise ValueError(f"h_J has {self.h_J.shape[0]} rows, expected K={K}")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(N, M, K, N_J)."""
        return self.G.shape[1], self.G.shape[0], self.g_bu.shape[0], self.h_J.shape[1]

    def without_irs(self) -> "ChannelSet":
        """Same realization with every IRS -> UE link removed."""
        return ChannelSet(self.G, self.g_bu, np.zeros_like(self.g_ru), self.h_J, dict(self.gains))


@dataclass
class PhaseConfig:
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.mod(np.asarray(self.theta, dtype=float).reshape(-1), TWO_PI)

    @classmethod
    def zeros(cls, M: int) -> "PhaseConfig":
        return cls(np.zeros(M))

    @classmethod
    def from_levels(cls, levels, num_levels: int) -> "PhaseConfig":
        return cls(TWO_PI * np.asarray(levels, dtype=float) / num_levels)

    @property
    def coefficients(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    def copy(self) -> "PhaseConfig":
        return PhaseConfig(self.theta.copy())


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian samples."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def sample_channels(
    geom: Geometry,
    params: PathLossParams,
    dims: tuple[int, int, int, int],
    rng: np.random.Generator,
) -> ChannelSet:
    """Draw Rayleigh-faded channels scaled by the log-distance gains of each link.

    IRS-element entries are drawn element by element from a child stream, so
    a realization with M elements is a prefix of the same realization with
    more elements.
    """
    N, M, K, NJ = (int(v) for v in dims)
    if min(N, K, NJ) < 1 or M < 0:
        raise ValueError(f"invalid dimensions (N, M, K, N_J) = {dims}")
    if geom.num_users != K:
        raise ValueError(f"geometry has {geom.num_users} UEs, dims say K={K}")

    direct_rng, irs_rng, jam_rng = rng.spawn(3)

    def lin(a, b, beta):
        return 10.0 ** (channel_gain_db(float(np.linalg.norm(a - b)), beta, params) / 10.0)

    gain_bu = np.array([lin(geom.bs_position, u, params.beta_bu) for u in geom.ue_positions])
    gain_ru = np.array([lin(geom.irs_position, u, params.beta_ru) for u in geom.ue_positions])
    gain_ju = np.array([lin(geom.jammer_position, u, params.beta_ju) for u in geom.ue_positions])
    gain_br = lin(geom.bs_position, geom.irs_position, params.beta_br)

    g_bu = _cn(direct_rng, (K, N)) * np.sqrt(gain_bu)[:, None]
    h_J = _cn(jam_rng, (K, NJ)) * np.sqrt(gain_ju)[:, None]
    rows = _cn(irs_rng, (M, N + K))
    G = rows[:, :N] * np.sqrt(gain_br)
    g_ru = rows[:, N:].T * np.sqrt(gain_ru)[:, None]
    return ChannelSet(
        G=G.reshape(M, N),
        g_bu=g_bu,
        g_ru=g_ru.reshape(K, M),
        h_J=h_J,
        gains={"bu": gain_bu, "ru": gain_ru, "ju": gain_ju, "br": gain_br},
    )


def effective_rows(ch: ChannelSet, phi: PhaseConfig) -> np.ndarray:
    """All composite rows ``g_ru,k^H Phi G + g_bu,k^H`` stacked as (K, N)."""
    coeff = phi.coefficients
    if coeff.shape[0] != ch.G.shape[0]:
        raise ValueError(f"phase config has {coeff.shape[0]} elements, channel has {ch.G.shape[0]}")
    return (ch.g_ru.conj() * coeff[None, :]) @ ch.G + ch.g_bu.conj()


def effective_channels(ch: ChannelSet, phi: PhaseConfig) -> np.ndarray:
    """Effective channel vectors h_eff,k as rows of a (K, N) array."""
    return effective_rows(ch, phi).conj()


def effective_channel(ch: ChannelSet, phi: PhaseConfig, k: int) -> np.ndarray:
    K = ch.g_bu.shape[0]
    if not 0 <= k < K:
        raise IndexError(f"user index {k} out of range for K={K}")
    return effective_channels(ch, phi)[k]
