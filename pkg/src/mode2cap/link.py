"""Link layer shared by the analytic chain and the simulator.

Path loss, per-subchannel SINR, EESM threshold reception, and the exclusion
radius: the minimum distance an interferer must keep for a packet to survive
a given frequency overlap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ScenarioConfig


@dataclass(frozen=True)
class ExclusionProfile:
    """Exclusion radii for overlap widths m = 1..M at one TX-RX distance.

    rho[m-1] is the radius for overlap m: 0.0 when reception survives an
    arbitrarily close interferer, math.inf when no interferer distance
    rescues reception under that overlap.
    """

    rho: tuple[float, ...]

    def for_overlap(self, m: int) -> float:
        return self.rho[m - 1]

    @property
    def max_finite(self) -> float:
        finite = [r for r in self.rho if math.isfinite(r)]
        return max(finite) if finite else 0.0

    @property
    def any_infinite(self) -> bool:
        return any(math.isinf(r) for r in self.rho)


@dataclass(frozen=True)
class EesmOutcome:
    effective_sinr: float
    success: bool


def pathloss(r: float, config: ScenarioConfig) -> float:
    """Linear channel gain (A*r)**-beta at distance r > 0."""
    if r <= 0.0:
        raise ValueError(f"distance must be positive, got {r}")
    return (config.pathloss_a * r) ** (-config.pathloss_beta)


def sinr_no_interference(r: float, config: ScenarioConfig) -> float:
    """Per-subchannel SINR of a packet received over noise only.

    Transmit power is split over the M occupied subchannels, noise is
    per-subchannel, so the ratio is l(r)*S / (M*sigma).
    """
    return pathloss(r, config) * config.tx_power_s / (
        config.packet_width_m * config.noise_sigma)


def sinr_one_interferer(r: float, r_int: float, config: ScenarioConfig) -> float:
    """Per-subchannel SINR with a single co-channel interferer at distance r_int."""
    s = config.tx_power_s
    return pathloss(r, config) * s / (
        pathloss(r_int, config) * s + config.packet_width_m * config.noise_sigma)


def exclusion_radius(r: float, m_overlap: int, config: ScenarioConfig) -> float:
    """Minimum interferer distance for reception to survive overlap m_overlap.

    Returns 0.0 when any interferer distance is survivable, math.inf when none
    is.  Derived by solving EESM > T for the interferer distance with M - m
    clean subchannels and m interfered ones.
    """
    m_w = config.packet_width_m
    if not (1 <= m_overlap <= m_w):
        raise ValueError(f"overlap must be in [1, {m_w}], got {m_overlap}")
    gamma = config.eesm_gamma
    ratio = m_w / m_overlap
    xi = ratio * math.exp(-config.sinr_threshold_t / gamma) \
        - (ratio - 1.0) * math.exp(-sinr_no_interference(r, config) / gamma)
    if xi >= 1.0:
        return 0.0
    if xi <= 0.0:
        return math.inf
    bracket = -pathloss(r, config) / (gamma * math.log(xi)) \
        - config.noise_sigma * m_w / config.tx_power_s
    if bracket <= 0.0:
        return math.inf
    return bracket ** (-1.0 / config.pathloss_beta) / config.pathloss_a


def exclusion_profile(r: float, config: ScenarioConfig) -> ExclusionProfile:
    """Exclusion radii for every overlap width 1..M at distance r."""
    return ExclusionProfile(tuple(
        exclusion_radius(r, m, config) for m in range(1, config.packet_width_m + 1)))


def effective_sinr(per_subchannel_sinr: Sequence[float] | np.ndarray,
                   gamma: float) -> float:
    """EESM collapse of per-subchannel SINRs into one effective SINR.

    -gamma * ln(mean(exp(-sinr_i / gamma))), evaluated in log space so that
    very large SINRs do not underflow to a bogus infinity.
    """
    x = -np.asarray(per_subchannel_sinr, dtype=float) / gamma
    if x.size == 0:
        raise ValueError("need at least one subchannel SINR")
    mx = x.max()
    if mx == -np.inf:
        # every subchannel SINR is +inf
        return math.inf
    lse = mx + math.log(np.exp(x - mx).sum())
    return float(-gamma * (lse - math.log(x.size)))


def eesm_receive(per_subchannel_sinr: Sequence[float] | np.ndarray,
                 config: ScenarioConfig) -> EesmOutcome:
    """Threshold reception test: success iff the effective SINR exceeds T."""
    eff = effective_sinr(per_subchannel_sinr, config.eesm_gamma)
    return EesmOutcome(effective_sinr=eff, success=eff > config.sinr_threshold_t)
