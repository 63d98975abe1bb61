"""Frequency overlap of two random contiguous subchannel allocations.

Both packets occupy M contiguous subchannels out of B, with the start index
drawn uniformly.  The distribution of the overlap width m in [0, M] has a
closed form; a brute-force pair enumeration serves as its oracle.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class OverlapDistribution:
    """Probabilities of overlap width m = 0..M for two M-wide allocations."""

    probs: tuple[float, ...]

    @property
    def max_overlap(self) -> int:
        return len(self.probs) - 1


def _check_args(b: int, m_width: int) -> None:
    if not (1 <= m_width <= b):
        raise ValueError(f"need 1 <= m_width <= b, got m_width={m_width}, b={b}")


def overlap_distribution(b: int, m_width: int) -> OverlapDistribution:
    """Closed-form overlap distribution.

    Counted exactly in integers over the (b - m_width + 1)**2 equally likely
    start pairs, converted to float at the end.  The zero-overlap case applies
    for 2*m_width <= b; at 2*m_width == b it is the correct continuation of
    the same expression (verified against the oracle).
    """
    _check_args(b, m_width)
    m_w = m_width
    denom = (b + 1 - m_w) ** 2
    counts = []
    for m in range(m_w + 1):
        if m == m_w:
            num = b + 1 - m_w
        elif m < 2 * m_w - b:
            num = 0
        elif m == 0:
            num = (b + 2 - 2 * m_w) * (b + 1 - 2 * m_w)
        else:
            num = 2 * (b + m + 1 - 2 * m_w)
        counts.append(num)
    return OverlapDistribution(tuple(c / denom for c in counts))


def overlap_distribution_oracle(b: int, m_width: int) -> OverlapDistribution:
    """Brute-force oracle: enumerate all ordered start pairs and count overlaps."""
    _check_args(b, m_width)
    starts = range(b - m_width + 1)
    counts = [0] * (m_width + 1)
    for s1 in starts:
        for s2 in starts:
            ov = max(0, min(s1, s2) + m_width - max(s1, s2))
            counts[ov] += 1
    total = len(starts) ** 2
    return OverlapDistribution(tuple(c / total for c in counts))
