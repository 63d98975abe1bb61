"""Analytical packet-loss chain: collision probabilities, loss recursion,
quadrature over distance, and the capacity solver.

The chain per TX-RX distance r:
  * success_prob       -- no collision with the background flow of transmissions,
                          from the exclusion radii thinned by a Poisson line process;
  * repetition_noncollision_prob -- a repetition avoids the interferer that broke
                          the first attempt, given they repeat in the same slot;
  * loss_recursion     -- failure probability over all 1+nu attempts, tracking the
                          number of interferers known to be mid-repetition;
then PLR(lambda) integrates the per-distance loss uniformly over (0, R], and
capacity() inverts it against the QoS bound.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .config import (
    ScenarioConfig,
    TrafficIntensityError,
    transmit_probability,
    repetition_probability,
    truncation_depth,
    validate_config,
)
from .link import exclusion_profile, sinr_no_interference
from .overlap import overlap_distribution

# Beyond this many geometric terms the recursion table gets unreasonably wide;
# capping trades a tail below p**256 for bounded memory and flags the result.
MAX_TRUNCATION_DEPTH = 256

# Ignore clamping events within float dust of 1.
_CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class RecursionTable:
    """Result of one loss-recursion evaluation at a fixed distance.

    values[t, c] is the probability of still failing after t attempts with c
    interferers known to be mid-repetition.  Columns beyond valid_c_max(t)
    are padding-influenced and excluded from invariant checks; the returned
    plr_r = values[nu+1, 0] is exact with respect to the truncation depth.
    """

    plr_r: float
    p_s: float
    p_nc: float
    truncation_k: int
    c_max: int
    clamped: bool
    values: np.ndarray | None = None

    def valid_c_max(self, t: int) -> int:
        # the c = 0 column is exact at every level by construction
        if self.values is None:
            return 0
        return max(0, self.values.shape[1] - 1 - t * self.truncation_k)


@dataclass(frozen=True)
class PlrCurvePoint:
    lambda_rate: float
    plr: float
    error_estimate: float
    validity_warning: bool = False


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    above_search_limit: bool = False
    monotonicity_warning: bool = False
    validity_warning: bool = False

    @property
    def flags(self) -> tuple[str, ...]:
        out = []
        if self.above_search_limit:
            out.append("above_search_limit")
        if self.monotonicity_warning:
            out.append("nonmonotonic_plr")
        if self.validity_warning:
            out.append("model_validity")
        return tuple(out)


def _interference_weights(config: ScenarioConfig) -> np.ndarray:
    """Overlap probabilities for m = 1..M (index 0 dropped)."""
    dist = overlap_distribution(config.num_subchannels_b, config.packet_width_m)
    return np.asarray(dist.probs[1:], dtype=float)


def success_prob(r: float, config: ScenarioConfig) -> float:
    """Probability that one attempt survives the background flow at distance r.

    Closed form exp(-2*phi*p * sum_m P_m * rho_m(r)): each of the Poisson
    neighbors independently transmits with probability p and kills the packet
    iff it falls inside the exclusion radius of the realized overlap.  Zero
    when noise alone already breaks reception (SINR0 <= T) or when some
    possible overlap has an unbounded exclusion radius.
    """
    if sinr_no_interference(r, config) <= config.sinr_threshold_t:
        return 0.0
    weights = _interference_weights(config)
    rho = np.asarray(exclusion_profile(r, config).rho)
    if np.any(np.isinf(rho) & (weights > 0.0)):
        return 0.0
    p = transmit_probability(config)
    exponent = 2.0 * config.phi * p * float(np.dot(weights, np.where(weights > 0, rho, 0.0)))
    return math.exp(-exponent)


def success_prob_series(r: float, config: ScenarioConfig, r_bar: float,
                        n_max: int | None = None) -> float:
    """Series form of the attempt success probability, before the truncation
    range r_bar cancels out.

    Sums over the Poisson count n of neighbors within r_bar, the binomial
    count k of simultaneous transmitters among them, and the per-interferer
    survival Q1 = 1 - sum_m P_m * rho_m / r_bar.  Exists as an independent
    cross-check of the closed form; requires every exclusion radius finite
    and r_bar beyond the largest of them.
    """
    weights = _interference_weights(config)
    rho = np.asarray(exclusion_profile(r, config).rho)
    if np.any(np.isinf(rho) & (weights > 0.0)):
        raise ValueError("series form requires finite exclusion radii")
    mean_excl = float(np.dot(weights, np.where(weights > 0, rho, 0.0)))
    if r_bar < float(np.max(np.where(weights > 0, rho, 0.0), initial=0.0)):
        raise ValueError("r_bar must not be smaller than the largest exclusion radius")
    p = transmit_probability(config)
    q1 = 1.0 - mean_excl / r_bar
    z = 2.0 * config.phi * r_bar
    if n_max is None:
        n_max = int(math.ceil(z + 12.0 * math.sqrt(z) + 40.0))
    total = 0.0
    h = stats.poisson.pmf(np.arange(n_max + 1), z)
    for n in range(n_max + 1):
        k = np.arange(n + 1)
        inner = float(np.dot(stats.binom.pmf(k, n, p), q1 ** k))
        total += h[n] * inner
    return total


def repetition_noncollision_prob(r: float, config: ScenarioConfig) -> float:
    """Probability that a repetition escapes the interferer that collided with
    the first attempt, given both repeat in the same slot."""
    weights = _interference_weights(config)
    rho = np.asarray(exclusion_profile(r, config).rho)
    return _noncollision_from_profile(weights, rho)


def _noncollision_from_profile(weights: np.ndarray, rho: np.ndarray) -> float:
    """Core of the repetition non-collision probability.

    1 - (joint first+repetition failure) / (first-attempt failure), both
    expressed through overlap-weighted exclusion radii.  Unbounded radii are
    handled as the limit of a growing radius: the ratio tends to the total
    weight of the unbounded overlaps.
    """
    weights = np.asarray(weights, dtype=float)
    rho = np.asarray(rho, dtype=float)
    active = weights > 0.0
    inf_weight = float(weights[active & np.isinf(rho)].sum())
    if inf_weight > 0.0:
        return 1.0 - inf_weight
    denom = float(np.dot(weights, np.where(active, rho, 0.0)))
    if denom == 0.0:
        return 1.0
    pair_min = np.minimum.outer(rho, rho)
    numer = float(weights @ pair_min @ weights)
    return 1.0 - numer / denom


class _RecursionOperator:
    """Reusable loss-recursion evaluator for one (config, lambda) pair.

    Precomputes the binomial mixing matrices so that evaluating many
    distances (quadrature nodes) only costs a few small matrix products per
    repetition level.
    """

    def __init__(self, config: ScenarioConfig, truncation_k: int | None = None):
        self.config = config
        self.p = transmit_probability(config)
        self.nu = config.repetitions_nu
        k = truncation_k if truncation_k is not None else truncation_depth(config)
        self.capped = k > MAX_TRUNCATION_DEPTH
        self.k = min(k, MAX_TRUNCATION_DEPTH)
        self.c_max = self.nu * self.k
        if self.nu == 0:
            return
        self.width = (self.nu + 1) * self.k + 1
        n = np.arange(self.width)
        p_rep = repetition_probability(config)
        q_last = 1.0 / (self.nu + 1.0)
        self.g_rep = np.vstack([stats.binom.pmf(n, c, p_rep) for c in n])
        self.g_last = np.vstack([stats.binom.pmf(n, i, q_last) for i in n])
        self.kernel = self.p ** np.arange(self.k)
        # shift[c, j] = x[c - j] for c >= j, 0 otherwise, built by gather
        idx = np.subtract.outer(n, n)
        self._mask = idx >= 0
        self._idx = np.where(self._mask, idx, 0)

    def _shifted(self, x: np.ndarray) -> np.ndarray:
        return np.where(self._mask, x[self._idx], 0.0)

    def run(self, p_s: float, p_nc: float) -> tuple[float, bool, np.ndarray]:
        p = self.p
        clamped = self.capped
        if self.nu == 0:
            geom = (1.0 - p ** self.k) / (1.0 - p)
            u = (1.0 - p_s) * geom
            if u > 1.0 + _CLAMP_TOL:
                clamped = True
            v = p + (1.0 - p) * min(u, 1.0)
            table = np.array([[1.0], [v]])
            return v, clamped, table

        width = self.width
        yfac = 1.0 - p_nc ** np.arange(width)
        v_prev = np.ones(width)
        rows = [v_prev]
        for _ in range(self.nu + 1):
            padded = np.concatenate([v_prev, np.ones(self.k)])
            z = np.zeros(width)
            for k_i in range(self.k):
                z += self.kernel[k_i] * padded[k_i + 1:k_i + 1 + width]
            t_geom = self.g_last @ self._shifted(z).T
            u = (1.0 - p_s) * np.einsum("ci,ic->c", self.g_rep, t_geom)
            if p_s > 0.0:
                t_rep = self.g_last @ self._shifted(v_prev).T
                y = p_s * np.einsum("ci,ic->c", self.g_rep, yfac[:, None] * t_rep)
            else:
                y = np.zeros(width)
            if np.any(u > 1.0 + _CLAMP_TOL) or np.any(y > 1.0 + _CLAMP_TOL):
                clamped = True
            np.clip(u, 0.0, 1.0, out=u)
            np.clip(y, 0.0, 1.0, out=y)
            v = p * v_prev + (1.0 - p) * (u + y)
            if np.any(v > 1.0 + _CLAMP_TOL):
                clamped = True
            np.clip(v, 0.0, 1.0, out=v)
            rows.append(v)
            v_prev = v
        return float(v_prev[0]), clamped, np.vstack(rows)


def loss_recursion(r: float, config: ScenarioConfig, *,
                   p_s: float | None = None, p_nc: float | None = None,
                   truncation_k: int | None = None) -> RecursionTable:
    """Failure probability over all 1+nu attempts at distance r.

    p_s / p_nc may be supplied to evaluate the recursion under forced
    collision probabilities (degenerate-regime checks); by default they are
    computed from the config at distance r.
    """
    if p_s is None:
        p_s = success_prob(r, config)
    if p_nc is None:
        p_nc = repetition_noncollision_prob(r, config)
    op = _RecursionOperator(config, truncation_k)
    value, clamped, table = op.run(p_s, p_nc)
    return RecursionTable(plr_r=value, p_s=p_s, p_nc=p_nc, truncation_k=op.k,
                          c_max=op.c_max, clamped=clamped, values=table)


def plr_at_distance(r: float, config: ScenarioConfig, *,
                    truncation_k: int | None = None) -> float:
    """Packet loss rate for a receiver at distance r."""
    return loss_recursion(r, config, truncation_k=truncation_k).plr_r


@lru_cache(maxsize=8)
def _gauss_nodes(points: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(points)
    return x, w


def _quadrature(config: ScenarioConfig, op: _RecursionOperator,
                panels: int, points: int) -> tuple[float, bool]:
    x, w = _gauss_nodes(points)
    r_max = config.range_r
    width = r_max / panels
    total = 0.0
    clamped = False
    for i in range(panels):
        mid = (i + 0.5) * width
        half = 0.5 * width
        for xj, wj in zip(x, w):
            r = mid + half * xj
            p_s = success_prob(r, config)
            p_nc = repetition_noncollision_prob(r, config)
            value, cl, _ = op.run(p_s, p_nc)
            total += wj * half * value
            clamped = clamped or cl
    return total / r_max, clamped


def plr(lambda_rate: float, config: ScenarioConfig, *,
        truncation_k: int | None = None, panels: int = 4,
        points: int = 16) -> PlrCurvePoint:
    """Packet loss rate at the given load, integrated uniformly over distance.

    Composite Gauss-Legendre quadrature with `points` nodes on each of
    `panels` panels of (0, R]; the reported value uses doubled panels and the
    error estimate is the difference between the two refinements.
    """
    cfg = config.with_lambda(lambda_rate)
    op = _RecursionOperator(cfg, truncation_k)
    coarse, cl_coarse = _quadrature(cfg, op, panels, points)
    fine, cl_fine = _quadrature(cfg, op, 2 * panels, points)
    return PlrCurvePoint(
        lambda_rate=lambda_rate,
        plr=float(fine),
        error_estimate=float(abs(fine - coarse)),
        validity_warning=cl_coarse or cl_fine,
    )


def capacity(config: ScenarioConfig, *, lambda_lo: float = 1e-4,
             lambda_cap: float = 1e6, rel_tol: float = 1e-3,
             max_iter: int = 60, monotonicity_points: int = 8) -> CapacityResult:
    """Largest load whose loss rate stays within the QoS bound.

    Bisection on log(lambda) between a feasible lower bound and an infeasible
    upper bound found by decade expansion.  Loads that break the model
    (p >= 1) count as infeasible.  PLR monotonicity in lambda is sampled on a
    log grid and flagged, not assumed.
    """
    target = config.plr_target
    # validity of the evaluation that establishes the returned capacity;
    # clamping at overload points probed during bracketing is not reported
    validity = False

    def feasible(lam: float) -> bool:
        nonlocal validity
        if target >= 1.0:
            return True
        try:
            point = plr(lam, config)
        except TrafficIntensityError:
            return False
        if point.plr <= target:
            validity = point.validity_warning
            return True
        return False

    if not feasible(lambda_lo):
        return CapacityResult(0.0, validity_warning=validity)

    lo = lambda_lo
    hi = lambda_lo
    above_limit = False
    while True:
        nxt = hi * 10.0
        if nxt >= lambda_cap:
            if feasible(lambda_cap):
                return CapacityResult(lambda_cap, above_search_limit=True,
                                      validity_warning=validity)
            hi = lambda_cap
            break
        if feasible(nxt):
            lo = hi = nxt
        else:
            hi = nxt
            break

    for _ in range(max_iter):
        if hi / lo <= 1.0 + rel_tol:
            break
        mid = math.sqrt(lo * hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid

    mono_warning = False
    if monotonicity_points >= 2:
        grid = np.geomspace(lambda_lo, hi, monotonicity_points)
        values = []
        for lam in grid:
            try:
                point = plr(lam, config)
            except TrafficIntensityError:
                break
            values.append(point.plr)
        diffs = np.diff(values)
        if np.any(diffs < -1e-9 * np.maximum(np.abs(values[:-1]), 1e-300)):
            mono_warning = True

    return CapacityResult(lo, above_search_limit=above_limit,
                          monotonicity_warning=mono_warning,
                          validity_warning=validity)


def _sweep_worker(payload: tuple[ScenarioConfig, dict, dict]) -> CapacityResult:
    config, overrides, kwargs = payload
    cfg = validate_config(replace(config, **overrides))
    return capacity(cfg, **kwargs)


def capacity_sweep(config: ScenarioConfig,
                   grid: Mapping[str, Sequence] | Iterable[tuple[str, Sequence]],
                   *, workers: int = 1,
                   **capacity_kwargs) -> list[tuple[dict, CapacityResult]]:
    """Capacity over the cartesian product of parameter value lists.

    grid maps ScenarioConfig field names (e.g. repetitions_nu,
    num_subchannels_b, plr_target) to value lists.  Rows come back in grid
    order regardless of the number of workers.
    """
    items = list(grid.items()) if isinstance(grid, Mapping) else list(grid)
    if any(name == "lambda_rate" for name, _ in items):
        raise ValueError("lambda_rate is the quantity capacity solves for; it cannot be swept")
    names = [name for name, _ in items]
    combos = [dict(zip(names, values)) for values in product(*(vals for _, vals in items))]
    payloads = [(config, overrides, capacity_kwargs) for overrides in combos]
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, payloads))
    else:
        results = [_sweep_worker(p) for p in payloads]
    return list(zip(combos, results))
