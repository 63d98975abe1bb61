"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  The scenario constants not
fixed by the reference parameter set are pinned here: phi = 0.05/m and
sigma = 1e-13 W.
"""
import math

import numpy as np
import pytest

from mode2cap import (
    ScenarioConfig,
    SimConfig,
    capacity_sweep,
    eesm_receive,
    exclusion_profile,
    exclusion_radius,
    loss_recursion,
    overlap_distribution,
    overlap_distribution_oracle,
    plr,
    run,
    sinr_no_interference,
    sinr_one_interferer,
    success_prob,
    success_prob_series,
    transmit_probability,
    truncation_depth,
    validate_config,
)

PHI = 0.05
SIGMA = 1e-13
WORKERS = 2


def pinned(**overrides) -> ScenarioConfig:
    return validate_config(ScenarioConfig(phi=PHI, noise_sigma=SIGMA, **overrides))


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)
    assert ok, f"{criterion}: {detail}"


def test_criterion_1_overlap_formula_closure():
    worst = 0.0
    for b in range(1, 33):
        for m in range(1, b + 1):
            closed = overlap_distribution(b, m).probs
            oracle = overlap_distribution_oracle(b, m).probs
            worst = max(worst, max(abs(x - y) for x, y in zip(closed, oracle)))
    report("1 overlap-closure", worst <= 1e-12,
           f"max |closed - enumeration| = {worst:.2e} over all 1 <= M <= B <= 32")


def test_criterion_2_degenerate_recursion_identities():
    errs = []
    for nu in range(4):
        cfg = pinned(repetitions_nu=nu, lambda_rate=100.0)
        p = transmit_probability(cfg)
        got = loss_recursion(100.0, cfg, p_s=1.0, p_nc=1.0).plr_r
        errs.append(abs(got - p ** (nu + 1)))
    cfg0 = pinned(repetitions_nu=0, lambda_rate=100.0)
    p = transmit_probability(cfg0)
    k = truncation_depth(cfg0)
    p_s = 0.6
    got = loss_recursion(100.0, cfg0, p_s=p_s).plr_r
    exact_truncated = p + (1 - p_s) * (1 - p ** k)
    geom_ok = abs(got - exact_truncated) <= 1e-12 \
        and abs(got - (p + (1 - p_s))) <= p ** k
    report("2 degenerate-recursion", max(errs) <= 1e-12 and geom_ok,
           f"max |V - p^(nu+1)| = {max(errs):.2e} (nu <= 3); "
           f"nu=0 geometric identity within p^K = {p ** k:.2e}")


def test_criterion_3_range_truncation_cancellation():
    rng = np.random.default_rng(20240817)
    draws = 0
    worst = 0.0
    while draws < 20:
        b = int(rng.integers(4, 17))
        m = int(rng.integers(1, min(4, b) + 1))
        try:
            cfg = validate_config(ScenarioConfig(
                phi=float(rng.uniform(0.005, 0.05)),
                lambda_rate=float(rng.uniform(1.0, 150.0)),
                repetitions_nu=int(rng.integers(0, 5)),
                num_subchannels_b=b,
                packet_width_m=m,
                pathloss_a=float(rng.uniform(10.0, 60.0)),
                pathloss_beta=float(rng.uniform(2.0, 4.0)),
                sinr_threshold_t=float(10 ** rng.uniform(0.0, 0.6)),
                eesm_gamma=float(rng.uniform(0.8, 2.0)),
                noise_sigma=float(10 ** rng.uniform(-14.0, -12.0)),
            ))
        except Exception:
            continue
        r = float(rng.uniform(5.0, 0.95 * cfg.range_r))
        prof = exclusion_profile(r, cfg)
        if prof.any_infinite:
            continue
        r_bar = max(prof.max_finite * float(rng.uniform(1.05, 2.5)), 50.0)
        if 2.0 * cfg.phi * r_bar > 50.0:
            r_bar = 25.0 / cfg.phi
            if r_bar < prof.max_finite:
                continue
        closed = success_prob(r, cfg)
        series = success_prob_series(r, cfg, r_bar=r_bar)
        worst = max(worst, abs(series - closed))
        draws += 1
    report("3 cancellation", worst <= 1e-9,
           f"max |series - closed form| = {worst:.2e} over 20 draws")


def test_criterion_4_eesm_exclusion_consistency():
    cfg = pinned()
    rng = np.random.default_rng(7)
    checked = 0
    flips_ok = True
    while checked < 100:
        r = float(rng.uniform(10.0, 185.0))
        m = int(rng.integers(1, 4))
        rho = exclusion_radius(r, m, cfg)
        if not (0.0 < rho < math.inf):
            continue
        s0 = sinr_no_interference(r, cfg)
        outcomes = []
        for eps in (1e-6, -1e-6):
            s1 = sinr_one_interferer(r, rho * (1 + eps), cfg)
            sinrs = [s0] * (3 - m) + [s1] * m
            outcomes.append(eesm_receive(sinrs, cfg).success)
        flips_ok = flips_ok and outcomes == [True, False]
        checked += 1
    report("4 eesm-exclusion-consistency", flips_ok,
           "success flips across rho*(1 +/- 1e-6) in 100/100 draws")


@pytest.mark.slow
def test_criterion_5_analytic_vs_simulation():
    # loads chosen per nu so the analytic PLR spans the measurable band
    points = [
        (0, 1.0, dict(num_ues=500, num_slots=40000, replications=6)),
        (0, 10.0, dict(num_ues=300, num_slots=15000, replications=4)),
        (1, 5.0, dict(num_ues=300, num_slots=15000, replications=4)),
        (1, 20.0, dict(num_ues=300, num_slots=15000, replications=4)),
        (2, 10.0, dict(num_ues=300, num_slots=15000, replications=4)),
        (2, 30.0, dict(num_ues=300, num_slots=15000, replications=4)),
    ]
    lines = []
    ok = True
    for nu, lam, size in points:
        cfg = pinned(repetitions_nu=nu, lambda_rate=lam)
        analytic = plr(lam, cfg).plr
        assert 1e-3 <= analytic <= 1e-1, "load must sit in the measurable band"
        rep = run(SimConfig(scenario=cfg, seed=42, **size), workers=WORKERS)
        ratio = analytic / rep.plr_estimate
        ci_rel = rep.confidence_interval_95 / rep.plr_estimate
        ok = ok and 0.5 <= ratio <= 2.0 and ci_rel < 0.3
        lines.append(f"nu={nu} lam={lam:g}: ratio={ratio:.2f} ci={ci_rel:.0%}")
    report("5 analytic-vs-simulation", ok, "; ".join(lines))


@pytest.mark.slow
def test_criterion_6_optimal_repetition_count():
    outcomes = {}
    for target, expected in ((1e-2, {3, 4}), (1e-5, {6, 7})):
        rows = capacity_sweep(
            ScenarioConfig(phi=PHI, noise_sigma=SIGMA, plr_target=target),
            {"repetitions_nu": list(range(9))}, workers=WORKERS)
        caps = {ov["repetitions_nu"]: res.capacity for ov, res in rows}
        best = max(caps, key=caps.get)
        outcomes[target] = (best, best in expected)
    ok = all(hit for _, hit in outcomes.values())
    report("6 optimal-repetitions", ok,
           f"argmax nu at 1e-2: {outcomes[1e-2][0]} (want 3 or 4); "
           f"at 1e-5: {outcomes[1e-5][0]} (want 6 or 7)")


def _best_capacity(b: int, target: float) -> float:
    rows = capacity_sweep(
        ScenarioConfig(phi=PHI, noise_sigma=SIGMA, plr_target=target,
                       num_subchannels_b=b),
        {"repetitions_nu": list(range(9))}, workers=WORKERS)
    return max(res.capacity for _, res in rows)


@pytest.mark.slow
def test_criterion_7a_high_reliability_bandwidth_cliff():
    # M = 3 bounds the bandwidth sweep below at B = 3
    reference = _best_capacity(10, 1e-5)
    ratios = {b: _best_capacity(b, 1e-5) / reference for b in (3, 4, 5)}
    ok = all(r < 0.05 for r in ratios.values())
    report("7a capacity-cliff-below-6", ok,
           "C(B)/C(10) at 1e-5: " +
           ", ".join(f"B={b}: {r:.3f}" for b, r in ratios.items()) +
           " (required < 0.05)")


@pytest.mark.slow
def test_criterion_7b_low_reliability_superlinear_growth():
    caps = [_best_capacity(b, 1e-2) for b in range(4, 13)]
    diffs = np.diff(caps)
    ok = bool(np.all(np.diff(diffs) > 0.0))
    report("7b capacity-superlinear-growth", ok,
           "successive capacity differences over B=4..12: " +
           ", ".join(f"{d:.2f}" for d in diffs))


@pytest.mark.slow
def test_criterion_8_property_suite():
    details = []
    ok = True

    for nu in (0, 2):
        cfg = pinned(repetitions_nu=nu)
        values = [plr(lam, cfg).plr
                  for lam in (0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)]
        mono = all(a <= b * (1 + 1e-9) for a, b in zip(values, values[1:]))
        ok = ok and mono
        details.append(f"PLR nondecreasing (nu={nu}): {mono}")

    cfg = pinned()
    for lam in (5.0, 20.0):
        k = truncation_depth(cfg.with_lambda(lam))
        delta = abs(plr(lam, cfg, truncation_k=2 * k).plr - plr(lam, cfg).plr)
        bound = cfg.plr_target / 10.0
        ok = ok and delta < bound
        details.append(f"K doubling at lam={lam:g}: d={delta:.1e}<{bound:.0e}")
        point = plr(lam, cfg)
        quad_ok = point.error_estimate <= 1e-3 * point.plr
        ok = ok and quad_ok
        details.append(f"panel halving at lam={lam:g}: "
                       f"{point.error_estimate / point.plr:.1e}<1e-3")

    sim_cfg = SimConfig(scenario=pinned(lambda_rate=20.0), num_ues=150,
                        num_slots=4000, seed=5, replications=3)
    reports = [run(sim_cfg, workers=w) for w in (1, 2, 3)]
    det = reports[0] == reports[1] == reports[2]
    ok = ok and det
    details.append(f"simulator worker-count invariance: {det}")

    report("8 property-suite", ok, "; ".join(details))
