"""Acceptance criteria 1-12, each at its stated tolerance.

Every test prints one ``criterion N: PASS/FAIL`` line; the lines are
repeated in the pytest terminal summary.
"""
import hashlib
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from dmmf import bounds
from dmmf.cli import main
from dmmf.config import dump_config, load_config
from dmmf.ideal import ideal_multi, ideal_single, oracle_multi, verify_concavity
from dmmf.mechanism import MechanismConfig
from dmmf.simulator import (
    AgentSetup,
    Scenario,
    check_lemma_mult,
    check_lemma_single,
    check_win_windows,
    run_episode,
    run_replications,
)
from dmmf.strategies import KmaxFlooder, WinTriggered, beta_aggressive
from dmmf.value_models import (
    Bernoulli,
    DemandDistribution,
    Discrete,
    MarkovValueModel,
    Uniform,
    stationary_profile,
    steady_state_mixture,
)
from scenarios import random_scenario

CONFIG_DIR = Path(__file__).parent.parent / "configs"
GRID21 = np.round(np.linspace(0, 1, 21), 12)
SQRT_SLACK_C = 10  # constant in front of k_max*sqrt(T); only its order is known


def v_star(model, beta):
    mix = steady_state_mixture(model)
    if isinstance(mix, DemandDistribution):
        return ideal_multi(mix, beta).value
    return ideal_single(mix, beta).value


def run_config(name, jobs=1):
    cfg = load_config(CONFIG_DIR / name)
    sc = cfg.scenario()
    return cfg, sc, run_replications(sc, cfg.replications, cfg.master_seed, jobs=jobs)


# ---------------------------------------------------------------------------

def test_criterion_01_lemma_single_on_random_configs(acceptance_report):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    configs = violations = adversaries = 0
    while configs < 1000:
        alpha = float(rng.uniform(0.05, 0.95))
        sc = random_scenario(rng, "single_round", 10_000, focal_alpha=alpha)
        adversaries += any(a.is_adversary for a in sc.agents)
        tr = run_episode(sc, configs)
        violations += sum(not check_lemma_single(tr, i).passed for i in range(tr.num_agents))
        configs += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed <= 120
    acceptance_report(1, ok, f"{configs} single-round configs, {adversaries} with adversaries, "
                             f"{violations} prefix violations, {elapsed:.1f}s")
    assert ok


def test_criterion_02_lemma_mult_on_random_configs(acceptance_report):
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    configs = violations = 0
    while configs < 500:
        sc = random_scenario(rng, "reusable", 10_000, max_k=8, r_range=(1.0, 4.0))
        tr = run_episode(sc, configs)
        violations += sum(not check_lemma_mult(tr, i) for i in range(tr.num_agents))
        configs += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed <= 120
    acceptance_report(2, ok, f"{configs} reusable configs, {violations} violations, {elapsed:.1f}s")
    assert ok


def test_criterion_03_ideal_utility_exactness(acceptance_report):
    bern = max(abs(ideal_single(Bernoulli(p), b).value - min(p, b))
               for p in np.round(np.arange(1, 10) * 0.1, 12) for b in GRID21)
    exact = [b - b * b / 2 for b in GRID21]
    uni = max(abs(ideal_single(Uniform(0, 1), b).value - e) for b, e in zip(GRID21, exact))
    disc_dist = Uniform(0, 1).discretize(10_000)
    disc = max(abs(ideal_single(disc_dist, b).value - e) for b, e in zip(GRID21, exact))
    ok = bern <= 1e-12 and uni <= 1e-9 and disc <= 2e-4
    acceptance_report(3, ok, f"bernoulli max err {bern:.1e} (1e-12), uniform analytic {uni:.1e} (1e-9), "
                             f"discretized {disc:.1e} (2e-4)")
    assert ok


def test_criterion_04_multi_round_lp_against_oracle(acceptance_report):
    rng = np.random.default_rng(404)
    below = 0
    coarse_sum = fine_sum = 0.0
    dur_one_err = concave_worst = 0.0
    for _ in range(20):
        m = int(rng.integers(1, 4))
        probs = rng.dirichlet(np.ones(m))
        d = DemandDistribution(tuple((float(rng.uniform(0.1, 2.0)), int(rng.integers(1, 5)), float(q))
                                     for q in probs), 4)
        scale = float(np.max(d.values * d.durations))
        for beta in (0.25, 0.5, 0.75, 1.0):
            lp = ideal_multi(d, beta).value
            fine = lp - oracle_multi(d, beta, 0.001)
            coarse = lp - oracle_multi(d, beta, 0.01)
            below += fine < -1e-3 * scale
            if coarse > 1e-12:
                coarse_sum += coarse
                fine_sum += fine
        curve = [(b, ideal_multi(d, b).value) for b in GRID21]
        concave_worst = max(concave_worst, verify_concavity(curve).worst_violation)
        # same values with every duration set to 1
        flat = DemandDistribution(tuple((v, 1, p) for v, _, p in d.support), 1)
        single = Discrete(tuple(d.values), tuple(d.probs))
        for b in GRID21[1:]:
            dur_one_err = max(dur_one_err, abs(ideal_multi(flat, b).value - ideal_single(single, b).value))
        single_curve = [(b, ideal_single(single, b).value) for b in GRID21]
        concave_worst = max(concave_worst, verify_concavity(single_curve).worst_violation)
    shrink = coarse_sum / fine_sum if fine_sum > 0 else np.inf
    ok = below == 0 and shrink >= 5 and dur_one_err <= 1e-9 and concave_worst <= 1e-9
    acceptance_report(4, ok, f"LP below oracle in {below}/80 cases; gap shrink {shrink:.1f}x (>=5); "
                             f"duration-1 err {dur_one_err:.1e}; worst concavity {concave_worst:.1e}")
    assert ok


def test_criterion_05_worst_case_robustness(acceptance_report):
    cfg, sc, s = run_config("worst_case_uniform.toml")
    alpha = cfg.agents[0].alpha
    bound = bounds.worst_case_iid(alpha) * v_star(sc.agents[0].model, alpha)
    ok = s.util_mean[0] >= bound - 3 * s.util_se[0] and s.invariant_violations.sum() == 0
    acceptance_report(5, ok, f"util/round {s.util_mean[0]:.6f} (se {s.util_se[0]:.1e}) vs bound {bound:.6f}")
    assert ok


def test_criterion_06_bernoulli_near_optimality(acceptance_report):
    cfg, sc, s = run_config("bernoulli_values.toml")
    alpha = cfg.agents[0].alpha
    vs = v_star(sc.agents[0].model, alpha)
    bound = bounds.bernoulli(alpha, 0.9) * vs
    ok = abs(vs - 0.1) <= 1e-12 and s.util_mean[0] >= bound - 3 * s.util_se[0]
    acceptance_report(6, ok, f"util/round {s.util_mean[0]:.6f} (se {s.util_se[0]:.1e}) vs bound {bound:.6f}")
    assert ok


def test_criterion_07_correlated_guarantee(acceptance_report):
    cfg, sc, s = run_config("correlated_chain.toml")
    alpha = cfg.agents[0].alpha
    model = sc.agents[0].model
    gamma = stationary_profile(model).gamma
    bound = bounds.arbitrary_correlation(gamma) * v_star(model, alpha)
    ok = (abs(gamma - 0.5) <= 1e-12 and cfg.agents[0].strategy.beta == alpha / 2
          and s.util_mean[0] >= bound - 3 * s.util_se[0])
    acceptance_report(7, ok, f"gamma {gamma:.3f}; util/round {s.util_mean[0]:.6f} (se {s.util_se[0]:.1e}) "
                             f"vs bound {bound:.6f}")
    assert ok


def test_criterion_08_markov_impossibility(acceptance_report):
    cfg = load_config(CONFIG_DIR / "markov_window.toml")
    base = cfg.scenario()
    model = base.agents[0].model
    alpha, T = cfg.agents[0].alpha, cfg.mechanism.horizon
    ceiling = bounds.impossibility_markov(alpha, 0.5) * v_star(model, alpha)
    worst_excess = -np.inf
    misses = 0
    for beta in np.round(np.arange(1, 21) * 0.05, 12):
        sc = Scenario(base.mechanism, (AgentSetup(beta_aggressive(model, float(beta)), model),
                                       AgentSetup(WinTriggered(ell=3, target=0))))
        s = run_replications(sc, cfg.replications, cfg.master_seed)
        worst_excess = max(worst_excess, s.util_mean[0] - (ceiling + 3 * s.util_se[0] + 5 / T))
        misses += s.window_violations
    ok = worst_excess <= 0 and misses == 0
    acceptance_report(8, ok, f"20 budgets; max util - (ceiling {ceiling:.6f} + 3se + 5/T) = {worst_excess:.2e}; "
                             f"window misses {misses}")
    assert ok


def test_criterion_09_reusable_impossibility(acceptance_report):
    alpha, r, k_max, T = 0.5, 2.0, 10, 100_000
    details, ok = [], True
    for beta, seed in ((0.25, 9025), (0.5, 9050)):
        model = MarkovValueModel.iid(Bernoulli(beta))
        sc = Scenario(MechanismConfig((alpha, 1 - alpha), "reusable", T, r, k_max),
                      (AgentSetup(beta_aggressive(model, beta), model), AgentSetup(KmaxFlooder(k_max))))
        s = run_replications(sc, 10, seed)
        vs = v_star(model, beta)
        ceiling = bounds.impossibility_mult(alpha, r, k_max, vs, T)
        passed = s.total_util_mean[0] <= ceiling + 3 * s.total_util_se[0]
        ok &= passed
        details.append(f"beta={beta}: total {s.total_util_mean[0]:.1f} (se {s.total_util_se[0]:.1f}) "
                       f"vs ceiling {ceiling:.1f}")
    acceptance_report(9, ok, "; ".join(details))
    assert ok


def test_criterion_10_reusable_guarantee(acceptance_report):
    cfg, sc, s = run_config("reusable_guarantee.toml")
    alpha, beta = cfg.agents[0].alpha, cfg.agents[0].strategy.beta
    m = cfg.mechanism
    r, coeff = bounds.guarantee_mult_tuned(alpha, beta)
    vs = v_star(sc.agents[0].model, beta)
    floor = coeff * vs * m.horizon - SQRT_SLACK_C * m.k_max * np.sqrt(m.horizon) - 3 * s.total_util_se[0]
    ok = abs(r - m.r) <= 1e-12 and s.total_util_mean[0] >= floor and s.invariant_violations.sum() == 0
    acceptance_report(10, ok, f"total {s.total_util_mean[0]:.1f} (se {s.total_util_se[0]:.1f}) vs floor {floor:.1f} "
                              f"(coefficient {coeff:.6f}, v* {vs:.6f}, c={SQRT_SLACK_C})")
    assert ok


def test_criterion_11_bound_identities(acceptance_report):
    alphas = np.linspace(0.01, 0.99, 99)
    gammas = np.linspace(0.0, 1.0, 101)
    betas = np.linspace(0.05, 1.0, 20)
    errs = {
        "general(a,a,1)": max(abs(bounds.guarantee_general(a, a, 1.0) - 1 / (2 - a)) for a in alphas),
        "tuned mult": max(abs(bounds.guarantee_mult(a, b, bounds.tuned_r(a, b)) - a / (a + b - a * b))
                          for a in alphas for b in betas),
        "moderate floor": max(bounds.moderate_correlation_floor(a, g) - bounds.moderate_correlation(a, g)
                              for a in alphas for g in gammas),
        "high floor": max(bounds.high_correlation_floor(a, g) - bounds.high_correlation(a, g)[0]
                          for a in alphas for g in gammas if bounds.high_correlation_condition(a, g)),
        "alpha->0 limit": max(abs(bounds.impossibility_markov_raw(1e-14, g)
                                  - bounds.impossibility_markov_small_alpha(g)) for g in gammas[1:]),
        "gamma->0 limit": max(abs(bounds.impossibility_markov_raw(a, 1e-15)
                                  - bounds.impossibility_markov_small_gamma(a)) for a in alphas[alphas <= 0.5]),
    }
    ok = all(e <= 1e-12 for e in errs.values())
    acceptance_report(11, ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + " (1e-12)")
    assert ok


def _sha(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def test_criterion_12_trace_determinism(tmp_path, acceptance_report):
    mismatched, checked = [], 0
    for path in sorted(CONFIG_DIR.glob("*.toml")):
        cfg = load_config(path)
        cfg = replace(cfg, outputs=replace(cfg.outputs, summary_path="summary.txt", trace_path="trace.csv"))
        src = tmp_path / path.name
        src.write_text(dump_config(cfg))
        digests = []
        for run, jobs in enumerate(("1", "2", "1")):
            out = tmp_path / f"{path.stem}_{run}"
            assert main(["simulate", str(src), "--jobs", jobs, "--out-dir", str(out)]) == 0
            digests.append((_sha(out / "trace.csv"), _sha(out / "summary.txt")))
            (out / "trace.csv").unlink()
        checked += 1
        if len(set(digests)) != 1:
            mismatched.append(path.stem)
    ok = not mismatched
    acceptance_report(12, ok, f"{checked} configs, full size, jobs 1/2/1: "
                              f"{'identical' if ok else 'differ: ' + ', '.join(mismatched)}")
    assert ok
