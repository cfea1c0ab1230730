"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured values.

Criteria that need the EMT testbed use the shipped smoke scenario (10x
coarser micro step, 4 s horizon) where a runtime bound applies; the
full-resolution scenario reproduces the same numbers in minutes via the CLI
(see README).
"""

import dataclasses
import math
import time
from pathlib import Path

import numpy as np
import pytest

from hmmemt import emt
from hmmemt.diagnostics import make_test_system, numerical_jacobian, stiffness_report, trajectory_error
from hmmemt.hmm import HmmConfig, PhaseSchedule, run_schedule
from hmmemt.io import read_trace_csv
from hmmemt.kernel import discretize_kernel, kernel_moment, make_gaussian_kernel
from hmmemt.runner import build_system, run_bench
from hmmemt.scenario import load_scenario
from hmmemt.solver import StateVector, integrate_micro

from test_solver import measured_rk4_order

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

COMPARE_VARS = [
    "i_4_D", "i_4_Q", "v_3_D", "v_3_Q", "v_4_D", "v_4_Q",
    "env(i_1)", "env(i_2)", "env(i_7)",
]


def report(name, ok, detail, started):
    flag = "PASS" if ok else "FAIL"
    print(f"[{flag}] {name}: {detail} ({time.perf_counter() - started:.1f}s)")
    assert ok, f"{name}: {detail}"


def test_kernel_moments_table_parameters():
    t0 = time.perf_counter()
    w = discretize_kernel(make_gaussian_kernel(0.011, 0.0044), 5e-6)
    m0 = kernel_moment(w, 0)
    m1 = kernel_moment(w, 1)
    ok = abs(m0 - 1.0) <= 1e-12 and abs(m1) <= 1e-12 * 0.011
    elapsed = time.perf_counter() - t0
    report(
        "kernel moments",
        ok and elapsed < 1.0,
        f"|m0 - 1| = {abs(m0 - 1):.2e} (<=1e-12), |m1| = {abs(m1):.2e} (<=1.1e-14)",
        t0,
    )


def test_rk4_convergence_order():
    t0 = time.perf_counter()
    slope, errs = measured_rk4_order()
    elapsed = time.perf_counter() - t0
    report(
        "RK4 order",
        3.8 <= slope <= 4.2 and elapsed < 1.0,
        f"slope = {slope:.3f} in [3.8, 4.2]; errors = {[f'{e:.2e}' for e in errs]}",
        t0,
    )


def test_hmm_vs_oracle_analytic_problems():
    t0 = time.perf_counter()
    # Dissipative, pinned configuration, against the exact closed form.
    eps = 1e-4
    tp = make_test_system("dissipative", eps)
    a = np.array([[-1.0 / eps, 1.0 / eps], [-1.0, 0.0]])
    lam, v = np.linalg.eig(a)
    vi = np.linalg.inv(v)
    x0 = np.array([1.0, 1.0])

    def exact_x2(t):
        return np.real(np.einsum("ij,tj,jk,k->ti", v, np.exp(np.outer(t, lam)), vi, x0))[:, 1]

    cfg = HmmConfig(h_micro=1e-5, H_macro=0.01, eta=1e-3)  # W = 2*eta, sigma = eta/3
    sched = PhaseSchedule(phases=[(0.0, 2.0, "hmm")])
    tr = run_schedule(tp.system, StateVector(x0, tp.system.layout), sched, cfg)
    x2 = tr.column("x2")
    ref = exact_x2(tr.times)
    rel = float(np.linalg.norm(x2 - ref) / np.linalg.norm(ref))

    # Epsilon sweep at one fixed configuration chosen stable for every eps
    # (the fast-mode re-entry requires the window to cover its decay; the
    # published-parameter window admits no single choice for all three).
    sweep = []
    cfg_sweep = HmmConfig(h_micro=1e-5, H_macro=0.01, eta=5e-3)
    for eps_k in (1e-2, 1e-3, 1e-4):
        tp_k = make_test_system("dissipative", eps_k)
        tr_k = run_schedule(tp_k.system, StateVector(x0, tp_k.system.layout), sched, cfg_sweep)
        ref_k = np.exp(-tr_k.times)
        sweep.append(float(np.linalg.norm(tr_k.column("x2") - ref_k) / np.linalg.norm(ref_k)))
    monotone = sweep[0] > sweep[1] > sweep[2]

    # Oscillatory problem against the averaged solution.
    eps_o = 1e-4
    tp_o = make_test_system("oscillatory", eps_o)
    tr_o = run_schedule(
        tp_o.system, StateVector(np.array([1.0]), tp_o.system.layout), sched, cfg
    )
    dev = float(np.max(np.abs(tr_o.column("w") - np.exp(-tr_o.times))))
    bound_o = 2 * eps_o + 1e-2

    elapsed = time.perf_counter() - t0
    ok = rel <= 1e-2 and monotone and dev <= bound_o and elapsed < 10.0
    report(
        "analytic problems",
        ok,
        f"dissipative rel_l2 = {rel:.4f} (<=0.01); sweep = "
        f"{[f'{e:.4f}' for e in sweep]} monotone = {monotone}; "
        f"oscillatory max dev = {dev:.4f} (<= {bound_o:.4f})",
        t0,
    )


def test_mode_exactness_bitwise():
    t0 = time.perf_counter()
    sc = load_scenario(SCENARIOS / "two_machine.toml")  # full 5 us resolution
    system, x0, _ = build_system(sc)
    sched = PhaseSchedule(phases=[(0.0, 0.5, "micro")])
    tr = run_schedule(system, x0, sched, sc.hmm)

    system2, x02, _ = build_system(sc)
    plain = integrate_micro(system2, x02, 0.0, 0.5, sc.h_micro, record_forces=False)

    states = np.vstack([s.states for s in tr.segments])
    times_ok = np.array_equal(tr.times[:-1], plain.times[:-1]) and tr.times[-1] == 0.5
    states_ok = np.array_equal(states, plain.states)
    elapsed = time.perf_counter() - t0
    report(
        "mode exactness",
        times_ok and states_ok and elapsed < 30.0,
        f"bitwise identical over {len(plain)} nodes in {elapsed:.1f}s (<30s)",
        t0,
    )


def test_emt_accuracy_smoke():
    t0 = time.perf_counter()
    sc = load_scenario(SCENARIOS / "two_machine_smoke.toml")
    rep = run_bench(sc, "/tmp/hmmemt_acceptance_smoke")
    per = rep.errors["per_variable"]
    worst = max(per.values())
    elapsed = time.perf_counter() - t0
    ok = set(per) == set(COMPARE_VARS) and worst <= 0.02 and elapsed < 60.0
    report(
        "EMT accuracy (smoke)",
        ok,
        f"worst per-variable rel_l2 = {worst:.4f} (<=0.02) over T3; "
        f"overall = {rep.errors['rel_l2']:.4f}; {elapsed:.1f}s (<60s)",
        t0,
    )


def test_speedup_accounting():
    t0 = time.perf_counter()
    sc = load_scenario(SCENARIOS / "two_machine_bench_smoke.toml")
    assert sc.hmm.anchor_mode == "window_end"
    rep = run_bench(sc, "/tmp/hmmemt_acceptance_bench", serial=True)
    pred = rep.predicted_step_ratio
    exact = pred == sc.hmm.window / (sc.hmm.window + sc.hmm.H_macro)
    close = abs(pred - 0.022 / 0.034) <= 1e-15
    speedup = rep.speedup_pct
    ok = exact and close and 25.0 <= speedup <= 40.0
    report(
        "speedup accounting",
        ok,
        f"predicted ratio = {pred:.6f} (= W/(W+H) = {0.022 / 0.034:.6f}); "
        f"measured micro-step ratio = {rep.t3_step_ratio_measured:.4f}; "
        f"wall speedup = {speedup:.1f}% in [25, 40]",
        t0,
    )


def test_stiffness_gate():
    t0 = time.perf_counter()
    sc = load_scenario(SCENARIOS / "two_machine_smoke.toml")
    system, x0, _ = build_system(sc)
    rep = stiffness_report(numerical_jacobian(system, x0.values, 0.0))
    elapsed = time.perf_counter() - t0
    ok = rep.scale_gap >= 10.0 and rep.max_real_part <= 1e-6 and elapsed < 5.0
    report(
        "stiffness gate",
        ok,
        f"scale_gap = {rep.scale_gap:.1f} (>=10), max Re = {rep.max_real_part:.2e} "
        f"(<=1e-6), k0 = {rep.k0}/{len(rep.eigenvalues)}",
        t0,
    )


def test_physical_invariants():
    t0 = time.perf_counter()
    # Full 8 s baseline (coarse micro step keeps the suite under a minute;
    # the zero-sequence channel is decoupled, so resolution is immaterial).
    sc = load_scenario(SCENARIOS / "two_machine.toml")
    sc = dataclasses.replace(
        sc, h_micro=5e-5, hmm=dataclasses.replace(sc.hmm, h_micro=5e-5)
    )
    system, x0, params = build_system(sc)
    trace = run_schedule(system, x0, sc.schedule.as_all_micro(), sc.hmm)

    worst_zero = 0.0
    for seg in trace.segments:
        zero_cols = [i for i, n in enumerate(seg.layout.names) if n.endswith("_0")]
        worst_zero = max(worst_zero, float(np.max(np.abs(seg.states[:, zero_cols]))))

    pre = trace.times < 3.0
    pre_states = np.vstack([s.states for s in trace.segments if len(s.layout) == 37])
    drift = float(np.max(np.abs(pre_states[: pre.sum()] - x0.values[None, :])))

    post = emt.assemble_emt_system(params, "post_trip")
    eq_post = emt.find_equilibrium(
        post, StateVector(np.array(x0.values[:34]), post.layout), allow_drift=True
    )
    balance = emt.power_balance_residual(eq_post, params)

    ok = worst_zero <= 1e-9 and balance <= 1e-6 and drift <= 1e-6
    report(
        "physical invariants",
        ok,
        f"max |zero-seq| = {worst_zero:.2e} (<=1e-9); pre-fault drift = {drift:.2e} "
        f"(<=1e-6); post-trip power balance = {balance:.2e} (<=1e-6)",
        t0,
    )
