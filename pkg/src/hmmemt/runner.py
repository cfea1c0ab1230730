"""Run orchestration: simulate / bench / stiffness / kernel-check.

Wall times cover integration work only; traces are buffered in memory and
flushed to CSV after the clock stops.  The benchmark runs baseline and
multiscale solvers on identical inputs (fresh system instances each) and
reports per-phase micro-step counts, the deterministic step-ratio
prediction, wall-clock speedup, and slow-variable error metrics.
"""

from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import emt
from .diagnostics import (
    ErrorMetrics,
    make_test_system,
    numerical_jacobian,
    stiffness_report,
    trajectory_error,
)
from .errors import DivergenceError, ValidationError
from .hmm import SimulationTrace, run_schedule
from .io import write_json, write_trace_csv
from .kernel import (
    continuous_frequency_response,
    discrete_frequency_response,
    discretize_kernel,
    kernel_moment,
    make_gaussian_kernel,
)
from .scenario import Scenario
from .solver import StateVector, steps_in_interval

__all__ = [
    "build_system",
    "run_simulate",
    "run_bench",
    "run_stiffness",
    "run_kernel_check",
    "BenchReport",
    "SimulateResult",
]


def build_system(scenario: Scenario):
    """Fresh system instance plus its initial state for one run."""
    if scenario.kind == "two_machine_emt":
        params = scenario.emt_params
        if scenario.calibrate:
            params = emt.calibrate_controls(params)
        system = emt.assemble_emt_system(params, "pre_trip")
        x0 = emt.find_equilibrium(system, emt.equilibrium_guess(params, "pre_trip"))
        return system, x0, params
    problem = make_test_system(scenario.kind, scenario.epsilon)
    x0 = StateVector(np.array(scenario.x0, dtype=float), problem.system.layout)
    return problem.system, x0, problem


@dataclass
class SimulateResult:
    trace: SimulationTrace
    wall_s: float
    csv_path: "Path | None"
    manifest_path: "Path | None"
    rows_written: int
    error: "str | None" = None


def _run_one(scenario: Scenario, mode: str, anchor: str | None):
    cfg = scenario.hmm
    if anchor is not None and anchor != cfg.anchor_mode:
        cfg = dataclasses.replace(cfg, anchor_mode=anchor)
    schedule = scenario.schedule if mode == "hmm" else scenario.schedule.as_all_micro()
    system, x0, _ = build_system(scenario)
    t0 = time.perf_counter()
    trace = run_schedule(system, x0, schedule, cfg)
    wall = time.perf_counter() - t0
    return trace, wall


def run_simulate(
    scenario: Scenario,
    mode: str,
    out_dir,
    anchor: str | None = None,
    decimate: int | None = None,
) -> SimulateResult:
    """One full run; writes `<mode>.csv` and `<mode>_manifest.json` in out_dir.

    On divergence the partial trace is still flushed, with the error recorded
    in the manifest, and the error re-raised for the caller.
    """
    if mode not in ("baseline", "hmm"):
        raise ValidationError([f"mode must be baseline or hmm, got {mode!r}"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    decimate = scenario.outputs.decimate if decimate is None else decimate
    csv_path = out_dir / f"{mode}.csv"
    manifest_path = out_dir / f"{mode}_manifest.json"
    try:
        trace, wall = _run_one(scenario, mode, anchor)
    except DivergenceError as exc:
        partial = getattr(exc, "partial_trace", None)
        rows = write_trace_csv(partial, csv_path, decimate=decimate) if partial else 0
        _write_manifest(manifest_path, scenario, mode, anchor, float("nan"), rows,
                        partial.stats if partial else None, str(exc))
        raise
    rows = write_trace_csv(trace, csv_path, decimate=decimate)
    _write_manifest(manifest_path, scenario, mode, anchor, wall, rows, trace.stats, None)
    return SimulateResult(
        trace=trace, wall_s=wall, csv_path=csv_path, manifest_path=manifest_path,
        rows_written=rows,
    )


def _write_manifest(path, scenario, mode, anchor, wall, rows, stats, error):
    write_json(
        {
            "mode": mode,
            "anchor_override": anchor,
            "wall_s": wall,
            "rows_written": rows,
            "stats": stats.phases if stats is not None else None,
            "status": "error" if error else "ok",
            "error": error,
            "config": scenario.echo(),
        },
        path,
    )


@dataclass
class BenchReport:
    wall_baseline_s: float
    wall_hmm_s: float
    speedup_pct: float
    micro_steps_baseline: list
    micro_steps_hmm: list
    macro_steps_hmm: list
    predicted_step_ratio: float
    predicted_step_ratio_note: str
    t3_step_ratio_measured: "float | None"
    errors: "dict | None"
    config: dict
    status: str = "ok"
    error: "str | None" = None

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def predicted_step_ratio(cfg) -> tuple:
    """Deterministic per-cycle micro-step cost ratio versus pure micro.

    window_end anchoring advances W + H per window of W micro steps; the
    evaluation_point variant advances dt_eval + H.
    """
    if cfg.anchor_mode == "window_end":
        return cfg.window / (cfg.window + cfg.H_macro), "W / (W + H)"
    return cfg.window / (cfg.dt_eval + cfg.H_macro), "W / (dt_eval + H)"


def run_bench(scenario: Scenario, out_dir, serial: bool = True) -> BenchReport:
    """Baseline vs multiscale comparison; writes bench_report.json plus both traces."""
    if scenario.schedule.hmm_interval() is None:
        raise ValidationError(["bench requires a schedule with at least one hmm phase"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    error = None
    try:
        if serial:
            base_trace, base_wall = _run_one(scenario, "baseline", None)
            hmm_trace, hmm_wall = _run_one(scenario, "hmm", None)
        else:
            with ThreadPoolExecutor(max_workers=2) as pool:
                fb = pool.submit(_run_one, scenario, "baseline", None)
                fh = pool.submit(_run_one, scenario, "hmm", None)
                base_trace, base_wall = fb.result()
                hmm_trace, hmm_wall = fh.result()
    except Exception as exc:
        report = BenchReport(
            wall_baseline_s=float("nan"), wall_hmm_s=float("nan"), speedup_pct=float("nan"),
            micro_steps_baseline=[], micro_steps_hmm=[], macro_steps_hmm=[],
            predicted_step_ratio=predicted_step_ratio(scenario.hmm)[0],
            predicted_step_ratio_note=predicted_step_ratio(scenario.hmm)[1],
            t3_step_ratio_measured=None, errors=None, config=scenario.echo(),
            status="error", error=str(exc),
        )
        write_json(report.as_dict(), out_dir / "bench_report.json")
        raise

    rows_b = write_trace_csv(base_trace, out_dir / "baseline.csv", scenario.outputs.decimate)
    rows_h = write_trace_csv(hmm_trace, out_dir / "hmm.csv", scenario.outputs.decimate)

    metrics = None
    if scenario.outputs.compare:
        em = trajectory_error(
            base_trace, hmm_trace, list(scenario.outputs.compare),
            interval=scenario.compare_interval_or_default(),
        )
        metrics = {
            "rel_l2": em.rel_l2,
            "max_abs": em.max_abs,
            "per_variable": em.per_variable,
            "interval": list(em.compared_interval),
            "n_matched": em.n_matched,
        }

    # Measured micro-step ratio over the hmm phases only.
    hmm_phase_idx = [i for i, p in enumerate(scenario.schedule.phases) if p.mode == "hmm"]
    hmm_steps = sum(hmm_trace.stats.phases[i]["micro_steps"] for i in hmm_phase_idx)
    base_steps = sum(base_trace.stats.phases[i]["micro_steps"] for i in hmm_phase_idx)
    ratio_meas = hmm_steps / base_steps if base_steps else None

    pred, note = predicted_step_ratio(scenario.hmm)
    speedup = 100.0 * (1.0 - hmm_wall / base_wall)
    report = BenchReport(
        wall_baseline_s=base_wall,
        wall_hmm_s=hmm_wall,
        speedup_pct=speedup,
        micro_steps_baseline=[p["micro_steps"] for p in base_trace.stats.phases],
        micro_steps_hmm=[p["micro_steps"] for p in hmm_trace.stats.phases],
        macro_steps_hmm=[p["macro_steps"] for p in hmm_trace.stats.phases],
        predicted_step_ratio=pred,
        predicted_step_ratio_note=note,
        t3_step_ratio_measured=ratio_meas,
        errors=metrics,
        config=scenario.echo(),
    )
    write_json(report.as_dict(), out_dir / "bench_report.json")
    report.rows_written = (rows_b, rows_h)
    report.baseline_trace = base_trace
    report.hmm_trace = hmm_trace
    return report


def run_stiffness(scenario: Scenario, at_time: float = 0.0, split_threshold: float = 10.0):
    """Eigenvalue scale analysis at a state along the baseline trajectory."""
    system, x0, _ = build_system(scenario)
    x = np.array(x0.values)
    if at_time > 0:
        sub = _truncate_schedule(scenario, at_time)
        trace = run_schedule(system, x0, sub, scenario.hmm)
        x = np.array(trace.final_state.values)
    jac = numerical_jacobian(system, x, at_time)
    return stiffness_report(jac, split_threshold=split_threshold)


def _truncate_schedule(scenario: Scenario, t_stop: float):
    """All-micro schedule cut at t_stop (must land on a phase-grid point)."""
    steps_in_interval(t_stop, scenario.h_micro, what="stiffness time")
    phases = []
    events = [e for e in scenario.schedule.events if e[0] <= t_stop + 1e-12]
    for p in scenario.schedule.phases:
        if p.t_start >= t_stop:
            break
        phases.append((p.t_start, min(p.t_end, t_stop), "micro"))
    from .hmm import PhaseSchedule

    return PhaseSchedule(phases=tuple(phases), events=tuple(events))


def run_kernel_check(eta: float, sigma: float | None, h: float, out=print) -> dict:
    """Moment table and frequency response for a kernel configuration."""
    spec = make_gaussian_kernel(eta, sigma)
    w = discretize_kernel(spec, h)
    moments = {r: kernel_moment(w, r) for r in (0, 1, 2)}
    freqs_hz = (60.0, 120.0, 600.0)
    resp = {
        hz: {
            "discrete": discrete_frequency_response(w, 2.0 * math.pi * hz),
            "truncated": continuous_frequency_response(spec, 2.0 * math.pi * hz),
            # Untruncated Gaussian transfer; the truncated values approach it
            # until the edge discontinuity dominates (high frequency floor).
            "gaussian": math.exp(-((2.0 * math.pi * hz * spec.sigma) ** 2) / 2.0),
        }
        for hz in freqs_hz
    }
    out(f"kernel: gaussian  eta={spec.eta}  sigma={spec.sigma}  h={h}  samples={len(w)}")
    out("moments:")
    for r, v in moments.items():
        out(f"  r={r}:  {v:+.15e}")
    out("frequency response (gain):")
    for hz, g in resp.items():
        out(
            f"  {hz:6.0f} Hz:  discrete {g['discrete']:.6e}   "
            f"truncated {g['truncated']:.6e}   gaussian {g['gaussian']:.6e}"
        )
    return {"eta": spec.eta, "sigma": spec.sigma, "h": h, "samples": len(w),
            "moments": moments, "response": resp}
