"""Scenario files: TOML ingestion, cross-field validation, and echoing.

A scenario describes one reproducible experiment: the system (the two-machine
EMT testbed or one of the analytic test problems), the solver settings, the
micro/hmm phase plan with events, and the output/comparison selections.
Validation collects every violated invariant before failing.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import emt
from .errors import ValidationError
from .hmm import HmmConfig, PhaseSchedule

__all__ = ["Scenario", "OutputSpec", "load_scenario"]

_TEST_KINDS = ("dissipative", "oscillatory")
_KINDS = ("two_machine_emt",) + _TEST_KINDS


@dataclass(frozen=True)
class OutputSpec:
    variables: tuple = ("all",)
    decimate: int = 1
    compare: tuple = ()
    compare_interval: tuple | None = None


@dataclass(frozen=True)
class Scenario:
    kind: str
    t_end: float
    h_micro: float
    deterministic: bool
    hmm: HmmConfig
    schedule: PhaseSchedule
    outputs: OutputSpec
    emt_params: "emt.TwoMachineParams | None" = None
    calibrate: bool = True
    epsilon: float | None = None
    x0: tuple | None = None
    source: str = ""

    def compare_interval_or_default(self):
        if self.outputs.compare_interval is not None:
            return self.outputs.compare_interval
        span = self.schedule.hmm_interval()
        return span if span is not None else (0.0, self.t_end)

    def echo(self) -> dict:
        """Fully applied configuration, for manifests and reports."""
        d = {
            "kind": self.kind,
            "source": self.source,
            "simulation": {
                "t_end": self.t_end,
                "h_micro": self.h_micro,
                "deterministic": self.deterministic,
            },
            "hmm": dataclasses.asdict(self.hmm),
            "schedule": {
                "phases": [[p.t_start, p.t_end, p.mode] for p in self.schedule.phases],
                "events": [list(e) for e in self.schedule.events],
            },
            "outputs": {
                "variables": list(self.outputs.variables),
                "decimate": self.outputs.decimate,
                "compare": list(self.outputs.compare),
                "compare_interval": list(self.compare_interval_or_default()),
            },
        }
        if self.kind == "two_machine_emt":
            d["generators"] = {
                "G1": dataclasses.asdict(self.emt_params.gen1),
                "G2": dataclasses.asdict(self.emt_params.gen2),
            }
            d["controls"] = {
                "G1": dataclasses.asdict(self.emt_params.ctl1),
                "G2": dataclasses.asdict(self.emt_params.ctl2),
            }
            d["network"] = dataclasses.asdict(self.emt_params.network)
        else:
            d["epsilon"] = self.epsilon
            d["x0"] = list(self.x0)
        return d


def _gen_params(tbl: dict, problems: list, tag: str):
    fields = (
        "h_inertia", "d_damp", "r_s", "r_fd", "r_1d", "r_1q", "r_2q",
        "l_l", "l_ad", "l_aq", "l_fd", "l_1d", "l_1q", "l_2q",
    )
    missing = [f for f in fields if f not in tbl]
    if missing:
        problems.append(f"{tag}: missing generator fields {missing}")
        return None, None
    try:
        gp = emt.GeneratorParams(**{f: float(tbl[f]) for f in fields})
    except ValidationError as exc:
        problems.extend(f"{tag}: {v}" for v in exc.violations)
        return None, None
    gov = tbl.get("governor", {})
    exc_ = tbl.get("exciter", {})
    try:
        cp = emt.ControlParams(
            gov_gain=float(gov.get("gain", 25.0)),
            gov_t=float(gov.get("time_constant", 0.8)),
            p_ref=float(gov.get("p_ref", 0.5)),
            exc_gain=float(exc_.get("gain", 0.2)),
            exc_t=float(exc_.get("time_constant", 0.15)),
            v_ref=float(exc_.get("v_ref", 1.0)),
        )
    except ValidationError as exc2:
        problems.extend(f"{tag}: {v}" for v in exc2.violations)
        return gp, None
    return gp, cp


def load_scenario(path) -> Scenario:
    """Parse and fully validate a scenario file.

    Raises tomllib.TOMLDecodeError (with line info) on syntax errors and
    ValidationError carrying every violated invariant otherwise.
    """
    path = Path(path)
    with path.open("rb") as fh:
        raw = tomllib.load(fh)

    problems = []

    sim = raw.get("simulation", {})
    t_end = float(sim.get("t_end", 0.0))
    h_micro = float(sim.get("h_micro", 0.0))
    deterministic = bool(sim.get("deterministic", True))
    if not t_end > 0:
        problems.append(f"simulation.t_end must be positive, got {t_end}")
    if not h_micro > 0:
        problems.append(f"simulation.h_micro must be positive, got {h_micro}")

    kind = raw.get("system", {}).get("kind", "two_machine_emt")
    if kind not in _KINDS:
        problems.append(f"system.kind must be one of {_KINDS}, got {kind!r}")

    hmm_tbl = raw.get("hmm", {})
    cfg = None
    if h_micro > 0:
        try:
            cfg = HmmConfig(
                h_micro=h_micro,
                H_macro=float(hmm_tbl.get("H_macro", 0.012)),
                eta=float(hmm_tbl.get("eta", 0.011)),
                window=float(hmm_tbl["window"]) if "window" in hmm_tbl else None,
                dt_eval=float(hmm_tbl["dt_eval"]) if "dt_eval" in hmm_tbl else None,
                sigma=float(hmm_tbl["sigma"]) if "sigma" in hmm_tbl else None,
                anchor_mode=hmm_tbl.get("anchor", "window_end"),
            )
        except ValueError as exc:
            problems.append(f"hmm: {exc}")

    sched_tbl = raw.get("schedule", {})
    schedule = None
    try:
        schedule = PhaseSchedule(
            phases=tuple(tuple(p) for p in sched_tbl.get("phases", ())),
            events=tuple(tuple(e) for e in sched_tbl.get("events", ())),
        )
        schedule.validate()
    except (ValidationError, TypeError) as exc:
        if isinstance(exc, ValidationError):
            problems.extend(f"schedule: {v}" for v in exc.violations)
        else:
            problems.append(f"schedule: malformed phases/events ({exc})")
        schedule = None

    if schedule is not None and t_end > 0:
        if abs(schedule.t_end - t_end) > 1e-9 * max(1.0, t_end):
            problems.append(
                f"schedule covers [0, {schedule.t_end}] but simulation.t_end = {t_end}"
            )
        if h_micro > 0:
            for i, p in enumerate(schedule.phases):
                n = (p.t_end - p.t_start) / h_micro
                if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
                    problems.append(
                        f"schedule: phase {i} length {p.t_end - p.t_start} is not an "
                        f"integral multiple of h_micro = {h_micro}"
                    )

    emt_params = None
    epsilon = None
    x0 = None
    calibrate = bool(raw.get("system", {}).get("calibrate_controls", True))
    if kind == "two_machine_emt":
        gens = raw.get("generators", {})
        net_tbl = raw.get("network", {})
        if not gens and not net_tbl:
            emt_params = emt.default_two_machine_params()
            calibrate = False  # defaults are already calibrated
        else:
            g1, c1 = _gen_params(gens.get("G1", {}), problems, "generators.G1")
            g2, c2 = _gen_params(gens.get("G2", {}), problems, "generators.G2")
            net_fields = (
                "l_t1", "l_t2", "l_1", "r_1", "l_2", "r_2", "l_line", "r_line", "c_line",
            )
            missing = [f for f in net_fields if f not in net_tbl]
            net = None
            if missing:
                problems.append(f"network: missing fields {missing}")
            else:
                try:
                    net = emt.NetworkParams(
                        **{f: float(net_tbl[f]) for f in net_fields},
                        r_zero_factor=float(net_tbl.get("r_zero_factor", 6.0)),
                    )
                except ValidationError as exc:
                    problems.extend(f"network: {v}" for v in exc.violations)
            if None not in (g1, c1, g2, c2, net):
                try:
                    emt_params = emt.TwoMachineParams(
                        gen1=g1, ctl1=c1, gen2=g2, ctl2=c2, network=net
                    )
                except ValidationError as exc:
                    problems.extend(exc.violations)
        known_events = {emt.TRIP_LOAD1}
    else:
        epsilon = float(raw.get("system", {}).get("epsilon", 0.0))
        if not epsilon > 0:
            problems.append(f"system.epsilon must be positive for kind {kind!r}")
        x0_raw = raw.get("system", {}).get("x0")
        dim = 2 if kind == "dissipative" else 1
        if x0_raw is None:
            x0 = tuple([1.0] * dim)
        elif len(x0_raw) != dim:
            problems.append(f"system.x0 must have {dim} entries for kind {kind!r}")
        else:
            x0 = tuple(float(v) for v in x0_raw)
        known_events = set()

    if schedule is not None:
        for t_ev, ev in schedule.events:
            if ev not in known_events:
                problems.append(f"schedule: event {ev!r} unknown for system kind {kind!r}")

    out_tbl = raw.get("outputs", {})
    decimate = int(out_tbl.get("decimate", 1))
    if decimate < 1:
        problems.append(f"outputs.decimate must be >= 1, got {decimate}")
    variables = out_tbl.get("variables", "all")
    if variables == "all":
        variables = ("all",)
    else:
        variables = tuple(variables)
    compare = tuple(out_tbl.get("compare", ()))
    ci = out_tbl.get("compare_interval")
    compare_interval = (float(ci[0]), float(ci[1])) if ci else None
    if compare_interval and not compare_interval[0] < compare_interval[1]:
        problems.append(f"outputs.compare_interval must be increasing, got {ci}")

    if kind == "two_machine_emt" and emt_params is not None:
        layout_names = set(emt._emt_layout(load1=True).names)
        for v in compare:
            base = v[4:-1] if v.startswith("env(") and v.endswith(")") else None
            if base is not None:
                if f"{base}_D" not in layout_names:
                    problems.append(f"outputs.compare: unknown envelope variable {v!r}")
            elif v not in layout_names:
                problems.append(f"outputs.compare: unknown variable {v!r}")

    if problems:
        raise ValidationError(problems)

    return Scenario(
        kind=kind,
        t_end=t_end,
        h_micro=h_micro,
        deterministic=deterministic,
        hmm=cfg,
        schedule=schedule,
        outputs=OutputSpec(
            variables=variables,
            decimate=decimate,
            compare=compare,
            compare_interval=compare_interval,
        ),
        emt_params=emt_params,
        calibrate=calibrate,
        epsilon=epsilon,
        x0=x0,
        source=str(path),
    )
