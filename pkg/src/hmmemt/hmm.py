"""Multiscale cycle orchestration and the micro/macro phase schedule runner.

One cycle: reconstruct a micro initial condition from the macro state,
integrate the micro model over a short window, estimate the effective force
by kernel convolution of the sampled vector field, then take one large
forward-Euler macro step.  A phase schedule switches whole time intervals
between plain micro integration and this cycle, applying discrete events
(e.g. a breaker opening) exactly at their scheduled times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DivergenceError, ParameterError, ValidationError
from .kernel import DiscreteKernelWeights, discretize_kernel, make_gaussian_kernel
from .solver import StateLayout, StateVector, integrate_micro, steps_in_interval

__all__ = [
    "HmmConfig",
    "Phase",
    "PhaseSchedule",
    "TransferOps",
    "HmmCycleResult",
    "SimulationTrace",
    "TraceSegment",
    "RunStats",
    "reconstruct",
    "compress",
    "hmm_cycle",
    "run_schedule",
    "MODE_MICRO",
    "MODE_MACRO",
    "MODE_NAMES",
]

MODE_MICRO = 0
MODE_MACRO = 1
MODE_NAMES = ("micro", "macro")

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class HmmConfig:
    """All multiscale solver parameters.

    window defaults to 2*eta, dt_eval to eta (kernel centered mid-window) and
    sigma to eta/3.  anchor_mode selects where the macro step departs from:
    `window_end` re-anchors at the end of the micro window (the cheaper
    accounting), `evaluation_point` at the force evaluation point.
    """

    h_micro: float
    H_macro: float
    eta: float
    window: float = None
    dt_eval: float = None
    sigma: float = None
    anchor_mode: str = "window_end"

    def __post_init__(self):
        if self.window is None:
            object.__setattr__(self, "window", 2.0 * self.eta)
        if self.dt_eval is None:
            object.__setattr__(self, "dt_eval", self.eta)
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.eta / 3.0)
        for name in ("h_micro", "H_macro", "eta", "window", "dt_eval", "sigma"):
            if not (getattr(self, name) > 0):
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.anchor_mode not in ("window_end", "evaluation_point"):
            raise ParameterError(f"unknown anchor_mode {self.anchor_mode!r}")
        if self.sigma > self.eta:
            raise ParameterError(f"sigma ({self.sigma}) must not exceed eta ({self.eta})")
        if self.dt_eval > self.window * (1 + _TIME_TOL):
            raise ParameterError(
                f"dt_eval ({self.dt_eval}) must lie within the window ({self.window})"
            )
        # Kernel support [dt_eval - eta, dt_eval + eta] must fit inside the window
        # and align with the micro grid.
        if self.dt_eval < self.eta * (1 - _TIME_TOL):
            raise ConfigurationError(
                f"dt_eval ({self.dt_eval}) < eta ({self.eta}): kernel support leaves the window"
            )
        if self.dt_eval + self.eta > self.window * (1 + _TIME_TOL) + _TIME_TOL:
            raise ConfigurationError(
                f"dt_eval + eta ({self.dt_eval + self.eta}) exceeds window ({self.window})"
            )
        steps_in_interval(self.window, self.h_micro, what="window")
        steps_in_interval(2.0 * self.eta, self.h_micro, what="kernel support")
        steps_in_interval(self.dt_eval - self.eta, self.h_micro, what="kernel support offset")
        if self.anchor_mode == "evaluation_point" and (
            self.dt_eval + self.H_macro < self.window * (1 - _TIME_TOL)
        ):
            raise ConfigurationError(
                "evaluation_point anchoring requires dt_eval + H_macro >= window "
                "so macro points do not precede recorded micro nodes"
            )

    @property
    def window_steps(self) -> int:
        return steps_in_interval(self.window, self.h_micro, what="window")

    @property
    def kernel_start_index(self) -> int:
        return steps_in_interval(
            self.dt_eval - self.eta, self.h_micro, what="kernel support offset"
        )

    @property
    def eval_index(self) -> int:
        return steps_in_interval(self.dt_eval, self.h_micro, what="dt_eval")

    def kernel_weights(self) -> DiscreteKernelWeights:
        return discretize_kernel(make_gaussian_kernel(self.eta, self.sigma), self.h_micro)


@dataclass(frozen=True)
class Phase:
    t_start: float
    t_end: float
    mode: str


@dataclass(frozen=True)
class PhaseSchedule:
    """Contiguous micro/hmm phases covering [0, t_end], plus timed events."""

    phases: tuple
    events: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self, "phases", tuple(p if isinstance(p, Phase) else Phase(*p) for p in self.phases)
        )
        object.__setattr__(self, "events", tuple(tuple(e) for e in self.events))

    @property
    def t_end(self) -> float:
        return self.phases[-1].t_end if self.phases else 0.0

    def validate(self):
        problems = []
        if not self.phases:
            problems.append("schedule has no phases")
        prev_end = 0.0
        for i, p in enumerate(self.phases):
            if p.mode not in ("micro", "hmm"):
                problems.append(f"phase {i}: unknown mode {p.mode!r}")
            if not (p.t_end > p.t_start):
                problems.append(f"phase {i}: t_end ({p.t_end}) must exceed t_start ({p.t_start})")
            if abs(p.t_start - prev_end) > _TIME_TOL * max(1.0, abs(prev_end)):
                problems.append(
                    f"phase {i}: starts at {p.t_start}, expected {prev_end} (phases must be "
                    "contiguous from 0)"
                )
            prev_end = p.t_end
        boundaries = {0.0} | {p.t_start for p in self.phases} | {p.t_end for p in self.phases}
        for t_ev, event_id in self.events:
            on_boundary = any(abs(t_ev - b) <= _TIME_TOL * max(1.0, abs(b)) for b in boundaries)
            if on_boundary:
                continue
            holder = next(
                (p for p in self.phases if p.t_start < t_ev < p.t_end), None
            )
            if holder is None:
                problems.append(f"event {event_id!r} at t={t_ev} lies outside the schedule")
            elif holder.mode != "micro":
                problems.append(
                    f"event {event_id!r} at t={t_ev} falls strictly inside an hmm phase; "
                    "events must not interrupt an averaging window"
                )
        if problems:
            raise ValidationError(problems)

    def as_all_micro(self) -> "PhaseSchedule":
        return PhaseSchedule(
            phases=tuple(Phase(p.t_start, p.t_end, "micro") for p in self.phases),
            events=self.events,
        )

    def hmm_interval(self):
        """(start, end) spanning the hmm phases, or None if there are none."""
        spans = [p for p in self.phases if p.mode == "hmm"]
        if not spans:
            return None
        return (spans[0].t_start, spans[-1].t_end)


@dataclass(frozen=True)
class TransferOps:
    """Reconstruction (macro -> micro) and compression (micro -> macro) operators."""

    reconstruct_fn: "callable"
    compress_fn: "callable"

    @classmethod
    def identity(cls) -> "TransferOps":
        return cls(reconstruct_fn=lambda v: v, compress_fn=lambda v: v)


def reconstruct(X, ops: TransferOps):
    """Micro initial condition from a macro state: x0 = R(X)."""
    if isinstance(X, StateVector):
        return X.with_values(np.asarray(ops.reconstruct_fn(X.values), dtype=float))
    return np.asarray(ops.reconstruct_fn(X), dtype=float)


def compress(x, ops: TransferOps):
    """Macro observation from a micro state: X = Q(x)."""
    if isinstance(x, StateVector):
        return x.with_values(np.asarray(ops.compress_fn(x.values), dtype=float))
    return np.asarray(ops.compress_fn(x), dtype=float)


@dataclass
class HmmCycleResult:
    X_next: np.ndarray
    t_next: float
    micro_trace: object
    f_eff: np.ndarray
    anchor_time: float
    H_applied: float


def hmm_cycle(
    system,
    X_n,
    t_n: float,
    cfg: HmmConfig,
    ops: TransferOps | None = None,
    weights: DiscreteKernelWeights | None = None,
    phase_end: float | None = None,
) -> HmmCycleResult:
    """One reconstruct / micro-integrate / average / macro-step cycle.

    If `phase_end` is given and the nominal macro step would overrun it, the
    macro step is clamped so t_next lands on the boundary exactly.
    """
    ops = ops or TransferOps.identity()
    weights = weights if weights is not None else cfg.kernel_weights()
    x_macro = X_n.values if isinstance(X_n, StateVector) else np.asarray(X_n, dtype=float)
    if phase_end is not None and phase_end - t_n < cfg.window * (1 - _TIME_TOL):
        raise ConfigurationError(
            f"hmm cycle at t={t_n} has no room for a {cfg.window}s window before "
            f"phase end {phase_end}"
        )

    x0 = np.asarray(ops.reconstruct_fn(x_macro), dtype=float)
    trace = integrate_micro(system, StateVector(x0, system.layout), t_n, cfg.window, cfg.h_micro)

    s = cfg.kernel_start_index
    samples = trace.force_samples[s : s + len(weights)]
    f_eff = (weights.weights @ samples) * weights.spacing

    if cfg.anchor_mode == "window_end":
        anchor_idx = len(trace) - 1
    else:
        anchor_idx = cfg.eval_index
    anchor_time = float(trace.times[anchor_idx])
    x_star = np.asarray(ops.compress_fn(trace.states[anchor_idx]), dtype=float)

    H = cfg.H_macro
    t_next = anchor_time + H
    if phase_end is not None and t_next > phase_end - _TIME_TOL:
        H = phase_end - anchor_time
        t_next = phase_end
        if 0 <= H < _TIME_TOL:
            H = 0.0
    if H < 0:
        raise ConfigurationError(
            f"macro anchor at t={anchor_time} already beyond phase end {phase_end}"
        )
    X_next = x_star + H * f_eff
    return HmmCycleResult(
        X_next=X_next,
        t_next=t_next,
        micro_trace=trace,
        f_eff=f_eff,
        anchor_time=anchor_time,
        H_applied=H,
    )


@dataclass(frozen=True)
class TraceSegment:
    times: np.ndarray
    states: np.ndarray
    modes: np.ndarray
    layout: StateLayout


@dataclass
class RunStats:
    """Per-phase work accounting for a schedule run."""

    phases: list = field(default_factory=list)

    def add_phase(self, mode: str):
        self.phases.append({"mode": mode, "micro_steps": 0, "macro_steps": 0})

    def count_micro(self, n: int):
        self.phases[-1]["micro_steps"] += int(n)

    def count_macro(self, n: int = 1):
        self.phases[-1]["macro_steps"] += int(n)

    @property
    def total_micro_steps(self) -> int:
        return sum(p["micro_steps"] for p in self.phases)

    @property
    def total_macro_steps(self) -> int:
        return sum(p["macro_steps"] for p in self.phases)


class SimulationTrace:
    """Time-sorted state history across mode and topology changes.

    Stored as contiguous segments, each with a fixed layout.  `column` reads
    a named variable across all segments (NaN where a segment's layout lacks
    it) and understands derived envelope names of the form ``env(x)`` which
    evaluate hypot(x_D, x_Q).
    """

    def __init__(self, segments, stats: RunStats | None = None):
        self.segments = list(segments)
        self.stats = stats
        self._times = None
        self._modes = None

    @property
    def times(self) -> np.ndarray:
        if self._times is None:
            self._times = np.concatenate([s.times for s in self.segments])
        return self._times

    @property
    def modes(self) -> np.ndarray:
        if self._modes is None:
            self._modes = np.concatenate([s.modes for s in self.segments])
        return self._modes

    @property
    def n_nodes(self) -> int:
        return sum(len(s.times) for s in self.segments)

    @property
    def layouts(self):
        return [s.layout for s in self.segments]

    @property
    def final_state(self) -> StateVector:
        seg = self.segments[-1]
        return StateVector(values=seg.states[-1], layout=seg.layout)

    @property
    def final_time(self) -> float:
        return float(self.segments[-1].times[-1])

    @staticmethod
    def _envelope_parts(name: str):
        if name.startswith("env(") and name.endswith(")"):
            base = name[4:-1]
            return base + "_D", base + "_Q"
        return None

    def has_column(self, name: str) -> bool:
        env = self._envelope_parts(name)
        if env is not None:
            return all(self.has_column(part) for part in env)
        return any(name in s.layout for s in self.segments)

    def column(self, name: str) -> np.ndarray:
        env = self._envelope_parts(name)
        if env is not None:
            return np.hypot(self.column(env[0]), self.column(env[1]))
        parts = []
        for s in self.segments:
            if name in s.layout:
                parts.append(s.states[:, s.layout.index(name)])
            else:
                parts.append(np.full(len(s.times), np.nan))
        return np.concatenate(parts)

    def all_column_names(self):
        """Union of layout names in first-seen order."""
        seen = []
        for s in self.segments:
            for n in s.layout.names:
                if n not in seen:
                    seen.append(n)
        return seen


class _TraceBuilder:
    """Accumulates legs and single nodes, merging contiguous same-layout runs."""

    def __init__(self):
        self._chunks = []  # (times, states, modes, layout)
        self.last_time = None

    def append_leg(self, times, states, mode: int, layout: StateLayout):
        if len(times) == 0:
            return
        if self.last_time is not None and times[0] == self.last_time:
            times = times[1:]
            states = states[1:]
            if len(times) == 0:
                return
        modes = np.full(len(times), mode, dtype=np.uint8)
        self._chunks.append((times, states, modes, layout))
        self.last_time = float(times[-1])

    def append_node(self, t: float, x: np.ndarray, mode: int, layout: StateLayout):
        if self.last_time is not None and t == self.last_time:
            # Degenerate macro point landing on the last micro node: it carries
            # the state the next cycle continues from, so it supersedes.
            times, states, modes, lay = self._chunks[-1]
            states[-1] = x
            modes[-1] = mode
            return
        self.append_leg(
            np.array([t]), np.asarray(x, dtype=float).reshape(1, -1), mode, layout
        )
        self._chunks[-1][2][0] = mode

    def snap_last_time(self, t: float):
        """Pin the last recorded node to an exact boundary value (ULP cleanup)."""
        if self._chunks:
            self._chunks[-1][0][-1] = t
            self.last_time = t

    def finish(self):
        segments = []
        group = []

        def flush():
            if not group:
                return
            layout = group[0][3]
            segments.append(
                TraceSegment(
                    times=np.concatenate([c[0] for c in group]),
                    states=np.vstack([c[1] for c in group]),
                    modes=np.concatenate([c[2] for c in group]),
                    layout=layout,
                )
            )
            group.clear()

        for chunk in self._chunks:
            if group and chunk[3] != group[0][3]:
                flush()
            group.append(chunk)
        flush()
        return segments


def run_schedule(system, x0, schedule: PhaseSchedule, cfg: HmmConfig, ops=None) -> SimulationTrace:
    """Drive a full simulation through the phase plan.

    Micro phases are integrated contiguously at h with every node recorded;
    hmm phases are chains of hmm_cycle calls recording all micro-window nodes
    plus each macro point.  Events fire exactly once at their times; the trace
    hits every phase boundary and event time exactly.
    """
    ops = ops or TransferOps.identity()
    schedule.validate()
    h = cfg.h_micro
    known = getattr(system, "events", {})
    missing = [e for _, e in schedule.events if e not in known]
    if missing:
        raise ValidationError([f"event id {e!r} not provided by the system" for e in missing])

    needs_kernel = any(p.mode == "hmm" for p in schedule.phases)
    weights = cfg.kernel_weights() if needs_kernel else None

    x = np.array(x0.values if isinstance(x0, StateVector) else x0, dtype=float)
    builder = _TraceBuilder()
    stats = RunStats()
    try:
        return _drive_schedule(system, x, schedule, cfg, ops, weights, builder, stats)
    except DivergenceError as exc:
        # Flush whatever was integrated so callers can persist a partial trace.
        nodes = getattr(exc, "partial_nodes", None)
        if nodes is not None and len(nodes[0]):
            builder.append_leg(nodes[0], nodes[1], MODE_MICRO, system.layout)
        exc.partial_trace = SimulationTrace(segments=builder.finish(), stats=stats)
        raise


def _drive_schedule(system, x, schedule, cfg, ops, weights, builder, stats):
    h = cfg.h_micro
    pending = sorted(schedule.events)

    def fire_events_at(t):
        nonlocal x, pending
        while pending and abs(pending[0][0] - t) <= _TIME_TOL * max(1.0, abs(t)):
            _, event_id = pending.pop(0)
            x = system.apply_event(event_id, x, t)

    fire_events_at(0.0)
    for phase in schedule.phases:
        stats.add_phase(phase.mode)
        cur = phase.t_start
        if phase.mode == "micro":
            while phase.t_end - cur > _TIME_TOL:
                fire_events_at(cur)
                stop = phase.t_end
                for t_ev, _ in pending:
                    if cur + _TIME_TOL < t_ev < stop - _TIME_TOL:
                        stop = t_ev
                        break
                n = steps_in_interval(stop - cur, h, what="micro leg")
                leg = integrate_micro(
                    system, StateVector(x, system.layout), cur, stop - cur, h,
                    record_forces=False,
                )
                builder.append_leg(leg.times, leg.states, MODE_MICRO, system.layout)
                builder.snap_last_time(stop)
                stats.count_micro(n)
                x = np.array(leg.states[-1])
                cur = stop
        else:
            fire_events_at(cur)
            while phase.t_end - cur > _TIME_TOL:
                room = phase.t_end - cur
                if room < cfg.window * (1 - _TIME_TOL):
                    # Tail shorter than one averaging window: finish in micro mode.
                    n = steps_in_interval(room, h, what="hmm-phase tail")
                    leg = integrate_micro(
                        system, StateVector(x, system.layout), cur, room, h,
                        record_forces=False,
                    )
                    builder.append_leg(leg.times, leg.states, MODE_MICRO, system.layout)
                    builder.snap_last_time(phase.t_end)
                    stats.count_micro(n)
                    x = np.array(leg.states[-1])
                    cur = phase.t_end
                else:
                    res = hmm_cycle(
                        system, x, cur, cfg, ops, weights=weights, phase_end=phase.t_end
                    )
                    builder.append_leg(
                        res.micro_trace.times, res.micro_trace.states, MODE_MICRO, system.layout
                    )
                    stats.count_micro(cfg.window_steps)
                    if res.H_applied > 0:
                        builder.append_node(res.t_next, res.X_next, MODE_MACRO, system.layout)
                        stats.count_macro()
                    else:
                        builder.snap_last_time(res.t_next)
                    x = np.array(res.X_next, dtype=float)
                    cur = res.t_next
    fire_events_at(schedule.t_end)
    return SimulationTrace(segments=builder.finish(), stats=stats)
