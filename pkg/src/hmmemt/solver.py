"""Fixed-step integrators and the system-definition abstraction.

The micro level advances with classical RK4 at step `h`; the macro level is
a single forward-Euler update driven by an externally estimated effective
force.  Systems are plain vector fields `f(x, t)` over a named state layout;
integration is strictly fixed-step with non-finite detection at every node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DivergenceError, ParameterError

__all__ = [
    "StateLayout",
    "StateVector",
    "OdeSystem",
    "MicroTrace",
    "rk4_step",
    "integrate_micro",
    "macro_step",
    "steps_in_interval",
]


class StateLayout:
    """Immutable name -> index map for a dense state vector."""

    __slots__ = ("names", "_index")

    def __init__(self, names):
        self.names = tuple(names)
        self._index = {name: i for i, name in enumerate(self.names)}
        if len(self._index) != len(self.names):
            raise ParameterError("duplicate state names in layout")

    def index(self, name: str) -> int:
        return self._index[name]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, StateLayout) and self.names == other.names

    def __hash__(self) -> int:
        return hash(self.names)

    def __repr__(self) -> str:
        return f"StateLayout({len(self.names)} states)"


@dataclass(frozen=True)
class StateVector:
    """Dense real state with a named layout; entries must be finite."""

    values: np.ndarray
    layout: StateLayout

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (len(self.layout),):
            raise ParameterError(
                f"state has {self.values.shape} values for a {len(self.layout)}-name layout"
            )

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.layout.index(name)])

    def with_values(self, values) -> "StateVector":
        return StateVector(values=np.asarray(values, dtype=float), layout=self.layout)


@dataclass
class OdeSystem:
    """Vector-field definition: dimension, f(x, t), layout and event hooks.

    `field_eval` operates on raw ndarrays for speed; use `evaluate` for the
    StateVector-level API.  Event hooks map (x, t) -> new raw state and may
    be registered under string ids; subclasses that change topology override
    `apply_event`.
    """

    dimension: int
    field_eval: "callable"
    layout: StateLayout
    description: str = ""
    events: dict = field(default_factory=dict)

    def evaluate(self, state: StateVector, t: float) -> StateVector:
        return StateVector(values=self.field_eval(state.values, t), layout=self.layout)

    def apply_event(self, event_id: str, x: np.ndarray, t: float) -> np.ndarray:
        if event_id not in self.events:
            raise ParameterError(f"unknown event id {event_id!r}")
        return np.asarray(self.events[event_id](x, t), dtype=float)


@dataclass
class MicroTrace:
    """Uniform-step trajectory with the vector field sampled at each node."""

    times: np.ndarray
    states: np.ndarray
    force_samples: np.ndarray | None
    layout: StateLayout

    def __len__(self) -> int:
        return len(self.times)

    def state_at(self, i: int) -> StateVector:
        return StateVector(values=self.states[i], layout=self.layout)


def steps_in_interval(length: float, h: float, what: str = "interval") -> int:
    """Number of micro steps in `length`, requiring integral division by h."""
    if not (h > 0):
        raise ParameterError(f"step h must be positive, got {h}")
    if length < 0:
        raise ParameterError(f"{what} must be non-negative, got {length}")
    n_float = length / h
    n = round(n_float)
    if abs(n_float - n) > 1e-9 * max(1.0, abs(n_float)):
        raise ConfigurationError(
            f"{what} = {length} is not an integral multiple of h = {h} ({what}/h = {n_float})"
        )
    return n


def _check_finite(x: np.ndarray, t: float, layout: StateLayout):
    if not np.isfinite(x).all():
        bad = int(np.flatnonzero(~np.isfinite(x))[0])
        name = layout.names[bad] if bad < len(layout.names) else f"state[{bad}]"
        raise DivergenceError(
            f"non-finite value in {name!r} at t = {t:.9g}", t=t, variable=name
        )


def _rk4_raw(f, x: np.ndarray, t: float, h: float):
    """One RK4 update; also returns k1 = f(x, t), the field at the node itself."""
    half = 0.5 * h
    k1 = f(x, t)
    k2 = f(x + half * k1, t + half)
    k3 = f(x + half * k2, t + half)
    k4 = f(x + h * k3, t + h)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1


def rk4_step(system, x: StateVector, t: float, h: float) -> StateVector:
    """One classical 4-stage explicit Runge-Kutta step."""
    if not (h > 0):
        raise ParameterError(f"step h must be positive, got {h}")
    _check_finite(x.values, t, system.layout)
    with np.errstate(over="ignore", invalid="ignore"):
        out, _ = _rk4_raw(system.field_eval, x.values, t, h)
    _check_finite(out, t + h, system.layout)
    return StateVector(values=out, layout=system.layout)


def integrate_micro(
    system,
    x0: StateVector,
    t0: float,
    window: float,
    h: float,
    record_forces: bool = True,
) -> MicroTrace:
    """RK4 trajectory over [t0, t0 + window] with both endpoints included.

    Node times are t0 + i*h (multiplied, not accumulated).  Force samples are
    the field at the node states and node times: RK4's first stage evaluates
    exactly that, so it is harvested rather than recomputed (middle and end
    stages are at provisional states and would bias the averaging); only the
    final node needs one extra evaluation.  Pass record_forces=False to skip
    them on long plain-integration legs.
    """
    n = steps_in_interval(window, h, what="window")
    f = system.field_eval
    layout = system.layout
    x = np.asarray(x0.values if isinstance(x0, StateVector) else x0, dtype=float)
    _check_finite(x, t0, layout)

    states = np.empty((n + 1, len(x)))
    forces = np.empty_like(states) if record_forces else None
    times = t0 + np.arange(n + 1) * h
    states[0] = x
    # Overflow noise is expected on divergence; the finiteness check decides.
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            t = t0 + i * h
            x, k1 = _rk4_raw(f, x, t, h)
            if record_forces:
                forces[i] = k1
            if not np.isfinite(x).all():
                bad = int(np.flatnonzero(~np.isfinite(x))[0])
                err = DivergenceError(
                    f"non-finite value in {layout.names[bad]!r} at micro step {i + 1} "
                    f"(t = {t + h:.9g})",
                    t=t + h,
                    variable=layout.names[bad],
                )
                # Finite prefix, so callers can flush a partial trace.
                err.partial_nodes = (times[: i + 1], states[: i + 1])
                raise err
            states[i + 1] = x

    if record_forces:
        forces[n] = f(states[n], float(times[n]))
    return MicroTrace(times=times, states=states, force_samples=forces, layout=layout)


def macro_step(X_anchor: StateVector, t_anchor: float, f_eff, H: float):
    """Forward-Euler macro update: (X + H * f_eff, t + H)."""
    if not (H > 0):
        raise ParameterError(f"macro step H must be positive, got {H}")
    f_vals = f_eff.values if isinstance(f_eff, StateVector) else np.asarray(f_eff, dtype=float)
    out = X_anchor.values + H * f_vals
    _check_finite(out, t_anchor + H, X_anchor.layout)
    return StateVector(values=out, layout=X_anchor.layout), t_anchor + H
