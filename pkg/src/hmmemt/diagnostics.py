"""Stiffness diagnostics, analytic two-scale test problems, and trace error metrics.

The stiffness report verifies that a system actually has the two-scale
eigenvalue structure the multiscale solver assumes; the built-in test
problems have closed-form slow solutions and serve as oracles for the
solver stack; trajectory_error quantifies baseline-vs-multiscale agreement
on matched time nodes without interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ComparisonError, DiagnosticError, ParameterError
from .solver import OdeSystem, StateLayout

__all__ = [
    "StiffnessReport",
    "ErrorMetrics",
    "TestProblem",
    "numerical_jacobian",
    "stiffness_report",
    "make_test_system",
    "trajectory_error",
]


@dataclass(frozen=True)
class StiffnessReport:
    """Eigenvalue-scale summary of a Jacobian.

    `k0` counts the slow eigenvalues (smallest magnitudes, including any
    near-zero symmetry modes); `scale_gap` is min|fast| / max|slow| at the
    detected split; `epsilon_estimate` is 1/max|fast|.
    """

    eigenvalues: np.ndarray
    k0: int
    scale_gap: float
    epsilon_estimate: float
    max_real_part: float
    unstable: bool
    min_pairwise_gap: float
    n_zero_modes: int

    @property
    def split_found(self) -> bool:
        return 0 < self.k0 < len(self.eigenvalues)


@dataclass(frozen=True)
class ErrorMetrics:
    """Relative L2 / max-abs distance between two traces on matched nodes."""

    rel_l2: float
    max_abs: float
    per_variable: dict
    compared_interval: tuple
    n_matched: int


@dataclass(frozen=True)
class TestProblem:
    """Analytic stiff test system plus its slow reference solution.

    `reference(t, x0)` evaluates the limiting slow solution; `ripple_bound`
    bounds |exact - reference| once the fast transient has settled (0 for
    the dissipative problem, O(epsilon) for the oscillatory one).
    """

    system: OdeSystem
    reference: "callable"
    ripple_bound: float
    epsilon: float


def numerical_jacobian(system, x, t: float, fd_step: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian, column steps scaled by max(1, |x_j|)."""
    if not (fd_step > 0):
        raise ParameterError(f"fd_step must be positive, got {fd_step}")
    x = np.asarray(x.values if hasattr(x, "values") else x, dtype=float)
    f = system.field_eval
    n = len(x)
    jac = np.empty((n, n))
    for j in range(n):
        dx = fd_step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += dx
        xm[j] -= dx
        jac[:, j] = (f(xp, t) - f(xm, t)) / (2.0 * dx)
    return jac


def stiffness_report(jacobian: np.ndarray, split_threshold: float = 10.0) -> StiffnessReport:
    """Eigenvalue scale analysis: split the spectrum at the largest magnitude gap.

    Near-zero eigenvalues (|lam| below 1e-9 of the spectral radius, e.g. the
    rotational-symmetry mode of a frame-covariant network) are counted as
    slow and excluded from the gap scan so they cannot fake an infinite gap.
    """
    jacobian = np.asarray(jacobian, dtype=float)
    if jacobian.ndim != 2 or jacobian.shape[0] != jacobian.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {jacobian.shape}")
    try:
        eig = np.linalg.eigvals(jacobian)
    except np.linalg.LinAlgError as exc:
        raise DiagnosticError(f"eigensolver failed: {exc}") from exc

    order = np.argsort(np.abs(eig))
    eig = eig[order]
    mags = np.abs(eig)
    d = len(eig)

    spectral_radius = mags[-1] if d else 0.0
    zero_floor = 1e-9 * spectral_radius
    n_zero = int(np.sum(mags <= zero_floor))

    best_ratio = 1.0
    k0 = d
    for i in range(d - 1):
        lo = mags[i]
        if lo <= zero_floor:
            continue
        ratio = mags[i + 1] / lo
        if ratio > split_threshold and ratio > best_ratio:
            best_ratio = ratio
            k0 = i + 1

    if k0 == d:
        scale_gap = 1.0
        eps = 1.0 / spectral_radius if spectral_radius > 0 else math.inf
    else:
        scale_gap = float(mags[k0] / mags[k0 - 1]) if mags[k0 - 1] > 0 else math.inf
        eps = float(1.0 / mags[-1])

    max_real = float(np.max(eig.real)) if d else 0.0
    pair_gaps = [
        float(abs(eig[i] - eig[j])) for i in range(d) for j in range(i + 1, d)
    ]
    return StiffnessReport(
        eigenvalues=eig,
        k0=int(k0),
        scale_gap=float(scale_gap),
        epsilon_estimate=float(eps),
        max_real_part=max_real,
        unstable=bool(max_real > 0.0),
        min_pairwise_gap=min(pair_gaps) if pair_gaps else 0.0,
        n_zero_modes=n_zero,
    )


def make_test_system(kind: str, epsilon: float) -> TestProblem:
    """Built-in stiff test problems with known slow limits.

    dissipative:  eps * x1' = -(x1 - x2),  x2' = -x1
                  slow limit: x1 = x2, x2(t) = x2(0) * exp(-t)
    oscillatory:  w' = -w + sin(t / eps)
                  averaged:  w(t) = w(0) * exp(-t), ripple bounded by 2*eps
    """
    if not (epsilon > 0):
        raise ParameterError(f"epsilon must be positive, got {epsilon}")

    if kind == "dissipative":
        layout = StateLayout(("x1", "x2"))
        inv_eps = 1.0 / epsilon

        def f_diss(x, t):
            return np.array([-inv_eps * (x[0] - x[1]), -x[0]])

        def ref_diss(t, x0):
            x2 = np.asarray(x0, dtype=float)[1] * np.exp(-np.asarray(t, dtype=float))
            return np.stack([x2, x2], axis=-1)

        system = OdeSystem(
            dimension=2,
            field_eval=f_diss,
            layout=layout,
            description=f"dissipative two-scale test, epsilon={epsilon}",
        )
        return TestProblem(system=system, reference=ref_diss, ripple_bound=0.0, epsilon=epsilon)

    if kind == "oscillatory":
        layout = StateLayout(("w",))
        omega = 1.0 / epsilon

        def f_osc(x, t):
            return np.array([-x[0] + math.sin(omega * t)])

        def ref_osc(t, x0):
            w = np.asarray(x0, dtype=float)[0] * np.exp(-np.asarray(t, dtype=float))
            return w[..., None] if np.ndim(w) else np.array([w])

        system = OdeSystem(
            dimension=1,
            field_eval=f_osc,
            layout=layout,
            description=f"oscillatory averaging test, epsilon={epsilon}",
        )
        return TestProblem(
            system=system, reference=ref_osc, ripple_bound=2.0 * epsilon, epsilon=epsilon
        )

    raise ParameterError(f"unknown test system kind {kind!r}")


def _match_nodes(t_ref: np.ndarray, t_cand: np.ndarray, tol: float):
    """Indices pairing each candidate node with its nearest reference node within tol."""
    pos = np.searchsorted(t_ref, t_cand)
    pos = np.clip(pos, 1, len(t_ref) - 1)
    left = t_ref[pos - 1]
    right = t_ref[pos]
    take_right = (np.abs(right - t_cand) < np.abs(t_cand - left))
    idx_ref = np.where(take_right, pos, pos - 1)
    ok = np.abs(t_ref[idx_ref] - t_cand) <= tol
    return idx_ref[ok], np.flatnonzero(ok)


def trajectory_error(reference, candidate, variables, interval=None) -> ErrorMetrics:
    """rel_l2 and max-abs error of `candidate` against `reference` traces.

    Nodes are matched by nearest reference time within half the reference
    step (no interpolation).  `variables` may name raw layout columns or
    derived envelope columns already present on the traces.
    """
    t_ref = np.asarray(reference.times, dtype=float)
    t_cand = np.asarray(candidate.times, dtype=float)
    if interval is not None:
        lo, hi = interval
        ref_mask = (t_ref >= lo) & (t_ref <= hi)
        cand_mask = (t_cand >= lo) & (t_cand <= hi)
    else:
        ref_mask = np.ones(len(t_ref), dtype=bool)
        cand_mask = np.ones(len(t_cand), dtype=bool)

    t_ref_w = t_ref[ref_mask]
    t_cand_w = t_cand[cand_mask]
    if len(t_ref_w) == 0 or len(t_cand_w) == 0:
        raise ComparisonError("traces do not overlap on the requested interval")

    diffs = np.diff(t_ref_w)
    h_ref = float(np.min(diffs[diffs > 0])) if np.any(diffs > 0) else 0.0
    tol = 0.5 * h_ref if h_ref > 0 else 1e-12
    idx_ref, idx_cand = _match_nodes(t_ref_w, t_cand_w, tol)
    if len(idx_ref) == 0:
        raise ComparisonError("no candidate nodes matched a reference node within h/2")

    missing = [v for v in variables if not reference.has_column(v) or not candidate.has_column(v)]
    if missing:
        raise ComparisonError(f"variables missing from one of the traces: {missing}")

    per_variable = {}
    sq_err = 0.0
    sq_ref = 0.0
    max_abs = 0.0
    for name in variables:
        r = reference.column(name)[ref_mask][idx_ref]
        c = candidate.column(name)[cand_mask][idx_cand]
        err = c - r
        e2 = float(np.dot(err, err))
        r2 = float(np.dot(r, r))
        per_variable[name] = math.sqrt(e2 / r2) if r2 > 0 else math.sqrt(e2)
        sq_err += e2
        sq_ref += r2
        max_abs = max(max_abs, float(np.max(np.abs(err))))

    rel = math.sqrt(sq_err / sq_ref) if sq_ref > 0 else math.sqrt(sq_err)
    t_matched = t_ref_w[idx_ref]
    return ErrorMetrics(
        rel_l2=rel,
        max_abs=max_abs,
        per_variable=per_variable,
        compared_interval=(float(t_matched[0]), float(t_matched[-1])),
        n_matched=int(len(idx_ref)),
    )
