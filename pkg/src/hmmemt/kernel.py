"""Averaging kernels used to estimate a macro effective force from micro samples.

A kernel is a non-negative weight function with unit mass and a vanishing
first moment on its support `[-eta, +eta]`.  Convolving the micro vector
field against it filters the fast components while preserving the slow
trend at the window midpoint.  Only the Gaussian family is implemented;
the Gaussian is truncated to the support and the discrete weights are
renormalized so the zeroth moment is exactly one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ParameterError, ShapeError

__all__ = [
    "KernelSpec",
    "DiscreteKernelWeights",
    "make_gaussian_kernel",
    "discretize_kernel",
    "kernel_moment",
    "convolve_force",
    "discrete_frequency_response",
    "continuous_frequency_response",
]


@dataclass(frozen=True)
class KernelSpec:
    """Continuous averaging kernel on the closed support [-eta, +eta]."""

    family: str
    eta: float
    sigma: float

    def __post_init__(self):
        if self.family != "gaussian":
            raise ParameterError(f"unsupported kernel family: {self.family!r}")
        if not (self.eta > 0):
            raise ParameterError(f"kernel half-width eta must be positive, got {self.eta}")
        if not (self.sigma > 0):
            raise ParameterError(f"kernel width sigma must be positive, got {self.sigma}")
        if self.sigma > self.eta:
            raise ParameterError(
                f"sigma ({self.sigma}) must not exceed eta ({self.eta}): "
                "truncation would destroy the moment conditions"
            )

    @property
    def support(self) -> tuple[float, float]:
        return (-self.eta, self.eta)

    def evaluate(self, u):
        """Kernel density at offset(s) `u` from the evaluation point (untruncated)."""
        u = np.asarray(u, dtype=float)
        return np.exp(-(u * u) / (2.0 * self.sigma**2)) / math.sqrt(2.0 * math.pi * self.sigma**2)


@dataclass(frozen=True)
class DiscreteKernelWeights:
    """Normalized quadrature weights sampling a kernel on a uniform micro grid.

    `sample_offsets[i] = i*h` measures time from the window start; the kernel
    is centered on the window midpoint.  `centered_offsets` is the exactly
    symmetric grid used for weight evaluation and moments, so that pairwise
    symmetry holds bitwise.
    """

    sample_offsets: np.ndarray
    weights: np.ndarray
    spacing: float
    centered_offsets: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.sample_offsets) != len(self.weights):
            raise ShapeError("sample_offsets and weights must have equal length")
        if np.any(self.weights < 0):
            raise ParameterError("kernel weights must be non-negative")
        mass = float(np.sum(self.weights) * self.spacing)
        if abs(mass - 1.0) > 1e-12:
            raise ParameterError(f"discrete kernel mass {mass!r} deviates from 1 by more than 1e-12")

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def half_width(self) -> float:
        """Half-width eta of the sampled window."""
        return float(self.centered_offsets[-1])


def make_gaussian_kernel(eta: float, sigma: float | None = None) -> KernelSpec:
    """Gaussian kernel of half-width `eta`; `sigma` defaults to eta/3.

    The eta/3 default keeps the density near zero at the truncation boundary
    (exp(-4.5) of the peak), so renormalization is a small correction.
    """
    if not (eta > 0):
        raise ParameterError(f"eta must be positive, got {eta}")
    if sigma is None:
        sigma = eta / 3.0
    return KernelSpec(family="gaussian", eta=float(eta), sigma=float(sigma))


def discretize_kernel(spec: KernelSpec, h: float) -> DiscreteKernelWeights:
    """Sample the kernel on the micro grid and renormalize to unit discrete mass.

    The window [0, 2*eta] must contain a whole number of micro steps.  Plain
    Riemann weights with both endpoints included; renormalization restores
    the zeroth moment exactly and symmetry cancels the first.
    """
    if not (h > 0):
        raise ParameterError(f"micro step h must be positive, got {h}")
    n_float = 2.0 * spec.eta / h
    n = round(n_float)
    if n < 1 or abs(n_float - n) > 1e-9 * max(1.0, n_float):
        raise ConfigurationError(
            f"window 2*eta = {2 * spec.eta} is not an integral multiple of h = {h} "
            f"(2*eta/h = {n_float})"
        )
    idx = np.arange(n + 1)
    # (2i - n) * h/2 is exactly antisymmetric in floating point, unlike i*h - eta.
    centered = (2 * idx - n) * (h / 2.0)
    raw = spec.evaluate(centered)
    weights = raw / (np.sum(raw) * h)
    return DiscreteKernelWeights(
        sample_offsets=idx * h,
        weights=weights,
        spacing=float(h),
        centered_offsets=centered,
    )


def kernel_moment(weights: DiscreteKernelWeights, r: int) -> float:
    """Discrete r-th moment: sum_i w_i * (offset_i - eta)^r * h."""
    if r < 0:
        raise ParameterError(f"moment order must be non-negative, got {r}")
    if r == 0:
        return float(np.sum(weights.weights) * weights.spacing)
    return float(np.dot(weights.weights, weights.centered_offsets**r) * weights.spacing)


def convolve_force(weights: DiscreteKernelWeights, force_samples) -> np.ndarray:
    """Kernel-weighted average of force samples: componentwise sum_i w_i f_i h.

    `force_samples` is a (n_samples, dim) array or a sequence convertible to
    one (e.g. a list of state-sized vectors); returns a dim-vector.
    """
    if hasattr(force_samples, "values") and not isinstance(force_samples, np.ndarray):
        arr = np.asarray(force_samples.values, dtype=float)
    else:
        arr = np.asarray(
            [s.values if hasattr(s, "values") else s for s in force_samples], dtype=float
        )
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != len(weights):
        raise ShapeError(
            f"got {arr.shape[0]} force samples for {len(weights)} kernel weights"
        )
    return (weights.weights @ arr) * weights.spacing


def discrete_frequency_response(weights: DiscreteKernelWeights, omega: float) -> float:
    """Gain of the discrete convolution for a pure sinusoid at omega rad/s."""
    u = weights.centered_offsets
    c = float(np.dot(weights.weights, np.cos(omega * u)) * weights.spacing)
    s = float(np.dot(weights.weights, np.sin(omega * u)) * weights.spacing)
    return math.hypot(c, s)


def continuous_frequency_response(spec: KernelSpec, omega: float, n: int = 200_000) -> float:
    """Gain of the truncated, renormalized continuous kernel at omega rad/s.

    Fine trapezoid quadrature over the support; independent of any micro grid.
    """
    u = np.linspace(-spec.eta, spec.eta, n + 1)
    k = spec.evaluate(u)
    mass = np.trapezoid(k, u)
    c = np.trapezoid(k * np.cos(omega * u), u) / mass
    s = np.trapezoid(k * np.sin(omega * u), u) / mass
    return math.hypot(float(c), float(s))
