"""Multiscale stiff-ODE simulation engine with a two-machine EMT testbed.

Core pieces: `kernel` (averaging kernels), `solver` (fixed-step RK4 micro /
forward-Euler macro integrators), `hmm` (the multiscale cycle and phase
scheduler), `emt` (the power-system model), `diagnostics` (stiffness and
error analysis), `scenario`/`runner`/`cli` (file-driven orchestration).
"""

__version__ = "0.1.0"
