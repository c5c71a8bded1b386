"""Integrator kernel dispatch.

Two interchangeable kernels advance the closed-loop state: a compiled
extension (_core, built from _core.pyx) and a numpy reference (_pure).
The compiled one is preferred when importable. The environment variable
SO3SYNC_BACKEND ("compiled", "python", or "auto") pins the machine-wide
default; an explicit backend argument wins over it only when naming a
concrete kernel.
"""

from __future__ import annotations

import os

from . import _pure
from ._pure import (
    STATUS_DIVERGED,
    STATUS_OK,
    STATUS_PROJECTION,
    KernelArrays,
)

try:
    from . import _core
except ImportError:  # extension not built; numpy fallback only
    _core = None

__all__ = [
    "KernelArrays",
    "STATUS_OK",
    "STATUS_DIVERGED",
    "STATUS_PROJECTION",
    "available_backends",
    "resolve_backend",
    "rk4_run",
]


def available_backends():
    """Backend names usable on this installation, preferred first."""
    if _core is not None:
        return ("compiled", "python")
    return ("python",)


def resolve_backend(name=None):
    """Maps a requested backend name to a concrete one.

    None and "auto" defer to SO3SYNC_BACKEND, then to whatever is
    available, preferring the compiled kernel.

    Raises:
        ValueError: unknown name.
        RuntimeError: "compiled" requested but the extension is missing.
    """
    if name is None or name == "auto":
        name = os.environ.get("SO3SYNC_BACKEND", "auto")
    if name == "auto":
        return "compiled" if _core is not None else "python"
    if name == "python":
        return "python"
    if name == "compiled":
        if _core is None:
            raise RuntimeError(
                "the compiled kernel is not available in this installation"
            )
        return "compiled"
    raise ValueError(f"unknown backend {name!r}")


def rk4_run(r, w, params, h, n_steps, omega_max, backend=None):
    """Advances (r, w) in place by n_steps; returns a status code.

    Args:
        r: (N, 3, 3) C-contiguous float64 attitudes, modified in place.
        w: (N, 3) C-contiguous float64 velocities, modified in place.
        params: KernelArrays.
        h: step size.
        n_steps: number of RK4 steps.
        omega_max: divergence guard on any single body's |w_i|.
        backend: None/"auto"/"python"/"compiled".
    """
    name = resolve_backend(backend)
    if name == "compiled":
        return _core.rk4_run(
            r,
            w,
            params.heads,
            params.tails,
            params.a_edges,
            params.a_leader,
            params.r0,
            params.leader,
            params.k_r0,
            params.k_r,
            params.k_w,
            params.jmat,
            params.jinv,
            float(h),
            int(n_steps),
            float(omega_max),
        )
    return _pure.rk4_run(r, w, params, h, n_steps, omega_max)
