"""Kernel backend selection.

At import time we prefer the compiled Cython kernels and fall back to the
numpy implementations in ``_kernels_py``. Set ``GAITDIFF_BACKEND=py`` to
force the fallback, or call :func:`set_backend` at runtime (used by the
kernel benchmark).

Compiled kernels only handle contiguous float32 (float64 for the plant
loop); anything else is routed to the numpy versions, so float64 runs —
e.g. finite-difference gradient checks — always take the python path.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py as _py

try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:
    _compiled = None

_active = _compiled if os.environ.get("GAITDIFF_BACKEND", "auto") != "py" else None


def have_compiled() -> bool:
    return _compiled is not None


def backend_name() -> str:
    return "compiled" if _active is not None else "python"


def set_backend(name: str) -> None:
    """Select 'auto' (compiled when available), 'compiled', or 'py'."""
    global _active
    if name == "py":
        _active = None
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        _active = _compiled
    elif name == "auto":
        _active = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")


def _f32c(*arrays) -> bool:
    return all(a.dtype == np.float32 and a.flags.c_contiguous for a in arrays)


def gelu_fwd(x):
    if _active is not None and _f32c(x):
        return _active.gelu_fwd(x.reshape(-1)).reshape(x.shape)
    return _py.gelu_fwd(x)


def gelu_bwd(x, gy):
    if _active is not None and _f32c(x, gy):
        return _active.gelu_bwd(x.reshape(-1), gy.reshape(-1)).reshape(x.shape)
    return _py.gelu_bwd(x, gy)


def softmax_fwd(x):
    shape = x.shape
    x2 = x.reshape(-1, shape[-1])
    if _active is not None and _f32c(x2):
        return _active.softmax_fwd(x2).reshape(shape)
    return _py.softmax_fwd(x2).reshape(shape)


def softmax_bwd(y, gy):
    shape = y.shape
    y2 = y.reshape(-1, shape[-1])
    gy2 = np.ascontiguousarray(gy.reshape(-1, shape[-1]))
    if _active is not None and _f32c(y2, gy2):
        return _active.softmax_bwd(y2, gy2).reshape(shape)
    return _py.softmax_bwd(y2, gy2).reshape(shape)


def layernorm_fwd(x2, w, b, eps):
    if _active is not None and _f32c(x2, w, b):
        return _active.layernorm_fwd(x2, w, b, eps)
    return _py.layernorm_fwd(x2, w, b, eps)


def layernorm_bwd(x2, w, mean, rstd, gy2):
    gy2 = np.ascontiguousarray(gy2)
    if _active is not None and _f32c(x2, w, mean, rstd, gy2):
        return _active.layernorm_bwd(x2, w, mean, rstd, gy2)
    return _py.layernorm_bwd(x2, w, mean, rstd, gy2)


def adamw_update(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay):
    if _active is not None and _f32c(p, g, m, v):
        _active.adamw_update(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                             m.reshape(-1), v.reshape(-1),
                             t, lr, beta1, beta2, eps, weight_decay)
        return
    _py.adamw_update(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay)


def pd_substeps(q, qdot, action, kp, kd, inertia, friction, tau_max, dt, nsub):
    if (_active is not None and q.dtype == np.float64
            and qdot.dtype == np.float64 and action.dtype == np.float64):
        _active.pd_substeps(q, qdot, action, kp, kd, inertia, friction,
                            tau_max, dt, nsub)
        return
    _py.pd_substeps(q, qdot, action, kp, kd, inertia, friction, tau_max, dt, nsub)
