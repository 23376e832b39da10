"""Backend selection: compiled kernels when available, pure Python otherwise.

The compiled extension and the Python fallback implement identical
algorithms and produce bit-identical results; STASIM_NO_EXT=1 forces the
fallback.  Level-kernel wrappers here unpack FlatDesign/TimingState arrays
into the raw kernel signatures.
"""

from __future__ import annotations

import os

from . import _kernels_py

_COMPILED = None
if os.environ.get("STASIM_NO_EXT") != "1":
    try:
        from . import _kernels as _COMPILED  # type: ignore[attr-defined]
    except ImportError:
        _COMPILED = None

_ACTIVE = _COMPILED if _COMPILED is not None else _kernels_py


def backend_name() -> str:
    return "compiled" if _ACTIVE is _COMPILED and _COMPILED is not None else "python"


def available_backends() -> dict:
    out = {"python": _kernels_py}
    if _COMPILED is not None:
        out["compiled"] = _COMPILED
    return out


def get_backend(name: str):
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available (have {sorted(available_backends())})")


def rc_level(flat, state, nets, reduce_width=8, kernels=None):
    k = kernels if kernels is not None else _ACTIVE
    k.rc_level(nets, flat.net_ptr, flat.net_root, flat.root_cap,
               flat.mem_pin, flat.mem_parent_loc, flat.mem_res, flat.mem_cap,
               flat.root_net_of_pin, state.load, state.net_delay,
               state.impulse, reduce_width)


def forward_level(flat, state, nets, kernels=None):
    k = kernels if kernels is not None else _ACTIVE
    k.forward_level(nets, flat.net_ptr, flat.net_root, flat.root_kind,
                    flat.mem_pin, flat.net_in_ptr, flat.net_in_arc,
                    flat.arc_from, flat.arc_dlut, flat.arc_slut,
                    flat.lut_s_ptr, flat.lut_l_ptr, flat.lut_t_ptr,
                    flat.lut_s_flat, flat.lut_l_flat, flat.lut_t_flat,
                    state.load, state.net_delay, state.impulse,
                    state.slew, state.arrival, state.arc_delay)


def backward_level(flat, state, nets, kernels=None):
    k = kernels if kernels is not None else _ACTIVE
    k.backward_level(nets, flat.net_ptr, flat.net_root, flat.mem_pin,
                     flat.mem_out_ptr, flat.mem_out_arc, flat.arc_to,
                     state.net_delay, state.required, state.arc_delay)
