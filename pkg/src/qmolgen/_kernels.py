"""Hot statevector kernels: numba-compiled with a pure-numpy fallback.

Backend selection happens once at import via the ``QMOLGEN_NUMBA`` env var:

* unset or ``auto``: use numba when importable, else fall back to numpy
* ``0`` / ``off`` / ``false``: force the pure-numpy path
* ``1`` / ``on`` / ``true``: require numba, raise if unavailable

Both paths implement the same two primitives and agree bit-for-bit up to
floating-point associativity:

* ``apply_1q(amps, target, ctrl_mask, u00, u01, u10, u11)``: in-place
  application of a (multi-)controlled single-qubit unitary. ``ctrl_mask`` is
  an integer whose set bits name control qubits (0 = no controls); the update
  touches only basis states with every control bit equal to 1.
* ``expect_z(amps, qubit)``: <Z> on one qubit.

Qubit 0 is the least significant bit of the basis-state index.
"""

from __future__ import annotations

import os

import numpy as np


def _numpy_apply_1q(amps, target, ctrl_mask, u00, u01, u10, u11):
    tbit = 1 << target
    idx = np.arange(amps.size, dtype=np.int64)
    lo = idx[(idx & tbit == 0) & (idx & ctrl_mask == ctrl_mask)]
    hi = lo | tbit
    a0 = amps[lo]
    a1 = amps[hi]
    amps[lo] = u00 * a0 + u01 * a1
    amps[hi] = u10 * a0 + u11 * a1


def _numpy_expect_z(amps, qubit):
    qbit = 1 << qubit
    idx = np.arange(amps.size, dtype=np.int64)
    sign = np.where(idx & qbit == 0, 1.0, -1.0)
    return float(np.sum(sign * (amps.real**2 + amps.imag**2)))


def _numba_build():
    import numba

    @numba.njit(cache=True, nogil=True)
    def apply_1q(amps, target, ctrl_mask, u00, u01, u10, u11):  # pragma: no cover
        tbit = 1 << target
        for i in range(amps.size):
            if i & tbit == 0 and i & ctrl_mask == ctrl_mask:
                j = i | tbit
                a0 = amps[i]
                a1 = amps[j]
                amps[i] = u00 * a0 + u01 * a1
                amps[j] = u10 * a0 + u11 * a1

    @numba.njit(cache=True, nogil=True)
    def expect_z(amps, qubit):  # pragma: no cover
        qbit = 1 << qubit
        acc = 0.0
        for i in range(amps.size):
            p = amps[i].real ** 2 + amps[i].imag ** 2
            if i & qbit == 0:
                acc += p
            else:
                acc -= p
        return acc

    return apply_1q, expect_z


def _select_backend():
    flag = os.environ.get("QMOLGEN_NUMBA", "auto").strip().lower()
    if flag in ("0", "off", "false", "no"):
        return "numpy", _numpy_apply_1q, _numpy_expect_z
    try:
        apply_1q, expect_z = _numba_build()
        return "numba", apply_1q, expect_z
    except ImportError:
        if flag in ("1", "on", "true", "yes"):
            raise
        return "numpy", _numpy_apply_1q, _numpy_expect_z


BACKEND, apply_1q, expect_z = _select_backend()


def backend_name() -> str:
    """Which kernel path was selected at import ('numba' or 'numpy')."""
    return BACKEND
