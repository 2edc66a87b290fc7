"""Minimal statevector simulator for the attention-score circuits.

Conventions:

* qubit 0 is the least significant bit of the basis-state index
* the ancilla used by scoring circuits is always the highest-index qubit
* amplitudes are complex128; every gate here is real, so imaginary parts
  stay zero, but the storage type is kept general

The gate set is deliberately tiny: RY, H, CNOT and Pauli-Z, each optionally
decorated with extra control qubits so a whole sub-circuit can be run under
ancilla control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import ResourceLimitError, ValidationError
from .rng import rng_for

MAX_QUBITS = 24

GATE_KINDS = ("ry", "h", "cnot", "pauli_z")

_SQRT1_2 = 1.0 / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class GateOp:
    """One gate application.

    ``control`` is the CNOT control; ``controls`` holds any extra controls
    added when a sub-circuit is run conditioned on an ancilla.
    """

    kind: str
    target: int
    control: int | None = None
    angle: float = 0.0
    controls: tuple[int, ...] = field(default_factory=tuple)


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())


def ry(target: int, angle: float) -> GateOp:
    return GateOp("ry", target, angle=float(angle))


def h(target: int) -> GateOp:
    return GateOp("h", target)


def cnot(control: int, target: int) -> GateOp:
    return GateOp("cnot", target, control=control)


def pauli_z(target: int) -> GateOp:
    return GateOp("pauli_z", target)


# ---------------------------------------------------------------------------
# state construction


def new_zero_state(num_qubits: int) -> StateVector:
    """|0...0> on ``num_qubits`` qubits; guarded at MAX_QUBITS."""
    if num_qubits < 1:
        raise ValidationError(f"num_qubits must be >= 1, got {num_qubits}")
    if num_qubits > MAX_QUBITS:
        raise ResourceLimitError(
            f"{num_qubits} qubits exceeds the {MAX_QUBITS}-qubit simulator guard"
        )
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(num_qubits, amps)


def norm_sq(state: StateVector) -> float:
    return float(np.sum(state.amplitudes.real**2 + state.amplitudes.imag**2))


# ---------------------------------------------------------------------------
# gate application


def _gate_entries(op: GateOp) -> tuple[complex, complex, complex, complex]:
    if op.kind == "ry":
        c = math.cos(op.angle / 2.0)
        s = math.sin(op.angle / 2.0)
        return c, -s, s, c
    if op.kind == "h":
        return _SQRT1_2, _SQRT1_2, _SQRT1_2, -_SQRT1_2
    if op.kind == "cnot":
        return 0.0, 1.0, 1.0, 0.0
    if op.kind == "pauli_z":
        return 1.0, 0.0, 0.0, -1.0
    raise ValidationError(f"unknown gate kind {op.kind!r}")


def _control_mask(op: GateOp, num_qubits: int) -> int:
    mask = 0
    ctrls = op.controls if op.control is None else (op.control, *op.controls)
    for c in ctrls:
        if not 0 <= c < num_qubits:
            raise ValidationError(f"control qubit {c} out of range for {num_qubits} qubits")
        if c == op.target:
            raise ValidationError(f"control qubit {c} equals target")
        mask |= 1 << c
    return mask

def _validate(op: GateOp, num_qubits: int) -> None:
    if op.kind not in GATE_KINDS:
        raise ValidationError(f"unknown gate kind {op.kind!r}")
    if op.kind == "cnot" and op.control is None:
        raise ValidationError("cnot requires a control qubit")
    if op.kind != "cnot" and op.control is not None:
        raise ValidationError(f"{op.kind} does not take a cnot control")
    if not 0 <= op.target < num_qubits:
        raise ValidationError(f"target qubit {op.target} out of range for {num_qubits} qubits")


def apply_inplace(amps: np.ndarray, num_qubits: int, ops: list[GateOp]) -> None:
    """Run ``ops`` directly on an amplitude buffer (hot path)."""
    for op in ops:
        _validate(op, num_qubits)
        mask = _control_mask(op, num_qubits)
        u00, u01, u10, u11 = _gate_entries(op)
        _kernels.apply_1q(
            amps, op.target, mask, complex(u00), complex(u01), complex(u10), complex(u11)
        )


def apply_gate(state: StateVector, op: GateOp) -> StateVector:
    """Apply one gate, returning a new state."""
    out = state.copy()
    apply_inplace(out.amplitudes, out.num_qubits, [op])
    return out


def apply_circuit(state: StateVector, ops: list[GateOp]) -> StateVector:
    out = state.copy()
    apply_inplace(out.amplitudes, out.num_qubits, ops)
    return out


# ---------------------------------------------------------------------------
# circuit transforms


def controlled_ops(ops: list[GateOp], control: int) -> list[GateOp]:
    """Add ``control`` to every gate in the list."""
    return [replace(op, controls=(*op.controls, control)) for op in ops]


def adjoint_ops(ops: list[GateOp]) -> list[GateOp]:
    """Reverse the list and invert each gate (only RY needs an angle flip)."""
    out = []
    for op in reversed(ops):
        if op.kind == "ry":
            out.append(replace(op, angle=-op.angle))
        else:
            out.append(op)
    return out


# ---------------------------------------------------------------------------
# measurement


def expectation_pauli_z(state: StateVector, qubit: int) -> float:
    """Exact <Z> on one qubit."""
    if not 0 <= qubit < state.num_qubits:
        raise ValidationError(f"qubit {qubit} out of range for {state.num_qubits} qubits")
    return float(_kernels.expect_z(state.amplitudes, qubit))


def sample_ancilla(state: StateVector, qubit: int, shots: int, seed: int) -> float:
    """Shot-based unbiased estimate of expectation_pauli_z.

    Draws the count of 0-outcomes from a binomial with the exact marginal, so
    the estimator is unbiased and fully determined by ``seed``.
    """
    if shots < 1:
        raise ValidationError(f"shots must be >= 1, got {shots}")
    z = expectation_pauli_z(state, qubit)
    total = norm_sq(state)
    p0 = min(1.0, max(0.0, 0.5 * (1.0 + z / total)))
    zeros = rng_for(seed, "sample_ancilla").binomial(shots, p0)
    return 2.0 * zeros / shots - 1.0
