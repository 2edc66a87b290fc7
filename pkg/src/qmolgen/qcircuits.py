"""Attention-score circuits built from single-layer RY ansatze.

A score circuit estimates Re<q_i|k_j> for one (query i, key j) pair with a
single ancilla. The working register holds the query/key states:

* sequence-only: two equal registers (token, position)
* conditioned: three equal registers (token, position, property)

Layout: token register on the lowest qubits, then position, then property;
the ancilla is the highest-index qubit.

Circuit recipe (ancilla started in |+>):

1. prepare |e_i>, |p_i> (and |c>, never uncomputed) unconditionally
2. apply U_q over the whole working register
3. controlled-adjoint of U_q, then of the position and token preparations,
   so the |1> branch returns to |0...0> (times |c> when conditioned)
4. controlled preparations for key j, then controlled U_k
5. final H on the ancilla; <Z> on the ancilla equals Re<q_i|k_j>
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .statevec import (
    GateOp,
    StateVector,
    adjoint_ops,
    apply_inplace,
    cnot,
    controlled_ops,
    expectation_pauli_z,
    h,
    new_zero_state,
    norm_sq,
    ry,
)


class Mode(enum.Enum):
    SEQUENCE_ONLY = "sequence_only"
    CONDITIONED = "conditioned"


# ---------------------------------------------------------------------------
# ansatz


@dataclass(frozen=True)
class AnsatzParams:
    """Angles for one single-layer RY ansatz; one angle per register qubit."""

    angles: tuple[float, ...]

    @property
    def register_size(self) -> int:
        return len(self.angles)


def build_ansatz(angles: np.ndarray, qubits: range) -> list[GateOp]:
    """RY on every qubit, then a CNOT chain q[i] -> q[i+1].

    A single-qubit register gets no entangler.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.ndim != 1 or angles.size != len(qubits):
        raise ValidationError(
            f"ansatz needs {len(qubits)} angles, got shape {angles.shape}"
        )
    ops = [ry(q, a) for q, a in zip(qubits, angles)]
    ops += [cnot(qubits[i], qubits[i + 1]) for i in range(len(qubits) - 1)]
    return ops


# ---------------------------------------------------------------------------
# circuit spec


@dataclass(frozen=True)
class AttentionCircuitSpec:
    """Everything needed to score one (query i, key j) pair.

    All angle arrays are 1-D float64 tuples; token/position (and property)
    registers must be the same size, and theta_q/theta_k must cover the whole
    working register.
    """

    mode: Mode
    theta_token_i: tuple[float, ...]
    theta_pos_i: tuple[float, ...]
    theta_token_j: tuple[float, ...]
    theta_pos_j: tuple[float, ...]
    theta_q: tuple[float, ...]
    theta_k: tuple[float, ...]
    theta_prop: tuple[float, ...] | None = None

    def __post_init__(self):
        r = len(self.theta_token_i)
        if r < 1:
            raise ValidationError("token register must have at least one qubit")
        for name in ("theta_pos_i", "theta_token_j", "theta_pos_j"):
            if len(getattr(self, name)) != r:
                raise ValidationError(f"{name} must have {r} angles")
        if self.mode is Mode.CONDITIONED:
            if self.theta_prop is None or len(self.theta_prop) != r:
                raise ValidationError("conditioned mode needs a property register of equal size")
        elif self.theta_prop is not None:
            raise ValidationError("theta_prop is only valid in conditioned mode")
        w = self.working_qubits
        if len(self.theta_q) != w or len(self.theta_k) != w:
            raise ValidationError(f"theta_q/theta_k must have {w} angles")

    @property
    def register_size(self) -> int:
        return len(self.theta_token_i)

    @property
    def num_registers(self) -> int:
        return 3 if self.mode is Mode.CONDITIONED else 2

    @property
    def working_qubits(self) -> int:
        return self.num_registers * self.register_size

    @property
    def ancilla(self) -> int:
        return self.working_qubits


def _registers(spec: AttentionCircuitSpec) -> tuple[range, range, range | None]:
    r = spec.register_size
    token = range(0, r)
    pos = range(r, 2 * r)
    prop = range(2 * r, 3 * r) if spec.mode is Mode.CONDITIONED else None
    return token, pos, prop


def score_circuit_ops(spec: AttentionCircuitSpec) -> list[GateOp]:
    """The full gate list for one score circuit (ancilla included)."""
    token, pos, prop = _registers(spec)
    working = range(0, spec.working_qubits)
    anc = spec.ancilla

    prep_e_i = build_ansatz(spec.theta_token_i, token)
    prep_p_i = build_ansatz(spec.theta_pos_i, pos)
    u_q = build_ansatz(spec.theta_q, working)

    ops: list[GateOp] = []
    ops += prep_e_i
    ops += prep_p_i
    if prop is not None:
        ops += build_ansatz(spec.theta_prop, prop)
    ops += u_q
    ops.append(h(anc))
    ops += controlled_ops(adjoint_ops(u_q), anc)
    ops += controlled_ops(adjoint_ops(prep_p_i), anc)
    ops += controlled_ops(adjoint_ops(prep_e_i), anc)
    ops += controlled_ops(build_ansatz(spec.theta_token_j, token), anc)
    ops += controlled_ops(build_ansatz(spec.theta_pos_j, pos), anc)
    ops += controlled_ops(build_ansatz(spec.theta_k, working), anc)
    ops.append(h(anc))
    return ops


def prepare_score_state(spec: AttentionCircuitSpec) -> StateVector:
    """Run the score circuit on |0...0>|0>_anc."""
    state = new_zero_state(spec.working_qubits + 1)
    apply_inplace(state.amplitudes, state.num_qubits, score_circuit_ops(spec))
    return state


def attention_score(spec: AttentionCircuitSpec) -> float:
    """Re<q_i|k_j> via the ancilla <Z>; always inside [-1, 1]."""
    state = prepare_score_state(spec)
    z = expectation_pauli_z(state, spec.ancilla)
    total = norm_sq(state)
    return float(min(1.0, max(-1.0, z / total)))


# ---------------------------------------------------------------------------
# brute-force oracle
#
# Builds |q_i> and |k_j> as two separate statevectors from dense gate
# matrices (no ancilla, no controls) and takes the inner product directly.
# Shares nothing with the kernel path beyond numpy itself.


def _dense_1q(num_qubits: int, target: int, mat: np.ndarray) -> np.ndarray:
    full = np.array([[1.0]], dtype=np.complex128)
    for q in range(num_qubits):
        g = mat if q == target else np.eye(2)
        full = np.kron(g, full)  # qubit 0 is the LSB, so higher qubits kron on the left
    return full

def _dense_cnot(num_qubits: int, control: int, target: int) -> np.ndarray:
    dim = 1 << num_qubits
    u = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(dim):
        j = i ^ (1 << target) if i & (1 << control) else i
        u[j, i] = 1.0
    return u


def _dense_ansatz(angles, qubits: range, num_qubits: int) -> np.ndarray:
    u = np.eye(1 << num_qubits, dtype=np.complex128)
    for q, a in zip(qubits, angles):
        c, s = np.cos(a / 2.0), np.sin(a / 2.0)
        u = _dense_1q(num_qubits, q, np.array([[c, -s], [s, c]])) @ u
    for i in range(len(qubits) - 1):
        u = _dense_cnot(num_qubits, qubits[i], qubits[i + 1]) @ u
    return u


def oracle_inner_product(spec: AttentionCircuitSpec) -> float:
    """Independent Re<q_i|k_j> from dense matrix algebra."""
    token, pos, prop = _registers(spec)
    w = spec.working_qubits
    zero = np.zeros(1 << w, dtype=np.complex128)
    zero[0] = 1.0

    prep_shared = np.eye(1 << w, dtype=np.complex128)
    if prop is not None:
        prep_shared = _dense_ansatz(spec.theta_prop, prop, w)

    q_state = (
        _dense_ansatz(spec.theta_q, range(w), w)
        @ _dense_ansatz(spec.theta_pos_i, pos, w)
        @ _dense_ansatz(spec.theta_token_i, token, w)
        @ prep_shared
        @ zero
    )
    k_state = (
        _dense_ansatz(spec.theta_k, range(w), w)
        @ _dense_ansatz(spec.theta_pos_j, pos, w)
        @ _dense_ansatz(spec.theta_token_j, token, w)
        @ prep_shared
        @ zero
    )
    return float(np.real(np.vdot(q_state, k_state)))


# ---------------------------------------------------------------------------
# circuit budget


def max_unique_circuits(n: int) -> int:
    """Lower-triangle pair count minus the skipped (1,1) self-pair."""
    return (n * n + n) // 2 - 1


def unique_circuit_count(
    sequence,
    conditioned: bool = False,
    token_angles: np.ndarray | None = None,
    position_angles: np.ndarray | None = None,
) -> int:
    """Distinct score circuits needed for one causal attention matrix.

    Circuits are keyed by their (i, j) preparation parameters over the lower
    triangle, skipping the always-trivial first self-pair. With angle tables
    given, keys use the actual parameter values. Without tables, every
    position is assumed to carry identical parameters (the fresh all-zero
    initialization), so the key collapses to the token pair. The property
    register is shared by all pairs of one matrix and never splits keys,
    which is why ``conditioned`` does not change the count.
    """
    del conditioned
    seq = list(sequence)
    n = len(seq)
    if (token_angles is None) != (position_angles is None):
        raise ValidationError("pass both angle tables or neither")

    def key(i: int, j: int):
        if token_angles is None:
            return (seq[i], seq[j])
        return (
            np.asarray(token_angles[seq[i]], dtype=np.float64).tobytes(),
            np.asarray(position_angles[i], dtype=np.float64).tobytes(),
            np.asarray(token_angles[seq[j]], dtype=np.float64).tobytes(),
            np.asarray(position_angles[j], dtype=np.float64).tobytes(),
        )

    keys = {key(i, j) for i in range(n) for j in range(i + 1) if (i, j) != (0, 0)}
    return len(keys)


# ---------------------------------------------------------------------------
# amplitude amplification demo


def p_zero(state: StateVector, qubit: int) -> float:
    """Probability of measuring 0 on one qubit."""
    total = norm_sq(state)
    return 0.5 * (1.0 + expectation_pauli_z(state, qubit) / total)


def amplitude_amplification_demo(spec: AttentionCircuitSpec, iterations: int) -> list[float]:
    """Grover-style amplification of the ancilla-0 branch of a score circuit.

    One iteration applies Z on the ancilla (phase flip of the unwanted
    branch) followed by the reflection about the prepared state. Returns the
    ancilla-0 probability after m = 0..iterations applications; the m-th
    entry equals sin^2((2m+1) * asin(sqrt(p0))).
    """
    if iterations < 0:
        raise ValidationError("iterations must be >= 0")
    prepared = prepare_score_state(spec)
    psi = prepared.amplitudes / np.sqrt(norm_sq(prepared))
    anc_bit = 1 << spec.ancilla

    v = psi.copy()
    idx = np.arange(v.size)
    bad = (idx & anc_bit) != 0
    out = [float(np.sum(np.abs(v[~bad]) ** 2))]
    for _ in range(iterations):
        v[bad] = -v[bad]
        v = 2.0 * np.vdot(psi, v) * psi - v
        out.append(float(np.sum(np.abs(v[~bad]) ** 2)))
    return out


# ---------------------------------------------------------------------------
# test/selftest support


def random_spec(rng: np.random.Generator, mode: Mode, register_size: int) -> AttentionCircuitSpec:
    """Uniformly random angles in [0, 2pi) for every register."""
    r = register_size
    w = (3 if mode is Mode.CONDITIONED else 2) * r

    def draw(k: int) -> tuple[float, ...]:
        return tuple(rng.uniform(0.0, 2.0 * np.pi, size=k))

    return AttentionCircuitSpec(
        mode=mode,
        theta_token_i=draw(r),
        theta_pos_i=draw(r),
        theta_token_j=draw(r),
        theta_pos_j=draw(r),
        theta_q=draw(w),
        theta_k=draw(w),
        theta_prop=draw(r) if mode is Mode.CONDITIONED else None,
    )
