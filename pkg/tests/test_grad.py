"""Gradient estimator and optimizer tests.

Parameter-shift values are checked against closed forms and central finite
differences; SPSA against its exact 1-D behaviour and its mean over many
draws; AdamW against a hand-computed first step.
"""

import logging
from dataclasses import replace

import numpy as np
import pytest

from qmolgen.errors import ValidationError
from qmolgen.grad import (
    AdamWState,
    adamw_step,
    clip_by_norm,
    parameter_shift_grad,
    spsa_grad,
)
from qmolgen.qcircuits import Mode, attention_score, build_ansatz, random_spec
from qmolgen.rng import rng_for
from qmolgen.statevec import apply_circuit, expectation_pauli_z, new_zero_state


def expectation_eval(num_qubits, target):
    """<Z_target> of a two-layer RY+CNOT ansatz; each angle enters one RY."""

    def f(theta):
        half = theta.size // 2
        ops = build_ansatz(tuple(theta[:half]), range(num_qubits))
        ops += build_ansatz(tuple(theta[half:]), range(num_qubits))
        state = apply_circuit(new_zero_state(num_qubits), ops)
        return expectation_pauli_z(state, target)

    return f


def central_fd(eval_fn, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for k in range(x.size):
        plus = x.copy()
        plus[k] += h
        minus = x.copy()
        minus[k] -= h
        g[k] = (eval_fn(plus) - eval_fn(minus)) / (2.0 * h)
    return g


class TestParameterShift:
    def test_cosine_closed_form(self):
        # f(theta) = sum cos(theta_k) has gradient -sin(theta_k), and the
        # shift rule is exact for it
        def f(theta):
            return float(np.cos(theta).sum())

        for theta0 in np.linspace(-2.0 * np.pi, 2.0 * np.pi, 25):
            theta = np.array([theta0, 0.3, -1.1])
            report = parameter_shift_grad(f, theta)
            assert report.method == "parameter_shift"
            assert np.allclose(report.grads, -np.sin(theta), atol=1e-12)

    def test_evaluation_count(self):
        calls = []

        def f(theta):
            calls.append(1)
            return float(theta.sum())

        report = parameter_shift_grad(f, np.zeros(7))
        assert report.evaluations == 14
        assert len(calls) == 14

    def test_matches_finite_differences_on_expectation_circuits(self):
        # the contract covers Pauli expectations where each angle enters one
        # RY; on those the shift rule is exact, so it must sit inside the
        # finite-difference truncation error
        for i in range(60):
            rng = rng_for(41, "ps_fd", i)
            theta0 = rng.uniform(0.0, 2.0 * np.pi, size=6)
            target = int(rng.integers(3))
            f = expectation_eval(num_qubits=3, target=target)
            ps = parameter_shift_grad(f, theta0).grads
            fd = central_fd(f, theta0)
            rel = np.linalg.norm(ps - fd) / max(np.linalg.norm(fd), 1e-12)
            assert rel <= 1e-5

    def test_score_violates_single_ry_precondition(self):
        # a score is linear (not quadratic) in the state its theta_q prepares,
        # so its angle dependence has half frequencies and the +/-pi/2 rule
        # overestimates the true gradient by exactly sqrt(2); this documents
        # why scores are outside parameter_shift_grad's contract
        spec = random_spec(rng_for(41, "ps_fd_spec"), Mode.SEQUENCE_ONLY, register_size=2)

        def score_of_theta_q(theta_q):
            return attention_score(replace(spec, theta_q=tuple(theta_q)))

        theta = np.array(spec.theta_q)
        ps = parameter_shift_grad(score_of_theta_q, theta).grads
        fd = central_fd(score_of_theta_q, theta)
        assert np.allclose(ps, np.sqrt(2.0) * fd, atol=1e-7)

    def test_rejects_matrix_input(self):
        with pytest.raises(ValidationError):
            parameter_shift_grad(lambda t: 0.0, np.zeros((2, 2)))


class TestSpsa:
    def test_exactly_two_evaluations(self):
        calls = []

        def f(x):
            calls.append(1)
            return float((x**2).sum())

        report = spsa_grad(f, np.zeros(50), rng_for(3, "spsa"))
        assert report.evaluations == 2
        assert len(calls) == 2
        assert report.method == "spsa"

    def test_exact_on_scalar_linear(self):
        # in one dimension every Rademacher draw recovers the slope exactly
        def f(x):
            return float(3.0 * x[0] + 1.0)

        for i in range(40):
            report = spsa_grad(f, np.array([0.7]), rng_for(9, "spsa_lin", i))
            assert report.grads.shape == (1,)
            assert abs(report.grads[0] - 3.0) < 1e-10

    def test_mean_unbiased_on_quadratic(self):
        a = np.array([1.5, -2.0])

        def f(x):
            return float(0.5 * x @ x + a @ x)

        x0 = np.array([0.4, -1.3])
        exact = x0 + a
        draws = np.stack(
            [spsa_grad(f, x0, rng_for(17, "spsa_mean", i)).grads for i in range(10_000)]
        )
        mean = draws.mean(axis=0)
        assert np.linalg.norm(mean - exact) / np.linalg.norm(exact) < 0.02

    def test_seeded_determinism(self):
        def f(x):
            return float(np.sin(x).sum())

        x0 = np.linspace(0.0, 1.0, 6)
        g1 = spsa_grad(f, x0, rng_for(23, "spsa_det")).grads
        g2 = spsa_grad(f, x0, rng_for(23, "spsa_det")).grads
        assert np.array_equal(g1, g2)

    def test_guards(self):
        with pytest.raises(ValidationError):
            spsa_grad(lambda x: 0.0, np.zeros((2, 2)), rng_for(1, "g"))
        with pytest.raises(ValidationError):
            spsa_grad(lambda x: 0.0, np.zeros(2), rng_for(1, "g"), epsilon=0.0)


class TestClip:
    def test_shrinks_long_vectors(self):
        g = np.array([3.0, 4.0])
        clipped = clip_by_norm(g, 1.0)
        assert abs(np.linalg.norm(clipped) - 1.0) < 1e-12
        assert np.allclose(clipped, g / 5.0)

    def test_leaves_short_vectors_alone(self):
        g = np.array([0.3, 0.4])
        assert clip_by_norm(g, 1.0) is g

    def test_idempotent(self):
        g = np.array([30.0, 40.0])
        once = clip_by_norm(g, 1.0)
        twice = clip_by_norm(once, 1.0)
        assert np.allclose(once, twice, atol=1e-15)


class TestAdamW:
    def test_hand_computed_first_step(self):
        # p=1, g=1: m_hat = v_hat = 1 after bias correction, so
        # p1 = 1 - lr*(1/(1+eps) + wd*1)
        state = AdamWState()
        params = {"w": np.array([1.0])}
        applied = adamw_step(state, params, {"w": np.array([1.0])})
        assert applied
        assert state.step == 1
        expected = 1.0 - 0.005 * (1.0 / (1.0 + 1e-8) + 0.1)
        assert abs(params["w"][0] - expected) < 1e-14

    def test_clip_applies_before_moments(self):
        state = AdamWState()
        params = {"w": np.zeros(2)}
        adamw_step(state, params, {"w": np.array([30.0, 40.0])})
        # moments must see the clipped gradient (norm 1), not the raw one
        assert np.allclose(state.m["w"], 0.1 * np.array([0.6, 0.8]), atol=1e-15)
        assert np.allclose(state.v["w"], 0.001 * np.array([0.36, 0.64]), atol=1e-15)

    def test_zero_gradient_is_pure_decay(self):
        state = AdamWState()
        params = {"w": np.array([2.0, -4.0])}
        before = params["w"].copy()
        adamw_step(state, params, {"w": np.zeros(2)})
        assert np.allclose(params["w"], before * (1.0 - 0.005 * 0.1), atol=1e-15)

    def test_nonfinite_gradient_skips_batch(self, caplog):
        state = AdamWState()
        params = {"w": np.array([1.0]), "b": np.array([2.0])}
        before = {k: v.copy() for k, v in params.items()}
        grads = {"w": np.array([0.5]), "b": np.array([np.nan])}
        with caplog.at_level(logging.WARNING):
            applied = adamw_step(state, params, grads)
        assert not applied
        assert state.step == 0
        assert state.skipped_batches == 1
        assert not state.m  # moments never touched
        for k in params:
            assert np.array_equal(params[k], before[k])
        assert any("skipped" in r.message for r in caplog.records)

    def test_unknown_tensor_rejected(self):
        with pytest.raises(ValidationError):
            adamw_step(AdamWState(), {"w": np.zeros(1)}, {"oops": np.zeros(1)})

    def test_two_steps_track_reference_formula(self):
        # independent reimplementation of the update rule
        rng = rng_for(31, "adamw_ref")
        p = rng.normal(size=5)
        state = AdamWState()
        params = {"w": p.copy()}
        ref_p = p.copy()
        ref_m = np.zeros(5)
        ref_v = np.zeros(5)
        for t in (1, 2):
            g = rng.normal(size=5)
            adamw_step(state, params, {"w": g.copy()})
            gc = g * min(1.0, 1.0 / np.linalg.norm(g))
            ref_m = 0.9 * ref_m + 0.1 * gc
            ref_v = 0.999 * ref_v + 0.001 * gc * gc
            m_hat = ref_m / (1.0 - 0.9**t)
            v_hat = ref_v / (1.0 - 0.999**t)
            ref_p = ref_p - 0.005 * (m_hat / (np.sqrt(v_hat) + 1e-8) + 0.1 * ref_p)
        assert np.allclose(params["w"], ref_p, atol=1e-12)
