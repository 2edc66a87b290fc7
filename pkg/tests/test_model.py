"""Decoder model tests: init contracts, wiring, gradients, sampling, checkpoints."""

import numpy as np
import pytest

from qmolgen.errors import ValidationError
from qmolgen.model import (
    CHECKPOINT_MAGIC,
    ModelConfig,
    ModelVariant,
    classical_param_names,
    count_parameters,
    cross_entropy_loss,
    fit_property_scaling,
    forward,
    generate,
    init_params,
    load_checkpoint,
    loss_and_reverse_grads,
    make_batch,
    pack_params,
    reverse_mode_grad,
    save_checkpoint,
    shifted_targets,
    spsa_param_names,
    standardize_properties,
    token_accuracy,
    unpack_params,
)
from qmolgen.qcircuits import AttentionCircuitSpec, Mode, attention_score

PAD, SOS, EOS = 2, 3, 4  # tiny 5/6-token vocabularies used throughout


def tiny_config(variant, conditioned=False, seed=3, **kw):
    defaults = dict(
        variant=variant,
        conditioned=conditioned,
        working_qubits=3 if conditioned else 2,
        vocab_size=6,
        max_seq_len=5,
        d_value=4,
        seed=seed,
    )
    defaults.update(kw)
    return ModelConfig(**defaults)


class TestConfig:
    def test_register_layout(self):
        seq = ModelConfig(variant=ModelVariant.QUANTUM, conditioned=False, working_qubits=6)
        cond = ModelConfig(variant=ModelVariant.QUANTUM, conditioned=True, working_qubits=6)
        assert (seq.num_registers, seq.angle_dim, seq.d_model) == (2, 3, 64)
        assert (cond.num_registers, cond.angle_dim, cond.d_model) == (3, 2, 64)

    def test_attention_scale_constant_per_variant(self):
        # quantum and full classical scale by the 64-dim space; the matched
        # classical variant scales by its projection width
        assert ModelConfig(variant=ModelVariant.QUANTUM).attention_d_k == 64.0
        assert ModelConfig(variant=ModelVariant.CLASSICAL).attention_d_k == 64.0
        assert ModelConfig(variant=ModelVariant.CLASSICAL_EQ).attention_d_k == 2.0
        assert (
            ModelConfig(variant=ModelVariant.CLASSICAL_EQ, conditioned=True).attention_d_k == 3.0
        )

    def test_rejects_indivisible_register_split(self):
        with pytest.raises(ValidationError):
            ModelConfig(conditioned=False, working_qubits=7)
        with pytest.raises(ValidationError):
            ModelConfig(conditioned=True, working_qubits=8)

    def test_rejects_degenerate_sizes(self):
        with pytest.raises(ValidationError):
            ModelConfig(vocab_size=1)
        with pytest.raises(ValidationError):
            ModelConfig(max_seq_len=1)
        with pytest.raises(ValidationError):
            ModelConfig(d_value=0)
        with pytest.raises(ValidationError):
            ModelConfig(working_qubits=22)


class TestInit:
    def test_shapes_and_ranges(self):
        cfg = ModelConfig(variant=ModelVariant.QUANTUM, conditioned=True, seed=1)
        p = init_params(cfg)
        assert p["cls_token_emb"].shape == (33, 64)
        assert p["attn_token_angles"].shape == (33, 2)
        assert p["attn_prop_w"].shape == (9, 2)
        assert p["theta_q"].shape == (6,)
        assert np.all(p["attn_token_angles"] >= 0) and np.all(p["attn_token_angles"] <= np.pi)
        assert np.all(np.abs(p["cls_token_emb"]) <= 1 / 8)
        assert np.all(p["cls_pos_emb"] == 0) and np.all(p["attn_pos_angles"] == 0)
        assert np.all(p["b_value"] == 0) and np.all(p["b_head"] == 0)

    @pytest.mark.parametrize("conditioned", [False, True])
    def test_shared_init_across_variants(self, conditioned):
        # same-named tensors must be identical across variants at a shared
        # seed (conditioning changes angle-table widths, so compare per mode)
        builds = [
            init_params(ModelConfig(variant=v, conditioned=conditioned, seed=11))
            for v in ModelVariant
        ]
        base = builds[0]
        for other in builds[1:]:
            shared = base.tensors.keys() & other.tensors.keys()
            assert "cls_token_emb" in shared and "w_value" in shared
            for name in shared:
                assert np.array_equal(base[name], other[name]), name

    def test_seed_changes_values(self):
        a = init_params(ModelConfig(seed=1))
        b = init_params(ModelConfig(seed=2))
        assert not np.array_equal(a["cls_token_emb"], b["cls_token_emb"])

    def test_buffer_defaults(self):
        p = init_params(ModelConfig(conditioned=True))
        assert np.all(p.buffers["prop_mean"] == 0) and np.all(p.buffers["prop_std"] == 1)
        assert p.buffers["scaling_fitted"][0] == 0.0


class TestParameterCounts:
    EXPECTED = {
        ("quantum", False): 10136,
        ("quantum", True): 10739,
        ("classical_eq", False): 10136,
        ("classical_eq", True): 10739,
        ("classical", False): 18145,
        ("classical", True): 18785,
    }

    @pytest.mark.parametrize("variant", list(ModelVariant))
    @pytest.mark.parametrize("conditioned", [False, True])
    def test_totals(self, variant, conditioned):
        cfg = ModelConfig(variant=variant, conditioned=conditioned)
        total, breakdown = count_parameters(init_params(cfg))
        assert total == self.EXPECTED[(variant.value, conditioned)]
        assert total == sum(breakdown.values())

    def test_matched_variant_spends_identical_budget(self):
        for cond in (False, True):
            q = count_parameters(init_params(ModelConfig(ModelVariant.QUANTUM, cond)))[0]
            e = count_parameters(init_params(ModelConfig(ModelVariant.CLASSICAL_EQ, cond)))[0]
            assert q == e

    def test_pairwise_differences(self):
        # full classical replaces 183 score parameters with two bias-free
        # 64x64 projections; conditioning adds the two property linears but
        # shrinks every per-register table from 3 to 2 columns
        t = self.EXPECTED
        assert t[("classical", False)] - t[("quantum", False)] == 2 * 64 * 64 - 183
        assert t[("quantum", True)] - t[("quantum", False)] == 603

    def test_breakdown_spot_values(self):
        _, br = count_parameters(init_params(ModelConfig(ModelVariant.QUANTUM, False)))
        assert br["w_value"] == 4096 and br["b_value"] == 64
        assert br["w_head"] == 2112 and br["b_head"] == 33
        assert br["attn_token_angles"] == 99 and br["attn_pos_angles"] == 72
        assert br["theta_q"] == 6 and br["theta_k"] == 6


class TestMakeBatch:
    def test_padding_and_mask(self):
        cfg = tiny_config(ModelVariant.QUANTUM)
        b = make_batch([[SOS, 0, 1, EOS], [SOS, EOS]], cfg, PAD, SOS, EOS)
        assert b.size == 2
        assert b.token_ids.tolist() == [[SOS, 0, 1, EOS], [SOS, EOS, PAD, PAD]]
        assert b.pad_mask.tolist() == [[True] * 4, [True, True, False, False]]
        assert b.lengths.tolist() == [4, 2]

    @pytest.mark.parametrize(
        "rows",
        [
            [[0, 1, EOS]],  # missing SOS
            [[SOS, 0, 1]],  # missing EOS
            [[SOS, EOS, 0, EOS]],  # EOS mid-sequence
            [[SOS, PAD, EOS]],  # PAD inside
            [[SOS, 0, 1, 2, 0, 1, EOS]],  # too long for max_seq_len=5
            [[SOS, 9, EOS]],  # id out of range
            [[SOS]],  # too short
            [],
        ],
    )
    def test_rejects_bad_framing(self, rows):
        cfg = tiny_config(ModelVariant.QUANTUM)
        with pytest.raises(ValidationError):
            make_batch(rows, cfg, PAD, SOS, EOS)

    def test_conditioned_needs_properties(self):
        cfg = tiny_config(ModelVariant.QUANTUM, conditioned=True)
        with pytest.raises(ValidationError):
            make_batch([[SOS, 0, EOS]], cfg, PAD, SOS, EOS)
        with pytest.raises(ValidationError):
            make_batch([[SOS, 0, EOS]], cfg, PAD, SOS, EOS, properties=np.zeros((1, 5)))


class TestPropertyScaling:
    def test_freezes_training_statistics(self):
        cfg = tiny_config(ModelVariant.QUANTUM, conditioned=True)
        p = init_params(cfg)
        props = np.zeros((4, 9))
        props[:, 0] = [1.0, 2.0, 3.0, 4.0]
        props[:, 1] = 7.0  # zero variance
        fit_property_scaling(p, props)
        assert p.buffers["prop_mean"][0] == 2.5
        assert p.buffers["prop_std"][0] == pytest.approx(np.sqrt(1.25), abs=1e-15)
        assert p.buffers["prop_std"][1] == 1.0  # degenerate column maps to unit scale
        assert p.buffers["scaling_fitted"][0] == 1.0
        z = standardize_properties(p, props)
        proj = z @ p["attn_prop_w"] + p["attn_prop_b"]
        assert np.allclose(p.buffers["proj_lo"], proj.min(axis=0), atol=0)
        assert np.allclose(p.buffers["proj_hi"], proj.max(axis=0), atol=0)

    def test_rejects_wrong_width(self):
        p = init_params(tiny_config(ModelVariant.QUANTUM, conditioned=True))
        with pytest.raises(ValidationError):
            fit_property_scaling(p, np.zeros((4, 5)))


class TestForward:
    def test_pad_rows_are_zero_logits(self):
        cfg = tiny_config(ModelVariant.QUANTUM)
        p = init_params(cfg)
        batch = make_batch([[SOS, 0, 1, EOS], [SOS, EOS]], cfg, PAD, SOS, EOS)
        logits = forward(p, batch)
        assert logits.shape == (2, 4, 6)
        assert np.all(logits[1, 2:] == 0)
        assert np.any(logits[1, :2] != 0)

    @pytest.mark.parametrize("variant", list(ModelVariant))
    def test_batch_matches_single_sequence(self, variant):
        cfg = tiny_config(variant)
        p = init_params(cfg)
        rows = [[SOS, 0, 1, EOS], [SOS, 1, EOS], [SOS, EOS]]
        batched = forward(p, make_batch(rows, cfg, PAD, SOS, EOS))
        for i, row in enumerate(rows):
            alone = forward(p, make_batch([row], cfg, PAD, SOS, EOS))
            assert np.array_equal(batched[i, : len(row)], alone[0])

    def test_quantum_wiring_matches_straight_line_reference(self):
        # independent composition: per-pair circuit expectations, sqrt(d)
        # amplification, prefix softmax, value path, head; no model internals
        cfg = ModelConfig(
            variant=ModelVariant.QUANTUM,
            conditioned=False,
            working_qubits=2,
            vocab_size=5,
            max_seq_len=4,
            d_value=3,
            seed=21,
        )
        p = init_params(cfg)
        ids = np.array([3, 0, 4])
        raw = np.zeros((3, 3))
        for i in range(3):
            for j in range(i + 1):
                if i == 0 and j == 0:
                    continue
                raw[i, j] = attention_score(
                    AttentionCircuitSpec(
                        mode=Mode.SEQUENCE_ONLY,
                        theta_token_i=tuple(p["attn_token_angles"][ids[i]]),
                        theta_pos_i=tuple(p["attn_pos_angles"][i]),
                        theta_token_j=tuple(p["attn_token_angles"][ids[j]]),
                        theta_pos_j=tuple(p["attn_pos_angles"][j]),
                        theta_q=tuple(p["theta_q"]),
                        theta_k=tuple(p["theta_k"]),
                    )
                )
        weights = np.zeros((3, 3))
        for i in range(3):
            e = np.exp(raw[i, : i + 1] * 2.0)  # sqrt(d_model) = 2
            weights[i, : i + 1] = e / e.sum()
        z = p["cls_token_emb"][ids] + p["cls_pos_emb"][:3]
        expected = (weights @ (z @ p["w_value"] + p["b_value"])) @ p["w_head"] + p["b_head"]

        got = forward(p, make_batch([[3, 0, 4]], cfg, pad_id=2, sos_id=3, eos_id=4))[0]
        assert np.allclose(got, expected, rtol=0, atol=1e-12)
        golden_row0 = [
            -0.01036675037088284,
            -0.03988096333095235,
            -0.01240390966856194,
            -0.01198764937664918,
            -0.01357207231697549,
        ]
        assert np.allclose(got[0], golden_row0, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("variant", list(ModelVariant))
    def test_causality(self, variant):
        cfg = tiny_config(variant, max_seq_len=6)
        p = init_params(cfg)
        a = forward(p, make_batch([[SOS, 0, 1, 0, EOS]], cfg, PAD, SOS, EOS))
        b = forward(p, make_batch([[SOS, 0, 1, 1, EOS]], cfg, PAD, SOS, EOS))
        assert np.array_equal(a[0, :3], b[0, :3])
        assert not np.array_equal(a[0, 3], b[0, 3])

    def test_unconditioned_model_ignores_properties(self):
        cfg = tiny_config(ModelVariant.QUANTUM)
        p = init_params(cfg)
        rows = [[SOS, 0, 1, EOS]]
        plain = forward(p, make_batch(rows, cfg, PAD, SOS, EOS))
        with_props = forward(
            p, make_batch(rows, cfg, PAD, SOS, EOS, properties=np.full((1, 9), 5.0))
        )
        assert np.array_equal(plain, with_props)

    @pytest.mark.parametrize("variant", list(ModelVariant))
    def test_conditioning_changes_logits(self, variant):
        cfg = tiny_config(variant, conditioned=True)
        p = init_params(cfg)
        rng = np.random.default_rng(0)
        fit_property_scaling(p, rng.normal(0, 2, (6, 9)))
        rows = [[SOS, 0, 1, EOS]]
        a = forward(p, make_batch(rows, cfg, PAD, SOS, EOS, properties=rng.normal(0, 2, (1, 9))))
        b = forward(p, make_batch(rows, cfg, PAD, SOS, EOS, properties=rng.normal(0, 2, (1, 9))))
        assert not np.array_equal(a, b)

    def test_conditioned_forward_requires_batch_properties(self):
        cfg = tiny_config(ModelVariant.QUANTUM, conditioned=True)
        p = init_params(cfg)
        seq_cfg = tiny_config(ModelVariant.QUANTUM, conditioned=False)
        batch = make_batch([[SOS, 0, EOS]], seq_cfg, PAD, SOS, EOS)
        with pytest.raises(ValidationError):
            forward(p, batch)


class TestLossAndAccuracy:
    def test_uniform_logits_score_log_vocab(self):
        logits = np.zeros((2, 3, 6))
        targets = np.array([[0, 1, PAD], [5, PAD, PAD]])
        assert cross_entropy_loss(logits, targets, PAD) == pytest.approx(np.log(6), abs=1e-12)

    def test_hand_computed_two_position_loss(self):
        logits = np.zeros((1, 2, 6))
        logits[0, 0, 1] = 2.0  # counted, correct class boosted
        logits[0, 1, 0] = 1.0  # counted, wrong class boosted
        targets = np.array([[1, 3]])
        l0 = -2.0 + np.log(np.exp(2.0) + 5.0)
        l1 = np.log(np.exp(1.0) + 5.0)
        expected = (l0 + l1) / 2
        assert cross_entropy_loss(logits, targets, PAD) == pytest.approx(expected, abs=1e-12)
        assert token_accuracy(logits, targets, PAD) == 0.5

    def test_all_pad_rejected(self):
        with pytest.raises(ValidationError):
            cross_entropy_loss(np.zeros((1, 2, 6)), np.full((1, 2), PAD), PAD)
        with pytest.raises(ValidationError):
            token_accuracy(np.zeros((1, 2, 6)), np.full((1, 2), PAD), PAD)

    def test_shifted_targets(self):
        cfg = tiny_config(ModelVariant.QUANTUM)
        batch = make_batch([[SOS, 0, 1, EOS], [SOS, EOS]], cfg, PAD, SOS, EOS)
        t = shifted_targets(batch, PAD)
        assert t.tolist() == [[0, 1, EOS, PAD], [EOS, PAD, PAD, PAD]]


class TestReverseModeGradients:
    @pytest.mark.parametrize("variant", list(ModelVariant))
    @pytest.mark.parametrize("conditioned", [False, True])
    def test_matches_finite_differences(self, variant, conditioned):
        cfg = tiny_config(variant, conditioned=conditioned, seed=9)
        params = init_params(cfg)
        rng = np.random.default_rng(9)
        for name in params.tensors:  # lift zero-initialized tensors off zero
            params.tensors[name] = params.tensors[name] + rng.normal(
                0, 0.3, params.tensors[name].shape
            )
        props = rng.normal(1.0, 3.0, (5, 9))
        if conditioned:
            fit_property_scaling(params, props)
        rows = [[SOS, 0, 1, 5, EOS], [SOS, 1, 0, EOS]]
        batch = make_batch(
            rows, cfg, PAD, SOS, EOS, properties=props[:2] if conditioned else None
        )
        _, grads = loss_and_reverse_grads(params, batch, PAD)

        def loss_now():
            return cross_entropy_loss(forward(params, batch), shifted_targets(batch, PAD), PAD)

        h = 1e-6
        for name in classical_param_names(cfg):
            t = params.tensors[name]
            fd = np.zeros_like(t)
            it = np.nditer(t, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = t[idx]
                t[idx] = orig + h
                up = loss_now()
                t[idx] = orig - h
                down = loss_now()
                t[idx] = orig
                fd[idx] = (up - down) / (2 * h)
            rel = np.linalg.norm(grads[name] - fd) / max(np.linalg.norm(fd), 1e-12)
            assert rel <= 1e-5, f"{name}: rel={rel:.3e}"

    def test_grad_report_shape(self):
        cfg = tiny_config(ModelVariant.CLASSICAL)
        params = init_params(cfg)
        batch = make_batch([[SOS, 0, EOS]], cfg, PAD, SOS, EOS)
        report = reverse_mode_grad(params, batch, PAD)
        assert report.method == "reverse_mode"
        assert report.evaluations == 1
        assert set(report.grads) == set(classical_param_names(cfg))

    def test_parameter_partitions(self):
        q = ModelConfig(ModelVariant.QUANTUM, conditioned=True)
        assert spsa_param_names(q) == (
            "attn_token_angles",
            "attn_pos_angles",
            "theta_q",
            "theta_k",
            "attn_prop_w",
            "attn_prop_b",
        )
        assert "attn_token_angles" not in classical_param_names(q)
        eq = ModelConfig(ModelVariant.CLASSICAL_EQ, conditioned=True)
        assert spsa_param_names(eq) == ()
        assert "attn_token_angles" in classical_param_names(eq)
        c = ModelConfig(ModelVariant.CLASSICAL)
        assert spsa_param_names(c) == ()
        assert "w_q" in classical_param_names(c)
        # partitions never overlap and cover disjoint tensors
        both = set(spsa_param_names(q)) & set(classical_param_names(q))
        assert both == set()


class TestGenerate:
    def test_greedy_is_deterministic(self):
        p = init_params(tiny_config(ModelVariant.QUANTUM))
        a = generate(p, SOS, EOS, temperature=0.0)
        b = generate(p, SOS, EOS, temperature=0.0)
        assert a == b and a[0] == SOS

    def test_sampling_repeats_under_same_rng(self):
        p = init_params(tiny_config(ModelVariant.CLASSICAL))
        a = generate(p, SOS, EOS, temperature=1.0, rng=np.random.default_rng(5))
        b = generate(p, SOS, EOS, temperature=1.0, rng=np.random.default_rng(5))
        assert a == b

    def test_eos_stops_generation(self):
        p = init_params(tiny_config(ModelVariant.CLASSICAL))
        p.tensors["b_head"][EOS] = 50.0
        out = generate(p, SOS, EOS, temperature=0.0)
        assert out == [SOS, EOS]

    def test_max_len_caps_runaway(self):
        p = init_params(tiny_config(ModelVariant.CLASSICAL))
        p.tensors["b_head"][0] = 50.0  # never emits EOS
        out = generate(p, SOS, EOS, temperature=0.0)
        assert len(out) == 5 and EOS not in out

    def test_argument_validation(self):
        p = init_params(tiny_config(ModelVariant.CLASSICAL))
        with pytest.raises(ValidationError):
            generate(p, SOS, EOS, temperature=-0.1)
        with pytest.raises(ValidationError):
            generate(p, SOS, EOS, temperature=1.0)  # rng missing
        pc = init_params(tiny_config(ModelVariant.QUANTUM, conditioned=True))
        with pytest.raises(ValidationError):
            generate(pc, SOS, EOS, temperature=0.0)  # conditioning missing
        with pytest.raises(ValidationError):
            generate(pc, SOS, EOS, conditioning=np.zeros(4), temperature=0.0)

    def test_conditioning_steers_sampling(self):
        cfg = tiny_config(ModelVariant.QUANTUM, conditioned=True)
        p = init_params(cfg)
        rng = np.random.default_rng(2)
        fit_property_scaling(p, rng.normal(0, 2, (8, 9)))
        a = generate(p, SOS, EOS, conditioning=rng.normal(0, 2, 9), temperature=0.0)
        assert a[0] == SOS and len(a) <= cfg.max_seq_len


class TestCheckpoint:
    def build(self):
        cfg = tiny_config(ModelVariant.QUANTUM, conditioned=True, seed=13)
        p = init_params(cfg)
        fit_property_scaling(p, np.random.default_rng(1).normal(0, 2, (7, 9)))
        return p

    def test_round_trip_is_bit_exact(self, tmp_path):
        p = self.build()
        path = tmp_path / "model.ckpt"
        save_checkpoint(p, path)
        q = load_checkpoint(path)
        assert q.config == p.config
        assert set(q.tensors) == set(p.tensors)
        for name in p.tensors:
            assert np.array_equal(p.tensors[name], q.tensors[name]), name
        for name in p.buffers:
            assert np.array_equal(p.buffers[name], q.buffers[name]), name

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValidationError):
            load_checkpoint(path)

    def test_rejects_truncation_and_trailing_bytes(self, tmp_path):
        p = self.build()
        path = tmp_path / "model.ckpt"
        save_checkpoint(p, path)
        blob = path.read_bytes()
        short = tmp_path / "short.ckpt"
        short.write_bytes(blob[:-9])
        with pytest.raises(ValidationError):
            load_checkpoint(short)
        longer = tmp_path / "long.ckpt"
        longer.write_bytes(blob + b"\x00")
        with pytest.raises(ValidationError):
            load_checkpoint(longer)

    def test_magic_constant(self):
        assert CHECKPOINT_MAGIC == b"QMGC"


class TestPackUnpack:
    def test_round_trip(self):
        cfg = tiny_config(ModelVariant.QUANTUM, conditioned=True)
        p = init_params(cfg)
        names = spsa_param_names(cfg)
        flat = pack_params(p, names)
        shifted = flat + 0.25
        unpack_params(p, names, shifted)
        assert np.array_equal(pack_params(p, names), shifted)

    def test_rejects_wrong_span(self):
        cfg = tiny_config(ModelVariant.QUANTUM)
        p = init_params(cfg)
        names = spsa_param_names(cfg)
        with pytest.raises(ValidationError):
            unpack_params(p, names, np.zeros(pack_params(p, names).size + 1))
