"""Command-line entry points: train, generate, eval, attnmap, selftest, data tools.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 invariant failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .attention import quantum_attention_matrix, write_attention_csv
from .data import (
    PropertyStats,
    ingest,
    knn_impute,
    property_stats,
    write_split_manifest,
)
from .errors import DataError, InvariantError, TokenizationError, ValidationError
from .grad import parameter_shift_grad, spsa_grad
from .model import (
    ModelConfig,
    ModelVariant,
    attention_weights,
    count_parameters,
    generate,
    init_params,
    load_checkpoint,
)
from .qcircuits import (
    Mode,
    amplitude_amplification_demo,
    attention_score,
    build_ansatz,
    max_unique_circuits,
    oracle_inner_product,
    random_spec,
)
from .rng import rng_for
from .smiles import (
    ALL_PROPERTIES,
    NATIVE_DESCRIPTORS,
    Vocabulary,
    descriptors,
    generation_metrics,
    tokenize,
)
from .statevec import apply_circuit, expectation_pauli_z, new_zero_state
from .synthetic import (
    calibrated_corpus_csv,
    corpus_properties,
    synthetic_corpus,
    write_corpus_csv,
)
from .training import (
    decode_sample,
    encode_corpus,
    evaluate_split,
    train,
    write_metrics_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3

VARIANTS = {
    "quantum": ModelVariant.QUANTUM,
    "classical-eq": ModelVariant.CLASSICAL_EQ,
    "classical": ModelVariant.CLASSICAL,
}
PROPERTY_SOURCES = ("mean", "median", "mode", "explicit", "sweep-2sigma", "sweep-1.5iqr")

# QM9 training-split property means; synth-data --calibrate shifts its
# columns so a generated corpus reproduces them exactly
QM9_TRAIN_MEANS = (122.77, 2.23, 0.83, 0.92, 1.74, 2.47, 37.16, 0.30, 1.71)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmolgen",
        description="Molecular SMILES decoder with circuit-simulated attention scores",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and log per-epoch metrics")
    p_train.add_argument("--data", required=True, help="property CSV")
    p_train.add_argument("--run-dir", required=True, help="output directory")
    p_train.add_argument("--variant", choices=sorted(VARIANTS), default="quantum")
    p_train.add_argument("--conditioned", action="store_true")
    p_train.add_argument("--working-qubits", type=int, default=6)
    p_train.add_argument("--max-seq-len", type=int, default=24)
    p_train.add_argument("--epochs", type=int, default=20)
    p_train.add_argument("--batch-size", type=int, default=256)
    p_train.add_argument("--lr", type=float, default=0.005)
    p_train.add_argument("--weight-decay", type=float, default=0.1)
    p_train.add_argument("--clip-norm", type=float, default=1.0)
    p_train.add_argument("--spsa-epsilon", type=float, default=0.01)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--threads", type=int, default=None)

    p_gen = sub.add_parser("generate", help="sample SMILES from a checkpoint")
    p_gen.add_argument("--checkpoint", required=True)
    p_gen.add_argument("--num-samples", type=int, default=100)
    p_gen.add_argument("--temperature", type=float, default=1.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", default=None, help="write samples here, one per line")
    p_gen.add_argument("--data", default=None, help="corpus CSV for novelty and k-NN sweeps")
    p_gen.add_argument("--property-source", choices=PROPERTY_SOURCES, default=None)
    p_gen.add_argument("--explicit-properties", default=None,
                       help="nine comma-separated values for --property-source explicit")
    p_gen.add_argument("--stats", default=None,
                       help="stats JSON (default: stats.json next to the checkpoint)")
    p_gen.add_argument("--sweep-table", default=None, help="write per-target sweep CSV here")

    p_eval = sub.add_parser("eval", help="loss and next-token accuracy on a split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--split", choices=("train", "val"), default="val")
    p_eval.add_argument("--batch-size", type=int, default=256)

    p_map = sub.add_parser("attnmap", help="attention weight CSV for one SMILES")
    p_map.add_argument("--checkpoint", required=True)
    p_map.add_argument("--smiles", required=True)
    p_map.add_argument("--out", required=True)
    p_map.add_argument("--properties", default=None,
                       help="nine comma-separated values for conditioned checkpoints")
    p_map.add_argument("--stats", default=None)

    p_self = sub.add_parser("selftest", help="run the oracle and invariant suites")
    p_self.add_argument("--inject-score-perturbation", type=float, default=0.0,
                        help=argparse.SUPPRESS)

    p_synth = sub.add_parser("synth-data", help="write a synthetic property CSV")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--count", type=int, default=200)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--calibrate", action="store_true",
                         help="shift columns so train-split means match QM9")

    p_check = sub.add_parser("check-data", help="validate a corpus CSV and print stats")
    p_check.add_argument("--data", required=True)
    p_check.add_argument("--seed", type=int, default=0)
    return parser


def _parse_nine(text: str, flag: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != len(ALL_PROPERTIES):
        raise _UsageError(f"{flag} needs {len(ALL_PROPERTIES)} comma-separated values")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise _UsageError(f"{flag}: {exc}") from exc


def _stats_path(args) -> Path:
    if args.stats is not None:
        return Path(args.stats)
    return Path(args.checkpoint).parent / "stats.json"


def _load_stats(path: Path) -> PropertyStats:
    if not path.exists():
        raise DataError(f"{path}: statistics file not found (pass --stats)")
    return PropertyStats.load(path)


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    ds = ingest(args.data, args.seed)
    vocab = Vocabulary.qm9()
    cfg = ModelConfig(
        variant=VARIANTS[args.variant],
        conditioned=args.conditioned,
        working_qubits=args.working_qubits,
        vocab_size=vocab.size,
        max_seq_len=args.max_seq_len,
        seed=args.seed,
    )
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(run_dir / "vocab.txt")
    write_split_manifest(ds, run_dir / "split.csv")
    stats = property_stats(ds.train_properties)
    stats.save(run_dir / "stats.json")

    train_rows, kept_tr = encode_corpus(ds.train_smiles, vocab, cfg.max_seq_len)
    val_rows, kept_va = encode_corpus(ds.val_smiles, vocab, cfg.max_seq_len)
    if not train_rows or not val_rows:
        raise DataError("no usable rows after tokenization")
    train_props = ds.train_properties[kept_tr]
    val_props = ds.val_properties[kept_va]

    params = init_params(cfg)
    total, _ = count_parameters(params)
    print(f"training {args.variant} ({'conditioned' if cfg.conditioned else 'sequence-only'}), "
          f"{total} parameters, {len(train_rows)} train / {len(val_rows)} val rows")

    result = train(
        params,
        train_rows,
        val_rows,
        vocab,
        train_properties=train_props if cfg.conditioned else None,
        val_properties=val_props if cfg.conditioned else None,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        clip_norm=args.clip_norm,
        spsa_epsilon=args.spsa_epsilon,
        seed=args.seed,
        run_dir=run_dir,
        threads=args.threads,
        on_epoch=lambda e, tl, ta, vl, va: print(
            f"epoch {e:3d}  train loss {tl:.6f} acc {ta:.4f}  val loss {vl:.6f} acc {va:.4f}"
        ),
    )
    write_metrics_csv(result.metrics, run_dir / "metrics.csv")
    print(f"best epoch {result.best_epoch} (val loss {result.best_val_loss:.6f}); "
          f"metrics in {run_dir / 'metrics.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# generate


def _conditioning_plan(args, params) -> list[tuple[str, np.ndarray | None]]:
    """(label, 9-vector) pairs to sample under; [(label, None)] unconditioned."""
    if not params.config.conditioned:
        if args.property_source is not None:
            raise _UsageError("--property-source requires a conditioned checkpoint")
        return [("unconditioned", None)]
    if args.property_source is None:
        raise _UsageError("conditioned checkpoint needs --property-source")
    source = args.property_source
    if source == "explicit":
        if args.explicit_properties is None:
            raise _UsageError("--property-source explicit needs --explicit-properties")
        return [("explicit", _parse_nine(args.explicit_properties, "--explicit-properties"))]
    stats = _load_stats(_stats_path(args))
    if source in ("mean", "median", "mode"):
        return [(source, np.asarray(getattr(stats, source), dtype=np.float64))]
    # sweep sources pin one property above/below its center and fill the
    # rest from the k nearest training molecules
    if args.data is None:
        raise _UsageError(f"--property-source {source} needs --data for k-NN imputation")
    ds = ingest(args.data, params.config.seed)
    train_props = ds.train_properties
    mean = np.asarray(stats.mean)
    offsets = (
        2.0 * np.asarray(stats.sigma) if source == "sweep-2sigma"
        else 1.5 * np.asarray(stats.iqr)
    )
    plan: list[tuple[str, np.ndarray | None]] = []
    for p, name in enumerate(ALL_PROPERTIES):
        for sign, tag in ((+1.0, "up"), (-1.0, "down")):
            target = float(mean[p] + sign * offsets[p])
            vec = knn_impute(train_props, p, target, k=min(5, train_props.shape[0]))
            plan.append((f"{name}:{tag}", vec))
    return plan


def cmd_generate(args) -> int:
    if args.num_samples < 1:
        raise _UsageError("--num-samples must be >= 1")
    params = load_checkpoint(args.checkpoint)
    vocab_path = Path(args.checkpoint).parent / "vocab.txt"
    vocab = Vocabulary.load(vocab_path) if vocab_path.exists() else Vocabulary.qm9()
    if vocab.size != params.config.vocab_size:
        raise DataError(
            f"vocabulary size {vocab.size} does not match checkpoint "
            f"({params.config.vocab_size})"
        )
    plan = _conditioning_plan(args, params)
    training_smiles: list[str] = []
    if args.data is not None:
        training_smiles = ingest(args.data, params.config.seed).train_smiles

    samples: list[str | None] = []
    per_target: list[tuple[str, float, int, int, float]] = []
    i = 0
    for label, vec in plan:
        decoded: list[str | None] = []
        for _ in range(args.num_samples):
            rng = rng_for(args.seed, "generate", i)
            ids = generate(
                params,
                vocab.sos_id,
                vocab.eos_id,
                conditioning=vec,
                temperature=args.temperature,
                rng=rng if args.temperature > 0 else None,
            )
            decoded.append(decode_sample(ids, vocab))
            i += 1
        samples.extend(decoded)
        if label.count(":") == 1 and vec is not None:
            prop_name, _ = label.split(":")
            per_target.append(_sweep_row(label, vec, prop_name, decoded))

    metrics = generation_metrics(samples, training_smiles)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            for s in samples:
                fh.write((s if s is not None else "") + "\n")
    else:
        for s in samples:
            print(s if s is not None else "")
    print(
        f"# total={metrics.total} valid={metrics.valid} "
        f"validity={metrics.validity:.4f} uniqueness={metrics.uniqueness:.4f} "
        f"validity_x_uniqueness={metrics.validity_x_uniqueness:.4f} "
        f"novelty={metrics.novelty:.4f}",
        file=sys.stderr,
    )
    if per_target:
        lines = ["target,pinned_value,samples,valid,achieved_mean"]
        for label, pinned, total, valid, achieved in per_target:
            cell = "" if np.isnan(achieved) else repr(achieved)
            lines.append(f"{label},{pinned!r},{total},{valid},{cell}")
        text = "\n".join(lines) + "\n"
        if args.sweep_table is not None:
            Path(args.sweep_table).write_text(text, encoding="utf-8")
        else:
            sys.stderr.write(text)
    return EXIT_OK


def _sweep_row(label, vec, prop_name, decoded) -> tuple[str, float, int, int, float]:
    """Mean achieved value of the pinned property over the valid samples."""
    pinned = float(vec[ALL_PROPERTIES.index(prop_name)])
    achieved = []
    for s in decoded:
        if s is None:
            continue
        try:
            d = descriptors(s)
        except Exception:
            continue
        if prop_name in NATIVE_DESCRIPTORS:
            achieved.append(d[prop_name])
    mean = float(np.mean(achieved)) if achieved else float("nan")
    n_valid = sum(1 for s in decoded if s is not None and _is_valid(s))
    return (label, pinned, len(decoded), n_valid, mean)


def _is_valid(smiles: str) -> bool:
    from .smiles import check_validity

    return check_validity(smiles).valid


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    cfg = params.config
    ds = ingest(args.data, cfg.seed)
    vocab = Vocabulary.qm9()
    smiles = ds.train_smiles if args.split == "train" else ds.val_smiles
    all_props = ds.train_properties if args.split == "train" else ds.val_properties
    rows, kept = encode_corpus(smiles, vocab, cfg.max_seq_len)
    if not rows:
        raise DataError("no usable rows after tokenization")
    props = all_props[kept] if cfg.conditioned else None
    loss, acc = evaluate_split(params, rows, props, vocab, batch_size=args.batch_size)
    print(f"split={args.split} rows={len(rows)} loss={loss!r} accuracy={acc!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# attnmap


def cmd_attnmap(args) -> int:
    params = load_checkpoint(args.checkpoint)
    vocab = Vocabulary.qm9()
    token_ids = tokenize(args.smiles, vocab)
    ids = [vocab.sos_id] + token_ids
    if len(ids) > params.config.max_seq_len:
        raise DataError(f"{args.smiles!r}: {len(ids)} positions exceed the model limit")
    conditioning = None
    if params.config.conditioned:
        if args.properties is not None:
            conditioning = _parse_nine(args.properties, "--properties")
        else:
            conditioning = np.asarray(_load_stats(_stats_path(args)).mean, dtype=np.float64)
    weights = attention_weights(params, ids, conditioning=conditioning)
    labels = ["<SOS>"] + [vocab.tokens[t] for t in token_ids]
    write_attention_csv(weights, labels, args.out)
    print(f"wrote {weights.shape[0]}x{weights.shape[1]} attention map to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest


def _selftest_suites(inject: float):
    """Yield (name, case_count, check) triples; check raises InvariantError."""

    def score_oracle():
        cases = 0
        for mode, reg in ((Mode.SEQUENCE_ONLY, 3), (Mode.CONDITIONED, 2)):
            rng = rng_for(97, "selftest-oracle", reg)
            for _ in range(40):
                spec = random_spec(rng, mode, reg)
                got = attention_score(spec) + inject
                want = oracle_inner_product(spec)
                if abs(got - want) > 1e-10:
                    raise InvariantError(
                        f"score {got!r} != oracle {want!r} ({mode.name}, |diff|="
                        f"{abs(got - want):.3e})"
                    )
                cases += 1
        return cases

    def self_score():
        rng = rng_for(98, "selftest-self", 0)
        cases = 0
        for _ in range(15):
            base = random_spec(rng, Mode.SEQUENCE_ONLY, 3)
            spec = type(base)(
                mode=base.mode,
                theta_token_i=base.theta_token_i,
                theta_pos_i=base.theta_pos_i,
                theta_token_j=base.theta_token_i,
                theta_pos_j=base.theta_pos_i,
                theta_q=base.theta_q,
                theta_k=base.theta_q,
            )
            got = attention_score(spec) + inject
            if abs(got - 1.0) > 1e-12:
                raise InvariantError(f"identical-parameter score {got!r} != 1")
            cases += 1
        return cases

    def parameter_shift():
        cases = 0
        for theta in np.linspace(0.0, 2.0 * np.pi, 20):

            def expect_z(t):
                state = apply_circuit(new_zero_state(1), build_ansatz(t, range(1)))
                return expectation_pauli_z(state, 0)

            g = parameter_shift_grad(expect_z, np.array([theta])).grads[0]
            if abs(g - (-np.sin(theta))) > 1e-12:
                raise InvariantError(f"d<Z>/dtheta at {theta!r}: {g!r} != {-np.sin(theta)!r}")
            cases += 1
        rng = rng_for(99, "selftest-ps", 0)
        for _ in range(10):
            angles = rng.uniform(0, 2 * np.pi, 6)

            def expect(t):
                ops = build_ansatz(t[:3], range(3)) + build_ansatz(t[3:], range(3))
                return expectation_pauli_z(apply_circuit(new_zero_state(3), ops), 0)

            g = parameter_shift_grad(expect, angles).grads
            h = 1e-5
            fd = np.zeros_like(angles)
            for k in range(angles.size):
                up, down = angles.copy(), angles.copy()
                up[k] += h
                down[k] -= h
                fd[k] = (expect(up) - expect(down)) / (2 * h)
            rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
            if rel > 1e-5:
                raise InvariantError(f"parameter-shift vs finite difference rel={rel:.3e}")
            cases += 1
        return cases

    def spsa():
        cases = 0
        for k in range(10):
            rng = rng_for(100, "selftest-spsa", k)
            report = spsa_grad(lambda x: 3.0 * x[0], np.array([0.7]), rng)
            if report.evaluations != 2:
                raise InvariantError(f"SPSA used {report.evaluations} evaluations")
            if abs(report.grads[0] - 3.0) > 1e-10:
                raise InvariantError(f"SPSA 1-D linear gradient {report.grads[0]!r} != 3")
            cases += 1
        return cases

    def amplification():
        rng = rng_for(101, "selftest-amp", 0)
        cases = 0
        for _ in range(10):
            spec = random_spec(rng, Mode.SEQUENCE_ONLY, 2)
            probs = amplitude_amplification_demo(spec, 3)
            theta = np.arcsin(np.sqrt(probs[0]))
            for m, got in enumerate(probs):
                want = np.sin((2 * m + 1) * theta) ** 2
                if abs(got - want) > 1e-9:
                    raise InvariantError(f"amplified p0 at m={m}: {got!r} != {want!r}")
                cases += 1
        return cases

    def attention_invariants():
        rng = rng_for(102, "selftest-attn", 0)
        cases = 0
        for _ in range(15):
            n = 5
            tok = rng.uniform(0, np.pi, (n, 3))
            pos = rng.uniform(0, np.pi, (n, 3))
            attn = quantum_attention_matrix(
                tok, pos, rng.uniform(0, np.pi, 6), rng.uniform(0, np.pi, 6), d_k=64
            )
            sums = attn.weights.sum(axis=1)
            if np.abs(sums - 1.0).max() > 1e-9:
                raise InvariantError(f"softmax row sums off by {np.abs(sums - 1).max():.3e}")
            if np.any(np.triu(attn.weights, 1) != 0.0):
                raise InvariantError("causal mask leak: upper triangle nonzero")
            if attn.circuits_executed != max_unique_circuits(n):
                raise InvariantError(
                    f"budget {attn.circuits_executed} != {max_unique_circuits(n)}"
                )
            cases += 1
        return cases

    yield ("score-oracle-equivalence", score_oracle)
    yield ("self-score-identity", self_score)
    yield ("parameter-shift", parameter_shift)
    yield ("spsa-contract", spsa)
    yield ("amplitude-amplification", amplification)
    yield ("attention-invariants", attention_invariants)


def cmd_selftest(args) -> int:
    failed = False
    for name, check in _selftest_suites(args.inject_score_perturbation):
        try:
            cases = check()
        except InvariantError as exc:
            print(f"FAIL {name}: {exc}")
            failed = True
            continue
        print(f"PASS {name} ({cases} cases)")
    if failed:
        return EXIT_INVARIANT
    print("all suites passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# data tools


def cmd_synth_data(args) -> int:
    if args.count < 1:
        raise _UsageError("--count must be >= 1")
    if args.calibrate:
        smiles = calibrated_corpus_csv(args.out, args.count, args.seed, QM9_TRAIN_MEANS)
    else:
        smiles = synthetic_corpus(args.count, args.seed)
        write_corpus_csv(args.out, smiles, corpus_properties(smiles, args.seed))
    print(f"wrote {len(smiles)} molecules to {args.out}")
    return EXIT_OK


def cmd_check_data(args) -> int:
    ds = ingest(args.data, args.seed)
    print(f"rows: {len(ds.smiles)} (dropped {ds.duplicates_dropped} duplicates, "
          f"rejected {ds.rows_rejected})")
    print(f"split: {len(ds.train_indices)} train / {len(ds.val_indices)} val")
    stats = property_stats(ds.train_properties)
    print("property      mean     median       mode      sigma        iqr")
    for i, name in enumerate(ALL_PROPERTIES):
        print(f"{name:<9} {stats.mean[i]:>8.3f} {stats.median[i]:>10.3f} "
              f"{stats.mode[i]:>10.3f} {stats.sigma[i]:>10.3f} {stats.iqr[i]:>10.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# dispatch


COMMANDS = {
    "train": cmd_train,
    "generate": cmd_generate,
    "eval": cmd_eval,
    "attnmap": cmd_attnmap,
    "selftest": cmd_selftest,
    "synth-data": cmd_synth_data,
    "check-data": cmd_check_data,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, TokenizationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
