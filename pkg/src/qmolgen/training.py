"""Hybrid training loop.

Classical tensors take exact reverse-mode gradients; circuit-feeding tensors
of the quantum variant take a two-evaluation SPSA estimate on the same batch.
Both gradient sets merge into a single AdamW step, so every batch advances
the optimizer exactly once (three forward passes on the quantum variant, one
otherwise).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TokenizationError, ValidationError
from .grad import AdamWState, adamw_step, spsa_grad
from .model import (
    ModelParams,
    cross_entropy_loss,
    fit_property_scaling,
    forward,
    loss_and_reverse_grads,
    make_batch,
    pack_params,
    save_checkpoint,
    shifted_targets,
    spsa_param_names,
    token_accuracy,
    unpack_params,
)
from .rng import rng_for
from .smiles import Vocabulary, tokenize

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ("epoch", "split", "loss", "accuracy", "wallclock")


@dataclass
class TrainResult:
    metrics: list[tuple] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    steps: int = 0
    skipped_rows: int = 0


def encode_corpus(
    smiles_list, vocab: Vocabulary, max_seq_len: int
) -> tuple[list[list[int]], list[int]]:
    """SOS/EOS-framed id rows plus the indices of the strings that were kept.

    Untokenizable or overlong strings are skipped with a warning; the kept
    index list lets callers keep property matrices aligned with the rows.
    """
    rows: list[list[int]] = []
    kept: list[int] = []
    for i, smi in enumerate(smiles_list):
        try:
            ids = tokenize(smi, vocab)
        except TokenizationError:
            logger.warning("skipping untokenizable string %r", smi)
            continue
        if len(ids) + 2 > max_seq_len:
            logger.warning("skipping %r: %d tokens exceed max_seq_len %d",
                           smi, len(ids) + 2, max_seq_len)
            continue
        rows.append([vocab.sos_id] + list(ids) + [vocab.eos_id])
        kept.append(i)
    return rows, kept


def evaluate_split(
    params: ModelParams,
    rows,
    properties,
    vocab: Vocabulary,
    batch_size: int = 256,
    threads: int | None = None,
) -> tuple[float, float]:
    """Token-weighted loss and accuracy over a whole split.

    Accumulation is sequential over fixed-order chunks, so the result does
    not depend on batch size or thread count.
    """
    if not rows:
        raise ValidationError("cannot evaluate an empty split")
    total_nll = 0.0
    total_correct = 0.0
    total_tokens = 0
    for start in range(0, len(rows), batch_size):
        chunk = rows[start : start + batch_size]
        props = properties[start : start + batch_size] if properties is not None else None
        batch = make_batch(chunk, params.config, vocab.pad_id, vocab.sos_id, vocab.eos_id,
                           properties=props)
        logits = forward(params, batch, max_workers=threads)
        targets = shifted_targets(batch, vocab.pad_id)
        counted = int((targets != vocab.pad_id).sum())
        total_nll += cross_entropy_loss(logits, targets, vocab.pad_id) * counted
        total_correct += token_accuracy(logits, targets, vocab.pad_id) * counted
        total_tokens += counted
    return total_nll / total_tokens, total_correct / total_tokens


def _unflatten(params: ModelParams, names, flat: np.ndarray) -> dict[str, np.ndarray]:
    out = {}
    offset = 0
    for name in names:
        t = params[name]
        out[name] = flat[offset : offset + t.size].reshape(t.shape).copy()
        offset += t.size
    return out


def train_step(
    params: ModelParams,
    batch,
    pad_id: int,
    opt: AdamWState,
    spsa_epsilon: float,
    spsa_rng,
) -> float:
    """One optimizer update; returns the pre-update batch loss."""
    loss, grads = loss_and_reverse_grads(params, batch, pad_id)
    names = spsa_param_names(params.config)
    if names:
        x0 = pack_params(params, names)

        def batch_loss(x: np.ndarray) -> float:
            unpack_params(params, names, x)
            logits = forward(params, batch)
            return cross_entropy_loss(logits, shifted_targets(batch, pad_id), pad_id)

        report = spsa_grad(batch_loss, x0, spsa_rng, epsilon=spsa_epsilon)
        unpack_params(params, names, x0)
        grads.update(_unflatten(params, names, report.grads))
    adamw_step(opt, params.tensors, grads)
    return loss


def train(
    params: ModelParams,
    train_rows,
    val_rows,
    vocab: Vocabulary,
    train_properties=None,
    val_properties=None,
    epochs: int = 20,
    batch_size: int = 256,
    lr: float = 0.005,
    weight_decay: float = 0.1,
    clip_norm: float = 1.0,
    spsa_epsilon: float = 0.01,
    seed: int = 0,
    run_dir: str | Path | None = None,
    threads: int | None = None,
    on_epoch=None,
) -> TrainResult:
    """Epoch-driven loop with per-epoch checkpoints and metric rows.

    Epoch 0 rows record the untrained model; epoch e rows record the model
    after its e-th pass. The checkpoint of the best validation loss is also
    written to ``best.ckpt``. Property scaling is fitted on the training
    split once, before the first evaluation, and never refitted.
    """
    cfg = params.config
    if not train_rows or not val_rows:
        raise ValidationError("train and val splits must both be non-empty")
    if epochs < 0 or batch_size < 1:
        raise ValidationError("epochs must be >= 0 and batch_size >= 1")
    if cfg.conditioned and (train_properties is None or val_properties is None):
        raise ValidationError("conditioned training needs property matrices")
    if cfg.conditioned and params.buffers["scaling_fitted"][0] == 0.0:
        fit_property_scaling(params, train_properties)

    run_path = Path(run_dir) if run_dir is not None else None
    if run_path is not None:
        run_path.mkdir(parents=True, exist_ok=True)

    opt = AdamWState(lr=lr, weight_decay=weight_decay, clip_norm=clip_norm)
    result = TrainResult()
    started = time.perf_counter()

    def record(epoch: int) -> float:
        t_loss, t_acc = evaluate_split(params, train_rows, train_properties, vocab,
                                       batch_size, threads)
        v_loss, v_acc = evaluate_split(params, val_rows, val_properties, vocab,
                                       batch_size, threads)
        elapsed = time.perf_counter() - started
        result.metrics.append((epoch, "train", t_loss, t_acc, elapsed))
        result.metrics.append((epoch, "val", v_loss, v_acc, elapsed))
        if run_path is not None:
            save_checkpoint(params, run_path / f"epoch_{epoch:03d}.ckpt")
        if v_loss < result.best_val_loss:
            result.best_val_loss = v_loss
            result.best_epoch = epoch
            if run_path is not None:
                save_checkpoint(params, run_path / "best.ckpt")
        if on_epoch is not None:
            on_epoch(epoch, t_loss, t_acc, v_loss, v_acc)
        return v_loss

    record(0)
    step = 0
    order = np.arange(len(train_rows))
    for epoch in range(1, epochs + 1):
        perm = rng_for(seed, "shuffle", epoch).permutation(order)
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            chunk = [train_rows[i] for i in idx]
            props = train_properties[idx] if train_properties is not None else None
            batch = make_batch(chunk, cfg, vocab.pad_id, vocab.sos_id, vocab.eos_id,
                               properties=props)
            step += 1
            train_step(params, batch, vocab.pad_id, opt, spsa_epsilon,
                       rng_for(seed, "spsa", step))
        record(epoch)
    result.steps = step
    result.skipped_rows = opt.skipped_batches
    return result


def decode_sample(ids, vocab: Vocabulary) -> str | None:
    """SMILES string for one sampled id row, or None when undecodable.

    The row must open with SOS; a trailing EOS is optional (hitting the
    length cap leaves it off). Any special token elsewhere spoils the sample.
    """
    ids = list(ids)
    if not ids or ids[0] != vocab.sos_id:
        return None
    body = ids[1:]
    if body and body[-1] == vocab.eos_id:
        body = body[:-1]
    if not body or any(vocab.is_special(t) for t in body):
        return None
    return "".join(vocab.tokens[t] for t in body)


def write_metrics_csv(metrics, path) -> None:
    """Rows as logged by train(); loss/accuracy at full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for epoch, split, loss, acc, wallclock in metrics:
            fh.write(f"{epoch},{split},{loss!r},{acc!r},{wallclock:.3f}\n")
