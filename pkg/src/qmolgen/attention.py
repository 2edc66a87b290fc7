"""Causal attention matrices with quantum- or classically-computed scores.

The mask is implemented by restricting each softmax row to its unmasked
prefix (j <= i); no -inf sentinels enter any exp. Quantum raw scores live in
[-1, 1] and are multiplied by sqrt(d_k) before the softmax, mirroring the
1/sqrt(d_k) scaling applied to classical dot products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .qcircuits import AttentionCircuitSpec, Mode, attention_score


@dataclass
class AttentionMatrix:
    """Scores and weights for one causal self-attention pass.

    ``raw_scores`` are the native score values (circuit expectations for the
    quantum path, plain QK^T for the classical one); ``scores`` is the exact
    softmax input after sqrt(d_k) treatment. Strict upper triangles are zero.
    """

    weights: np.ndarray
    scores: np.ndarray
    raw_scores: np.ndarray
    provenance: str
    circuits_executed: int = 0
    dedup_hits: int = 0

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def masked_softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the causal prefix j <= i."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ValidationError(f"scores must be square, got {scores.shape}")
    n = scores.shape[0]
    weights = np.zeros_like(scores)
    for i in range(n):
        row = scores[i, : i + 1]
        e = np.exp(row - np.max(row))
        weights[i, : i + 1] = e / np.sum(e)
    return weights


def quantum_attention_matrix(
    token_angles: np.ndarray,
    position_angles: np.ndarray,
    theta_q: np.ndarray,
    theta_k: np.ndarray,
    d_k: int,
    theta_prop: np.ndarray | None = None,
) -> AttentionMatrix:
    """Score every causal pair with one circuit each, deduplicated.

    ``token_angles`` and ``position_angles`` carry one preparation-angle row
    per sequence position. Circuits are cached on the exact (i, j)
    preparation values; theta_q/theta_k/theta_prop are shared by all pairs
    and cannot split the cache. The (0, 0) self-pair is never scored because
    its softmax row is 1 regardless.
    """
    token_angles = np.asarray(token_angles, dtype=np.float64)
    position_angles = np.asarray(position_angles, dtype=np.float64)
    if token_angles.shape != position_angles.shape or token_angles.ndim != 2:
        raise ValidationError("token and position angle tables must share shape (n, adim)")
    n = token_angles.shape[0]
    if n < 1:
        raise ValidationError("need at least one position")
    mode = Mode.CONDITIONED if theta_prop is not None else Mode.SEQUENCE_ONLY
    prop = tuple(np.asarray(theta_prop, dtype=np.float64)) if theta_prop is not None else None
    tq = tuple(np.asarray(theta_q, dtype=np.float64))
    tk = tuple(np.asarray(theta_k, dtype=np.float64))

    raw = np.zeros((n, n))
    cache: dict[tuple, float] = {}
    executed = 0
    dedup_hits = 0
    for i in range(n):
        for j in range(i + 1):
            if i == 0 and j == 0:
                continue
            key = (
                token_angles[i].tobytes(),
                position_angles[i].tobytes(),
                token_angles[j].tobytes(),
                position_angles[j].tobytes(),
            )
            if key in cache:
                dedup_hits += 1
            else:
                spec = AttentionCircuitSpec(
                    mode=mode,
                    theta_token_i=tuple(token_angles[i]),
                    theta_pos_i=tuple(position_angles[i]),
                    theta_token_j=tuple(token_angles[j]),
                    theta_pos_j=tuple(position_angles[j]),
                    theta_q=tq,
                    theta_k=tk,
                    theta_prop=prop,
                )
                cache[key] = attention_score(spec)
                executed += 1
            raw[i, j] = cache[key]

    scores = np.zeros_like(raw)
    scale = np.sqrt(float(d_k))
    for i in range(n):
        scores[i, : i + 1] = raw[i, : i + 1] * scale
    return AttentionMatrix(
        weights=masked_softmax(scores),
        scores=scores,
        raw_scores=raw,
        provenance="quantum",
        circuits_executed=executed,
        dedup_hits=dedup_hits,
    )


def classical_attention_matrix(
    z: np.ndarray,
    w_q: np.ndarray,
    w_k: np.ndarray,
    d_k: int | None = None,
) -> AttentionMatrix:
    """Causal softmax(QK^T / sqrt(d_k)) with Q = z w_q, K = z w_k.

    ``d_k`` defaults to the projection output dimension.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValidationError(f"z must be 2-D, got shape {z.shape}")
    if w_q.shape != w_k.shape or w_q.shape[0] != z.shape[1]:
        raise ValidationError("w_q/w_k must share shape (e_dim, p_dim) matching z")
    if d_k is None:
        d_k = w_q.shape[1]
    q = z @ w_q
    k = z @ w_k
    raw = q @ k.T
    n = z.shape[0]
    scores = np.zeros_like(raw)
    scale = 1.0 / np.sqrt(float(d_k))
    for i in range(n):
        scores[i, : i + 1] = raw[i, : i + 1] * scale
    lower = np.tril(raw)
    return AttentionMatrix(
        weights=masked_softmax(scores),
        scores=scores,
        raw_scores=lower,
        provenance="classical",
    )


def apply_attention(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Weighted sum of value rows."""
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise ValidationError(f"weights must be square, got {weights.shape}")
    if values.ndim != 2 or values.shape[0] != weights.shape[1]:
        raise ValidationError(
            f"values shape {values.shape} incompatible with weights {weights.shape}"
        )
    return weights @ values


def write_attention_csv(weights: np.ndarray, labels: list[str], path) -> None:
    """Row-major CSV of attention weights at 17 significant digits.

    First row and column carry the token labels, so a weight cell states how
    much its row token attends to its column token.
    """
    if len(labels) != weights.shape[0]:
        raise ValidationError(
            f"{len(labels)} labels for {weights.shape[0]} rows"
        )

    def quote(s: str) -> str:
        return '"' + s.replace('"', '""') + '"' if ("," in s or '"' in s) else s

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([""] + [quote(l) for l in labels]) + "\n")
        for label, row in zip(labels, weights):
            cells = [quote(label)] + [format(v, ".17g") for v in row]
            fh.write(",".join(cells) + "\n")
