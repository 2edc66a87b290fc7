"""Decoder variants: quantum-scored, parameter-matched classical, and full classical.

All three share one classical value path: a 64-dimensional embedding sum
feeds W_V, attention-weighted values feed the output head. They differ only
in where attention scores come from:

* QUANTUM: scores are ancilla expectations of per-pair circuits over the
  token/position (and optional property) angle tables
* CLASSICAL_EQ: the same angle tables act as small embeddings, projected by
  W_Q/W_K shaped to spend exactly as many parameters as theta_q/theta_k
* CLASSICAL: conventional 64x64 W_Q/W_K over the shared 64-dim embedding

Tensors are initialized from per-name seeded streams, so identically shaped
tensors agree across variants built with the same seed.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .attention import (
    AttentionMatrix,
    apply_attention,
    classical_attention_matrix,
    quantum_attention_matrix,
)
from .data import scale_to_angle
from .errors import ValidationError
from .rng import rng_for

CHECKPOINT_MAGIC = b"QMGC"
CHECKPOINT_VERSION = 1

N_PROPERTIES = 9


class ModelVariant(Enum):
    QUANTUM = "quantum"
    CLASSICAL_EQ = "classical_eq"
    CLASSICAL = "classical"


@dataclass(frozen=True)
class ModelConfig:
    variant: ModelVariant = ModelVariant.QUANTUM
    conditioned: bool = False
    working_qubits: int = 6
    vocab_size: int = 33
    max_seq_len: int = 24
    d_value: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.working_qubits < 2 or self.working_qubits > 20:
            raise ValidationError(f"working_qubits {self.working_qubits} out of range")
        if self.working_qubits % self.num_registers != 0:
            raise ValidationError(
                f"{self.working_qubits} working qubits do not divide into "
                f"{self.num_registers} equal registers"
            )
        if self.vocab_size < 2:
            raise ValidationError("vocab_size must be at least 2")
        if self.max_seq_len < 2:
            raise ValidationError("max_seq_len must cover SOS plus one token")
        if self.d_value < 1:
            raise ValidationError("d_value must be positive")

    @property
    def num_registers(self) -> int:
        return 3 if self.conditioned else 2

    @property
    def angle_dim(self) -> int:
        """Angles per register; one RY per qubit, so also qubits per register."""
        return self.working_qubits // self.num_registers

    @property
    def d_model(self) -> int:
        return 2**self.working_qubits

    @property
    def attention_d_k(self) -> float:
        """Scale constant: Hilbert-space dim for quantum scores, projection
        width for the parameter-matched classical variant, embedding dim for
        the full classical one."""
        if self.variant is ModelVariant.CLASSICAL_EQ:
            return float(self.working_qubits // self.angle_dim)
        return float(self.d_model)


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def _tensor_plan(config: ModelConfig) -> list[tuple[str, tuple, str, float]]:
    """(name, shape, init kind, init scale) for every trainable tensor."""
    v, L, dm, dv = config.vocab_size, config.max_seq_len, config.d_model, config.d_value
    adim = config.angle_dim
    fan = 1.0 / np.sqrt(dm)
    plan = [
        ("cls_token_emb", (v, dm), "uniform_sym", fan),
        ("cls_pos_emb", (L, dm), "zeros", 0.0),
        ("w_value", (dm, dv), "uniform_sym", fan),
        ("b_value", (dv,), "zeros", 0.0),
        ("w_head", (dv, v), "uniform_sym", 1.0 / np.sqrt(dv)),
        ("b_head", (v,), "zeros", 0.0),
    ]
    if config.conditioned:
        plan += [
            ("cls_prop_w", (N_PROPERTIES, dm), "uniform_sym", 1.0 / 3.0),
            ("cls_prop_b", (dm,), "zeros", 0.0),
        ]
    if config.variant in (ModelVariant.QUANTUM, ModelVariant.CLASSICAL_EQ):
        plan += [
            ("attn_token_angles", (v, adim), "uniform_angle", np.pi),
            ("attn_pos_angles", (L, adim), "zeros", 0.0),
        ]
        if config.conditioned:
            plan += [
                ("attn_prop_w", (N_PROPERTIES, adim), "uniform_sym", 1.0 / 3.0),
                ("attn_prop_b", (adim,), "zeros", 0.0),
            ]
    if config.variant is ModelVariant.QUANTUM:
        plan += [
            ("theta_q", (config.working_qubits,), "uniform_angle", np.pi),
            ("theta_k", (config.working_qubits,), "uniform_angle", np.pi),
        ]
    elif config.variant is ModelVariant.CLASSICAL_EQ:
        proj = config.working_qubits // adim
        plan += [
            ("w_q_eq", (adim, proj), "uniform_sym", 1.0 / np.sqrt(adim)),
            ("w_k_eq", (adim, proj), "uniform_sym", 1.0 / np.sqrt(adim)),
        ]
    else:
        plan += [
            ("w_q", (dm, dm), "uniform_sym", fan),
            ("w_k", (dm, dm), "uniform_sym", fan),
        ]
    return plan


def init_params(config: ModelConfig) -> ModelParams:
    """Build all tensors from per-name seeded streams.

    Keying the stream by tensor name (not draw order) is what makes the
    shared-initialization contract hold across variants automatically.
    """
    tensors = {}
    for name, shape, kind, scale in _tensor_plan(config):
        rng = rng_for(config.seed, "init:" + name)
        if kind == "zeros":
            tensors[name] = np.zeros(shape, dtype=np.float64)
        elif kind == "uniform_sym":
            tensors[name] = rng.uniform(-scale, scale, size=shape)
        elif kind == "uniform_angle":
            tensors[name] = rng.uniform(0.0, scale, size=shape)
        else:  # pragma: no cover - plan is static
            raise ValidationError(f"unknown init kind {kind}")
    buffers = {
        "prop_mean": np.zeros(N_PROPERTIES),
        "prop_std": np.ones(N_PROPERTIES),
        "proj_lo": np.zeros(config.angle_dim),
        "proj_hi": np.ones(config.angle_dim),
        "scaling_fitted": np.zeros(1),
    }
    return ModelParams(config=config, tensors=tensors, buffers=buffers)


def count_parameters(params: ModelParams) -> tuple[int, dict[str, int]]:
    breakdown = {name: int(t.size) for name, t in params.tensors.items()}
    return sum(breakdown.values()), breakdown


# ---------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    token_ids: np.ndarray  # (B, n) int64, padded
    pad_mask: np.ndarray  # (B, n) bool, True at real positions
    lengths: np.ndarray  # (B,) real lengths
    properties: np.ndarray | None = None  # (B, 9) raw property values

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]


def make_batch(
    sequences,
    config: ModelConfig,
    pad_id: int,
    sos_id: int,
    eos_id: int,
    properties=None,
) -> Batch:
    """Pad encoded rows into a batch, enforcing the SOS...EOS framing."""
    rows = [list(map(int, s)) for s in sequences]
    if not rows:
        raise ValidationError("empty batch")
    for r in rows:
        if len(r) < 2 or len(r) > config.max_seq_len:
            raise ValidationError(f"sequence length {len(r)} outside 2..{config.max_seq_len}")
        if r[0] != sos_id or r[-1] != eos_id:
            raise ValidationError("sequences must start with SOS and end with EOS")
        if any(t == eos_id for t in r[:-1]) or any(t == sos_id for t in r[1:]):
            raise ValidationError("SOS/EOS may appear only at the sequence ends")
        if any(not 0 <= t < config.vocab_size for t in r) or pad_id in r:
            raise ValidationError("token id out of range or PAD inside sequence")
    n = max(len(r) for r in rows)
    ids = np.full((len(rows), n), pad_id, dtype=np.int64)
    mask = np.zeros((len(rows), n), dtype=bool)
    for b, r in enumerate(rows):
        ids[b, : len(r)] = r
        mask[b, : len(r)] = True
    props = None
    if properties is not None:
        props = np.asarray(properties, dtype=np.float64)
        if props.shape != (len(rows), N_PROPERTIES):
            raise ValidationError(f"properties shape {props.shape} != ({len(rows)}, 9)")
    if config.conditioned and props is None:
        raise ValidationError("conditioned model needs a property matrix")
    return Batch(token_ids=ids, pad_mask=mask, lengths=mask.sum(axis=1), properties=props)


# ---------------------------------------------------------------------------
# property scaling


def fit_property_scaling(params: ModelParams, train_properties: np.ndarray) -> None:
    """Freeze property standardization and projection-range statistics.

    Raw 9-vectors are standardized by training mean/std before every property
    linear; for the quantum path the projected vector is additionally min-max
    mapped onto [0, pi] using the projection range observed on the training
    set at fit time.
    """
    props = np.asarray(train_properties, dtype=np.float64)
    if props.ndim != 2 or props.shape[1] != N_PROPERTIES:
        raise ValidationError(f"expected (N, 9) property matrix, got {props.shape}")
    mean = props.mean(axis=0)
    std = props.std(axis=0, ddof=0)
    std = np.where(std == 0.0, 1.0, std)
    params.buffers["prop_mean"] = mean
    params.buffers["prop_std"] = std
    if "attn_prop_w" in params.tensors:
        z = (props - mean) / std
        projected = z @ params["attn_prop_w"] + params["attn_prop_b"]
        params.buffers["proj_lo"] = projected.min(axis=0)
        params.buffers["proj_hi"] = projected.max(axis=0)
    params.buffers["scaling_fitted"] = np.ones(1)


def standardize_properties(params: ModelParams, raw: np.ndarray) -> np.ndarray:
    return (np.asarray(raw, dtype=np.float64) - params.buffers["prop_mean"]) / params.buffers[
        "prop_std"
    ]


# ---------------------------------------------------------------------------
# forward pass


@dataclass
class SequenceCache:
    """Everything the backward pass needs for one sequence."""

    ids: np.ndarray  # (k,) real token ids
    z: np.ndarray  # (k, d_model) embedding sum
    x_attn: np.ndarray | None  # attention input of the classical variants
    attn: AttentionMatrix
    values: np.ndarray  # (k, d_value)
    attended: np.ndarray  # (k, d_value)
    logits: np.ndarray  # (k, vocab)
    props_std: np.ndarray | None  # (9,) standardized properties


def _forward_one(params: ModelParams, ids: np.ndarray, raw_props) -> SequenceCache:
    cfg = params.config
    k = ids.shape[0]
    z = params["cls_token_emb"][ids] + params["cls_pos_emb"][:k]
    props_std = None
    if cfg.conditioned:
        props_std = standardize_properties(params, raw_props)
        z = z + (props_std @ params["cls_prop_w"] + params["cls_prop_b"])

    x_attn = None
    if cfg.variant is ModelVariant.QUANTUM:
        theta_prop = None
        if cfg.conditioned:
            projected = props_std @ params["attn_prop_w"] + params["attn_prop_b"]
            theta_prop = scale_to_angle(
                projected, params.buffers["proj_lo"], params.buffers["proj_hi"]
            )
        attn = quantum_attention_matrix(
            params["attn_token_angles"][ids],
            params["attn_pos_angles"][:k],
            params["theta_q"],
            params["theta_k"],
            d_k=cfg.attention_d_k,
            theta_prop=theta_prop,
        )
    elif cfg.variant is ModelVariant.CLASSICAL_EQ:
        x_attn = params["attn_token_angles"][ids] + params["attn_pos_angles"][:k]
        if cfg.conditioned:
            x_attn = x_attn + (props_std @ params["attn_prop_w"] + params["attn_prop_b"])
        attn = classical_attention_matrix(
            x_attn, params["w_q_eq"], params["w_k_eq"], d_k=cfg.attention_d_k
        )
    else:
        x_attn = z
        attn = classical_attention_matrix(
            x_attn, params["w_q"], params["w_k"], d_k=cfg.attention_d_k
        )

    values = z @ params["w_value"] + params["b_value"]
    attended = apply_attention(attn.weights, values)
    logits = attended @ params["w_head"] + params["b_head"]
    return SequenceCache(
        ids=ids,
        z=z,
        x_attn=x_attn,
        attn=attn,
        values=values,
        attended=attended,
        logits=logits,
        props_std=props_std,
    )


def forward(
    params: ModelParams, batch: Batch, return_cache: bool = False, max_workers: int | None = None
):
    """Logits (B, n, vocab); pad positions carry zero logits.

    Sequences evaluate independently and run on a thread pool; results are
    assembled in batch order, so the output is deterministic.
    """
    cfg = params.config
    bsz, n = batch.token_ids.shape
    if n > cfg.max_seq_len:
        raise ValidationError(f"batch length {n} exceeds max_seq_len {cfg.max_seq_len}")
    if cfg.conditioned and batch.properties is None:
        raise ValidationError("conditioned model needs batch properties")

    def run(b: int) -> SequenceCache:
        k = int(batch.lengths[b])
        raw = batch.properties[b] if batch.properties is not None else None
        return _forward_one(params, batch.token_ids[b, :k], raw)

    if bsz == 1:
        caches = [run(0)]
    else:
        with ThreadPoolExecutor(max_workers=max_workers or min(bsz, 8)) as pool:
            caches = list(pool.map(run, range(bsz)))

    logits = np.zeros((bsz, n, cfg.vocab_size), dtype=np.float64)
    for b, cache in enumerate(caches):
        logits[b, : cache.logits.shape[0]] = cache.logits
    if return_cache:
        return logits, caches
    return logits


# ---------------------------------------------------------------------------
# loss and accuracy


def shifted_targets(batch: Batch, pad_id: int) -> np.ndarray:
    """Next-token targets: input row shifted left, PAD past the end."""
    targets = np.full_like(batch.token_ids, pad_id)
    targets[:, :-1] = batch.token_ids[:, 1:]
    targets[~batch.pad_mask] = pad_id
    return targets


def _log_softmax(rows: np.ndarray) -> np.ndarray:
    shifted = rows - rows.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy_loss(logits: np.ndarray, targets: np.ndarray, pad_id: int) -> float:
    """Mean token-level cross entropy over non-pad target positions."""
    counted = targets != pad_id
    if not counted.any():
        raise ValidationError("no non-pad targets to score")
    logp = _log_softmax(logits[counted])
    picked = logp[np.arange(logp.shape[0]), targets[counted]]
    return float(-picked.mean())


def token_accuracy(logits: np.ndarray, targets: np.ndarray, pad_id: int) -> float:
    counted = targets != pad_id
    if not counted.any():
        raise ValidationError("no non-pad targets to score")
    pred = logits[counted].argmax(axis=-1)
    return float((pred == targets[counted]).mean())


# ---------------------------------------------------------------------------
# reverse-mode gradients for the classical tensors


def _zero_grads(params: ModelParams, names) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(params[name]) for name in names}


def classical_param_names(config: ModelConfig) -> tuple[str, ...]:
    """Tensors trained with exact reverse-mode gradients."""
    names = ["cls_token_emb", "cls_pos_emb", "w_value", "b_value", "w_head", "b_head"]
    if config.conditioned:
        names += ["cls_prop_w", "cls_prop_b"]
    if config.variant is ModelVariant.CLASSICAL_EQ:
        names += ["attn_token_angles", "attn_pos_angles", "w_q_eq", "w_k_eq"]
        if config.conditioned:
            names += ["attn_prop_w", "attn_prop_b"]
    elif config.variant is ModelVariant.CLASSICAL:
        names += ["w_q", "w_k"]
    return tuple(names)


def spsa_param_names(config: ModelConfig) -> tuple[str, ...]:
    """Tensors feeding quantum circuits; trained with SPSA on QUANTUM only."""
    if config.variant is not ModelVariant.QUANTUM:
        return ()
    names = ["attn_token_angles", "attn_pos_angles", "theta_q", "theta_k"]
    if config.conditioned:
        names += ["attn_prop_w", "attn_prop_b"]
    return tuple(names)


def pack_params(params: ModelParams, names) -> np.ndarray:
    return np.concatenate([params[name].ravel() for name in names])


def unpack_params(params: ModelParams, names, flat: np.ndarray) -> None:
    offset = 0
    for name in names:
        t = params[name]
        t[...] = flat[offset : offset + t.size].reshape(t.shape)
        offset += t.size
    if offset != flat.size:
        raise ValidationError(f"flat vector size {flat.size} != parameter span {offset}")


def _softmax_row_backward(a_row: np.ndarray, da_row: np.ndarray) -> np.ndarray:
    return a_row * (da_row - float(da_row @ a_row))


def loss_and_reverse_grads(params: ModelParams, batch: Batch, pad_id: int):
    """One forward pass; exact gradients for every classical tensor.

    Quantum attention weights are treated as constants on the QUANTUM
    variant (their parameters train via SPSA); classical variants
    differentiate through the score path as well.
    """
    cfg = params.config
    logits, caches = forward(params, batch, return_cache=True)
    targets = shifted_targets(batch, pad_id)
    counted = targets != pad_id
    if not counted.any():
        raise ValidationError("no non-pad targets to score")
    n_count = int(counted.sum())
    loss = cross_entropy_loss(logits, targets, pad_id)

    grads = _zero_grads(params, classical_param_names(cfg))
    sqrt_dk = np.sqrt(cfg.attention_d_k)

    for b, cache in enumerate(caches):
        k = cache.logits.shape[0]
        tgt = targets[b, :k]
        live = tgt != pad_id
        if not live.any():
            continue
        # dL/dlogits = (softmax - onehot) / n_count at counted positions
        probs = np.exp(_log_softmax(cache.logits))
        dlogits = probs
        dlogits[np.arange(k), tgt] -= 1.0
        dlogits[~live] = 0.0
        dlogits /= n_count

        grads["w_head"] += cache.attended.T @ dlogits
        grads["b_head"] += dlogits.sum(axis=0)
        d_attended = dlogits @ params["w_head"].T

        d_weights = d_attended @ cache.values.T
        d_values = cache.attn.weights.T @ d_attended

        grads["w_value"] += cache.z.T @ d_values
        grads["b_value"] += d_values.sum(axis=0)
        dz = d_values @ params["w_value"].T

        if cfg.variant is not ModelVariant.QUANTUM:
            dscores = np.zeros((k, k))
            for i in range(k):
                dscores[i, : i + 1] = _softmax_row_backward(
                    cache.attn.weights[i, : i + 1], d_weights[i, : i + 1]
                )
            x = cache.x_attn
            wq_name, wk_name = (
                ("w_q_eq", "w_k_eq")
                if cfg.variant is ModelVariant.CLASSICAL_EQ
                else ("w_q", "w_k")
            )
            q = x @ params[wq_name]
            kk = x @ params[wk_name]
            dq = dscores @ kk / sqrt_dk
            dk_ = dscores.T @ q / sqrt_dk
            grads[wq_name] += x.T @ dq
            grads[wk_name] += x.T @ dk_
            dx = dq @ params[wq_name].T + dk_ @ params[wk_name].T
            if cfg.variant is ModelVariant.CLASSICAL_EQ:
                np.add.at(grads["attn_token_angles"], cache.ids, dx)
                grads["attn_pos_angles"][:k] += dx
                if cfg.conditioned:
                    dc = dx.sum(axis=0)
                    grads["attn_prop_w"] += np.outer(cache.props_std, dc)
                    grads["attn_prop_b"] += dc
            else:
                dz = dz + dx

        np.add.at(grads["cls_token_emb"], cache.ids, dz)
        grads["cls_pos_emb"][:k] += dz
        if cfg.conditioned:
            dc = dz.sum(axis=0)
            grads["cls_prop_w"] += np.outer(cache.props_std, dc)
            grads["cls_prop_b"] += dc

    return loss, grads


def reverse_mode_grad(params: ModelParams, batch: Batch, pad_id: int):
    """GradReport wrapper around loss_and_reverse_grads."""
    from .grad import GradReport

    _, grads = loss_and_reverse_grads(params, batch, pad_id)
    return GradReport("reverse_mode", grads, 1)


# ---------------------------------------------------------------------------
# sampling


def generate(
    params: ModelParams,
    sos_id: int,
    eos_id: int,
    conditioning=None,
    max_len: int | None = None,
    temperature: float = 1.0,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Autoregressive sampling; temperature 0 means greedy argmax.

    Returns the id sequence including SOS and, when reached, EOS.
    """
    cfg = params.config
    if temperature < 0:
        raise ValidationError("temperature must be >= 0")
    if cfg.conditioned and conditioning is None:
        raise ValidationError("conditioned model needs a 9-vector to generate")
    if max_len is None:
        max_len = cfg.max_seq_len
    max_len = min(max_len, cfg.max_seq_len)
    if temperature > 0 and rng is None:
        raise ValidationError("sampling needs an rng; pass temperature=0 for greedy")
    raw = None
    if conditioning is not None:
        raw = np.asarray(conditioning, dtype=np.float64)
        if raw.shape != (N_PROPERTIES,):
            raise ValidationError(f"conditioning shape {raw.shape} != (9,)")

    ids = [int(sos_id)]
    while len(ids) < max_len:
        cache = _forward_one(params, np.asarray(ids, dtype=np.int64), raw)
        row = cache.logits[-1]
        if temperature == 0.0:
            nxt = int(row.argmax())
        else:
            logp = _log_softmax(row / temperature)
            nxt = int(rng.choice(row.size, p=np.exp(logp)))
        ids.append(nxt)
        if nxt == eos_id:
            break
    return ids


def attention_weights(
    params: ModelParams, ids, conditioning=None
) -> np.ndarray:
    """Post-softmax attention matrix for one raw id row (no framing rules)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1 or ids.size > params.config.max_seq_len:
        raise ValidationError(f"need 1..{params.config.max_seq_len} ids, got shape {ids.shape}")
    if np.any(ids < 0) or np.any(ids >= params.config.vocab_size):
        raise ValidationError("token id out of range")
    raw = None
    if params.config.conditioned:
        if conditioning is None:
            raise ValidationError("conditioned model needs a 9-vector")
        raw = np.asarray(conditioning, dtype=np.float64)
        if raw.shape != (N_PROPERTIES,):
            raise ValidationError(f"conditioning shape {raw.shape} != (9,)")
    return _forward_one(params, ids, raw).attn.weights


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: ModelParams, path) -> None:
    """Versioned container: JSON header + float64 little-endian payloads."""
    cfg = params.config
    header = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "variant": cfg.variant.value,
            "conditioned": cfg.conditioned,
            "working_qubits": cfg.working_qubits,
            "vocab_size": cfg.vocab_size,
            "max_seq_len": cfg.max_seq_len,
            "d_value": cfg.d_value,
            "seed": cfg.seed,
        },
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in params.tensors.items()],
        "buffers": [{"name": n, "shape": list(t.shape)} for n, t in params.buffers.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for t in params.tensors.values():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
        for t in params.buffers.values():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValidationError(f"{path}: not a checkpoint (bad magic {magic!r})")
        (size,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(size).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {header['version']}")
        cfg = ModelConfig(
            variant=ModelVariant(header["config"]["variant"]),
            conditioned=header["config"]["conditioned"],
            working_qubits=header["config"]["working_qubits"],
            vocab_size=header["config"]["vocab_size"],
            max_seq_len=header["config"]["max_seq_len"],
            d_value=header["config"]["d_value"],
            seed=header["config"]["seed"],
        )

        def read_block(manifest):
            out = {}
            for entry in manifest:
                shape = tuple(entry["shape"])
                count = int(np.prod(shape)) if shape else 1
                buf = fh.read(8 * count)
                if len(buf) != 8 * count:
                    raise ValidationError(f"{path}: truncated payload for {entry['name']}")
                out[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
            return out

        tensors = read_block(header["tensors"])
        buffers = read_block(header["buffers"])
        if fh.read(1):
            raise ValidationError(f"{path}: trailing bytes after payload")
    return ModelParams(config=cfg, tensors=tensors, buffers=buffers)
