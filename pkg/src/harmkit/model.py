"""The trainable classifier and its checkpoint format.

Architecture: token-embedding table, mean pooling over the document, one
tanh hidden layer, then two linear heads (4-class harm level, 5 independent
target-identity logits). The L2-normalized hidden vector is the
representation used by the contrastive objective, so cosine similarity
between documents reduces to a dot product.

Checkpoint layout (little-endian throughout):
  magic ``HPC1`` | version u8 (=1) | header_len u32 | header | parameter
  matrices in declaration order as row-major float32 | crc32 u32 of all
  preceding bytes.
Header: u32 fields max_tokens, hash_bits, ngram, vocab_size, embed_dim,
hidden_dim, num_classes, num_targets, then the model seed as u64.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .featurizer import EncodedDoc, FeatureConfig

_MAGIC = b"HPC1"
_VERSION = 1
_HEADER_FMT = "<8IQ"  # 8 u32 config ints + u64 seed
_HEADER_LEN = struct.calcsize(_HEADER_FMT)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 64
    num_classes: int = 4
    num_targets: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("vocab_size", "embed_dim", "hidden_dim", "num_classes", "num_targets"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class ModelParams:
    """All trainable arrays; float64 in memory, float32 in checkpoints."""

    embed: np.ndarray  # (vocab_size, embed_dim)
    w1: np.ndarray     # (embed_dim, hidden_dim)
    b1: np.ndarray     # (hidden_dim,)
    wc: np.ndarray     # (hidden_dim, num_classes)
    bc: np.ndarray     # (num_classes,)
    wt: np.ndarray     # (hidden_dim, num_targets)
    bt: np.ndarray     # (num_targets,)

    FIELDS = ("embed", "w1", "b1", "wc", "bc", "wt", "bt")

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in self.FIELDS]

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: arr.copy() for name, arr in self.arrays()})


@dataclass
class Representation:
    """Hidden vector z and its L2-normalized copy (zero maps to zero)."""

    z: np.ndarray
    z_hat: np.ndarray


@dataclass
class BatchActivations:
    """Every intermediate the backward pass needs, batched row-wise."""

    h0: np.ndarray             # (B, embed_dim) mean-pooled embeddings
    z: np.ndarray              # (B, hidden_dim)
    z_norm: np.ndarray         # (B,) row norms of z
    z_hat: np.ndarray          # (B, hidden_dim)
    class_logits: np.ndarray   # (B, num_classes)
    target_logits: np.ndarray  # (B, num_targets)


def init_params(cfg: ModelConfig) -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic for a fixed seed.

    Values are passed through float32 once so that freshly initialized
    parameters survive the float32 checkpoint format bit-for-bit.
    """
    rng = np.random.default_rng(cfg.seed)

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        sample = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        return sample.astype(np.float32).astype(np.float64)

    return ModelParams(
        embed=glorot(cfg.vocab_size, cfg.embed_dim),
        w1=glorot(cfg.embed_dim, cfg.hidden_dim),
        b1=np.zeros(cfg.hidden_dim),
        wc=glorot(cfg.hidden_dim, cfg.num_classes),
        bc=np.zeros(cfg.num_classes),
        wt=glorot(cfg.hidden_dim, cfg.num_targets),
        bt=np.zeros(cfg.num_targets),
    )


def forward_batch(params: ModelParams, docs: list[EncodedDoc]) -> BatchActivations:
    """Run the full forward pass for a batch of encoded documents."""
    vocab_size, embed_dim = params.embed.shape
    h0 = np.zeros((len(docs), embed_dim))
    for i, doc in enumerate(docs):
        if doc.length == 0:
            continue
        if doc.ids.max(initial=0) >= vocab_size or doc.ids.min(initial=0) < 0:
            raise ValueError(f"token id out of range for vocab size {vocab_size}")
        h0[i] = params.embed[doc.ids].mean(axis=0)

    z = np.tanh(h0 @ params.w1 + params.b1)
    z_norm = np.linalg.norm(z, axis=1)
    z_hat = np.zeros_like(z)
    nonzero = z_norm > 0.0
    z_hat[nonzero] = z[nonzero] / z_norm[nonzero, None]

    class_logits = z @ params.wc + params.bc
    target_logits = z @ params.wt + params.bt
    return BatchActivations(h0, z, z_norm, z_hat, class_logits, target_logits)


def forward(params: ModelParams, doc: EncodedDoc) -> tuple[Representation, np.ndarray, np.ndarray]:
    """Single-document forward: (representation, class logits, target logits)."""
    acts = forward_batch(params, [doc])
    rep = Representation(z=acts.z[0], z_hat=acts.z_hat[0])
    return rep, acts.class_logits[0], acts.target_logits[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax; stable for arbitrarily large finite logits."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-safe elementwise logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def predict_proba(params: ModelParams, doc: EncodedDoc) -> np.ndarray:
    _, class_logits, _ = forward(params, doc)
    return softmax(class_logits)


def predict_label(params: ModelParams, doc: EncodedDoc) -> int:
    """Argmax class; ties resolve to the smallest class index."""
    return int(np.argmax(predict_proba(params, doc)))


def predict_multilabel(params: ModelParams, doc: EncodedDoc, eta: float = 0.5) -> tuple[int, ...]:
    """Select every target with sigmoid >= eta; argmax singleton if none qualify."""
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must be in (0, 1), got {eta}")
    _, _, target_logits = forward(params, doc)
    sigmas = sigmoid(target_logits)
    flags = (sigmas >= eta).astype(int)
    if flags.sum() == 0:
        flags[int(np.argmax(sigmas))] = 1
    return tuple(int(f) for f in flags)


def target_sigmas(params: ModelParams, doc: EncodedDoc) -> np.ndarray:
    _, _, target_logits = forward(params, doc)
    return sigmoid(target_logits)


def _shapes(model_cfg: ModelConfig) -> list[tuple[int, ...]]:
    return [
        (model_cfg.vocab_size, model_cfg.embed_dim),
        (model_cfg.embed_dim, model_cfg.hidden_dim),
        (model_cfg.hidden_dim,),
        (model_cfg.hidden_dim, model_cfg.num_classes),
        (model_cfg.num_classes,),
        (model_cfg.hidden_dim, model_cfg.num_targets),
        (model_cfg.num_targets,),
    ]


def save_params(
    params: ModelParams,
    model_cfg: ModelConfig,
    feature_cfg: FeatureConfig,
    path: str | Path,
) -> None:
    """Write a self-describing versioned checkpoint (see module docstring)."""
    if model_cfg.vocab_size != feature_cfg.vocab_size:
        raise ValueError(
            f"model vocab_size {model_cfg.vocab_size} != 2**hash_bits {feature_cfg.vocab_size}"
        )
    for (name, arr), shape in zip(params.arrays(), _shapes(model_cfg)):
        if arr.shape != shape:
            raise ValueError(f"parameter {name} has shape {arr.shape}, config implies {shape}")

    header = struct.pack(
        _HEADER_FMT,
        feature_cfg.max_tokens,
        feature_cfg.hash_bits,
        feature_cfg.ngram,
        model_cfg.vocab_size,
        model_cfg.embed_dim,
        model_cfg.hidden_dim,
        model_cfg.num_classes,
        model_cfg.num_targets,
        model_cfg.seed,
    )
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<B", _VERSION)
    blob += struct.pack("<I", len(header))
    blob += header
    for _, arr in params.arrays():
        blob += arr.astype("<f4").tobytes(order="C")
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    Path(path).write_bytes(bytes(blob))


def load_params(path: str | Path) -> tuple[ModelParams, ModelConfig, FeatureConfig]:
    """Inverse of save_params; fails closed on any corruption."""
    blob = Path(path).read_bytes()
    if len(blob) < 9:
        raise ValueError(f"{path}: truncated at offset {len(blob)} (no header)")
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    version = blob[4]
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}, expected {_VERSION}")
    (header_len,) = struct.unpack_from("<I", blob, 5)
    if header_len != _HEADER_LEN:
        raise ValueError(f"{path}: header length {header_len}, expected {_HEADER_LEN}")
    if len(blob) < 9 + header_len:
        raise ValueError(f"{path}: truncated at offset {len(blob)} (header incomplete)")
    fields = struct.unpack_from(_HEADER_FMT, blob, 9)
    feature_cfg = FeatureConfig(max_tokens=fields[0], hash_bits=fields[1], ngram=fields[2])
    model_cfg = ModelConfig(
        vocab_size=fields[3],
        embed_dim=fields[4],
        hidden_dim=fields[5],
        num_classes=fields[6],
        num_targets=fields[7],
        seed=fields[8],
    )
    if model_cfg.vocab_size != feature_cfg.vocab_size:
        raise ValueError(f"{path}: header vocab_size {model_cfg.vocab_size} inconsistent with hash_bits")

    shapes = _shapes(model_cfg)
    n_payload = sum(int(np.prod(s)) for s in shapes) * 4
    expected = 9 + header_len + n_payload + 4
    if len(blob) != expected:
        raise ValueError(f"{path}: file is {len(blob)} bytes, expected {expected} (truncated or padded)")
    (stored_crc,) = struct.unpack_from("<I", blob, expected - 4)
    actual_crc = zlib.crc32(blob[: expected - 4])
    if stored_crc != actual_crc:
        raise ValueError(f"{path}: CRC mismatch at offset {expected - 4} (stored {stored_crc:#x}, computed {actual_crc:#x})")

    offset = 9 + header_len
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        arrays.append(arr.reshape(shape).astype(np.float64))
        offset += count * 4
    return ModelParams(*arrays), model_cfg, feature_cfg
