"""Transducer model with language-constrained embeddings and the exact lattice loss.

Lattice conventions: nodes (t, u) for t in [0, T) and u in [0, U]. A label
move consumes target u (staying at frame t), a blank move advances the frame.
A complete path ends with the blank taken at node (T-1, U), so every valid
alignment has length T + U, contains exactly T blanks, and ends with one.
"""

from __future__ import annotations

import itertools
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import DataError, DomainError, ShapeError, SizeError
from .vocab import BLANK_ID, Kind, Lang, Vocabulary

_LOG_ZERO = -math.inf

_LANG_CODE = {Lang.MANDARIN: 0, Lang.ENGLISH: 1, Lang.NEUTRAL: 2}


@dataclass
class ModelConfig:
    feat_dim: int
    vocab_size: int
    enc_layers: int = 2
    enc_dim: int = 64
    pred_layers: int = 1
    pred_dim: int = 64
    joint_dim: int = 64
    emb_dim: int = 64
    lid_dim: int = 8
    use_language_constraint: bool = True

    def to_dict(self):
        return dict(self.__dict__)


class TransducerModel:
    """Encoder, prediction, and joint networks plus the embedding table.

    The embedding table has vocab_size + 1 rows; the extra final row is the
    learned sequence-start symbol fed to the prediction network before any
    label. ``lang_codes[i]`` holds the language attribute of vocabulary entry
    i (0 Mandarin, 1 English, 2 Neutral).
    """

    def __init__(self, config: ModelConfig, lang_codes: np.ndarray,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        if len(lang_codes) != config.vocab_size:
            raise ShapeError(f"lang_codes has length {len(lang_codes)}, expected "
                             f"vocab_size {config.vocab_size}")
        self.config = config
        self.lang_codes = np.asarray(lang_codes, dtype=np.int8)
        c = config
        if rng is None:
            self.encoder = [nn.zero_lstm(c.feat_dim if i == 0 else c.enc_dim, c.enc_dim, dtype)
                            for i in range(c.enc_layers)]
            pred_in = c.emb_dim + c.lid_dim
            self.prediction = [nn.zero_lstm(pred_in if i == 0 else c.pred_dim, c.pred_dim, dtype)
                               for i in range(c.pred_layers)]
            self.joint_w1 = np.zeros((c.enc_dim + c.pred_dim, c.joint_dim), dtype=dtype)
            self.out_w = np.zeros((c.joint_dim, c.vocab_size), dtype=dtype)
            self.embedding = np.zeros((c.vocab_size + 1, c.emb_dim), dtype=dtype)
        else:
            self.encoder = [nn.init_lstm(c.feat_dim if i == 0 else c.enc_dim, c.enc_dim, rng, dtype)
                            for i in range(c.enc_layers)]
            pred_in = c.emb_dim + c.lid_dim
            self.prediction = [nn.init_lstm(pred_in if i == 0 else c.pred_dim, c.pred_dim, rng, dtype)
                               for i in range(c.pred_layers)]
            self.joint_w1 = nn.uniform_init(c.enc_dim + c.pred_dim, c.joint_dim, rng, dtype)
            self.out_w = nn.uniform_init(c.joint_dim, c.vocab_size, rng, dtype)
            self.embedding = nn.uniform_init(c.vocab_size + 1, c.emb_dim, rng, dtype)
        self.joint_b1 = np.zeros(c.joint_dim, dtype=dtype)
        self.out_b = np.zeros(c.vocab_size, dtype=dtype)

    @property
    def start_id(self) -> int:
        return self.config.vocab_size

    def language_vector(self, code: int) -> np.ndarray:
        """Fixed constraint vector per language: +1s English, -1s Mandarin, 0s Neutral."""
        v = np.zeros(self.config.lid_dim)
        if self.config.use_language_constraint:
            if code == _LANG_CODE[Lang.MANDARIN]:
                v -= 1.0
            elif code == _LANG_CODE[Lang.ENGLISH]:
                v += 1.0
        return v

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.encoder):
            out[f"encoder.{i}.w"] = layer.w
            out[f"encoder.{i}.b"] = layer.b
        for i, layer in enumerate(self.prediction):
            out[f"prediction.{i}.w"] = layer.w
            out[f"prediction.{i}.b"] = layer.b
        out["joint_w1"] = self.joint_w1
        out["joint_b1"] = self.joint_b1
        out["out_w"] = self.out_w
        out["out_b"] = self.out_b
        out["embedding"] = self.embedding
        return out


def model_from_vocab(config: ModelConfig, vocab: Vocabulary,
                     rng: np.random.Generator | None = None,
                     dtype=np.float64) -> TransducerModel:
    codes = np.array([_LANG_CODE[vocab.lang(i)] for i in range(len(vocab))], dtype=np.int8)
    # Blank and language IDs keep their own attrs for decoding, but the blank
    # embeds with the neutral vector regardless.
    return TransducerModel(config, codes, rng, dtype)


def embed_with_language_constraint(model: TransducerModel, token_id: int) -> np.ndarray:
    """Embedding row concatenated with the symbol's fixed language vector.

    The start symbol (id == vocab_size) and the blank always get the neutral
    vector; <chn> gets the Mandarin vector and <eng> the English one.
    """
    if not 0 <= token_id <= model.config.vocab_size:
        raise IndexError(f"token id {token_id} out of range for vocab of "
                         f"{model.config.vocab_size} (+1 start)")
    if token_id == model.start_id or token_id == BLANK_ID:
        code = _LANG_CODE[Lang.NEUTRAL]
    else:
        code = int(model.lang_codes[token_id])
    emb = np.asarray(model.embedding[token_id], dtype=np.float64)
    return np.concatenate([emb, model.language_vector(code)])


def joint_logits(model: TransducerModel, enc_state: np.ndarray,
                 pred_state: np.ndarray) -> np.ndarray:
    """z = W2 tanh(W1 [h_enc ; p_pred] + b1) + b2 over the vocabulary."""
    enc_state = np.asarray(enc_state, dtype=np.float64)
    pred_state = np.asarray(pred_state, dtype=np.float64)
    c = model.config
    if enc_state.shape != (c.enc_dim,):
        raise ShapeError(f"enc_state has shape {enc_state.shape}, expected ({c.enc_dim},)")
    if pred_state.shape != (c.pred_dim,):
        raise ShapeError(f"pred_state has shape {pred_state.shape}, expected ({c.pred_dim},)")
    hidden = np.tanh(np.concatenate([enc_state, pred_state]) @ np.asarray(model.joint_w1, dtype=np.float64)
                     + model.joint_b1)
    return hidden @ np.asarray(model.out_w, dtype=np.float64) + model.out_b


# ---------------------------------------------------------------------------
# Lattice loss
# ---------------------------------------------------------------------------


@dataclass
class AlignmentLattice:
    """Forward/backward log-probability grids over the (T, U+1) node lattice."""

    T: int
    U: int
    log_alpha: np.ndarray       # (T, U+1)
    log_beta: np.ndarray        # (T, U+1)
    blank_logp: np.ndarray      # (T, U+1)
    label_logp: np.ndarray      # (T, U) log-prob of the next target at each node
    log_like_forward: float
    log_like_backward: float


def _logaddexp(a: float, b: float) -> float:
    if a == _LOG_ZERO:
        return b
    if b == _LOG_ZERO:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def _validate_loss_inputs(log_probs, targets, blank):
    log_probs = np.asarray(log_probs, dtype=np.float64)
    if log_probs.ndim != 3:
        raise ShapeError(f"log_probs has shape {log_probs.shape}, expected (T, U+1, V)")
    T, U_plus_1, V = log_probs.shape
    U = U_plus_1 - 1
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if T < 1:
        raise DomainError("rnnt loss: need at least one frame")
    if len(targets) != U:
        raise ShapeError(f"targets has length {len(targets)}, log_probs imply U={U}")
    if U > 0 and np.any(targets == blank):
        raise DomainError("rnnt loss: targets must not contain the blank id")
    if U > 0 and (targets.min() < 0 or targets.max() >= V):
        raise DomainError("rnnt loss: target id out of vocabulary range")
    if not np.all(np.isfinite(log_probs)):
        raise DomainError("rnnt loss: non-finite log-probability")
    return log_probs, targets, T, U, V


def build_lattice(log_probs: np.ndarray, targets, blank: int = BLANK_ID) -> AlignmentLattice:
    """Exact forward/backward DP over the alignment lattice, in log space."""
    log_probs, targets, T, U, V = _validate_loss_inputs(log_probs, targets, blank)
    lpb = log_probs[:, :, blank].tolist()
    if U > 0:
        lpl = log_probs[:, np.arange(U), targets].tolist()
    else:
        lpl = [[] for _ in range(T)]

    alpha = [[_LOG_ZERO] * (U + 1) for _ in range(T)]
    alpha[0][0] = 0.0
    for u in range(1, U + 1):
        alpha[0][u] = alpha[0][u - 1] + lpl[0][u - 1]
    for t in range(1, T):
        alpha[t][0] = alpha[t - 1][0] + lpb[t - 1][0]
        for u in range(1, U + 1):
            alpha[t][u] = _logaddexp(alpha[t - 1][u] + lpb[t - 1][u],
                                     alpha[t][u - 1] + lpl[t][u - 1])

    beta = [[_LOG_ZERO] * (U + 1) for _ in range(T)]
    beta[T - 1][U] = lpb[T - 1][U]
    for u in range(U - 1, -1, -1):
        beta[T - 1][u] = lpl[T - 1][u] + beta[T - 1][u + 1]
    for t in range(T - 2, -1, -1):
        beta[t][U] = lpb[t][U] + beta[t + 1][U]
        for u in range(U - 1, -1, -1):
            beta[t][u] = _logaddexp(lpb[t][u] + beta[t + 1][u],
                                    lpl[t][u] + beta[t][u + 1])

    return AlignmentLattice(
        T=T, U=U,
        log_alpha=np.array(alpha), log_beta=np.array(beta),
        blank_logp=np.array(lpb), label_logp=np.array(lpl).reshape(T, U),
        log_like_forward=alpha[T - 1][U] + lpb[T - 1][U],
        log_like_backward=beta[0][0],
    )


def rnnt_loss(log_probs: np.ndarray, targets, blank: int = BLANK_ID):
    """Negative log-likelihood of the target sequence and its gradient.

    ``log_probs`` is (T, U+1, V) per-node output log-probabilities. Returns
    (loss, grad) with grad shaped like log_probs; only blank entries and
    next-target entries can be nonzero.
    """
    lat = build_lattice(log_probs, targets, blank)
    T, U = lat.T, lat.U
    ll = lat.log_like_forward
    alpha, beta = lat.log_alpha, lat.log_beta

    grad = np.zeros((T, U + 1, np.asarray(log_probs).shape[2]))
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    # Blank transitions continue at (t+1, u); from the last frame only (T-1, U)
    # terminates, with continuation weight 1.
    cont = np.full((T, U + 1), _LOG_ZERO)
    cont[:T - 1] = beta[1:]
    cont[T - 1, U] = 0.0
    with np.errstate(invalid="ignore"):
        blank_occ = np.exp(alpha + lat.blank_logp + cont - ll)
    blank_occ[np.isnan(blank_occ)] = 0.0
    grad[:, :, blank] = -blank_occ
    if U > 0:
        label_occ = np.exp(alpha[:, :U] + lat.label_logp + beta[:, 1:] - ll)
        label_occ[np.isnan(label_occ)] = 0.0
        tt, uu = np.meshgrid(np.arange(T), np.arange(U), indexing="ij")
        np.subtract.at(grad, (tt.ravel(), uu.ravel(), targets[uu.ravel()]),
                       label_occ.ravel())
    return -ll, grad


def enumerate_alignments_oracle(log_probs: np.ndarray, targets,
                                blank: int = BLANK_ID) -> float:
    """Brute-force reference: sum path probabilities over every alignment.

    Generates each interleaving of T blanks and the U labels whose final
    symbol is a blank (the lattice termination move) and log-sum-exps the
    path scores. Guarded to T <= 6, U <= 4.
    """
    log_probs, targets, T, U, V = _validate_loss_inputs(log_probs, targets, blank)
    if T > 6 or U > 4:
        raise SizeError(f"enumeration oracle limited to T<=6, U<=4, got T={T} U={U}")
    total = _LOG_ZERO
    for label_slots in itertools.combinations(range(T + U - 1), U):
        slots = set(label_slots)
        t = u = 0
        score = 0.0
        for pos in range(T + U):
            if pos in slots:
                score += log_probs[t, u, targets[u]]
                u += 1
            else:
                score += log_probs[t, u, blank]
                t += 1
        total = _logaddexp(total, score)
    return -total


def count_alignments(T: int, U: int) -> int:
    return math.comb(T + U - 1, U)


# ---------------------------------------------------------------------------
# Full model forward/backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardResult:
    loss: float
    grads: dict[str, np.ndarray]
    log_probs: np.ndarray = None


def _run_stack(layers, inputs, dropout_rate, training, rng):
    """Forward through stacked LSTM layers with optional inter-layer dropout."""
    caches = []
    masks = []
    x = inputs
    for layer in layers:
        outputs, _, cache = nn.lstm_forward(layer, x)
        caches.append(cache)
        if training and dropout_rate > 0.0:
            mask = nn.dropout_mask(outputs.shape, dropout_rate, rng)
        else:
            mask = None
        masks.append(mask)
        x = outputs if mask is None else outputs * mask
    return x, caches, masks


def _backprop_stack(layers, caches, masks, grad_top):
    """Backward through the stack; returns per-layer grads and input grad."""
    grads = []
    g = grad_top
    for layer, cache, mask in zip(reversed(layers), reversed(caches), reversed(masks)):
        if mask is not None:
            g = g * mask
        layer_grads, g, _ = nn.lstm_backward(cache, g)
        grads.append(layer_grads)
    return list(reversed(grads)), g


def model_forward(model: TransducerModel, features: np.ndarray, targets,
                  training: bool = False, dropout_rate: float = 0.0,
                  rng: np.random.Generator | None = None,
                  return_log_probs: bool = False) -> ForwardResult:
    """Loss and full parameter gradients for one utterance.

    ``features`` is (T, feat_dim); ``targets`` are blank-free vocabulary ids.
    The prediction network consumes the start embedding followed by the
    target embeddings, each concatenated with its language vector.
    """
    c = model.config
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != c.feat_dim:
        raise ShapeError(f"features have shape {features.shape}, expected (T, {c.feat_dim})")
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    U = len(targets)
    T = features.shape[0]
    if training and dropout_rate > 0.0 and rng is None:
        raise DomainError("model_forward: dropout in training mode needs an rng")

    enc_out, enc_caches, enc_masks = _run_stack(
        model.encoder, features, dropout_rate, training, rng)

    pred_ids = [model.start_id] + list(targets)
    pred_in = np.stack([embed_with_language_constraint(model, i) for i in pred_ids])
    pred_out, pred_caches, pred_masks = _run_stack(
        model.prediction, pred_in, dropout_rate, training, rng)

    w1 = np.asarray(model.joint_w1, dtype=np.float64)
    w2 = np.asarray(model.out_w, dtype=np.float64)
    enc_proj = enc_out @ w1[:c.enc_dim]                       # (T, J)
    pred_proj = pred_out @ w1[c.enc_dim:]                     # (U+1, J)
    hidden = np.tanh(enc_proj[:, None, :] + pred_proj[None, :, :]
                     + np.asarray(model.joint_b1, dtype=np.float64))
    logits = hidden @ w2 + np.asarray(model.out_b, dtype=np.float64)
    log_probs = nn.log_softmax(logits)

    loss, dlogp = rnnt_loss(log_probs, targets)

    # Softmax backward, then the joint affine pair.
    dz = dlogp - np.exp(log_probs) * dlogp.sum(axis=-1, keepdims=True)
    flat_hidden = hidden.reshape(-1, c.joint_dim)
    flat_dz = dz.reshape(-1, c.vocab_size)
    d_out_w = flat_hidden.T @ flat_dz
    d_out_b = flat_dz.sum(axis=0)
    d_hidden = (dz @ w2.T) * (1.0 - hidden * hidden)
    d_joint_b1 = d_hidden.sum(axis=(0, 1))
    d_enc_proj = d_hidden.sum(axis=1)
    d_pred_proj = d_hidden.sum(axis=0)
    d_w1 = np.concatenate([enc_out.T @ d_enc_proj, pred_out.T @ d_pred_proj], axis=0)
    d_enc_out = d_enc_proj @ w1[:c.enc_dim].T
    d_pred_out = d_pred_proj @ w1[c.enc_dim:].T

    enc_grads, _ = _backprop_stack(model.encoder, enc_caches, enc_masks, d_enc_out)
    pred_grads, d_pred_in = _backprop_stack(model.prediction, pred_caches, pred_masks,
                                            d_pred_out)

    d_embedding = np.zeros_like(np.asarray(model.embedding, dtype=np.float64))
    for row, token_id in enumerate(pred_ids):
        d_embedding[token_id] += d_pred_in[row, :c.emb_dim]

    grads = {}
    for i, g in enumerate(enc_grads):
        grads[f"encoder.{i}.w"] = g["w"]
        grads[f"encoder.{i}.b"] = g["b"]
    for i, g in enumerate(pred_grads):
        grads[f"prediction.{i}.w"] = g["w"]
        grads[f"prediction.{i}.b"] = g["b"]
    grads["joint_w1"] = d_w1
    grads["joint_b1"] = d_joint_b1
    grads["out_w"] = d_out_w
    grads["out_b"] = d_out_b
    grads["embedding"] = d_embedding
    return ForwardResult(loss=loss, grads=grads,
                         log_probs=log_probs if return_log_probs else None)


# ---------------------------------------------------------------------------
# Incremental evaluation for decoding
# ---------------------------------------------------------------------------


def encode(model: TransducerModel, features: np.ndarray) -> np.ndarray:
    """Encoder outputs for decoding; no dropout, no caches kept."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.feat_dim:
        raise ShapeError(f"features have shape {x.shape}, expected "
                         f"(T, {model.config.feat_dim})")
    for layer in model.encoder:
        x, _, _ = nn.lstm_forward(layer, x)
    return x


def prediction_step(model: TransducerModel, token_id: int, state):
    """Advance the prediction network by one token; state is per-layer (h, c)."""
    x = embed_with_language_constraint(model, token_id)
    if state is None:
        state = [None] * len(model.prediction)
    new_state = []
    for layer, st in zip(model.prediction, state):
        h, c = nn.lstm_step(layer, x, st)
        new_state.append((h, c))
        x = h
    return x, new_state


def prediction_start(model: TransducerModel):
    """Prediction output/state after consuming the sequence-start symbol."""
    return prediction_step(model, model.start_id, None)


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"CSRT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, magic: bytes, meta: dict, tensors: dict[str, np.ndarray]):
    """Binary container: magic, u32 version, u32 header length, JSON header,
    then raw little-endian float32 data for each tensor in header order."""
    header = dict(meta)
    header["tensors"] = [{"name": name, "shape": list(arr.shape)}
                         for name, arr in tensors.items()]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for arr in tensors.values():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, magic: bytes):
    with open(path, "rb") as f:
        got = f.read(4)
        if got != magic:
            raise DataError(f"{path}: bad magic {got!r}, expected {magic!r}")
        version, header_len = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(header_len).decode("utf-8"))
        tensors = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(4 * count)
            if len(raw) != 4 * count:
                raise DataError(f"{path}: truncated tensor {spec['name']}")
            tensors[spec["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        trailing = f.read(1)
        if trailing:
            raise DataError(f"{path}: trailing bytes after declared tensors")
    return header, tensors


def save_model(path, model: TransducerModel, vocab_hash: str, extra_meta: dict = None,
               extra_tensors: dict[str, np.ndarray] = None):
    meta = {
        "kind": "transducer",
        "config": model.config.to_dict(),
        "lang_codes": [int(x) for x in model.lang_codes],
        "vocab_hash": vocab_hash,
    }
    if extra_meta:
        meta.update(extra_meta)
    tensors = dict(model.named_params())
    if extra_tensors:
        tensors.update(extra_tensors)
    save_checkpoint(path, MODEL_MAGIC, meta, tensors)


def load_model(path, dtype=np.float32):
    """Rebuild a model from a checkpoint; returns (model, header, extra tensors)."""
    header, tensors = load_checkpoint(path, MODEL_MAGIC)
    config = ModelConfig(**header["config"])
    model = TransducerModel(config, np.array(header["lang_codes"], dtype=np.int8),
                            rng=None, dtype=dtype)
    params = model.named_params()
    extra = {}
    for name, arr in tensors.items():
        if name in params:
            if params[name].shape != arr.shape:
                raise DataError(f"{path}: tensor {name} has shape {arr.shape}, "
                                f"model expects {params[name].shape}")
            params[name][...] = arr.astype(dtype)
        else:
            extra[name] = arr
    return model, header, extra
