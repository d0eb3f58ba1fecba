"""Minibatch training of the transducer with validation-plateau LR halving.

Parameters and optimizer moments are held in float32, computation runs in
float64, and both are checkpointed losslessly, so resuming from the last
checkpoint reproduces the remaining epochs bit for bit. All stochastic
streams (shuffling, dropout) derive from (seed, epoch), never from global
state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .bpe import BpeModel, bpe_encode
from .config import RunConfig
from .errors import DataError, NumericalError
from .transducer import (ModelConfig, TransducerModel, load_model,
                         model_forward, model_from_vocab, save_model)
from .vocab import CHN_TAG, ENG_TAG, Lang, Vocabulary, classify_token_language, \
    is_cjk


def encode_units(bpe_model: BpeModel, tokens: list[str]) -> list[str]:
    """Map words to model units: tags kept, Mandarin split, English BPE-encoded."""
    units = []
    for tok in tokens:
        if tok in (CHN_TAG, ENG_TAG):
            units.append(tok)
            continue
        lang = classify_token_language(tok)
        if lang == Lang.MANDARIN and all(is_cjk(ch) for ch in tok):
            units.extend(tok)
        elif lang == Lang.ENGLISH:
            units.extend(bpe_encode(bpe_model, tok))
        else:
            raise DataError(f"encode_units: cannot encode token {tok!r}")
    return units


def encode_targets(vocab: Vocabulary, bpe_model: BpeModel,
                   tokens: list[str]) -> list[int]:
    return [vocab.id_of(u) for u in encode_units(bpe_model, tokens)]


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def evaluate_loss(model: TransducerModel, data: list[tuple[np.ndarray, list[int]]]) -> float:
    total = 0.0
    for features, targets in data:
        total += model_forward(model, features, targets).loss
    return total / max(1, len(data))


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch])


def train_transducer(config: RunConfig, vocab: Vocabulary,
                     train_data: list[tuple[np.ndarray, list[int]]],
                     dev_data: list[tuple[np.ndarray, list[int]]],
                     out_dir, log=None, resume=None):
    """Train and checkpoint; returns (best checkpoint path, history).

    ``train_data``/``dev_data`` are (features, target_ids) pairs in a fixed
    order. Writes best.ckpt (lowest validation loss) and last.ckpt (for
    resuming) into out_dir.
    """
    from pathlib import Path
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tr = config.train
    feat_dim = train_data[0][0].shape[1]
    vocab_hash = vocab.sha256()

    if resume is not None:
        model, header, extra = load_model(resume)
        if header["vocab_hash"] != vocab_hash:
            raise DataError(f"resume checkpoint vocabulary hash mismatch: "
                            f"{header['vocab_hash']} vs {vocab_hash}")
        state = nn.AdamState(lr=header["train_state"]["lr"],
                             step=header["train_state"]["adam_step"])
        for name in model.named_params():
            state.m[name] = extra[f"opt.m.{name}"].astype(np.float32)
            state.v[name] = extra[f"opt.v.{name}"].astype(np.float32)
        start_epoch = header["train_state"]["epoch"] + 1
        best_val = header["train_state"]["best_val"]
    else:
        model_config = ModelConfig(feat_dim=feat_dim, vocab_size=len(vocab),
                                   **config.model.__dict__)
        model = model_from_vocab(model_config, vocab,
                                 np.random.default_rng(tr.seed), dtype=np.float32)
        state = nn.AdamState(lr=tr.learning_rate)
        start_epoch = 0
        best_val = math.inf

    params = model.named_params()
    history: list[EpochStats] = []
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"

    def checkpoint(path, epoch, val):
        extra_tensors = {}
        for name in params:
            extra_tensors[f"opt.m.{name}"] = np.asarray(
                state.m.get(name, np.zeros_like(params[name])), dtype=np.float32)
            extra_tensors[f"opt.v.{name}"] = np.asarray(
                state.v.get(name, np.zeros_like(params[name])), dtype=np.float32)
        meta = {"train_state": {"epoch": epoch, "lr": state.lr,
                                "adam_step": state.step, "best_val": best_val},
                "val_loss": val}
        save_model(path, model, vocab_hash, extra_meta=meta,
                   extra_tensors=extra_tensors)

    n = len(train_data)
    for epoch in range(start_epoch, tr.epochs):
        rng = _epoch_rng(tr.seed, epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        for batch_start in range(0, n, tr.batch_size):
            batch = order[batch_start:batch_start + tr.batch_size]
            grads_sum = None
            batch_loss = 0.0
            for idx in batch:
                features, targets = train_data[idx]
                result = model_forward(model, features, targets, training=True,
                                       dropout_rate=tr.dropout, rng=rng)
                if not math.isfinite(result.loss):
                    raise NumericalError(
                        f"non-finite loss in epoch {epoch}, batch starting at "
                        f"{batch_start}, utterance index {idx}")
                batch_loss += result.loss
                if grads_sum is None:
                    grads_sum = result.grads
                else:
                    for name in grads_sum:
                        grads_sum[name] += result.grads[name]
            scale = 1.0 / len(batch)
            for name in grads_sum:
                grads_sum[name] *= scale
            nn.adam_step(state, params, grads_sum)
            epoch_loss += batch_loss
        train_loss = epoch_loss / n
        val_loss = evaluate_loss(model, dev_data) if dev_data else train_loss
        if not math.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss in epoch {epoch}")

        improved = val_loss < best_val
        if improved:
            best_val = val_loss
            checkpoint(best_path, epoch, val_loss)
        else:
            state.lr *= 0.5  # plateau: halve when validation fails to improve
        checkpoint(last_path, epoch, val_loss)
        stats = EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                           lr=state.lr)
        history.append(stats)
        if log:
            log(f"epoch {epoch}: train {train_loss:.4f} val {val_loss:.4f} "
                f"lr {state.lr:g}{' *' if improved else ''}")
    if not best_path.exists():
        checkpoint(best_path, tr.epochs - 1, best_val)
    return best_path, history
