"""Command-line pipelines: synth, tag, bpe-train, train, lm-train, decode,
rescore, score, selftest.

Exit codes: 0 success, 1 usage error, 2 data/domain error, 3 numerical
failure. Every command that writes an output directory also writes the fully
resolved config.json used for the run.
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .bpe import bpe_learn, load_bpe, save_bpe
from .config import RunConfig, load_config
from .decoder import beam_search_decode, read_nbest, write_nbest
from .errors import CsrnntError, DataError, DomainError, NumericalError
from .lm import (load_ngram, load_rnnlm, ngram_train, rescore_nbest,
                 rnnlm_train, save_ngram, save_rnnlm, RNNLM_MAGIC)
from .metrics import mer_score
from .selftest import run_all
from .synth import (SynthConfig, gen_utterances, perturb_features,
                    read_features, read_manifest, write_features,
                    write_manifest)
from .train import encode_targets, encode_units, train_transducer
from .transducer import load_model
from .vocab import (Lang, Vocabulary, build_vocab, classify_token_language,
                    detokenize, read_corpus, strip_language_tags, tag_tokens,
                    write_corpus)

_SET_SEED_STRIDE = 1_000_003  # keeps per-utterance XOR seeds disjoint across sets


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _add_config_flags(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--preset", choices=["desk", "seame-paper"],
                     help="configuration preset (default desk)")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="SECTION.KEY=VALUE", help="override a config value")


def _resolved_config(args) -> RunConfig:
    return load_config(args.config, args.preset, args.overrides)


def _echo_config(config: RunConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(config.to_json(), encoding="utf-8")


def _load_feature_set(manifest_path) -> dict[str, np.ndarray]:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    feats = {}
    for utt_id, rel in read_manifest(manifest_path).items():
        path = Path(rel)
        feats[utt_id] = read_features(path if path.is_absolute() else base / path)
    return feats


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config = _resolved_config(args)
    out = Path(args.out)
    feat_dir = out / "feats"
    feat_dir.mkdir(parents=True, exist_ok=True)

    sets = [("train", config.synth.num_utterances, 0),
            ("dev", config.num_dev, 1),
            ("test", config.num_test, 2)]
    for name, count, offset in sets:
        synth = SynthConfig(**{**config.synth.to_dict(),
                               "num_utterances": count,
                               "seed": config.synth.seed + offset * _SET_SEED_STRIDE})
        utts = gen_utterances(synth, prefix=f"{name}_")
        plain = {}
        tagged = {}
        manifest = {}
        for utt in utts:
            plain[utt.utt_id] = utt.tokens
            tagged[utt.utt_id] = tag_tokens(utt.tokens)
            write_features(feat_dir / f"{utt.utt_id}.feat", utt.features)
            manifest[utt.utt_id] = f"feats/{utt.utt_id}.feat"
        write_corpus(out / f"{name}.txt", plain)
        write_corpus(out / f"{name}_tagged.txt", tagged)
        write_manifest(out / f"{name}_manifest.tsv", manifest)

        if name == "train" and args.augment:
            aug_plain = dict(plain)
            aug_tagged = dict(tagged)
            aug_manifest = dict(manifest)
            for rate, suffix in ((0.9, "sp09"), (1.1, "sp11")):
                for utt in utts:
                    aug_id = f"{utt.utt_id}_{suffix}"
                    write_features(feat_dir / f"{aug_id}.feat",
                                   perturb_features(utt.features, rate))
                    aug_plain[aug_id] = utt.tokens
                    aug_tagged[aug_id] = tag_tokens(utt.tokens)
                    aug_manifest[aug_id] = f"feats/{aug_id}.feat"
            write_corpus(out / "train_aug.txt", aug_plain)
            write_corpus(out / "train_aug_tagged.txt", aug_tagged)
            write_manifest(out / "train_aug_manifest.tsv", aug_manifest)

    _echo_config(config, out)
    print(f"wrote {', '.join(name for name, _, _ in sets)} sets to {out}")
    return 0


# ---------------------------------------------------------------------------
# tag / bpe-train / lm-train
# ---------------------------------------------------------------------------


def cmd_tag(args) -> int:
    corpus = read_corpus(args.input)
    write_corpus(args.out, {utt: tag_tokens(tokens) for utt, tokens in corpus.items()})
    return 0


def cmd_bpe_train(args) -> int:
    config = _resolved_config(args)
    corpus = read_corpus(args.input)
    english = Counter()
    for tokens in corpus.values():
        for tok in strip_language_tags(tokens):
            if classify_token_language(tok) == Lang.ENGLISH:
                english[tok] += 1
    if not english:
        raise DataError(f"{args.input}: no English tokens to learn BPE from")
    merges = args.merges if args.merges is not None else config.bpe_merges
    model = bpe_learn(english, merges)
    save_bpe(model, args.out)
    print(f"learned {len(model.merges)} merges from {sum(english.values())} tokens")
    return 0


def cmd_lm_train(args) -> int:
    config = _resolved_config(args)
    corpus = read_corpus(args.corpus)
    bpe = load_bpe(args.bpe)
    unit_corpus = [encode_units(bpe, tokens) for tokens in corpus.values()]
    if args.type == "ngram":
        model = ngram_train(unit_corpus, order=config.ngram_order,
                            discount=config.ngram_discount)
        save_ngram(model, args.out)
        print(f"{args.out}: {config.ngram_order}-gram over {len(model.vocab)} units")
    else:
        lm = rnnlm_train(unit_corpus, emb_dim=32, hidden_dim=64,
                         epochs=args.epochs, lr=0.01, seed=config.train.seed)
        save_rnnlm(lm, args.out)
        print(f"{args.out}: recurrent LM over {len(lm.vocab)} units")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _paired_data(corpus, features, vocab, bpe):
    data = []
    for utt_id, tokens in corpus.items():
        if utt_id not in features:
            raise DataError(f"no features for utterance {utt_id}")
        data.append((features[utt_id], encode_targets(vocab, bpe, tokens)))
    return data


def cmd_train(args) -> int:
    config = _resolved_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = read_corpus(args.corpus)
    features = _load_feature_set(args.manifest)
    bpe = load_bpe(args.bpe)
    dev_corpus = read_corpus(args.dev_corpus) if args.dev_corpus else {}
    # The symbol inventory covers train and dev text so that held-out targets
    # are always encodable.
    vocab = build_vocab(list(corpus.values()) + list(dev_corpus.values()), bpe)
    vocab.save(out / "vocab.tsv")

    train_data = _paired_data(corpus, features, vocab, bpe)
    if dev_corpus:
        dev_features = _load_feature_set(args.dev_manifest)
        dev_data = _paired_data(dev_corpus, dev_features, vocab, bpe)
    else:
        dev_data = []

    best_path, history = train_transducer(config, vocab, train_data, dev_data,
                                          out, log=print, resume=args.resume)
    with open(out / "train_log.tsv", "w", encoding="utf-8") as f:
        f.write("epoch\ttrain_loss\tval_loss\tlr\n")
        for stats in history:
            f.write(f"{stats.epoch}\t{stats.train_loss!r}\t{stats.val_loss!r}"
                    f"\t{stats.lr!r}\n")
    _echo_config(config, out)
    print(f"best checkpoint: {best_path}")
    return 0


# ---------------------------------------------------------------------------
# decode / rescore / score
# ---------------------------------------------------------------------------


def cmd_decode(args) -> int:
    config = _resolved_config(args)
    if args.lambda_mode:
        config.decode.lambda_mode = args.lambda_mode
    if args.lam is not None:
        config.decode.lam = args.lam
    if args.beam is not None:
        config.decode.beam_size = args.beam
    config.decode.__post_init__()

    model, header, _ = load_model(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    if header["vocab_hash"] != vocab.sha256():
        raise DataError(
            f"vocabulary hash mismatch: checkpoint {args.checkpoint} was trained "
            f"with vocab {header['vocab_hash'][:12]}..., but {args.vocab} hashes "
            f"to {vocab.sha256()[:12]}...; decode refused")
    features = _load_feature_set(args.manifest)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nbest = {}
    best_lines = {}
    for utt_id, feats in features.items():
        hyps = beam_search_decode(model, feats, config.decode, vocab)
        nbest[utt_id] = hyps
        surfaces = [vocab.surface(i) for i in hyps[0].tokens]
        best_lines[utt_id] = detokenize(surfaces)
    write_nbest(out / "nbest.tsv", nbest, vocab)
    write_corpus(out / "1best.txt", best_lines)
    _echo_config(config, out)
    print(f"decoded {len(features)} utterances to {out}")
    return 0


def _load_lm(path):
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == RNNLM_MAGIC:
        return load_rnnlm(path)
    return load_ngram(path)


def cmd_rescore(args) -> int:
    config = _resolved_config(args)
    if args.lm_weight is not None:
        config.rescore.lm_weight = args.lm_weight
    if args.length_penalty is not None:
        config.rescore.length_penalty = args.length_penalty
    if args.nbest_size is not None:
        config.rescore.nbest = args.nbest_size
    config.rescore.__post_init__()

    nbest = read_nbest(args.nbest)
    if not nbest:
        raise DataError(f"{args.nbest}: no hypotheses to rescore")
    lm = _load_lm(args.lm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    best_lines = {}
    for utt_id, hyps in nbest.items():
        reranked = rescore_nbest(hyps, lm, config.rescore)
        best_lines[utt_id] = detokenize(reranked[0][2])
    write_corpus(out / "1best.txt", best_lines)
    _echo_config(config, out)
    print(f"rescored {len(nbest)} utterances to {out}")
    return 0


def cmd_score(args) -> int:
    refs = read_corpus(args.refs)
    hyps = read_corpus(args.hyps)
    hyps = {utt: strip_language_tags(tokens) for utt, tokens in hyps.items()}
    report = mer_score(refs, hyps)
    text = str(report)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_all(print) else 3


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="csrnnt",
                     description="Code-switching RNN-transducer pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic bilingual corpus")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--augment", action="store_true",
                   help="also write a 3x speed-perturbed training set")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("tag", help="insert language-ID tags into a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_tag)

    p = sub.add_parser("bpe-train", help="learn BPE merges from English tokens")
    _add_config_flags(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--merges", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bpe_train)

    p = sub.add_parser("lm-train", help="train a rescoring language model")
    _add_config_flags(p)
    p.add_argument("--corpus", required=True, help="tagged training transcripts")
    p.add_argument("--bpe", required=True)
    p.add_argument("--type", choices=["ngram", "rnnlm"], default="ngram")
    p.add_argument("--epochs", type=int, default=5, help="rnnlm epochs")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_lm_train)

    p = sub.add_parser("train", help="train the transducer")
    _add_config_flags(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--dev-corpus")
    p.add_argument("--dev-manifest")
    p.add_argument("--bpe", required=True)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("decode", help="beam-search decode an evaluation set")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--lambda-mode", choices=["off", "fixed", "prob"])
    p.add_argument("--lam", type=float)
    p.add_argument("--beam", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("rescore", help="rerank an N-best file with an LM")
    _add_config_flags(p)
    p.add_argument("--nbest", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--lm-weight", type=float)
    p.add_argument("--length-penalty", type=float)
    p.add_argument("--nbest-size", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_rescore)

    p = sub.add_parser("score", help="mixed error rate of hypotheses vs references")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("selftest", help="run the built-in oracle suites")
    p.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except (DataError, DomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CsrnntError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
