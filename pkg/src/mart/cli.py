"""Command-line entry point: ``mart <subcommand> [--flags]``.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numeric failure.
"""

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from mart.errors import MartError, NumericError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(out, name, value, split, seed):
    out.write(json.dumps({"metric": name, "value": value, "split": split, "seed": seed}) + "\n")


def _cmd_crop(args, out):
    from mart.hac import build_tree, format_tree

    out.write(format_tree(build_tree(args.len, args.m, args.n)) + "\n")
    return EXIT_OK


def _cmd_spec(args, out):
    from mart.dsp import load_wav, logmel_for_clip, resample

    buf = load_wav(args.wav)
    if buf.sample_rate != args.sample_rate:
        buf = resample(buf, args.sample_rate)
    end = len(buf) if args.end is None else args.end
    spec = logmel_for_clip(buf.samples, (args.start, end), args.frames, buf.sample_rate)
    text = "\n".join(" ".join(f"{v:.6g}" for v in row) for row in spec.matrix) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def _cmd_synth(args, out):
    from mart.dsp.synth import SynthConfig, synth_corpus, write_corpus

    cfg = SynthConfig(n_tracks=args.tracks, n_cliques=args.cliques, n_classes=args.classes,
                      duration=args.duration, seed=args.seed)
    path = write_corpus(synth_corpus(cfg), args.out)
    out.write(f"{path}\n")
    return EXIT_OK


def _train_config(args):
    from mart.train import TrainConfig, load_config

    cfg = TrainConfig.desk() if args.profile == "desk" else TrainConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    flags = {
        "seed": args.seed, "epochs": args.epochs, "ablation": args.ablation,
        "manifest": args.manifest, "checkpoint_dir": args.checkpoint_dir,
    }
    return dataclasses.replace(cfg, **{k: v for k, v in flags.items() if v is not None})


def _cmd_pretrain(args, out):
    from mart.train import format_config, pretrain

    cfg = _train_config(args).validate()
    if not cfg.manifest:
        raise MartError("pretrain needs a manifest (config key 'manifest' or --manifest)")
    result = pretrain(cfg, resume=args.resume, log_path=args.log)
    for entry in result.history:
        out.write(json.dumps(entry) + "\n")
    if args.dump_config:
        out.write(format_config(cfg))
    return EXIT_OK


def _cmd_embed(args, out):
    from mart.dsp.synth import read_manifest
    from mart.eval import embed, write_embeddings
    from mart.model import MARTModel
    from mart.train import load_checkpoint, restore_model

    ckpt = load_checkpoint(args.checkpoint)
    model = restore_model(MARTModel.from_config(ckpt.config), ckpt)
    emb = embed(model, read_manifest(args.manifest).tracks, ckpt.config)
    write_embeddings(args.out, emb)
    out.write(f"{len(emb)} embeddings of dim {emb.dim} -> {args.out}\n")
    return EXIT_OK


def _aligned(args):
    from mart.dsp.synth import read_manifest
    from mart.eval import read_embeddings

    emb = read_embeddings(args.embeddings)
    corpus = read_manifest(args.manifest)
    row = {tid: i for i, tid in enumerate(emb.ids)}
    missing = [t.track_id for t in corpus.tracks if t.track_id not in row]
    if missing:
        raise MartError(f"{len(missing)} manifest tracks have no embedding (e.g. {missing[0]})")
    order = [row[t.track_id] for t in corpus.tracks]
    return emb.vectors[order], corpus


def _cmd_probe(args, out):
    from mart.eval import linear_probe, split_indices

    x, corpus = _aligned(args)
    split = split_indices(len(corpus.tracks), np.random.default_rng(args.seed))
    res = linear_probe(x, corpus.tag_matrix(), split, epochs=args.epochs,
                       patience=args.patience, lr=args.lr, seed=args.seed)
    _emit(out, "roc_auc", res.roc_auc, "test", args.seed)
    _emit(out, "pr_auc", res.pr_auc, "test", args.seed)
    _emit(out, "roc_auc", res.best_val_roc_auc, "val", args.seed)
    return EXIT_OK


def _cmd_retrieve(args, out):
    from mart.eval import retrieval_eval

    x, corpus = _aligned(args)
    ids = [t.track_id for t in corpus.tracks]
    m, p, r = retrieval_eval(x, corpus.cliques(), ids, k=args.k)
    _emit(out, "map", m, "all", args.seed)
    _emit(out, f"p@{args.k}", p, "all", args.seed)
    _emit(out, "mr1", r, "all", args.seed)
    return EXIT_OK


def _cmd_gradcheck(args, out):
    from mart.checks import model_gradcheck

    cfg = _train_config(args)
    rep = model_gradcheck(cfg, batch=args.batch, max_coords=args.max_coords, h=args.step,
                          tolerance=args.tolerance, seed=args.seed)
    out.write(f"checked {rep.checked} coordinates, max relative error {rep.max_rel_error:.3e}\n")
    if rep.kinked:
        out.write(f"{len(rep.kinked)} stencils straddle a ReLU/max-pool kink; "
                  f"rechecked at a smaller step, max relative error {rep.kink_max_error:.3e}\n")
    out.write(("PASS" if rep.passed else "FAIL") + f" (tolerance {rep.tolerance:g})\n")
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def _cmd_selftest(args, out):
    from mart.selftest import run_all

    return EXIT_OK if run_all(out) == 0 else EXIT_NUMERIC


def build_parser():
    p = _Parser(prog="mart", description="Hierarchical part-whole contrastive audio pretraining.")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--seed", type=int, default=None if name in ("pretrain", "gradcheck") else 0,
                        help="random seed (pretrain/gradcheck: overrides the config)")
        sp.set_defaults(func=fn)
        return sp

    sp = cmd("crop", _cmd_crop, "print the HAC tree as level, index, start, end")
    sp.add_argument("--len", type=int, required=True, help="root length in samples")
    sp.add_argument("--m", type=int, default=2, help="branching factor M")
    sp.add_argument("--n", type=int, default=4, help="number of levels N")

    sp = cmd("spec", _cmd_spec, "print or save the log-mel matrix of a WAV span")
    sp.add_argument("--wav", required=True, help="input WAV file")
    sp.add_argument("--start", type=int, default=0, help="first sample of the span")
    sp.add_argument("--end", type=int, default=None, help="end sample (exclusive); default file end")
    sp.add_argument("--frames", type=int, default=128, help="output frames T")
    sp.add_argument("--sample-rate", type=int, default=16000, help="resample to this rate first")
    sp.add_argument("--out", default=None, help="write the matrix here instead of stdout")

    sp = cmd("synth", _cmd_synth, "generate the synthetic tagged corpus with cover cliques")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--tracks", type=int, default=100, help="number of tracks")
    sp.add_argument("--cliques", type=int, default=25, help="number of cover cliques")
    sp.add_argument("--classes", type=int, default=4, help="number of tags")
    sp.add_argument("--duration", type=float, default=4.0, help="track length in seconds")

    def train_flags(sp):
        sp.add_argument("--config", default=None, help="key = value config file (overrides profile)")
        sp.add_argument("--profile", choices=("desk", "full"), default="desk",
                        help="desk: small widths for one CPU; full: 512-wide model")
        sp.add_argument("--epochs", type=int, default=None, help="override epochs")
        sp.add_argument("--ablation", choices=("full", "no_hcl", "no_pwt", "neither"), default=None,
                        help="override the ablation flag")
        sp.add_argument("--manifest", default=None, help="override the manifest path")
        sp.add_argument("--checkpoint-dir", default=None, help="override the checkpoint directory")

    sp = cmd("pretrain", _cmd_pretrain, "run contrastive pretraining")
    train_flags(sp)
    sp.add_argument("--resume", default=None, help="checkpoint to resume from")
    sp.add_argument("--log", default=None, help="loss log path (default: <checkpoint-dir>/loss.log)")
    sp.add_argument("--dump-config", action="store_true", help="print the effective config at the end")

    sp = cmd("embed", _cmd_embed, "write MARTEMB1 embeddings for every manifest track")
    sp.add_argument("--checkpoint", required=True, help="MARTCKPT file")
    sp.add_argument("--manifest", required=True, help="track manifest")
    sp.add_argument("--out", required=True, help="output embeddings file")

    sp = cmd("probe", _cmd_probe, "linear-probe tags on frozen embeddings")
    sp.add_argument("--embeddings", required=True, help="MARTEMB1 file")
    sp.add_argument("--manifest", required=True, help="track manifest with tags")
    sp.add_argument("--epochs", type=int, default=500, help="maximum probe epochs")
    sp.add_argument("--patience", type=int, default=10, help="early-stopping patience")
    sp.add_argument("--lr", type=float, default=1e-3, help="probe learning rate")

    sp = cmd("retrieve", _cmd_retrieve, "clique retrieval metrics (MAP, P@k, MR1)")
    sp.add_argument("--embeddings", required=True, help="MARTEMB1 file")
    sp.add_argument("--manifest", required=True, help="track manifest with cliques")
    sp.add_argument("--k", type=int, default=10, help="cutoff for precision@k")

    sp = cmd("gradcheck", _cmd_gradcheck, "finite-difference check of the full 64-bit model")
    train_flags(sp)
    sp.add_argument("--batch", type=int, default=2, help="batch size of the check")
    sp.add_argument("--max-coords", type=int, default=6, help="coordinates probed per tensor")
    sp.add_argument("--step", type=float, default=1e-5, help="finite-difference step h")
    sp.add_argument("--tolerance", type=float, default=1e-4, help="maximum relative error")

    cmd("selftest", _cmd_selftest, "run the built-in example assertions")
    return p


def run(argv=None, out=None):
    """Parse ``argv`` and run the subcommand; returns the exit code."""
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except (NumericError, FloatingPointError) as exc:
        print(f"mart: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MartError, ValueError, OSError) as exc:
        print(f"mart: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())
