"""Command-line front end.

Subcommands: ``features extract``, ``acoustic train|predict|import``,
``lm train-ngram|train-rnn|eval|pca``, ``duration fit|train|eval|trace``,
``decode``, ``evaluate``, ``synth``.

Every written artifact gets a ``.meta.json`` sidecar with the command
line, seed and input-model hashes.  Exit codes: 0 success, 1 usage
error, 2 validation error (bad data), 3 runtime failure.

Report paths (``lm pca``, ``duration trace``, ``evaluate``) render
matplotlib figures next to their delimited outputs when ``--fig`` is
given.
"""

from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import json
import os
import sys

import numpy as np

from . import acoustic, chords, decoder, duration, evaluation, features, lm, synth

DEFAULT_DATA_DIR_ENV = 'CHORDLATTICE_DATA'


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, 'rb') as fh:
        h.update(fh.read())
    return h.hexdigest()[:16]


def _write_meta(out_path, args, model_paths=()):
    meta = {
        'command': ' '.join(sys.argv) if sys.argv else 'chordlattice',
        'args': {k: v for k, v in vars(args).items() if k != 'func'},
        'seed': getattr(args, 'seed', None),
        'model_hashes': {p: _file_hash(p) for p in model_paths if p and os.path.exists(p)},
    }
    with open(str(out_path) + '.meta.json', 'w') as fh:
        json.dump(meta, fh, indent=2, default=str)


def _expand_paths(spec: str) -> list[str]:
    """Comma-separated list of files, directories or glob patterns."""
    paths = []
    for part in spec.split(','):
        part = os.path.expanduser(part.strip())
        if os.path.isdir(part):
            paths.extend(sorted(glob.glob(os.path.join(part, '*'))))
        elif any(ch in part for ch in '*?['):
            paths.extend(sorted(glob.glob(part)))
        elif part:
            paths.append(part)
    if not paths:
        raise FileNotFoundError(f"no files match '{spec}'")
    return paths


def load_lm_model(path):
    with open(path) as fh:
        blob = json.load(fh)
    kind = blob.get('kind', 'ngram')
    if kind == 'ngram':
        return lm.NgramModel.load(path)
    if kind == 'gru-lm':
        return lm.GruLm.load(path)
    raise ValueError(f"unknown language model kind: {kind}")


def load_duration_model(path):
    with open(path) as fh:
        blob = json.load(fh)
    family = blob.get('family')
    if family in ('geometric', 'negbinomial'):
        return duration.load_parametric(path)
    if family == 'gru':
        return duration.GruDuration.load(path)
    raise ValueError(f"unknown duration model family: {family}")


def _read_corpus(path) -> list[list[int]]:
    """One piece per line, space-separated chord labels (already compressed)."""
    pieces = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            seq = [chords.class_from_label(tok) for tok in line.split()]
            seq = [c for c in seq if c != chords.EXCLUDED]
            if seq:
                pieces.append(seq)
    if not pieces:
        raise ValueError(f"empty corpus file: {path}")
    return pieces


def _flags_from_labs(paths, frame_rate: float = 10.0):
    flag_seqs = []
    for p in paths:
        segs = chords.read_lab(p)
        labels = chords.frame_labels(segs, frame_rate)
        flag_seqs.append(duration.change_flags(labels))
    return flag_seqs


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def cmd_features_extract(args):
    audio = features.load_audio(getattr(args, 'in'))
    spec = features.log_filterbank_spectrogram(audio)
    features.save_spectrogram(spec, args.out)
    _write_meta(args.out, args)
    print(f"wrote {spec.frames.shape[0]} frames x {spec.frames.shape[1]} bands to {args.out}")
    return 0


def cmd_acoustic_train(args):
    feature_paths = _expand_paths(args.features)
    lab_paths = _expand_paths(args.labs)
    if len(feature_paths) != len(lab_paths):
        raise ValueError("need as many feature files as lab files")
    specs, labels = [], []
    for fp, lp in zip(feature_paths, lab_paths):
        spec = features.load_spectrogram(fp)
        segs = chords.read_lab(lp)
        labs = chords.frame_labels(segs, spec.frame_rate, spec.frames.shape[0])
        labs = [chords.NO_CHORD if c == chords.EXCLUDED else c for c in labs]
        specs.append(spec)
        labels.append(labs)
    calib = acoustic.CalibrationConfig(tau=args.tau, beta=args.beta)
    clf, curve = acoustic.train_standin(specs, labels, context=args.context,
                                        calibration=calib, epochs=args.epochs,
                                        lr=args.lr, seed=args.seed)
    clf.save(args.out)
    _write_meta(args.out, args)
    print(f"final loss {curve[-1]:.4f}; wrote {args.out}")
    return 0


def cmd_acoustic_predict(args):
    clf = acoustic.FrameClassifier.load(args.model)
    spec = features.load_spectrogram(args.features)
    post = clf.predict(spec, tau=args.tau)
    acoustic.save_posteriors(post, args.out)
    _write_meta(args.out, args, [args.model])
    return 0


def cmd_acoustic_import(args):
    post = acoustic.load_posteriors(getattr(args, 'in'))
    acoustic.save_posteriors(post, args.out)
    _write_meta(args.out, args)
    print(f"validated {post.n_frames} frames")
    return 0


def cmd_lm_train_ngram(args):
    pieces = _read_corpus(args.corpus)
    model = lm.train_ngram([chords.compress(p) for p in pieces], n=args.n,
                           alpha=args.alpha, key_shift=args.key_shift)
    model.save(args.out)
    _write_meta(args.out, args)
    return 0


def cmd_lm_train_rnn(args):
    pieces = [chords.compress(p) for p in _read_corpus(args.corpus)]
    cfg = lm.LmTrainConfig(hidden=args.hidden, embed_dim=args.embed,
                           epochs=args.epochs, batch_size=args.batch_size,
                           lr=args.lr, anneal_from=args.anneal_from,
                           seed=args.seed)
    model, curve = lm.train_gru_lm(pieces, cfg)
    model.save(args.out)
    _write_meta(args.out, args)
    if args.loss_csv:
        np.savetxt(args.loss_csv, np.asarray(curve), delimiter=',')
    print(f"final loss {curve[-1]:.4f}; wrote {args.out}")
    return 0


def cmd_lm_eval(args):
    model = load_lm_model(args.model)
    pieces = [chords.compress(p) for p in _read_corpus(args.corpus)]
    score = lm.avg_log_prob(model, pieces)
    print(f"avg log-prob: {score:.6f}")
    return 0


def cmd_lm_pca(args):
    model = load_lm_model(args.model)
    if not isinstance(model, lm.GruLm):
        raise ValueError("embedding PCA needs a GRU language model")
    coords, eigvals = lm.embedding_pca(model)
    with open(args.out, 'w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(['label', 'pc1', 'pc2'])
        for cls in range(chords.N_CLASSES):
            writer.writerow([chords.label_name(cls), f"{coords[cls, 0]:.8g}",
                             f"{coords[cls, 1]:.8g}"])
    _write_meta(args.out, args, [args.model])
    if args.fig:
        from . import plots
        plots.plot_embedding(coords, args.fig)
    return 0


def cmd_duration_fit(args):
    flag_seqs = _flags_from_labs(_expand_paths(args.labs))
    durations = [d for flags in flag_seqs for d in duration.durations_from_flags(flags)]
    model = duration.fit_mle(durations, family=args.family, max_stages=args.max_stages)
    model.save(args.out)
    _write_meta(args.out, args)
    n = getattr(model, 'n', 1)
    print(f"fitted {args.family}: n={n} p={model.p:.4f}")
    return 0


def cmd_duration_train(args):
    flag_seqs = _flags_from_labs(_expand_paths(args.labs))
    model, curve = duration.train_gru_duration(
        flag_seqs, hidden=args.hidden, epochs=args.epochs,
        batch_size=args.batch_size, lr=args.lr, clip=args.clip, seed=args.seed)
    model.save(args.out)
    _write_meta(args.out, args)
    print(f"final loss {curve[-1]:.4f}; wrote {args.out}")
    return 0


def cmd_duration_eval(args):
    model = load_duration_model(args.model)
    flag_seqs = _flags_from_labs(_expand_paths(args.labs))
    score = duration.avg_duration_log_prob(model, flag_seqs)
    print(f"avg duration log-prob: {score:.6f}")
    return 0


def cmd_duration_trace(args):
    model = load_duration_model(args.model)
    segs = chords.read_lab(args.lab)
    labels = chords.frame_labels(segs, 10.0)
    flags = duration.change_flags(labels)
    trace = duration.hazard_trace(model, flags)
    np.savetxt(args.out, np.column_stack([np.arange(len(trace)) / 10.0, trace]),
               delimiter=',', header='time_s,p_change', comments='')
    _write_meta(args.out, args, [args.model])
    if args.fig:
        from . import plots
        plots.plot_hazard_trace(trace, flags, args.fig)
    return 0


def cmd_decode(args):
    post = acoustic.load_posteriors(args.posteriors)
    lm_model = load_lm_model(getattr(args, 'lm'))
    dur_model = load_duration_model(args.duration)
    config = decoder.BeamConfig(beam_width=args.beam_width,
                                max_per_hash=args.hash_count,
                                hash_length=args.hash_length)
    timeline, score, stats = decoder.beam_decode(post, lm_model, dur_model,
                                                 config, collect_stats=True)
    chords.write_lab(args.out, timeline)
    _write_meta(args.out, args, [getattr(args, 'lm'), args.duration])
    if args.score_json:
        with open(args.score_json, 'w') as fh:
            json.dump({'log_score': score, 'beam_stats': stats}, fh)
    print(f"log score {score:.4f}; wrote {args.out}")
    return 0


def cmd_evaluate(args):
    ref_paths = _expand_paths(args.ref)
    est_paths = _expand_paths(args.est)
    ref_paths = [p for p in ref_paths if p.endswith('.lab')]
    est_paths = [p for p in est_paths if p.endswith('.lab')]
    if len(ref_paths) != len(est_paths):
        raise ValueError("need as many reference as estimate files")
    pairs = [(chords.read_lab(r), chords.read_lab(e))
             for r, e in zip(ref_paths, est_paths)]
    ids = [os.path.splitext(os.path.basename(p))[0] for p in ref_paths]
    report = evaluation.corpus_report(pairs, ids)
    summary = {'root': report.root, 'majmin': report.majmin,
               'segmentation': report.segmentation,
               'segmentation_weighting': 'duration-weighted across songs'}
    print(json.dumps(summary, indent=2))
    if args.out:
        with open(args.out, 'w') as fh:
            json.dump(summary, fh, indent=2)
        _write_meta(args.out, args)
    if args.csv:
        with open(args.csv, 'w', newline='') as fh:
            writer = csv.DictWriter(fh, fieldnames=['song', 'root', 'majmin',
                                                    'segmentation', 'duration'])
            writer.writeheader()
            writer.writerows(report.per_song)
    if args.fig:
        from . import plots
        plots.plot_score_report(report, args.fig)
    return 0


def cmd_synth(args):
    lm_model = load_lm_model(getattr(args, 'lm')) if getattr(args, 'lm') else \
        lm.UniformLm()
    dur_model = load_duration_model(args.duration) if args.duration else \
        duration.GeometricDuration(0.2)
    song_ids = synth.synth_generate(args.out, lm_model, dur_model, args.noise,
                                    args.songs, args.frames, args.seed)
    _write_meta(os.path.join(args.out, 'dataset.json'), args,
                [p for p in (getattr(args, 'lm'), args.duration) if p])
    print(f"wrote {len(song_ids)} songs to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog='chordlattice')
    sub = parser.add_subparsers(dest='command', required=True)

    def add_seed(p):
        p.add_argument('--seed', type=int, default=0)

    feat = sub.add_parser('features').add_subparsers(dest='sub', required=True)
    p = feat.add_parser('extract')
    p.add_argument('--in', required=True)
    p.add_argument('--out', required=True)
    add_seed(p)
    p.set_defaults(func=cmd_features_extract)

    ac = sub.add_parser('acoustic').add_subparsers(dest='sub', required=True)
    p = ac.add_parser('train')
    p.add_argument('--features', required=True)
    p.add_argument('--labs', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--context', type=int, default=15)
    p.add_argument('--tau', type=float, default=1.3)
    p.add_argument('--beta', type=float, default=0.9)
    p.add_argument('--epochs', type=int, default=100)
    p.add_argument('--lr', type=float, default=0.01)
    add_seed(p)
    p.set_defaults(func=cmd_acoustic_train)
    p = ac.add_parser('predict')
    p.add_argument('--model', required=True)
    p.add_argument('--features', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--tau', type=float, default=1.3)
    add_seed(p)
    p.set_defaults(func=cmd_acoustic_predict)
    p = ac.add_parser('import')
    p.add_argument('--in', required=True)
    p.add_argument('--out', required=True)
    add_seed(p)
    p.set_defaults(func=cmd_acoustic_import)

    lmp = sub.add_parser('lm').add_subparsers(dest='sub', required=True)
    p = lmp.add_parser('train-ngram')
    p.add_argument('--corpus', required=True)
    p.add_argument('--n', type=int, default=2)
    p.add_argument('--alpha', type=float, default=1.0)
    p.add_argument('--key-shift', action='store_true')
    p.add_argument('--out', required=True)
    add_seed(p)
    p.set_defaults(func=cmd_lm_train_ngram)
    p = lmp.add_parser('train-rnn')
    p.add_argument('--corpus', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--hidden', type=int, default=512)
    p.add_argument('--embed', type=int, default=16)
    p.add_argument('--epochs', type=int, default=100)
    p.add_argument('--batch-size', type=int, default=4)
    p.add_argument('--lr', type=float, default=0.005)
    p.add_argument('--anneal-from', type=int, default=50)
    p.add_argument('--loss-csv', default=None)
    add_seed(p)
    p.set_defaults(func=cmd_lm_train_rnn)
    p = lmp.add_parser('eval')
    p.add_argument('--model', required=True)
    p.add_argument('--corpus', required=True)
    add_seed(p)
    p.set_defaults(func=cmd_lm_eval)
    p = lmp.add_parser('pca')
    p.add_argument('--model', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--fig', default=None)
    add_seed(p)
    p.set_defaults(func=cmd_lm_pca)

    dur = sub.add_parser('duration').add_subparsers(dest='sub', required=True)
    p = dur.add_parser('fit')
    p.add_argument('--labs', required=True)
    p.add_argument('--family', choices=['geometric', 'negbinomial'],
                   default='negbinomial')
    p.add_argument('--max-stages', type=int, default=32)
    p.add_argument('--out', required=True)
    add_seed(p)
    p.set_defaults(func=cmd_duration_fit)
    p = dur.add_parser('train')
    p.add_argument('--labs', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--hidden', type=int, default=256)
    p.add_argument('--epochs', type=int, default=100)
    p.add_argument('--batch-size', type=int, default=10)
    p.add_argument('--lr', type=float, default=0.001)
    p.add_argument('--clip', type=float, default=0.001)
    add_seed(p)
    p.set_defaults(func=cmd_duration_train)
    p = dur.add_parser('eval')
    p.add_argument('--model', required=True)
    p.add_argument('--labs', required=True)
    add_seed(p)
    p.set_defaults(func=cmd_duration_eval)
    p = dur.add_parser('trace')
    p.add_argument('--model', required=True)
    p.add_argument('--lab', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--fig', default=None)
    add_seed(p)
    p.set_defaults(func=cmd_duration_trace)

    p = sub.add_parser('decode')
    p.add_argument('--posteriors', required=True)
    p.add_argument('--lm', required=True)
    p.add_argument('--duration', required=True)
    p.add_argument('--beam-width', type=int, default=25)
    p.add_argument('--hash-count', type=int, default=4)
    p.add_argument('--hash-length', type=int, default=5)
    p.add_argument('--out', required=True)
    p.add_argument('--score-json', default=None)
    add_seed(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser('evaluate')
    p.add_argument('--ref', required=True)
    p.add_argument('--est', required=True)
    p.add_argument('--out', default=None)
    p.add_argument('--csv', default=None)
    p.add_argument('--fig', default=None)
    add_seed(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('synth')
    p.add_argument('--lm', default=None)
    p.add_argument('--duration', default=None)
    p.add_argument('--noise', type=float, default=0.0)
    p.add_argument('--songs', type=int, default=10)
    p.add_argument('--frames', type=int, default=200)
    p.add_argument('--out', required=True)
    add_seed(p)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (chords.ChordParseError, chords.TimelineError,
            acoustic.PosteriorValidationError, FileNotFoundError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == '__main__':
    sys.exit(main())
