"""Synthetic dataset generation.

Samples chord sequences from a language model, chord durations from a
duration model, and emits ground-truth ``.lab`` annotations with noisy
posterior CSVs.  The noise level corrupts the observed label (true with
probability 1 - noise, otherwise uniformly random) and mixes the one-hot
row toward uniform, so noise 0 gives perfect one-hot posteriors and
noise 1 gives fully uniform ones.

Also provides a deterministic "progression corpus": songs cycle through
one of several fixed 8-chord progressions that share an opening motif
(so only long-context models can resolve the continuation), with chord
durations that are multiples of a per-song base period (periodic
harmonic rhythm with occasional long holds).
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import chords
from .acoustic import PosteriorMatrix, save_posteriors
from .duration import sample_duration


def sample_chords(lm, rng, n_chords: int) -> list[int]:
    """Sample a compressed chord sequence from a language model."""
    seq = []
    state = lm.initial_state()
    for _ in range(n_chords):
        dist = lm.next_dist(state)
        sym = int(rng.choice(len(dist), p=dist / dist.sum()))
        seq.append(sym)
        state = lm.advance(state, sym)
    return seq


def frame_labels_from_plan(chord_seq, durations) -> list[int]:
    labels = []
    for c, d in zip(chord_seq, durations):
        labels.extend([c] * d)
    return labels


def noisy_posteriors(frame_labels, noise: float, rng,
                     n_classes: int = chords.N_CLASSES,
                     frame_rate: float = 10.0) -> PosteriorMatrix:
    """Posterior rows (1 - noise) * onehot(observed) + noise / K, where the
    observed label equals the truth with probability 1 - noise."""
    T = len(frame_labels)
    observed = np.asarray(frame_labels, dtype=np.int64).copy()
    corrupt = rng.random(T) >= (1.0 - noise)
    observed[corrupt] = rng.integers(0, n_classes, size=int(corrupt.sum()))
    probs = np.full((T, n_classes), noise / n_classes)
    probs[np.arange(T), observed] += 1.0 - noise
    return PosteriorMatrix(probs=probs, frame_rate=frame_rate)


def synth_generate(out_dir, lm, dur, noise: float, songs: int, frames: int,
                   seed: int, frame_rate: float = 10.0) -> list[str]:
    """Write ``song_###.lab`` + ``song_###.post.csv`` pairs; returns song ids."""
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    song_ids = []
    for s in range(songs):
        labels = []
        state = lm.initial_state()
        prev = None
        while len(labels) < frames:
            dist = lm.next_dist(state)
            if prev is not None:
                dist = dist.copy()
                dist[prev] = 0.0
            dist = dist / dist.sum()
            sym = int(rng.choice(len(dist), p=dist))
            state = lm.advance(state, sym)
            d = sample_duration(dur, rng)
            labels.extend([sym] * d)
            prev = sym
        labels = labels[:frames]
        song_id = f"song_{s:03d}"
        timeline = chords.timeline_from_frames(labels, frame_rate)
        chords.write_lab(os.path.join(out_dir, song_id + '.lab'), timeline)
        post = noisy_posteriors(labels, noise, rng, frame_rate=frame_rate)
        save_posteriors(post, os.path.join(out_dir, song_id + '.post.csv'))
        song_ids.append(song_id)
    with open(os.path.join(out_dir, 'dataset.json'), 'w') as fh:
        json.dump({'seed': seed, 'noise': noise, 'songs': songs,
                   'frames': frames, 'frame_rate': frame_rate}, fh)
    return song_ids


# ---------------------------------------------------------------------------
# Progression corpus (desk-scale analogue of real chord data)
# ---------------------------------------------------------------------------

# Four 8-chord cycles sharing the motif (C, F, G).  The chord after the
# motif identifies the progression, and one chord inside each cycle
# recurs with two different successors, so bigrams are ambiguous where
# 4-grams are not, and 4-grams are ambiguous right after the motif where
# full-history models are not.
PROGRESSIONS = [
    [0, 5, 7, 9, 14, 9, 4, 21],
    [0, 5, 7, 2, 13, 2, 17, 22],
    [0, 5, 7, 11, 6, 11, 23, 3],
    [0, 5, 7, 20, 15, 20, 1, 18],
]


def progression_chords(rng, cycles: int) -> list[int]:
    prog = PROGRESSIONS[int(rng.integers(0, len(PROGRESSIONS)))]
    return prog * cycles


def periodic_durations(rng, n_chords: int, period: int | None = None,
                       hold_prob: float = 0.10, max_hold: int = 16) -> list[int]:
    """Durations that are multiples of a per-song base period: mostly one
    period per chord, occasionally a hold whose length in periods has a
    geometric tail (so long gaps appear but stay rare)."""
    if period is None:
        period = int(rng.choice([4, 8]))
    durations = []
    for _ in range(n_chords):
        if rng.random() < hold_prob:
            k = min(1 + int(rng.geometric(0.5)), max_hold)
        else:
            k = 1
        durations.append(period * k)
    return durations


def progression_dataset(n_songs: int, seed: int, cycles: int = 6,
                        period_choices=(4, 8)):
    """Chord sequences plus matching durations for the synthetic corpus.

    Returns (chord_seqs, duration_lists); each song repeats one
    progression for ``cycles`` cycles with periodic durations.
    """
    rng = np.random.default_rng(seed)
    chord_seqs, duration_lists = [], []
    for _ in range(n_songs):
        seq = progression_chords(rng, cycles)
        period = int(rng.choice(period_choices))
        durations = periodic_durations(rng, len(seq), period=period)
        chord_seqs.append(seq)
        duration_lists.append(durations)
    return chord_seqs, duration_lists
