"""Harmonic language models.

Predict the next distinct chord given the compressed chord history:
Lidstone-smoothed n-gram models and a GRU next-chord model, plus the
average log-probability metric and the 2-D PCA projection of the learned
chord embedding.

All models share one querying convention: compressed sequences never
repeat a chord, so the probability mass on the current chord is zeroed
and the distribution renormalized over legal successors.  Lidstone
normalization runs over vocab + 1 symbols (the chord classes plus the
start token, which is never predicted).
"""

from __future__ import annotations

import json
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from . import chords, neural

LmState = namedtuple('LmState', ['context', 'current'])
GruLmState = namedtuple('GruLmState', ['hidden', 'current', 'raw_dist'])


def _no_repeat(dist: np.ndarray, current) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if current is not None:
        dist = dist.copy()
        dist[current] = 0.0
    total = dist.sum()
    return dist / total


class UniformLm:
    """Trivial baseline: uniform over all classes, repeats allowed."""

    def __init__(self, vocab: int = chords.N_CLASSES):
        self.vocab = vocab

    def initial_state(self):
        return None

    def next_dist(self, state) -> np.ndarray:
        return np.full(self.vocab, 1.0 / self.vocab)

    def advance(self, state, symbol):
        return None

    def advance_batch(self, states, symbols):
        return [None] * len(symbols)


class NgramModel:
    """Lidstone-smoothed n-gram over compressed chord sequences."""

    START = -100  # context padding symbol, outside the class range

    def __init__(self, n: int, alpha: float, vocab: int = chords.N_CLASSES):
        if n < 1:
            raise ValueError("n-gram order must be >= 1")
        if alpha <= 0:
            raise ValueError("Lidstone alpha must be positive")
        self.n = n
        self.alpha = alpha
        self.vocab = vocab
        self.counts: dict[tuple, np.ndarray] = {}

    def _add(self, context: tuple, symbol: int) -> None:
        row = self.counts.get(context)
        if row is None:
            row = self.counts[context] = np.zeros(self.vocab)
        row[symbol] += 1

    def raw_dist(self, context: tuple) -> np.ndarray:
        """Smoothed probabilities over the chord classes for one context.

        Normalizes over vocab + 1 symbols, so raw rows sum to less than 1;
        the start token's share is never observable.
        """
        row = self.counts.get(tuple(context))
        total = 0.0 if row is None else row.sum()
        counts = np.zeros(self.vocab) if row is None else row
        return (counts + self.alpha) / (total + self.alpha * (self.vocab + 1))

    def prob(self, symbol: int, context: tuple) -> float:
        return float(self.raw_dist(context)[symbol])

    def initial_state(self) -> LmState:
        return LmState(context=(self.START,) * (self.n - 1), current=None)

    def next_dist(self, state: LmState) -> np.ndarray:
        return _no_repeat(self.raw_dist(state.context), state.current)

    def advance(self, state: LmState, symbol: int) -> LmState:
        context = (state.context + (symbol,))[-(self.n - 1):] if self.n > 1 else ()
        return LmState(context=context, current=symbol)

    def advance_batch(self, states, symbols):
        return [self.advance(s, y) for s, y in zip(states, symbols)]

    def save(self, path) -> None:
        blob = {
            'kind': 'ngram', 'n': self.n, 'alpha': self.alpha, 'vocab': self.vocab,
            'normalization': 'vocab+1 symbols (classes + start token)',
            'counts': [[list(ctx), row.tolist()] for ctx, row in self.counts.items()],
        }
        with open(path, 'w') as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> 'NgramModel':
        with open(path) as fh:
            blob = json.load(fh)
        model = cls(blob['n'], blob['alpha'], blob['vocab'])
        for ctx, row in blob['counts']:
            model.counts[tuple(ctx)] = np.asarray(row, dtype=np.float64)
        return model


def train_ngram(sequences, n: int, alpha: float = 1.0,
                vocab: int = chords.N_CLASSES, key_shift: bool = False) -> NgramModel:
    """Accumulate n-gram counts over compressed sequences.

    With ``key_shift`` counts are pooled over all 12 transpositions
    (no-chord stays fixed); only valid for the 25-class vocabulary.
    """
    model = NgramModel(n, alpha, vocab)
    if key_shift and vocab != chords.N_CLASSES:
        raise ValueError("key-shift augmentation requires the 25-class vocabulary")
    shifts = range(12) if key_shift else (0,)
    for seq in sequences:
        if not chords.is_compressed(seq):
            raise ValueError("n-gram training requires compressed sequences")
        for shift in shifts:
            shifted = [chords.transpose(y, shift) for y in seq] if shift else list(seq)
            context = (NgramModel.START,) * (n - 1)
            for sym in shifted:
                model._add(context, sym)
                if n > 1:
                    context = (context + (sym,))[-(n - 1):]
    return model


class GruLm:
    """GRU next-chord model behind the shared language-model interface."""

    def __init__(self, model: neural.RecurrentModel):
        if model.spec.out_classes != model.spec.vocab_size:
            raise ValueError("language model head must match the vocabulary")
        self.model = model
        self.vocab = model.spec.vocab_size

    def initial_state(self) -> GruLmState:
        h, out = self.model.step(self.model.initial_hidden()[0], self.model.start_index)
        return GruLmState(hidden=h, current=None, raw_dist=out)

    def next_dist(self, state: GruLmState) -> np.ndarray:
        return _no_repeat(state.raw_dist, state.current)

    def advance(self, state: GruLmState, symbol: int) -> GruLmState:
        h, out = self.model.step(state.hidden, symbol)
        return GruLmState(hidden=h, current=symbol, raw_dist=out)

    def advance_batch(self, states, symbols):
        H = np.stack([s.hidden for s in states])
        Hn, out = self.model.step_batch(H, symbols)
        return [GruLmState(hidden=Hn[i], current=symbols[i], raw_dist=out[i])
                for i in range(len(symbols))]

    def save(self, path) -> None:
        self.model.save(path)
        with open(path) as fh:
            blob = json.load(fh)
        blob['kind'] = 'gru-lm'
        with open(path, 'w') as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> 'GruLm':
        return cls(neural.RecurrentModel.load(path))


def avg_log_prob(model, sequences) -> float:
    """Mean natural-log probability of the correct next chord."""
    total = 0.0
    events = 0
    for seq in sequences:
        state = model.initial_state()
        for sym in seq:
            p = model.next_dist(state)[sym]
            total += np.log(max(p, 1e-300))
            events += 1
            state = model.advance(state, sym)
    if events == 0:
        raise ValueError("empty evaluation corpus")
    return total / events


# ---------------------------------------------------------------------------
# GRU language model training
# ---------------------------------------------------------------------------

@dataclass
class LmTrainConfig:
    hidden: int = 512
    embed_dim: int | None = 16
    epochs: int = 100
    batch_size: int = 4
    lr: float = 0.005
    anneal_from: int = 50
    clip: float | None = None
    key_shift: bool = True
    subsequence: bool = True
    seed: int = 0


def _lm_augment(cfg: LmTrainConfig):
    def augment(seq, rng):
        if cfg.key_shift:
            shift = int(rng.integers(0, 12))
            seq = [chords.transpose(y, shift) for y in seq]
        if cfg.subsequence and len(seq) > 2:
            length = int(rng.integers(2, len(seq) + 1))
            off = int(rng.integers(0, len(seq) - length + 1))
            seq = seq[off:off + length]
        return seq
    return augment


def train_gru_lm(sequences, cfg: LmTrainConfig | None = None) -> tuple[GruLm, list[float]]:
    """Train the GRU language model with key-shift and sub-sequence cropping."""
    cfg = cfg or LmTrainConfig()
    for seq in sequences:
        if not chords.is_compressed(seq):
            raise ValueError("language model training requires compressed sequences")
    spec = neural.GruSpec(vocab_size=chords.N_CLASSES, hidden=cfg.hidden,
                          embed_dim=cfg.embed_dim, out_classes=chords.N_CLASSES,
                          seed=cfg.seed)
    model = neural.RecurrentModel(spec)
    train_cfg = neural.TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                                   lr=cfg.lr, anneal_from=cfg.anneal_from,
                                   clip=cfg.clip, seed=cfg.seed)
    curve = neural.train_next_step(model, [list(s) for s in sequences], train_cfg,
                                   augment=_lm_augment(cfg))
    return GruLm(model), curve


# ---------------------------------------------------------------------------
# Embedding analysis
# ---------------------------------------------------------------------------

def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching eigenvector
    columns.
    """
    A = np.array(matrix, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < tol * 1e-3:
                    continue
                theta = 0.5 * np.arctan2(2 * A[p, q], A[q, q] - A[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot_p = c * A[:, p] - s * A[:, q]
                rot_q = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = c * A[p, :] - s * A[q, :]
                rot_q = s * A[p, :] + c * A[q, :]
                A[p, :], A[q, :] = rot_p, rot_q
                rot_p = c * V[:, p] - s * V[:, q]
                rot_q = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = rot_p, rot_q
    eigvals = np.diag(A).copy()
    order = np.argsort(eigvals)[::-1]
    return eigvals[order], V[:, order]


def embedding_pca(lm: GruLm) -> tuple[np.ndarray, np.ndarray]:
    """Project the learned 25-row chord embedding onto its top-2 principal
    components; returns (coordinates 25x2, all eigenvalues descending)."""
    if lm.model.one_hot:
        raise ValueError("one-hot input mode has no learnable embedding")
    emb = lm.model.params['emb'][:chords.N_CLASSES]
    centered = emb - emb.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / (centered.shape[0] - 1)
    eigvals, eigvecs = jacobi_eigh(cov)
    coords = centered @ eigvecs[:, :2]
    return coords, eigvals
