"""Chord duration models.

Per-frame hazard models P(change | history): geometric (the implicit
duration model of 1-state-per-chord HMMs), negative binomial (n
left-to-right stages, advance probability p per frame, one stage
transition opportunity per frame), and a binary-output GRU trained on
chord-change sequences.  Includes maximum-likelihood fitting, the
average duration log-probability metric and teacher-forced hazard traces.
"""

from __future__ import annotations

import json
from collections import namedtuple

import numpy as np
from scipy.special import gammaln

from . import neural

_PROB_EPS = 1e-9

GruDurationState = namedtuple('GruDurationState', ['hidden', 'hazard'])


class GeometricDuration:
    """Constant-hazard (memoryless) duration model."""

    family = 'geometric'

    def __init__(self, p_change: float):
        if not 0 < p_change < 1:
            raise ValueError(f"p_change must be in (0, 1), got {p_change}")
        self.p = p_change

    def initial_state(self) -> int:
        return 1

    def hazard(self, state: int) -> float:
        return self.p

    def update(self, state: int, changed: bool) -> int:
        return 1 if changed else state + 1

    def update_batch(self, states, changed_flags):
        return [self.update(s, c) for s, c in zip(states, changed_flags)]

    def log_pmf(self, d: int) -> float:
        return np.log(self.p) + (d - 1) * np.log1p(-self.p)

    def save(self, path) -> None:
        with open(path, 'w') as fh:
            json.dump({'family': 'geometric', 'n': 1, 'p': self.p}, fh)


class NegBinomialDuration:
    """Left-to-right stage chain: n stages, advance probability p per frame.

    The duration state is the number of frames since the last change; the
    hazard comes from the forward stage posterior given survival, so it is
    well defined for every d >= 1 (and exactly 0 while the final stage is
    unreachable).
    """

    family = 'negbinomial'

    def __init__(self, n_stages: int, p: float):
        if n_stages < 1:
            raise ValueError("n_stages must be >= 1")
        if not 0 < p < 1:
            raise ValueError(f"p must be in (0, 1), got {p}")
        self.n = n_stages
        self.p = p
        # posterior over stages given survival up to duration d (index d-1)
        post = np.zeros(self.n)
        post[0] = 1.0
        self._posteriors = [post]
        self._hazards = [post[-1] * p]

    def _extend_to(self, d: int) -> None:
        while len(self._hazards) < d:
            post = self._posteriors[-1]
            nxt = (1.0 - self.p) * post.copy()
            nxt[1:] += self.p * post[:-1]
            # the surviving mass equals 1 - hazard; normalizing by the actual
            # sum keeps the posterior stochastic under floating-point drift
            total = nxt.sum()
            if total > 0:
                nxt /= total
            self._posteriors.append(nxt)
            self._hazards.append(nxt[-1] * self.p)

    def initial_state(self) -> int:
        return 1

    def hazard(self, state: int) -> float:
        self._extend_to(state)
        return float(self._hazards[state - 1])

    def update(self, state: int, changed: bool) -> int:
        return 1 if changed else state + 1

    def update_batch(self, states, changed_flags):
        return [self.update(s, c) for s, c in zip(states, changed_flags)]

    def log_pmf(self, d: int) -> float:
        """log C(d-1, n-1) + n log p + (d-n) log(1-p); -inf for d < n."""
        if d < self.n:
            return -np.inf
        return (gammaln(d) - gammaln(self.n) - gammaln(d - self.n + 1)
                + self.n * np.log(self.p) + (d - self.n) * np.log1p(-self.p))

    def save(self, path) -> None:
        with open(path, 'w') as fh:
            json.dump({'family': 'negbinomial', 'n': self.n, 'p': self.p}, fh)


class GruDuration:
    """Binary-output GRU duration model; input vocabulary {stay, change, start}."""

    family = 'gru'
    STAY, CHANGE = 0, 1

    def __init__(self, model: neural.RecurrentModel):
        if model.spec.out_classes != 1 or model.spec.vocab_size != 2:
            raise ValueError("duration GRU needs a binary vocabulary and sigmoid head")
        self.model = model

    def initial_state(self) -> GruDurationState:
        h, out = self.model.step(self.model.initial_hidden()[0], self.model.start_index)
        return GruDurationState(hidden=h, hazard=float(out))

    def hazard(self, state: GruDurationState) -> float:
        return min(max(state.hazard, _PROB_EPS), 1.0 - _PROB_EPS)

    def update(self, state: GruDurationState, changed: bool) -> GruDurationState:
        h, out = self.model.step(state.hidden, self.CHANGE if changed else self.STAY)
        return GruDurationState(hidden=h, hazard=float(out))

    def update_batch(self, states, changed_flags):
        H = np.stack([s.hidden for s in states])
        idx = [self.CHANGE if c else self.STAY for c in changed_flags]
        Hn, out = self.model.step_batch(H, idx)
        return [GruDurationState(hidden=Hn[i], hazard=float(out[i]))
                for i in range(len(states))]

    def save(self, path) -> None:
        self.model.save(path)
        with open(path) as fh:
            blob = json.load(fh)
        blob['family'] = 'gru'
        with open(path, 'w') as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> 'GruDuration':
        return cls(neural.RecurrentModel.load(path))


def load_parametric(path):
    with open(path) as fh:
        blob = json.load(fh)
    if blob['family'] == 'geometric':
        return GeometricDuration(blob['p'])
    if blob['family'] == 'negbinomial':
        return NegBinomialDuration(blob['n'], blob['p'])
    raise ValueError(f"unknown duration family: {blob['family']}")


# ---------------------------------------------------------------------------
# Change flags and durations
# ---------------------------------------------------------------------------

def change_flags(frame_labels) -> list[int]:
    """Per-frame change/stay flags; the first frame has no predecessor and
    is not a prediction target, so the list has T-1 entries."""
    return [int(a != b) for a, b in zip(frame_labels, frame_labels[1:])]


def durations_from_flags(flags, include_censored: bool = False) -> list[int]:
    """Segment durations in frames delimited by change flags.

    The final segment has no terminating change; it is dropped unless
    ``include_censored``.
    """
    durations = []
    d = 1
    for f in flags:
        if f:
            durations.append(d)
            d = 1
        else:
            d += 1
    if include_censored:
        durations.append(d)
    return durations


def fit_geometric(durations) -> GeometricDuration:
    durations = np.asarray(durations, dtype=np.float64)
    if durations.size == 0:
        raise ValueError("cannot fit on empty duration list")
    p = 1.0 / durations.mean()
    return GeometricDuration(min(max(p, _PROB_EPS), 1.0 - _PROB_EPS))


def fit_negbinomial(durations, max_stages: int = 32) -> NegBinomialDuration:
    """Grid over stage counts with the moment estimate p = n / mean(d),
    scored by exact log-likelihood."""
    durations = np.asarray(durations, dtype=np.float64)
    if durations.size == 0:
        raise ValueError("cannot fit on empty duration list")
    mean = durations.mean()
    values, counts = np.unique(durations.astype(np.int64), return_counts=True)
    best = None
    for n in range(1, min(max_stages, int(durations.min())) + 1):
        p = min(max(n / mean, _PROB_EPS), 1.0 - _PROB_EPS)
        model = NegBinomialDuration(n, p)
        ll = sum(c * model.log_pmf(int(v)) for v, c in zip(values, counts))
        if best is None or ll > best[0]:
            best = (ll, model)
    return best[1]


def fit_mle(durations, family: str = 'geometric', max_stages: int = 32):
    if family == 'geometric':
        return fit_geometric(durations)
    if family == 'negbinomial':
        return fit_negbinomial(durations, max_stages)
    raise ValueError(f"unknown duration family: {family}")


# ---------------------------------------------------------------------------
# Evaluation and traces
# ---------------------------------------------------------------------------

def avg_duration_log_prob(model, flag_sequences) -> float:
    """Average log-probability of chord durations (per completed segment).

    For each segment of duration d the model accrues (d-1) stay log-probs
    plus the terminating change log-prob; for the parametric models this
    telescopes to log pmf(d).  The final, censored segment of each piece
    is excluded.
    """
    total = 0.0
    n_segments = 0
    for flags in flag_sequences:
        state = model.initial_state()
        seg = 0.0
        for f in flags:
            h = model.hazard(state)
            h = min(max(h, _PROB_EPS), 1.0 - _PROB_EPS)
            seg += np.log(h) if f else np.log1p(-h)
            if f:
                total += seg
                n_segments += 1
                seg = 0.0
            state = model.update(state, bool(f))
    if n_segments == 0:
        raise ValueError("no completed chord segments in the corpus")
    return total / n_segments


def hazard_trace(model, flags) -> np.ndarray:
    """Teacher-forced per-frame change probabilities for a flag sequence."""
    trace = np.empty(len(flags))
    state = model.initial_state()
    for i, f in enumerate(flags):
        trace[i] = model.hazard(state)
        state = model.update(state, bool(f))
    return trace


def sample_duration(model, rng, max_duration: int = 100000) -> int:
    """Sample one segment duration by walking the hazard chain."""
    state = model.initial_state()
    for d in range(1, max_duration + 1):
        if rng.random() < model.hazard(state):
            return d
        state = model.update(state, False)
    return max_duration


# ---------------------------------------------------------------------------
# GRU duration training
# ---------------------------------------------------------------------------

def train_gru_duration(flag_sequences, hidden: int = 256, epochs: int = 100,
                       batch_size: int = 10, lr: float = 0.001,
                       clip: float | None = 0.001, truncate: int | None = 200,
                       seed: int = 0) -> tuple[GruDuration, list[float]]:
    """Train the change-prediction GRU on binary flag sequences.

    Defaults follow the duration-model training recipe: mini-batches of 10,
    learning rate linearly annealed from 0.001 to 0 over 100 epochs,
    200-step excerpts, global-norm gradient clipping.
    """
    spec = neural.GruSpec(vocab_size=2, hidden=hidden, embed_dim=None,
                          out_classes=1, seed=seed)
    model = neural.RecurrentModel(spec)
    cfg = neural.TrainConfig(epochs=epochs, batch_size=batch_size, lr=lr,
                             anneal_from=0, clip=clip, truncate=truncate, seed=seed)
    curve = neural.train_next_step(model, [list(map(int, f)) for f in flag_sequences], cfg)
    return GruDuration(model), curve
