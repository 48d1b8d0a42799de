"""Chord transcription decoding.

Combines frame-wise acoustic posteriors with a harmonic language model
and a chord duration model, and decodes the best label sequence through
the chord-time lattice:

* ``beam_decode`` -- hashed beam search; hypotheses sharing the same tail
  of distinct chords compete for a capped number of beam slots.
* ``viterbi_exact`` -- max-product dynamic programming over the expanded
  chord x stage space for finite-context (order <= 2) n-gram language
  models with parametric durations.
* ``brute_force_decode`` -- exhaustive enumeration oracle for tiny
  instances.

Scores are log joint values including a per-frame uniform-label-prior
constant of log K, so they are comparable across the three decoders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acoustic import PosteriorMatrix, POSTERIOR_FLOOR
from .chords import Segment, timeline_from_frames
from .duration import GeometricDuration, NegBinomialDuration
from .lm import NgramModel

LOG_EPS = 1e-300


class UnsupportedModelError(ValueError):
    """Raised when an exact decoder cannot handle the given model pair."""


@dataclass
class BeamConfig:
    beam_width: int = 25       # N_b
    max_per_hash: int = 4      # N_s
    hash_length: int = 5       # N_h

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam width must be >= 1")
        if not 1 <= self.max_per_hash <= self.beam_width:
            raise ValueError("max_per_hash must be in [1, beam_width]")
        if self.hash_length < 1:
            raise ValueError("hash length must be >= 1")


@dataclass
class _Hypothesis:
    score: float
    current: int
    tail: tuple            # last N_h distinct chords, including the current one
    node: tuple            # backpointer chain (parent_node, label)
    lm_state: object
    dur_state: object
    log_lm: np.ndarray     # log successor distribution from lm_state
    hazard: float


def _log_posteriors(post: PosteriorMatrix) -> np.ndarray:
    probs = np.asarray(post.probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise ValueError("empty posterior matrix")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-3):
        raise ValueError("posterior rows are not stochastic")
    K = probs.shape[1]
    # uniform label prior: the 1/P(y) factor contributes log K per frame
    return np.log(np.clip(probs, POSTERIOR_FLOOR, 1.0)) + np.log(K)


def _labels_from_node(node: tuple) -> list[int]:
    labels = []
    while node is not None:
        node, label = node[0], node[1]
        labels.append(label)
    labels.reverse()
    return labels


def temporal_step(log_lm: np.ndarray, hazard: float, current: int, nxt: int) -> float:
    """Log contribution of one lattice edge (Eq. 2 factorization):
    stay edges pay log(1-hazard), change edges pay log hazard plus the
    language model's log-probability of the new chord."""
    if nxt == current:
        return float(np.log1p(-hazard))
    return float(np.log(hazard) + log_lm[nxt])


def _safe_log(dist: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(dist, LOG_EPS))


def beam_decode(post: PosteriorMatrix, lm, dur, config: BeamConfig | None = None,
                collect_stats: bool = False):
    """Hashed beam search over the chord-time lattice.

    Returns (timeline, log_score) or (timeline, log_score, stats) with
    per-frame survivor counts and hash-bucket occupancy when
    ``collect_stats`` is set.
    """
    config = config or BeamConfig()
    logpa = _log_posteriors(post)
    T, K = logpa.shape
    N_b, N_s, N_h = config.beam_width, config.max_per_hash, config.hash_length

    # frame 1: one hypothesis per chord, scored by the LM from the start state
    init_state = lm.initial_state()
    log_init = _safe_log(lm.next_dist(init_state))
    dur_init = dur.initial_state()
    candidates = sorted(((float(logpa[0, y] + log_init[y]), y, 0) for y in range(K)),
                        key=lambda c: (-c[0], c[1]))
    beam = _select_and_extend(candidates, None, lm, dur, init_state, dur_init,
                              N_b, N_s, N_h, first_frame=True)
    stats = []
    if collect_stats:
        stats.append(_frame_stats(beam))

    labels_flat = np.tile(np.arange(K), N_b)
    for t in range(1, T):
        B = len(beam)
        bases = np.array([h.score for h in beam])
        hazards = np.array([h.hazard for h in beam])
        currents = np.array([h.current for h in beam], dtype=np.intp)
        # change edges: score + log hazard + log P_L(y | history) + log P_A
        scores = (bases + np.log(hazards))[:, None] + logpa[t]
        scores += np.array([h.log_lm for h in beam])
        # stay edge: score + log(1 - hazard) + log P_A of the current chord
        scores[np.arange(B), currents] = (bases + np.log1p(-hazards)
                                          + logpa[t, currents])
        flat = scores.ravel()
        # best score first, ties toward lower chord index then lower parent
        # (stable lexsort keeps the parent-major layout order on full ties)
        order = np.lexsort((labels_flat[:flat.size], -flat))
        candidates = ((flat[i], int(i) % K, int(i) // K) for i in order)
        beam = _select_and_extend(candidates, beam, lm, dur, None, None,
                                  N_b, N_s, N_h, first_frame=False)
        if collect_stats:
            stats.append(_frame_stats(beam))

    best = max(beam, key=lambda h: (h.score, -h.current))
    labels = _labels_from_node(best.node)
    timeline = timeline_from_frames(labels, post.frame_rate)
    if collect_stats:
        return timeline, best.score, stats
    return timeline, best.score


def _frame_stats(beam):
    buckets = {}
    for hyp in beam:
        buckets[hyp.tail] = buckets.get(hyp.tail, 0) + 1
    return {'survivors': len(beam), 'hash_buckets': len(buckets),
            'max_bucket': max(buckets.values())}


def _select_and_extend(candidates, beam, lm, dur, init_lm_state, init_dur_state,
                       N_b, N_s, N_h, first_frame):
    """Prune candidates by score with hash caps, then materialize survivor
    states (batched for recurrent models).  ``candidates`` yields
    (score, label, parent_index) best-first, ties broken toward the lower
    chord index and then the lower parent index."""
    chosen = []
    bucket_counts = {}
    for score, label, parent_idx in candidates:
        if first_frame:
            tail = (label,)
        else:
            parent = beam[parent_idx]
            tail = parent.tail if label == parent.current else (parent.tail + (label,))[-N_h:]
        count = bucket_counts.get(tail, 0)
        if count >= N_s:
            continue
        bucket_counts[tail] = count + 1
        chosen.append((float(score), label, parent_idx, tail))
        if len(chosen) >= N_b:
            break

    # duration states advance every frame; LM states only on chord change
    survivors = []
    changed_flags = []
    dur_parents, dur_flags = [], []
    lm_parents, lm_syms = [], []
    for score, label, parent_idx, tail in chosen:
        if first_frame:
            parent_node = None
            changed = True
            lm_parents.append(init_lm_state)
        else:
            parent = beam[parent_idx]
            parent_node = parent.node
            changed = label != parent.current
            dur_parents.append(parent.dur_state)
            dur_flags.append(changed)
            lm_parents.append(parent.lm_state)
        survivors.append(_Hypothesis(score=score, current=label, tail=tail,
                                     node=(parent_node, label), lm_state=None,
                                     dur_state=None, log_lm=None, hazard=0.0))
        changed_flags.append(changed)
        if changed:
            lm_syms.append((len(survivors) - 1, label))

    # batch-update duration states
    if first_frame:
        new_dur = [init_dur_state] * len(survivors)
    else:
        new_dur = dur.update_batch(dur_parents, dur_flags)
    for hyp, ds in zip(survivors, new_dur):
        hyp.dur_state = ds
        hyp.hazard = min(max(dur.hazard(ds), 1e-12), 1.0 - 1e-12)

    # batch-advance LM states for hypotheses whose chord changed
    if lm_syms:
        idxs = [i for i, _ in lm_syms]
        syms = [y for _, y in lm_syms]
        parent_states = [lm_parents[i] for i in idxs]
        advanced = lm.advance_batch(parent_states, syms)
        for i, st in zip(idxs, advanced):
            survivors[i].lm_state = st
            survivors[i].log_lm = _safe_log(lm.next_dist(st))
    for i, hyp in enumerate(survivors):
        if not changed_flags[i]:   # stayed: inherit the parent's LM view
            parent = beam[chosen[i][2]]
            hyp.lm_state = parent.lm_state
            hyp.log_lm = parent.log_lm
    return survivors


# ---------------------------------------------------------------------------
# Exact decoding for finite-context models
# ---------------------------------------------------------------------------

def viterbi_exact(post: PosteriorMatrix, lm, dur):
    """Max-product dynamic programming over the chord x stage state space.

    Supports n-gram language models of order <= 2 with geometric or
    negative binomial durations.  For a single stage this is exact
    decoding of the factorized model; with multiple stages the stage path
    is maximized rather than summed, matching the left-to-right HMM
    construction.
    """
    if not isinstance(lm, NgramModel) or lm.n > 2:
        raise UnsupportedModelError("viterbi_exact supports n-gram LMs of order <= 2")
    if isinstance(dur, GeometricDuration):
        n_stages, p = 1, dur.p
    elif isinstance(dur, NegBinomialDuration):
        n_stages, p = dur.n, dur.p
    else:
        raise UnsupportedModelError("viterbi_exact needs a parametric duration model")

    logpa = _log_posteriors(post)
    T, K = logpa.shape
    log_p, log_q = np.log(p), np.log1p(-p)

    init_state = lm.initial_state()
    log_init = _safe_log(lm.next_dist(init_state))
    log_change = np.empty((K, K))   # log P_L(next | current), -inf on diagonal
    for c in range(K):
        state = lm.advance(init_state, c)
        log_change[c] = _safe_log(lm.next_dist(state))

    NEG = -np.inf
    delta = np.full((K, n_stages), NEG)
    delta[:, 0] = logpa[0] + log_init
    back = np.zeros((T, K, n_stages, 2), dtype=np.int64)  # (prev chord, prev stage)

    for t in range(1, T):
        new = np.full((K, n_stages), NEG)
        # exits: final stage of chord c' -> stage 1 of chord c != c'
        exit_scores = delta[:, -1] + log_p                     # (K,)
        enter = exit_scores[:, None] + log_change              # (c', c)
        np.fill_diagonal(enter, NEG)
        best_prev = enter.argmax(axis=0)
        best_enter = enter[best_prev, np.arange(K)]
        # stage 1: either entered from another chord or self-looped
        self_loop0 = delta[:, 0] + log_q
        take_enter = best_enter > self_loop0
        new[:, 0] = np.where(take_enter, best_enter, self_loop0)
        back[t, :, 0, 0] = np.where(take_enter, best_prev, np.arange(K))
        back[t, :, 0, 1] = np.where(take_enter, n_stages - 1, 0)
        # later stages: self-loop or advance from the previous stage
        for i in range(1, n_stages):
            self_loop = delta[:, i] + log_q
            advance = delta[:, i - 1] + log_p
            take_adv = advance > self_loop
            new[:, i] = np.where(take_adv, advance, self_loop)
            back[t, :, i, 0] = np.arange(K)
            back[t, :, i, 1] = np.where(take_adv, i - 1, i)
        delta = new + logpa[t][:, None]

    flat = delta.reshape(-1)
    best = int(flat.argmax())
    c, i = divmod(best, n_stages)
    score = float(flat[best])
    labels = [0] * T
    for t in range(T - 1, -1, -1):
        labels[t] = c
        if t > 0:
            c, i = int(back[t, c, i, 0]), int(back[t, c, i, 1])
    return timeline_from_frames(labels, post.frame_rate), score


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

MAX_BRUTE_FORCE = 10 ** 6


def score_sequence(labels, post: PosteriorMatrix, lm, dur) -> float:
    """Exact log score of one label sequence under the factorized model."""
    logpa = _log_posteriors(post)
    score = 0.0
    state = lm.initial_state()
    log_lm = _safe_log(lm.next_dist(state))
    dstate = dur.initial_state()
    prev = None
    for t, y in enumerate(labels):
        if t == 0:
            score += logpa[0, y] + log_lm[y]
            state = lm.advance(state, y)
            log_lm = _safe_log(lm.next_dist(state))
        else:
            h = min(max(dur.hazard(dstate), 1e-12), 1.0 - 1e-12)
            score += temporal_step(log_lm, h, prev, y) + logpa[t, y]
            dstate = dur.update(dstate, y != prev)
            if y != prev:
                state = lm.advance(state, y)
                log_lm = _safe_log(lm.next_dist(state))
        prev = y
    return float(score)


def brute_force_decode(post: PosteriorMatrix, lm, dur):
    """Enumerate every label sequence (depth-first with shared prefixes) and
    return the best timeline and its log score.  Enforces K^T <= 10^6."""
    logpa = _log_posteriors(post)
    T, K = logpa.shape
    if K ** T > MAX_BRUTE_FORCE:
        raise ValueError(f"instance too large for brute force: {K}^{T}")

    lm_dist_cache = {}

    def lm_log_dist(state):
        try:
            cached = lm_dist_cache.get(state)
            if cached is None:
                cached = lm_dist_cache[state] = _safe_log(lm.next_dist(state))
            return cached
        except TypeError:   # unhashable recurrent state
            return _safe_log(lm.next_dist(state))

    best = [-np.inf, None]

    def recurse(t, prev, score, lm_state, log_lm, dstate, prefix):
        if t == T:
            if score > best[0] or (score == best[0] and prefix < best[1]):
                best[0], best[1] = score, list(prefix)
            return
        if t == 0:
            for y in range(K):
                s = score + logpa[0, y] + log_lm[y]
                st = lm.advance(lm_state, y)
                prefix.append(y)
                recurse(1, y, s, st, lm_log_dist(st), dur.initial_state(), prefix)
                prefix.pop()
        else:
            h = min(max(dur.hazard(dstate), 1e-12), 1.0 - 1e-12)
            log_h, log_q = np.log(h), np.log1p(-h)
            d_stay = dur.update(dstate, False)
            d_change = dur.update(dstate, True)
            for y in range(K):
                if y == prev:
                    s = score + log_q + logpa[t, y]
                    prefix.append(y)
                    recurse(t + 1, y, s, lm_state, log_lm, d_stay, prefix)
                    prefix.pop()
                else:
                    s = score + log_h + log_lm[y] + logpa[t, y]
                    st = lm.advance(lm_state, y)
                    prefix.append(y)
                    recurse(t + 1, y, s, st, lm_log_dist(st), d_change, prefix)
                    prefix.pop()

    init = lm.initial_state()
    recurse(0, None, 0.0, init, lm_log_dist(init), None, [])
    return timeline_from_frames(best[1], post.frame_rate), float(best[0])
