"""Transcription evaluation.

Weighted chord symbol recall (WCSR = t_c / t_a) over the maj/min
alphabet, chord root accuracy, the directional-Hamming segmentation
score, duration-weighted corpus aggregation, and the paired t-test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .chords import EXCLUDED, NO_CHORD, Segment, TimelineError, validate_timeline


@dataclass
class ScoreReport:
    root: float
    majmin: float
    segmentation: float
    per_song: list[dict] = field(default_factory=list)


def _clip_to_span(est: list[Segment], start: float, end: float) -> list[Segment]:
    """Clip the estimate to [start, end]; uncovered spans become no-chord."""
    out = []
    cursor = start
    for seg in est:
        lo, hi = max(seg.start, start), min(seg.end, end)
        if hi <= lo:
            continue
        if lo > cursor + 1e-9:
            out.append(Segment(cursor, lo, NO_CHORD))
        out.append(Segment(lo, hi, seg.label))
        cursor = hi
    if cursor < end - 1e-9:
        out.append(Segment(cursor, end, NO_CHORD))
    if not out:
        out.append(Segment(start, end, NO_CHORD))
    return out


def _overlap_time(ann: list[Segment], est: list[Segment], match) -> tuple[float, float]:
    """Total matching overlap t_c and total annotated duration t_a,
    skipping EXCLUDED annotation spans."""
    validate_timeline(ann)
    validate_timeline(est)
    est = _clip_to_span(est, ann[0].start, ann[-1].end)
    t_c = 0.0
    t_a = 0.0
    j = 0
    for a in ann:
        if a.label == EXCLUDED:
            continue
        t_a += a.end - a.start
        while j < len(est) and est[j].end <= a.start + 1e-12:
            j += 1
        k = j
        while k < len(est) and est[k].start < a.end - 1e-12:
            e = est[k]
            overlap = min(a.end, e.end) - max(a.start, e.start)
            if overlap > 0 and match(a.label, e.label):
                t_c += overlap
            k += 1
    return t_c, t_a


def _majmin_match(a: int, b: int) -> bool:
    return a == b


def _root_match(a: int, b: int) -> bool:
    if a == NO_CHORD or b == NO_CHORD:
        return a == b
    if b == EXCLUDED:
        return False
    return a % 12 == b % 12


def wcsr(annotation: list[Segment], estimate: list[Segment]) -> tuple[float, float, float]:
    """Weighted chord symbol recall: (t_c, t_a, t_c / t_a)."""
    t_c, t_a = _overlap_time(annotation, estimate, _majmin_match)
    return t_c, t_a, t_c / t_a if t_a > 0 else 0.0


def root_accuracy(annotation: list[Segment], estimate: list[Segment]) -> float:
    t_c, t_a = _overlap_time(annotation, estimate, _root_match)
    return t_c / t_a if t_a > 0 else 0.0


def directional_hamming(a: list[Segment], b: list[Segment]) -> float:
    """How much b fragments a: sum over segments of a of (duration minus the
    largest single-segment overlap with b), normalized by total duration."""
    total = a[-1].end - a[0].start
    fragmentation = 0.0
    for seg in a:
        best = 0.0
        for other in b:
            overlap = min(seg.end, other.end) - max(seg.start, other.start)
            best = max(best, overlap)
        fragmentation += (seg.end - seg.start) - best
    return fragmentation / total


def segmentation_score(annotation: list[Segment], estimate: list[Segment]) -> float:
    """1 - max(h(ann->est), h(est->ann)); labels are ignored."""
    validate_timeline(annotation)
    validate_timeline(estimate)
    est = _clip_to_span(estimate, annotation[0].start, annotation[-1].end)
    return 1.0 - max(directional_hamming(annotation, est),
                     directional_hamming(est, annotation))


def corpus_report(pairs: list[tuple[list[Segment], list[Segment]]],
                  song_ids=None) -> ScoreReport:
    """Aggregate over songs: WCSR and root accuracy pooled corpus-level
    (sum t_c / sum t_a); segmentation averaged weighted by song duration."""
    if not pairs:
        raise ValueError("need at least one song")
    if song_ids is None:
        song_ids = [f"song{i:03d}" for i in range(len(pairs))]
    sum_tc = sum_ta = 0.0
    sum_root_tc = 0.0
    seg_weighted = 0.0
    total_duration = 0.0
    per_song = []
    for song_id, (ann, est) in sorted(zip(song_ids, pairs), key=lambda x: x[0]):
        t_c, t_a, ratio = wcsr(ann, est)
        root_tc, root_ta = _overlap_time(ann, est, _root_match)
        seg = segmentation_score(ann, est)
        duration = ann[-1].end - ann[0].start
        sum_tc += t_c
        sum_ta += t_a
        sum_root_tc += root_tc
        seg_weighted += seg * duration
        total_duration += duration
        per_song.append({'song': song_id, 'majmin': ratio,
                         'root': root_tc / root_ta if root_ta else 0.0,
                         'segmentation': seg, 'duration': duration})
    return ScoreReport(
        root=sum_root_tc / sum_ta if sum_ta else 0.0,
        majmin=sum_tc / sum_ta if sum_ta else 0.0,
        segmentation=seg_weighted / total_duration if total_duration else 0.0,
        per_song=per_song)


def paired_t_test(scores_a, scores_b) -> tuple[float, float, bool]:
    """Two-sided paired t-test; returns (t, p, degenerate_variance_flag).

    The p-value uses the regularized incomplete beta representation of the
    Student t CDF.  Zero variance with a nonzero mean difference reports
    t = +/-inf, p = 0 with the flag set.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("need equal-length paired samples with n >= 2")
    d = a - b
    n = d.size
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0, False
        return float(np.sign(mean) * np.inf), 0.0, True
    t = mean / (sd / np.sqrt(n))
    nu = n - 1
    p = float(betainc(nu / 2.0, 0.5, nu / (nu + t * t)))
    return float(t), p, False
