"""Chord label algebra.

Parses a practical subset of Harte chord syntax, reduces labels to the
25-class major/minor alphabet (12 roots x {maj, min} + no-chord), and
provides sequence compression, transposition and ``.lab`` annotation I/O.

Class encoding is fixed: 0-11 major chords by root (0 = C:maj), 12-23
minor chords by root, 24 no-chord.  Unknown-chord labels ("X") map to the
``EXCLUDED`` sentinel and are dropped from evaluation and training.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

N_CLASSES = 25
NO_CHORD = 24
EXCLUDED = -1

PITCH_NAMES = ['C', 'C#', 'D', 'D#', 'E', 'F', 'F#', 'G', 'G#', 'A', 'A#', 'B']
_NATURAL_SEMITONES = {'C': 0, 'D': 2, 'E': 4, 'F': 5, 'G': 7, 'A': 9, 'B': 11}

# Shorthand -> interval set (semitones above the root).
SHORTHANDS = {
    'maj':   {0, 4, 7},
    'min':   {0, 3, 7},
    '7':     {0, 4, 7, 10},
    'maj7':  {0, 4, 7, 11},
    'min7':  {0, 3, 7, 10},
    'dim':   {0, 3, 6},
    'aug':   {0, 4, 8},
    'dim7':  {0, 3, 6, 9},
    'hdim7': {0, 3, 6, 10},
    'sus2':  {0, 2, 7},
    'sus4':  {0, 5, 7},
    'min6':  {0, 3, 7, 9},
    'maj6':  {0, 4, 7, 9},
    '9':     {0, 2, 4, 7, 10},
    'maj9':  {0, 2, 4, 7, 11},
    'min9':  {0, 2, 3, 7, 10},
    '1':     {0},
    '5':     {0, 7},
}

# Scale degree -> semitones (unaltered), degrees past the octave wrap mod 12.
_DEGREE_SEMITONES = {1: 0, 2: 2, 3: 4, 4: 5, 5: 7, 6: 9, 7: 11,
                     8: 12, 9: 14, 10: 16, 11: 17, 12: 19, 13: 21}

_LABEL_RE = re.compile(
    r'^(?P<root>[A-G][#b]*)'
    r'(?::(?P<short>[a-zA-Z0-9]*))?'
    r'(?:\((?P<adds>[^)]*)\))?'
    r'(?:/(?P<bass>\S+))?$'
)
_DEGREE_RE = re.compile(r'^(?P<omit>\*)?(?P<acc>[#b]*)(?P<deg>\d+)$')


class ChordParseError(ValueError):
    """Raised for annotation labels that cannot be parsed."""


@dataclass(frozen=True)
class ParsedChord:
    """Intermediate chord representation between label text and class index."""
    root: int | None
    intervals: frozenset[int]
    is_nochord: bool = False
    is_unknown: bool = False


def _pitch_class(name: str) -> int:
    semitone = _NATURAL_SEMITONES[name[0]]
    for acc in name[1:]:
        semitone += 1 if acc == '#' else -1
    return semitone % 12


def _degree_semitone(token: str) -> tuple[int, bool]:
    m = _DEGREE_RE.match(token.strip())
    if m is None:
        raise ChordParseError(f"malformed interval addition: '{token}'")
    degree = int(m.group('deg'))
    if degree not in _DEGREE_SEMITONES:
        raise ChordParseError(f"unsupported scale degree: '{token}'")
    semitone = _DEGREE_SEMITONES[degree]
    for acc in m.group('acc'):
        semitone += 1 if acc == '#' else -1
    return semitone % 12, m.group('omit') is not None


def parse_label(text: str) -> ParsedChord:
    """Parse an annotation label (Harte subset) into a ParsedChord.

    Supports ``root[:shorthand][(additions)][/bass]`` with the shorthand
    table above, degree-number additions/omissions, and the literals
    "N" (no chord) and "X" (unknown).  The bass note is ignored.
    """
    text = text.strip()
    if text == 'N':
        return ParsedChord(root=None, intervals=frozenset(), is_nochord=True)
    if text == 'X':
        return ParsedChord(root=None, intervals=frozenset(), is_unknown=True)
    m = _LABEL_RE.match(text)
    if m is None:
        raise ChordParseError(f"malformed chord label: '{text}'")
    root = _pitch_class(m.group('root'))
    short = m.group('short')
    adds = m.group('adds')
    if short:
        if short not in SHORTHANDS:
            raise ChordParseError(
                f"unknown shorthand '{short}' in '{text}'; supported: "
                + ', '.join(sorted(SHORTHANDS)))
        intervals = set(SHORTHANDS[short])
    elif adds is not None:
        intervals = {0}
    else:
        intervals = set(SHORTHANDS['maj'])
    if adds is not None:
        for token in adds.split(','):
            if not token.strip():
                continue
            semitone, omit = _degree_semitone(token)
            if omit:
                intervals.discard(semitone)
            else:
                intervals.add(semitone)
    return ParsedChord(root=root, intervals=frozenset(intervals))


def reduce_to_majmin(chord: ParsedChord) -> int:
    """Reduce a parsed chord to its 25-class index.

    Any chord containing a minor third maps to minor, everything else to
    major; unknown chords return EXCLUDED.
    """
    if chord.is_unknown:
        return EXCLUDED
    if chord.is_nochord:
        return NO_CHORD
    quality = 1 if 3 in chord.intervals else 0
    return quality * 12 + chord.root


def class_from_label(text: str) -> int:
    return reduce_to_majmin(parse_label(text))


def label_name(cls: int) -> str:
    """Text label for a class index ('C:maj', 'A:min', 'N', 'X')."""
    if cls == EXCLUDED:
        return 'X'
    if cls == NO_CHORD:
        return 'N'
    if not 0 <= cls < N_CLASSES:
        raise ValueError(f"not a chord class index: {cls}")
    quality = 'min' if cls >= 12 else 'maj'
    return f"{PITCH_NAMES[cls % 12]}:{quality}"


def transpose(cls: int, shift: int) -> int:
    """Shift a chord class by semitones; no-chord is a fixed point."""
    if cls == NO_CHORD or cls == EXCLUDED:
        return cls
    quality, root = divmod(cls, 12)
    return quality * 12 + (root + shift) % 12


def compress(labels) -> list:
    """Remove consecutive duplicates, e.g. (C,C,F,F,G) -> (C,F,G)."""
    out = []
    for lab in labels:
        if not out or out[-1] != lab:
            out.append(lab)
    return out


def is_compressed(labels) -> bool:
    return all(a != b for a, b in zip(labels, labels[1:]))


# ---------------------------------------------------------------------------
# Segment timelines and .lab files
# ---------------------------------------------------------------------------

@dataclass
class Segment:
    start: float
    end: float
    label: int


class TimelineError(ValueError):
    """Raised for malformed segment timelines."""


def validate_timeline(segments: list[Segment]) -> None:
    if not segments:
        raise TimelineError("empty timeline")
    for seg in segments:
        if not seg.end > seg.start:
            raise TimelineError(f"segment with non-positive span: {seg}")
    for a, b in zip(segments, segments[1:]):
        if abs(a.end - b.start) > 1e-9:
            raise TimelineError(f"non-contiguous timeline at {a.end} / {b.start}")


def read_lab(path, reduce: bool = True) -> list[Segment]:
    """Read a ``.lab`` annotation file: ``start end label`` per line.

    Tolerates tab or space separation and blank lines.  With ``reduce``
    labels become 25-class indices (EXCLUDED for 'X'); otherwise labels
    stay as raw strings.
    """
    segments = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 3:
                raise ChordParseError(f"{path}:{lineno}: expected 'start end label'")
            try:
                start, end = float(parts[0]), float(parts[1])
            except ValueError as exc:
                raise ChordParseError(f"{path}:{lineno}: bad timestamp") from exc
            label = ' '.join(parts[2:])
            segments.append(Segment(start, end, class_from_label(label) if reduce else label))
    return segments


def write_lab(path, segments: list[Segment]) -> None:
    with open(path, 'w') as fh:
        for seg in segments:
            label = label_name(seg.label) if isinstance(seg.label, int) else seg.label
            fh.write(f"{seg.start:.6f}\t{seg.end:.6f}\t{label}\n")


def frame_labels(segments: list[Segment], frame_rate: float,
                 n_frames: int | None = None) -> list[int]:
    """Sample segment labels at frame centers; frames past the last segment
    get no-chord."""
    if n_frames is None:
        n_frames = int(round(segments[-1].end * frame_rate))
    labels = []
    idx = 0
    for i in range(n_frames):
        t = (i + 0.5) / frame_rate
        while idx < len(segments) - 1 and t >= segments[idx].end:
            idx += 1
        seg = segments[idx]
        labels.append(seg.label if seg.start <= t < seg.end else NO_CHORD)
    return labels


def timeline_from_frames(labels, frame_rate: float) -> list[Segment]:
    """Merge a frame-level label sequence into contiguous segments."""
    segments = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            segments.append(Segment(start / frame_rate, i / frame_rate, labels[start]))
            start = i
    return segments
