"""Frame-wise chord posteriors.

Posteriors either come from CSV files exported by an external acoustic
model, or from a lightweight trainable stand-in: multinomial logistic
regression over a centered context window of spectrogram frames, trained
with uniformly smoothed targets and calibrated at prediction time with a
temperature softmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import neural
from .chords import N_CLASSES

POSTERIOR_FLOOR = 1e-12


class PosteriorValidationError(ValueError):
    """Raised for posterior files that are not row-stochastic."""


@dataclass
class PosteriorMatrix:
    probs: np.ndarray     # T x K, row-stochastic
    frame_rate: float = 10.0

    @property
    def n_frames(self) -> int:
        return self.probs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]


@dataclass
class CalibrationConfig:
    tau: float = 1.3
    beta: float = 0.9


def temperature_softmax(logits, tau: float) -> np.ndarray:
    """Softmax of logits / tau, computed with max subtraction."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def smooth_targets(true_class: int, beta: float, n_classes: int = N_CLASSES) -> np.ndarray:
    """Uniform smoothing: beta on the true class, (1-beta)/(K-1) elsewhere."""
    if not 0 < beta <= 1:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    target = np.full(n_classes, (1.0 - beta) / (n_classes - 1))
    target[true_class] = beta
    return target


class FrameClassifier:
    """Logistic regression over a context window of spectrogram frames."""

    def __init__(self, n_bands: int, context: int = 15, n_classes: int = N_CLASSES):
        if context % 2 == 0:
            raise ValueError("context must be odd")
        self.n_bands = n_bands
        self.context = context
        self.n_classes = n_classes
        self.params = {
            'W': np.zeros((context * n_bands, n_classes)),
            'b': np.zeros(n_classes),
        }

    def window_features(self, frames: np.ndarray) -> np.ndarray:
        """Stack a centered context window per frame; edges use replication."""
        if frames.shape[1] != self.n_bands:
            raise ValueError(
                f"band mismatch: model expects {self.n_bands}, got {frames.shape[1]}")
        half = self.context // 2
        padded = np.concatenate([np.repeat(frames[:1], half, axis=0), frames,
                                 np.repeat(frames[-1:], half, axis=0)])
        T = frames.shape[0]
        return np.concatenate(
            [padded[i:i + T] for i in range(self.context)], axis=1)

    def logits(self, frames: np.ndarray) -> np.ndarray:
        return self.window_features(frames) @ self.params['W'] + self.params['b']

    def predict(self, spectrogram, tau: float = 1.3) -> PosteriorMatrix:
        probs = temperature_softmax(self.logits(spectrogram.frames), tau)
        return PosteriorMatrix(probs=probs, frame_rate=spectrogram.frame_rate)

    def save(self, path) -> None:
        blob = {
            'n_bands': self.n_bands, 'context': self.context,
            'n_classes': self.n_classes,
            'W': self.params['W'].tolist(), 'b': self.params['b'].tolist(),
        }
        with open(path, 'w') as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> 'FrameClassifier':
        with open(path) as fh:
            blob = json.load(fh)
        clf = cls(blob['n_bands'], blob['context'], blob['n_classes'])
        clf.params['W'] = np.asarray(blob['W'], dtype=np.float64)
        clf.params['b'] = np.asarray(blob['b'], dtype=np.float64)
        return clf


def train_standin(spectrograms, frame_label_lists, context: int = 15,
                  calibration: CalibrationConfig | None = None,
                  epochs: int = 100, lr: float = 0.01, batch_size: int = 256,
                  seed: int = 0) -> tuple[FrameClassifier, list[float]]:
    """Train the stand-in classifier on aligned spectrogram frames and labels.

    Minimizes smoothed-target cross-entropy with mini-batch Adam; returns
    the classifier and its per-epoch loss curve.
    """
    calibration = calibration or CalibrationConfig()
    feats = []
    labels = []
    clf = None
    for spec, labs in zip(spectrograms, frame_label_lists):
        if spec.frames.shape[0] != len(labs):
            raise ValueError(
                f"alignment error: {spec.frames.shape[0]} frames vs {len(labs)} labels")
        if clf is None:
            clf = FrameClassifier(spec.frames.shape[1], context)
        feats.append(clf.window_features(spec.frames))
        labels.extend(labs)
    X = np.concatenate(feats)
    y = np.asarray(labels)
    targets = np.stack([smooth_targets(c, calibration.beta) for c in y])

    rng = np.random.default_rng(seed)
    opt = neural.Adam(clf.params)
    curve = []
    for _ in range(epochs):
        order = rng.permutation(len(X))
        epoch_loss = 0.0
        n_batches = 0
        for i in range(0, len(X), batch_size):
            idx = order[i:i + batch_size]
            xb, tb = X[idx], targets[idx]
            logits = xb @ clf.params['W'] + clf.params['b']
            probs = temperature_softmax(logits, 1.0)
            loss = -np.mean(np.sum(tb * np.log(probs + 1e-300), axis=1))
            dlogits = (probs - tb) / len(idx)
            grads = {'W': xb.T @ dlogits, 'b': dlogits.sum(axis=0)}
            opt.step(grads, lr)
            epoch_loss += loss
            n_batches += 1
        curve.append(epoch_loss / n_batches)
    return clf, curve


def load_posteriors(path, frame_rate: float = 10.0,
                    n_classes: int = N_CLASSES) -> PosteriorMatrix:
    """Read a T x K posterior CSV (header optional) and validate rows."""
    with open(path) as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(v) for v in first.replace(',', ' ').split()]
    except ValueError:
        skip = 1
    probs = np.loadtxt(path, delimiter=',', skiprows=skip, ndmin=2)
    if probs.shape[1] != n_classes:
        raise PosteriorValidationError(
            f"expected {n_classes} columns, got {probs.shape[1]}")
    if np.any(probs < 0):
        raise PosteriorValidationError("negative posterior entries")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-3):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise PosteriorValidationError(
            f"row {bad} sums to {sums[bad]:.6f}, outside [1-1e-3, 1+1e-3]")
    probs = probs / sums[:, None]
    probs = np.clip(probs, POSTERIOR_FLOOR, 1.0)
    return PosteriorMatrix(probs=probs, frame_rate=frame_rate)


def save_posteriors(post: PosteriorMatrix, path) -> None:
    np.savetxt(path, post.probs, delimiter=',', fmt='%.10g')
