"""Minimal recurrent-network kernel.

A single-layer GRU with a learnable (or one-hot) input embedding and a
dense softmax or sigmoid head, trained by hand-derived backpropagation
through time with the Adam update rule and gradient clipping.  Shared by
the chord language model and the chord duration model.

Gate convention: with update gate u, the new hidden state is
``u * h + (1 - u) * candidate``, so a hard-zero update gate hands the
state over to the candidate entirely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

INIT_SCALE = 0.08
# Adam defaults per Kingma & Ba (2015); recorded in every checkpoint.
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_GATE_PARAMS = ('Wz', 'Wr', 'Wh', 'Uz', 'Ur', 'Uh', 'bz', 'br', 'bh', 'Wo', 'bo')


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass
class GruSpec:
    vocab_size: int              # input symbols, excluding the start token
    hidden: int
    embed_dim: int | None = None  # None -> one-hot input
    out_classes: int = 1          # 1 -> sigmoid head, >1 -> softmax head
    seed: int = 0


class RecurrentModel:
    """Parameter container for embedding + GRU + output head."""

    def __init__(self, spec: GruSpec):
        self.spec = spec
        V, H, K = spec.vocab_size, spec.hidden, spec.out_classes
        self.one_hot = spec.embed_dim is None
        E = (V + 1) if self.one_hot else spec.embed_dim
        rng = np.random.default_rng(spec.seed)

        def init(*shape):
            return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

        self.params = {
            'emb': np.eye(V + 1) if self.one_hot else init(V + 1, E),
            'Wz': init(E, H), 'Wr': init(E, H), 'Wh': init(E, H),
            'Uz': init(H, H), 'Ur': init(H, H), 'Uh': init(H, H),
            'bz': np.zeros(H), 'br': np.zeros(H), 'bh': np.zeros(H),
            'Wo': init(H, K), 'bo': np.zeros(K),
        }

    @property
    def start_index(self) -> int:
        """Dedicated start-of-sequence padding symbol; never a target."""
        return self.spec.vocab_size

    def trainable(self) -> list[str]:
        names = list(_GATE_PARAMS)
        if not self.one_hot:
            names.insert(0, 'emb')
        return names

    def initial_hidden(self, batch: int = 1) -> np.ndarray:
        return np.zeros((batch, self.spec.hidden))

    def _gates(self, h, x):
        p = self.params
        u = _sigmoid(x @ p['Wz'] + h @ p['Uz'] + p['bz'])
        r = _sigmoid(x @ p['Wr'] + h @ p['Ur'] + p['br'])
        c = np.tanh(x @ p['Wh'] + (r * h) @ p['Uh'] + p['bh'])
        h_new = u * h + (1.0 - u) * c
        return u, r, c, h_new

    def step_batch(self, hidden: np.ndarray, indices) -> tuple[np.ndarray, np.ndarray]:
        """Advance a batch of hidden states one step; returns (hidden, out).

        ``out`` holds softmax probabilities (B x K) for a softmax head, or
        change probabilities (B,) for a sigmoid head.
        """
        indices = np.asarray(indices)
        if np.any(indices < 0) or np.any(indices > self.start_index):
            raise IndexError(f"input index out of range for vocab {self.spec.vocab_size}")
        x = self.params['emb'][indices]
        _, _, _, h_new = self._gates(hidden, x)
        logits = h_new @ self.params['Wo'] + self.params['bo']
        if self.spec.out_classes == 1:
            out = _sigmoid(logits[:, 0])
        else:
            out = _softmax(logits)
        return h_new, out

    def step(self, hidden: np.ndarray, index: int):
        h, out = self.step_batch(hidden.reshape(1, -1), [index])
        return h[0], out[0]

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        blob = {
            'spec': {'vocab_size': self.spec.vocab_size, 'hidden': self.spec.hidden,
                     'embed_dim': self.spec.embed_dim,
                     'out_classes': self.spec.out_classes, 'seed': self.spec.seed},
            'adam': {'beta1': ADAM_BETA1, 'beta2': ADAM_BETA2, 'eps': ADAM_EPS},
            'params': {k: v.tolist() for k, v in self.params.items()},
        }
        with open(path, 'w') as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> 'RecurrentModel':
        with open(path) as fh:
            blob = json.load(fh)
        model = cls(GruSpec(**blob['spec']))
        for k, v in blob['params'].items():
            model.params[k] = np.asarray(v, dtype=np.float64)
        return model


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Loss and gradients (full BPTT)
# ---------------------------------------------------------------------------

def loss_and_grads(model: RecurrentModel, inputs: np.ndarray, targets: np.ndarray,
                   mask: np.ndarray):
    """Mean next-step cross-entropy and gradients over a padded batch.

    ``inputs``/``targets`` are (B, L) integer arrays; padded positions have
    mask 0 (their input index must still be valid, use the start token).
    """
    p = model.params
    B, L = inputs.shape
    H = model.spec.hidden
    K = model.spec.out_classes
    n_targets = float(mask.sum())
    if n_targets == 0:
        raise ValueError("batch contains no prediction targets")

    h = np.zeros((B, H))
    cache = []
    loss = 0.0
    dlogits_all = np.zeros((L, B, K))
    for t in range(L):
        x = p['emb'][inputs[:, t]]
        u, r, c, h_new = model._gates(h, x)
        logits = h_new @ p['Wo'] + p['bo']
        m = mask[:, t].astype(np.float64)
        if K == 1:
            prob = _sigmoid(logits[:, 0])
            y = targets[:, t].astype(np.float64)
            eps = 1e-12
            loss -= np.sum(m * (y * np.log(prob + eps) + (1 - y) * np.log(1 - prob + eps)))
            dlogits_all[t][:, 0] = m * (prob - y) / n_targets
        else:
            probs = _softmax(logits)
            y = targets[:, t]
            safe_y = np.where(mask[:, t], y, 0)
            loss -= np.sum(m * np.log(probs[np.arange(B), safe_y] + 1e-300))
            d = probs.copy()
            d[np.arange(B), safe_y] -= 1.0
            dlogits_all[t] = d * (m / n_targets)[:, None]
        cache.append((inputs[:, t], x, h, u, r, c, h_new))
        h = h_new
    loss /= n_targets

    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dh_next = np.zeros((B, H))
    for t in reversed(range(L)):
        idx, x, h_prev, u, r, c, h_new = cache[t]
        dlogits = dlogits_all[t]
        grads['Wo'] += h_new.T @ dlogits
        grads['bo'] += dlogits.sum(axis=0)
        dh = dlogits @ p['Wo'].T + dh_next

        du = dh * (h_prev - c)
        dc = dh * (1.0 - u)
        dh_prev = dh * u
        da_c = dc * (1.0 - c * c)
        da_u = du * u * (1.0 - u)
        drh = da_c @ p['Uh'].T
        dr = drh * h_prev
        dh_prev += drh * r
        da_r = dr * r * (1.0 - r)
        dh_prev += da_u @ p['Uz'].T + da_r @ p['Ur'].T

        grads['Wz'] += x.T @ da_u
        grads['Wr'] += x.T @ da_r
        grads['Wh'] += x.T @ da_c
        grads['Uz'] += h_prev.T @ da_u
        grads['Ur'] += h_prev.T @ da_r
        grads['Uh'] += (r * h_prev).T @ da_c
        grads['bz'] += da_u.sum(axis=0)
        grads['br'] += da_r.sum(axis=0)
        grads['bh'] += da_c.sum(axis=0)
        if not model.one_hot:
            dx = da_u @ p['Wz'].T + da_r @ p['Wr'].T + da_c @ p['Wh'].T
            np.add.at(grads['emb'], idx, dx)
        dh_next = dh_prev

    if model.one_hot:
        grads.pop('emb')
    return loss, grads


def gradient_check(model: RecurrentModel, inputs, targets, mask=None,
                   step: float = 1e-5) -> float:
    """Max relative error of BPTT gradients vs central finite differences.

    Gradients below 1e-6 in magnitude are compared absolutely (the
    denominator is floored there), since central differences on a loss of
    order 1 carry roundoff noise around 1e-11.
    """
    inputs = np.asarray(inputs)
    targets = np.asarray(targets)
    if mask is None:
        mask = np.ones_like(inputs, dtype=bool)
    _, grads = loss_and_grads(model, inputs, targets, mask)
    worst = 0.0
    for name in model.trainable():
        param = model.params[name]
        flat = param.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp, _ = loss_and_grads(model, inputs, targets, mask)
            flat[i] = orig - step
            lm, _ = loss_and_grads(model, inputs, targets, mask)
            flat[i] = orig
            numeric = (lp - lm) / (2 * step)
            denom = max(abs(numeric), abs(gflat[i]), 1e-6)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


# ---------------------------------------------------------------------------
# Adam and clipping
# ---------------------------------------------------------------------------

class Adam:
    """Adam optimizer over a named parameter dict."""

    def __init__(self, params: dict, names=None,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
                 eps: float = ADAM_EPS):
        self.params = params
        self.names = list(names) if names is not None else list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(params[k]) for k in self.names}
        self.v = {k: np.zeros_like(params[k]) for k in self.names}
        self.t = 0

    def step(self, grads: dict, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in self.names:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            self.params[k] -= lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def clip_gradients(grads: dict, threshold: float, mode: str = 'global') -> float:
    """Clip gradients in place; returns the pre-clip global norm."""
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
    if mode == 'global':
        if norm > threshold > 0:
            scale = threshold / norm
            for g in grads.values():
                g *= scale
    elif mode == 'element':
        for k in grads:
            np.clip(grads[k], -threshold, threshold, out=grads[k])
    else:
        raise ValueError(f"unknown clip mode: {mode}")
    return norm


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 4
    lr: float = 0.005
    anneal_from: int = 50      # epoch index where the linear decay to 0 begins
    clip: float | None = None
    clip_mode: str = 'global'
    truncate: int | None = None  # cut sequences into excerpts of this length
    seed: int = 0


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    if epoch < cfg.anneal_from:
        return cfg.lr
    span = max(cfg.epochs - cfg.anneal_from, 1)
    return cfg.lr * max(0.0, 1.0 - (epoch - cfg.anneal_from) / span)


def _make_batch(model: RecurrentModel, seqs: list[list[int]]):
    start = model.start_index
    L = max(len(s) for s in seqs)
    B = len(seqs)
    inputs = np.full((B, L), start, dtype=np.int64)
    targets = np.zeros((B, L), dtype=np.int64)
    mask = np.zeros((B, L), dtype=bool)
    for b, s in enumerate(seqs):
        inputs[b, 1:len(s)] = s[:-1]
        targets[b, :len(s)] = s
        mask[b, :len(s)] = True
    return inputs, targets, mask


def train_next_step(model: RecurrentModel, sequences: list[list[int]],
                    cfg: TrainConfig, augment=None) -> list[float]:
    """Train on next-step prediction; returns the per-epoch loss curve.

    Each sequence is start-padded; every symbol is a prediction target.
    ``augment(seq, rng)`` is applied per sequence per epoch.
    """
    if not sequences:
        raise ValueError("empty training corpus")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, model.trainable())
    curve = []
    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        order = rng.permutation(len(sequences))
        epoch_loss = 0.0
        n_batches = 0
        pool = []
        for i in order:
            seq = list(sequences[i])
            if augment is not None:
                seq = augment(seq, rng)
            if cfg.truncate is not None and len(seq) > cfg.truncate:
                off = int(rng.integers(0, len(seq) - cfg.truncate + 1))
                seq = seq[off:off + cfg.truncate]
            if len(seq) < 1:
                continue
            pool.append(seq)
        for i in range(0, len(pool), cfg.batch_size):
            batch = pool[i:i + cfg.batch_size]
            inputs, targets, mask = _make_batch(model, batch)
            loss, grads = loss_and_grads(model, inputs, targets, mask)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            if cfg.clip is not None:
                clip_gradients(grads, cfg.clip, cfg.clip_mode)
            opt.step(grads, lr)
            epoch_loss += loss
            n_batches += 1
        curve.append(epoch_loss / max(n_batches, 1))
    return curve
