"""Masked squared-error objective, its exact gradient, and (stochastic) gradient descent.

The objective sums ``(prediction - demand) ** 2`` over observed entries only,
plus an optional ``l2 * sum(param ** 2)`` over trainable parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import Hyperparams
from .data import SparseIncidence
from .encoder import PAD_ID, TextEncoderParams, encode_backward, encode_forward
from .model import FactorModel

log = logging.getLogger(__name__)

SHUFFLE_SEED_OFFSET = 2


class DivergenceError(RuntimeError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")


@dataclass
class Gradients:
    H_o: np.ndarray
    H_s: np.ndarray
    encoder: TextEncoderParams

    def arrays(self) -> list:
        return [self.H_o, self.H_s, *self.encoder.arrays()]


@dataclass
class LossTrace:
    values: list = field(default_factory=list)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, idx):
        return self.values[idx]

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("epoch\tloss\n")
            for epoch, value in enumerate(self.values, start=1):
                fh.write(f"{epoch}\t{value!r}\n")


def _encoder_trainable(model: FactorModel, freeze_encoder: bool) -> bool:
    return model.encoder_enabled and not freeze_encoder


def _as_arrays(data):
    if isinstance(data, SparseIncidence):
        occ = np.fromiter((e.occ for e in data), dtype=np.int64, count=len(data))
        skill = np.fromiter((e.skill for e in data), dtype=np.int64, count=len(data))
        demand = np.fromiter((e.demand for e in data), dtype=float, count=len(data))
        return occ, skill, demand
    return data


def _forward(model, occ, skill):
    """Predictions for the given pairs plus the per-entity encoder caches used."""
    pred = np.sum(model.H_o[occ] * model.H_s[skill], axis=1)
    feats = {}
    if model.encoder_enabled:
        for i in np.unique(occ):
            feats[("occupation", int(i))] = encode_forward(model.occ_tokens[i], model.encoder)
        for j in np.unique(skill):
            feats[("skill", int(j))] = encode_forward(model.skill_tokens[j], model.encoder)
        T_o = np.stack([feats[("occupation", int(i))][0] for i in occ])
        T_s = np.stack([feats[("skill", int(j))][0] for j in skill])
        pred = pred + np.sum(T_o * T_s, axis=1)
    return pred, feats


def _l2_penalty(model, freeze_encoder):
    total = float(np.sum(model.H_o ** 2) + np.sum(model.H_s ** 2))
    if _encoder_trainable(model, freeze_encoder):
        total += sum(float(np.sum(a ** 2)) for a in model.encoder.arrays())
    return total


def loss(model: FactorModel, data, l2: float = 0.0, freeze_encoder: bool = False) -> float:
    """Sum of squared residuals over observed entries, plus the optional l2 term."""
    occ, skill, demand = _as_arrays(data)
    if occ.size:
        pred, _ = _forward(model, occ, skill)
        value = float(np.sum((pred - demand) ** 2))
    else:
        value = 0.0
    if l2 > 0:
        value += l2 * _l2_penalty(model, freeze_encoder)
    return value


def gradient(model: FactorModel, data, l2: float = 0.0, freeze_encoder: bool = False) -> Gradients:
    """Exact partial derivatives of :func:`loss` for every parameter group.

    Frozen or disabled encoder parameters get zero gradient, as does the PAD
    embedding row.
    """
    occ, skill, demand = _as_arrays(data)
    grads = Gradients(
        np.zeros_like(model.H_o), np.zeros_like(model.H_s), model.encoder.zeros_like()
    )
    train_encoder = _encoder_trainable(model, freeze_encoder)
    if occ.size:
        pred, feats = _forward(model, occ, skill)
        g = 2.0 * (pred - demand)
        # np.add.at accumulates sequentially in entry order
        np.add.at(grads.H_o, occ, g[:, None] * model.H_s[skill])
        np.add.at(grads.H_s, skill, g[:, None] * model.H_o[occ])
        if train_encoder:
            d_t = {key: np.zeros(model.encoder.output_dim) for key in feats}
            for n in range(occ.size):
                ko, ks = ("occupation", int(occ[n])), ("skill", int(skill[n]))
                d_t[ko] += g[n] * feats[ks][0]
                d_t[ks] += g[n] * feats[ko][0]
            for key, (_, cache) in feats.items():
                encode_backward(d_t[key], cache, model.encoder, grads.encoder)
    if l2 > 0:
        grads.H_o += 2.0 * l2 * model.H_o
        grads.H_s += 2.0 * l2 * model.H_s
        if train_encoder:
            for gp, p in zip(grads.encoder.arrays(), model.encoder.arrays()):
                gp += 2.0 * l2 * p
    grads.encoder.embedding[PAD_ID] = 0.0
    return grads


def sgd_step(model: FactorModel, grads: Gradients, lr: float, freeze_encoder: bool = False) -> FactorModel:
    """In-place ``param -= lr * grad`` on every trainable parameter; returns ``model``."""
    for g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient; lower the learning rate")
    model.H_o -= lr * grads.H_o
    model.H_s -= lr * grads.H_s
    if _encoder_trainable(model, freeze_encoder):
        pad_row = model.encoder.embedding[PAD_ID].copy()
        for p, g in zip(model.encoder.arrays(), grads.encoder.arrays()):
            p -= lr * g
        model.encoder.embedding[PAD_ID] = pad_row
    return model


def _run_epoch(model, data, hp, rng):
    occ, skill, demand = data
    n = occ.size
    if hp.batch_mode == "full-batch":
        sgd_step(model, gradient(model, data, hp.l2, hp.freeze_encoder), hp.lr, hp.freeze_encoder)
        return
    order = rng.permutation(n) if hp.shuffle else np.arange(n)
    for p in order:
        one = (occ[p:p + 1], skill[p:p + 1], demand[p:p + 1])
        grads = gradient(model, one, hp.l2 / n, hp.freeze_encoder)
        sgd_step(model, grads, hp.lr, hp.freeze_encoder)


def train(model: FactorModel, data: SparseIncidence, hp: Hyperparams, trace_path=None):
    """Fit ``model`` in place on the observed entries of ``data``.

    ``per-edge`` mode visits entries one at a time (reshuffled each epoch when
    ``hp.shuffle``), taking a step on each entry's own residual with the l2
    term spread evenly over the epoch. ``full-batch`` mode takes one step per
    epoch on the full gradient. The loss after every epoch is recorded.

    Returns
    -------
    model : FactorModel
        The same object, updated.
    trace : LossTrace
    """
    if len(data) == 0:
        raise ValueError("no training entries")
    occ, skill, demand = _as_arrays(data)
    rng = np.random.default_rng(hp.seed + SHUFFLE_SEED_OFFSET)
    trace = LossTrace()
    for epoch in range(1, hp.epochs + 1):
        try:
            # overflow surfaces below as DivergenceError rather than warnings
            with np.errstate(over="ignore", invalid="ignore"):
                _run_epoch(model, (occ, skill, demand), hp, rng)
                value = loss(model, (occ, skill, demand), hp.l2, hp.freeze_encoder)
        except DivergenceError as exc:
            raise DivergenceError(str(exc), epoch) from None
        if not np.isfinite(value):
            raise DivergenceError("loss is not finite; lower the learning rate", epoch)
        trace.values.append(value)
        if epoch == 1 or epoch % 50 == 0 or epoch == hp.epochs:
            log.info("epoch %d loss %.6g", epoch, value)
        else:
            log.debug("epoch %d loss %.6g", epoch, value)
    if trace_path is not None:
        trace.write(trace_path)
    return model, trace
