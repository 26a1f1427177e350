"""Latent factors fused with text features, and the completed demand matrix.

An occupation ``i`` is represented by ``[H_o[i] : T(text_i)]`` and a skill
``j`` by ``[H_s[j] : T(text_j)]``; the predicted demand is their inner
product. With the encoder disabled this is plain two-factor matrix
factorization, ``H_o[i] . H_s[j]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import Hyperparams
from .data import EntityCatalog
from .encoder import (
    INIT_SCALE,
    TextEncoderParams,
    Vocab,
    encode_text,
    init_encoder,
    tokenize,
)

FORMAT_VERSION = 1
SIDES = ("occupation", "skill")


class ModelError(ValueError):
    pass


class CheckpointError(ModelError):
    pass


@dataclass
class FactorModel:
    H_o: np.ndarray
    H_s: np.ndarray
    encoder: TextEncoderParams
    vocab: Vocab
    occ_tokens: list
    skill_tokens: list
    encoder_enabled: bool = True
    occupation_ids: tuple = ()
    skill_ids: tuple = ()
    # free-form run metadata carried through checkpoints (observed edges, train mean, ...)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.H_o.ndim != 2 or self.H_s.ndim != 2 or self.H_o.shape[1] != self.H_s.shape[1]:
            raise ModelError(
                f"latent factor shapes {self.H_o.shape} and {self.H_s.shape} disagree on k"
            )
        if len(self.occ_tokens) != self.H_o.shape[0] or len(self.skill_tokens) != self.H_s.shape[0]:
            raise ModelError("one token sequence per entity required")
        if self.encoder.vocab_size != len(self.vocab):
            raise ModelError(
                f"embedding has {self.encoder.vocab_size} rows, vocab has {len(self.vocab)} tokens"
            )

    @property
    def k(self) -> int:
        return self.H_o.shape[1]

    @property
    def n_occupations(self) -> int:
        return self.H_o.shape[0]

    @property
    def n_skills(self) -> int:
        return self.H_s.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.k + (self.encoder.output_dim if self.encoder_enabled else 0)

    def copy(self) -> "FactorModel":
        return FactorModel(
            self.H_o.copy(),
            self.H_s.copy(),
            self.encoder.copy(),
            self.vocab,
            [t.copy() for t in self.occ_tokens],
            [t.copy() for t in self.skill_tokens],
            self.encoder_enabled,
            self.occupation_ids,
            self.skill_ids,
            json.loads(json.dumps(self.meta)),
        )

    def tokens(self, side: str, index: int) -> np.ndarray:
        self._check_index(side, index)
        return (self.occ_tokens if side == "occupation" else self.skill_tokens)[index]

    def latent(self, side: str) -> np.ndarray:
        if side not in SIDES:
            raise ModelError(f"side must be occupation or skill, got {side!r}")
        return self.H_o if side == "occupation" else self.H_s

    def _check_index(self, side, index):
        n = self.latent(side).shape[0]
        if not 0 <= index < n:
            raise ModelError(f"{side} index {index} out of bounds [0, {n})")


def init_model(catalog: EntityCatalog, vocab: Vocab, config: Hyperparams, seed: int) -> FactorModel:
    """Fresh model with all weights drawn from a seeded uniform [-0.05, 0.05].

    Draw order is fixed (H_o, H_s, embedding, filters) so a seed fully
    determines the model.
    """
    catalog.require_nonempty()
    if config.k <= 0:
        raise ModelError(f"latent dim k must be positive, got {config.k}")
    if config.min_count != vocab.min_count:
        raise ModelError(
            f"config min_count={config.min_count} but vocab was built with {vocab.min_count}"
        )
    rng = np.random.default_rng(seed)
    H_o = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(catalog.n_occupations, config.k))
    H_s = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(catalog.n_skills, config.k))
    encoder = init_encoder(
        len(vocab), config.embed_dim, config.windows, config.n_filters, rng, config.activation
    )
    min_len = encoder.min_length
    return FactorModel(
        H_o,
        H_s,
        encoder,
        vocab,
        [tokenize(e.text, vocab, min_len) for e in catalog.occupations],
        [tokenize(e.text, vocab, min_len) for e in catalog.skills],
        config.encoder_enabled,
        tuple(e.id for e in catalog.occupations),
        tuple(e.id for e in catalog.skills),
    )


def semantic_features(model: FactorModel, side: str) -> np.ndarray:
    """Encoder output for every entity on one side, shape (n, output_dim)."""
    seqs = model.occ_tokens if side == "occupation" else model.skill_tokens
    if not model.encoder_enabled:
        return np.zeros((len(seqs), 0))
    return np.stack([encode_text(t, model.encoder) for t in seqs])


def fused_matrix(model: FactorModel, side: str) -> np.ndarray:
    return np.hstack([model.latent(side), semantic_features(model, side)])


def fused_features(model: FactorModel, side: str, index: int) -> np.ndarray:
    """``[H_row : T]`` for one entity, or the latent row alone when the encoder is off."""
    model._check_index(side, index)
    row = model.latent(side)[index]
    if not model.encoder_enabled:
        return row.copy()
    return np.concatenate([row, encode_text(model.tokens(side, index), model.encoder)])


def _rowdot(p, q):
    # elementwise product then pairwise sum along the last axis; the same
    # reduction is used for single entries and whole blocks so both agree bitwise
    return np.sum(p * q, axis=-1)


def predict_entry(model: FactorModel, i: int, j: int) -> float:
    """Raw (unclamped) predicted demand of occupation ``i`` for skill ``j``."""
    return float(_rowdot(fused_features(model, "occupation", i),
                         fused_features(model, "skill", j)))


def complete_matrix(model: FactorModel, block_rows: int = 256) -> np.ndarray:
    """Dense ``(n_occupations, n_skills)`` matrix of raw predictions."""
    P = fused_matrix(model, "occupation")
    Q = fused_matrix(model, "skill")
    out = np.empty((P.shape[0], Q.shape[0]))
    for start in range(0, P.shape[0], block_rows):
        stop = start + block_rows
        out[start:stop] = _rowdot(P[start:stop, None, :], Q[None, :, :])
    return out


def _tolist(a):
    return np.asarray(a, dtype=float).tolist()


def checkpoint_dict(model: FactorModel) -> dict:
    enc = model.encoder
    return {
        "format_version": FORMAT_VERSION,
        "k": model.k,
        "encoder_enabled": model.encoder_enabled,
        "encoder": {
            "embed_dim": enc.embed_dim,
            "n_filters": enc.n_filters,
            "windows": list(enc.windows),
            "activation": enc.activation,
        },
        "vocab": {"tokens": list(model.vocab.tokens), "min_count": model.vocab.min_count},
        "occupation_ids": list(model.occupation_ids),
        "skill_ids": list(model.skill_ids),
        "occupation_tokens": [t.tolist() for t in model.occ_tokens],
        "skill_tokens": [t.tolist() for t in model.skill_tokens],
        "params": {
            "H_o": _tolist(model.H_o),
            "H_s": _tolist(model.H_s),
            "embedding": _tolist(enc.embedding),
            "filters": [_tolist(f) for f in enc.filters],
            "biases": [_tolist(b) for b in enc.biases],
        },
        "meta": model.meta,
    }


def save_checkpoint(model: FactorModel, path):
    """Write a JSON checkpoint.

    Floats are written with Python's shortest round-trip repr, so loading
    reproduces every parameter bit for bit. Key order is fixed, so equal
    models give byte-identical files.
    """
    text = json.dumps(checkpoint_dict(model), indent=1, sort_keys=True, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def _array(value, shape, name):
    a = np.asarray(value, dtype=float)
    if a.shape != shape:
        raise CheckpointError(f"parameter {name} has shape {a.shape}, expected {shape}")
    return a


def model_from_dict(doc: dict) -> FactorModel:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version {version!r} (expected {FORMAT_VERSION})"
        )
    try:
        k = int(doc["k"])
        enc_cfg = doc["encoder"]
        vocab = Vocab(tuple(doc["vocab"]["tokens"]), int(doc["vocab"]["min_count"]))
        occ_ids = tuple(doc["occupation_ids"])
        skill_ids = tuple(doc["skill_ids"])
        params = doc["params"]
        windows = tuple(int(w) for w in enc_cfg["windows"])
        d_e, n_f = int(enc_cfg["embed_dim"]), int(enc_cfg["n_filters"])
        H_o = _array(params["H_o"], (len(occ_ids), k), "H_o")
        H_s = _array(params["H_s"], (len(skill_ids), k), "H_s")
        encoder = TextEncoderParams(
            _array(params["embedding"], (len(vocab), d_e), "embedding"),
            [_array(f, (n_f, w, d_e), f"filters[{w}]") for f, w in zip(params["filters"], windows)],
            [_array(b, (n_f,), f"biases[{w}]") for b, w in zip(params["biases"], windows)],
            windows,
            enc_cfg["activation"],
        )
        occ_tokens = [np.asarray(t, dtype=np.int64) for t in doc["occupation_tokens"]]
        skill_tokens = [np.asarray(t, dtype=np.int64) for t in doc["skill_tokens"]]
        return FactorModel(
            H_o, H_s, encoder, vocab, occ_tokens, skill_tokens,
            bool(doc["encoder_enabled"]), occ_ids, skill_ids, dict(doc.get("meta", {})),
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None


def load_checkpoint(path, catalog: EntityCatalog | None = None) -> FactorModel:
    """Read a checkpoint, optionally checking it against ``catalog``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: checkpoint is not a JSON object")
    try:
        model = model_from_dict(doc)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    if catalog is not None:
        if (model.n_occupations, model.n_skills) != (catalog.n_occupations, catalog.n_skills):
            raise CheckpointError(
                f"{path}: checkpoint is for {model.n_occupations} occupations x "
                f"{model.n_skills} skills, catalog has {catalog.n_occupations} x {catalog.n_skills}"
            )
        if model.occupation_ids and (
            model.occupation_ids != tuple(e.id for e in catalog.occupations)
            or model.skill_ids != tuple(e.id for e in catalog.skills)
        ):
            raise CheckpointError(f"{path}: entity ids do not match the catalog")
    return model
