"""Text to fixed-length feature vector: token embedding, 1-D convolution, max-pool.

Each window size ``w`` owns ``n_filters`` filters of shape ``(w, embed_dim)``.
A filter slides over every length-``w`` window of the embedded token sequence,
the response is ``<filter, window> + bias``, passed through ReLU (unless the
activation is ``"none"``) and max-pooled over positions. Pooled values are
concatenated in (window, filter) order.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
INIT_SCALE = 0.05
ACTIVATIONS = ("relu", "none")


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    min_count: int = 1
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.tokens[:2] != (PAD, UNK):
            raise EncoderError("vocab must start with PAD and UNK")
        index = {t: i for i, t in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise EncoderError("vocab has duplicate tokens")
        object.__setattr__(self, "index", index)

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def __contains__(self, token):
        return token in self.index


def split_text(text: str) -> list[str]:
    return text.lower().split()


def build_vocab(texts, min_count: int = 1) -> Vocab:
    """Vocabulary over lowercased whitespace tokens.

    Tokens with corpus count >= ``min_count`` are kept, ordered by
    descending count with ties broken lexicographically. PAD and UNK occupy
    indices 0 and 1.
    """
    if min_count < 1:
        raise EncoderError(f"min_count must be positive, got {min_count}")
    counts = Counter(tok for text in texts for tok in split_text(text))
    for special in (PAD, UNK):
        counts.pop(special, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    return Vocab((PAD, UNK, *kept), min_count)


def tokenize(text: str, vocab: Vocab, min_length: int = 1) -> np.ndarray:
    """Map text to token ids, right-padding with PAD up to ``min_length``."""
    ids = [vocab[tok] for tok in split_text(text)]
    if len(ids) < min_length:
        ids.extend([PAD_ID] * (min_length - len(ids)))
    return np.asarray(ids, dtype=np.int64)


@dataclass
class TextEncoderParams:
    """Trainable encoder state.

    Attributes
    ----------
    embedding : ndarray, shape (vocab_size, embed_dim)
        Row ``PAD_ID`` is kept at zero and never updated.
    filters : list of ndarray, one per window, shape (n_filters, w, embed_dim)
    biases : list of ndarray, one per window, shape (n_filters,)
    windows : tuple of int
    activation : {"relu", "none"}
    """

    embedding: np.ndarray
    filters: list
    biases: list
    windows: tuple
    activation: str = "relu"

    def __post_init__(self):
        self.windows = tuple(int(w) for w in self.windows)
        if not self.windows or min(self.windows) < 1:
            raise EncoderError(f"windows must be positive integers, got {self.windows}")
        if self.activation not in ACTIVATIONS:
            raise EncoderError(f"unknown activation {self.activation!r}")
        if len(self.filters) != len(self.windows) or len(self.biases) != len(self.windows):
            raise EncoderError("need one filter bank and one bias vector per window")
        d_e = self.embedding.shape[1]
        n_f = self.filters[0].shape[0]
        for w, f, b in zip(self.windows, self.filters, self.biases):
            if f.shape != (n_f, w, d_e) or b.shape != (n_f,):
                raise EncoderError(
                    f"window {w}: filter shape {f.shape} / bias shape {b.shape} "
                    f"inconsistent with n_filters={n_f}, embed_dim={d_e}"
                )

    @property
    def embed_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def n_filters(self) -> int:
        return self.filters[0].shape[0]

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def output_dim(self) -> int:
        return self.n_filters * len(self.windows)

    @property
    def min_length(self) -> int:
        return max(self.windows)

    def copy(self) -> "TextEncoderParams":
        return TextEncoderParams(
            self.embedding.copy(),
            [f.copy() for f in self.filters],
            [b.copy() for b in self.biases],
            self.windows,
            self.activation,
        )

    def zeros_like(self) -> "TextEncoderParams":
        return TextEncoderParams(
            np.zeros_like(self.embedding),
            [np.zeros_like(f) for f in self.filters],
            [np.zeros_like(b) for b in self.biases],
            self.windows,
            self.activation,
        )

    def arrays(self) -> list:
        return [self.embedding, *self.filters, *self.biases]


def init_encoder(vocab_size, embed_dim, windows, n_filters, rng, activation="relu"):
    """Uniform [-0.05, 0.05] embedding and filters, zero biases, zero PAD row."""
    if embed_dim < 1 or n_filters < 1:
        raise EncoderError("embed_dim and n_filters must be positive")
    if vocab_size < 2:
        raise EncoderError("vocab must contain at least PAD and UNK")
    embedding = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, embed_dim))
    embedding[PAD_ID] = 0.0
    filters = [rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_filters, w, embed_dim))
               for w in windows]
    biases = [np.zeros(n_filters) for _ in windows]
    return TextEncoderParams(embedding, filters, biases, tuple(windows), activation)


def _check_tokens(tokens, params):
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1:
        raise EncoderError("token sequence must be one-dimensional")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= params.vocab_size):
        raise EncoderError(
            f"token index out of vocab bounds [0, {params.vocab_size})"
        )
    if tokens.size < params.min_length:
        raise EncoderError(
            f"token sequence of length {tokens.size} shorter than widest window "
            f"{params.min_length}; pad with tokenize()"
        )
    return tokens


def _window_index(length, w):
    return np.arange(length - w + 1)[:, None] + np.arange(w)


def encode_forward(tokens, params: TextEncoderParams):
    """Encode and keep what backprop needs.

    Returns
    -------
    features : ndarray, shape (output_dim,)
    cache : (token ids, per-window argmax positions, per-window pooled values)
    """
    tokens = _check_tokens(tokens, params)
    embedded = params.embedding[tokens]
    out, positions = [], []
    for w, filt, bias in zip(params.windows, params.filters, params.biases):
        # (positions, w * d_e) windows against (n_f, w * d_e) filters
        win = embedded[_window_index(tokens.size, w)].reshape(tokens.size - w + 1, -1)
        z = win @ filt.reshape(filt.shape[0], -1).T + bias
        if params.activation == "relu":
            z = np.maximum(z, 0.0)
        # np.argmax returns the first maximal position: lowest-index tie rule
        pos = np.argmax(z, axis=0)
        out.append(z[pos, np.arange(z.shape[1])])
        positions.append(pos)
    return np.concatenate(out), (tokens, positions, out)


def encode_text(tokens, params: TextEncoderParams) -> np.ndarray:
    """Semantic feature vector of length ``n_filters * len(windows)``."""
    return encode_forward(tokens, params)[0]


def encode_backward(grad_out, cache, params: TextEncoderParams, grads: TextEncoderParams):
    """Accumulate d(loss)/d(params) into ``grads`` given d(loss)/d(features).

    Each pooled gradient flows only to its argmax window. Under ReLU a pooled
    value of exactly zero passes no gradient.
    """
    tokens, positions, pooled = cache
    grad_out = np.asarray(grad_out, dtype=float)
    n_f, d_e = params.n_filters, params.embed_dim
    for k, (w, filt) in enumerate(zip(params.windows, params.filters)):
        g = grad_out[k * n_f:(k + 1) * n_f]
        if params.activation == "relu":
            g = np.where(pooled[k] > 0.0, g, 0.0)
        if not g.any():
            continue
        ids = tokens[positions[k][:, None] + np.arange(w)]  # (n_f, w)
        grads.filters[k] += g[:, None, None] * params.embedding[ids]
        grads.biases[k] += g
        # np.add.at accumulates repeated token ids correctly
        np.add.at(grads.embedding, ids.ravel(), (g[:, None, None] * filt).reshape(-1, d_e))
    grads.embedding[PAD_ID] = 0.0
    return grads


def load_pretrained_embeddings(path, vocab: Vocab, params: TextEncoderParams) -> int:
    """Overwrite embedding rows from a word-vector text file.

    Format: first line ``<count> <dim>``, then ``token v1 ... vdim`` per line.
    Tokens absent from ``vocab`` are skipped; PAD is never overwritten.
    Returns the number of rows replaced.
    """
    replaced = 0
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise EncoderError(f"{path}:1: expected '<count> <dim>' header")
        count, dim = int(head[0]), int(head[1])
        if dim != params.embed_dim:
            raise EncoderError(
                f"{path}: embedding dim {dim} does not match encoder embed_dim {params.embed_dim}"
            )
        n_rows = 0
        for lineno, raw in enumerate(fh, start=2):
            parts = raw.split()
            if not parts:
                continue
            n_rows += 1
            if len(parts) != dim + 1:
                raise EncoderError(f"{path}:{lineno}: expected token and {dim} values")
            token = parts[0].lower()
            if token not in vocab or vocab[token] == PAD_ID:
                continue
            params.embedding[vocab[token]] = np.asarray(parts[1:], dtype=float)
            replaced += 1
        if n_rows != count:
            raise EncoderError(f"{path}: header says {count} rows, found {n_rows}")
    return replaced
