from __future__ import annotations

import dataclasses
from dataclasses import dataclass

BATCH_MODES = ("per-edge", "full-batch")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    """Model shape and optimizer settings.

    ``k`` is the latent dimension; ``embed_dim``, ``n_filters`` and ``windows``
    shape the text encoder. ``l2`` adds ``l2 * sum(param ** 2)`` over trainable
    parameters to the squared-error objective.
    """

    k: int = 8
    lr: float = 0.05
    epochs: int = 500
    l2: float = 0.0
    batch_mode: str = "per-edge"
    seed: int = 0
    freeze_encoder: bool = False
    encoder_enabled: bool = True
    shuffle: bool = True
    embed_dim: int = 16
    n_filters: int = 8
    windows: tuple = (1, 2)
    min_count: int = 1
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        if self.k <= 0:
            raise ConfigError(f"latent dim k must be positive, got {self.k}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.epochs > 0 and not self.lr > 0:
            raise ConfigError(f"lr must be > 0 when training, got {self.lr}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")
        if self.batch_mode not in BATCH_MODES:
            raise ConfigError(
                f"batch_mode must be one of {', '.join(BATCH_MODES)}, got {self.batch_mode!r}"
            )
        if self.embed_dim < 1 or self.n_filters < 1:
            raise ConfigError("embed_dim and n_filters must be positive")
        if not self.windows or min(self.windows) < 1:
            raise ConfigError(f"windows must be positive integers, got {self.windows}")
        if self.min_count < 1:
            raise ConfigError(f"min_count must be positive, got {self.min_count}")

    def replace(self, **changes) -> "Hyperparams":
        return dataclasses.replace(self, **changes)

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]
