"""Held-out error metrics, per-occupation skill ranking, and a brute-force completion oracle."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import SparseIncidence
from .model import FactorModel, complete_matrix, predict_entry


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    n: int
    baseline_rmse: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_tsv(self) -> str:
        return f"rmse\t{self.rmse!r}\tmae\t{self.mae!r}\tn\t{self.n}\tbaseline_rmse\t{self.baseline_rmse!r}"


def evaluate(model: FactorModel, heldout: SparseIncidence, train_mean: float) -> EvalReport:
    """RMSE and MAE of raw predictions on ``heldout``, next to a constant ``train_mean`` baseline."""
    if len(heldout) == 0:
        raise EvaluationError("held-out set is empty")
    # sorted entries make the reduction independent of input order
    entries = sorted(heldout, key=lambda e: (e.occ, e.skill))
    resid = np.array([predict_entry(model, e.occ, e.skill) - e.demand for e in entries])
    base = np.array([train_mean - e.demand for e in entries])
    return EvalReport(
        rmse=float(np.sqrt(np.mean(resid ** 2))),
        mae=float(np.mean(np.abs(resid))),
        n=len(entries),
        baseline_rmse=float(np.sqrt(np.mean(base ** 2))),
    )


def rank_skills(model: FactorModel, i: int, top_k: int, completed=None):
    """Top ``top_k`` skills for occupation ``i`` by predicted demand.

    Ties go to the lower skill index. ``completed`` may pass a precomputed
    matrix to avoid re-running the encoder.
    """
    if not 0 <= i < model.n_occupations:
        raise EvaluationError(f"occupation index {i} out of bounds [0, {model.n_occupations})")
    if top_k < 1:
        raise EvaluationError(f"top_k must be >= 1, got {top_k}")
    row = (complete_matrix(model) if completed is None else completed)[i]
    order = sorted(range(row.shape[0]), key=lambda j: (-row[j], j))
    return [(j, float(row[j])) for j in order[:top_k]]


def oracle_complete(H_o, H_s, T_o, T_s):
    """Concatenate-then-dot completion with plain Python loops.

    Deliberately shares no code with the model; used to cross-check it.
    """
    H_o, H_s = [list(map(list, np.asarray(m, dtype=float))) for m in (H_o, H_s)]
    T_o = [list(r) for r in np.asarray(T_o, dtype=float).reshape(len(H_o), -1)]
    T_s = [list(r) for r in np.asarray(T_s, dtype=float).reshape(len(H_s), -1)]
    if H_o and H_s and len(H_o[0]) != len(H_s[0]):
        raise EvaluationError("latent dimensions of H_o and H_s differ")
    if T_o and T_s and len(T_o[0]) != len(T_s[0]):
        raise EvaluationError("semantic feature dimensions of T_o and T_s differ")
    out = []
    for i in range(len(H_o)):
        p = H_o[i] + T_o[i]
        row = []
        for j in range(len(H_s)):
            q = H_s[j] + T_s[j]
            row.append(math.fsum(p[t] * q[t] for t in range(len(p))))
        out.append(row)
    return np.array(out, dtype=float).reshape(len(H_o), len(H_s))
