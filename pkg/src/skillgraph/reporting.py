"""Skill-demand coverage fractions and proficiency bins over a completed matrix.

For a skill ``j``:

* ``fraction_current`` is the share of occupations with an observed edge to ``j``;
* ``fraction_additional`` is the share of occupations *without* an observed
  edge whose clamped prediction reaches the threshold.

Default proficiency cutoffs (0.33 / 0.66) are a tertile heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SparseIncidence

LABELS = ("none", "basic", "advanced")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ProficiencyThresholds:
    t_basic: float = 0.33
    t_advanced: float = 0.66

    def __post_init__(self):
        if not 0.0 < self.t_basic < self.t_advanced <= 1.0:
            raise ReportError(
                f"need 0 < t_basic < t_advanced <= 1, got ({self.t_basic}, {self.t_advanced})"
            )


@dataclass(frozen=True)
class DemandReport:
    skill_id: str
    fraction_current: float
    fraction_additional: float
    n_occupations: int
    n_current: int
    n_additional: int
    threshold: float
    bins: tuple = ()


def clamp_predictions(completed, observed: SparseIncidence | None = None) -> np.ndarray:
    """Clip to [0, 1], then overwrite observed pairs with their observed demand."""
    out = np.clip(np.asarray(completed, dtype=float), 0.0, 1.0)
    if observed is not None:
        for e in observed:
            out[e.occ, e.skill] = e.demand
    return out


def _check_skill(clamped, j):
    if not 0 <= j < clamped.shape[1]:
        raise ReportError(f"skill index {j} out of bounds [0, {clamped.shape[1]})")


def demand_report(clamped, observed: SparseIncidence, j: int, threshold: float,
                  skill_id: str | None = None, thresholds: ProficiencyThresholds | None = None
                  ) -> DemandReport:
    clamped = np.asarray(clamped, dtype=float)
    _check_skill(clamped, j)
    if not 0.0 < threshold <= 1.0:
        raise ReportError(f"threshold {threshold!r} not in (0, 1]")
    n_occ = clamped.shape[0]
    seen = np.zeros(n_occ, dtype=bool)
    for e in observed:
        if e.skill == j:
            seen[e.occ] = True
    additional = ~seen & (clamped[:, j] >= threshold)
    bins = tuple(bin_proficiency(clamped, j, thresholds)) if thresholds is not None else ()
    return DemandReport(
        skill_id=str(j) if skill_id is None else skill_id,
        fraction_current=int(seen.sum()) / n_occ,
        fraction_additional=int(additional.sum()) / n_occ,
        n_occupations=n_occ,
        n_current=int(seen.sum()),
        n_additional=int(additional.sum()),
        threshold=threshold,
        bins=bins,
    )


def bin_proficiency(clamped, j: int, thresholds: ProficiencyThresholds) -> list[str]:
    """Per-occupation label: advanced if >= t_advanced, basic if >= t_basic, else none."""
    clamped = np.asarray(clamped, dtype=float)
    _check_skill(clamped, j)
    col = clamped[:, j]
    labels = np.where(col >= thresholds.t_advanced, 2, np.where(col >= thresholds.t_basic, 1, 0))
    return [LABELS[k] for k in labels]


def write_report(fh, clamped, observed: SparseIncidence, j: int, report: DemandReport,
                 occupation_ids, skill_id: str, thresholds: ProficiencyThresholds):
    """Tab-separated per-occupation rows followed by a ``#``-prefixed summary footer."""
    bins = bin_proficiency(clamped, j, thresholds)
    fh.write("occupation_id\tskill_id\tvalue\tsource\tbin\n")
    for i, occ_id in enumerate(occupation_ids):
        source = "observed" if (i, j) in observed else "predicted"
        fh.write(f"{occ_id}\t{skill_id}\t{float(clamped[i, j])!r}\t{source}\t{bins[i]}\n")
    counts = {label: bins.count(label) for label in LABELS}
    fh.write(f"# fraction_current\t{report.fraction_current!r}\n")
    fh.write(f"# fraction_additional\t{report.fraction_additional!r}\n")
    fh.write(f"# threshold\t{report.threshold!r}\n")
    fh.write(
        "# bins\t" + "\t".join(f"{label}={counts[label]}" for label in LABELS) + "\n"
    )
