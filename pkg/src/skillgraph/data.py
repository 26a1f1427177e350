"""Entity catalog and sparse occupation-skill incidence: ingestion, validation, I/O.

Entities file: one JSON object per line,
``{"id": ..., "kind": "occupation"|"skill", "name": ..., "text": ...}``.

Edges file: tab-separated with header ``occupation_id\\tskill_id\\tdemand``.
A pair that does not appear is unobserved; demand 0 is therefore not
representable as data.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

EDGES_HEADER = ("occupation_id", "skill_id", "demand")
KINDS = ("occupation", "skill")


class DataError(ValueError):
    """Invalid input data. Carries the offending location when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    text: str


@dataclass(frozen=True)
class EntityCatalog:
    """Ordered occupations and skills. Index ``i`` of an entity never changes."""

    occupations: tuple[Entity, ...]
    skills: tuple[Entity, ...]

    def __post_init__(self):
        seen = set()
        for ent in self.occupations + self.skills:
            if ent.id in seen:
                raise DataError(f"duplicate id {ent.id!r}")
            seen.add(ent.id)
        # index lookups built once; the dataclass is frozen
        object.__setattr__(
            self, "_occ_index", {e.id: i for i, e in enumerate(self.occupations)}
        )
        object.__setattr__(
            self, "_skill_index", {e.id: j for j, e in enumerate(self.skills)}
        )

    @property
    def n_occupations(self) -> int:
        return len(self.occupations)

    @property
    def n_skills(self) -> int:
        return len(self.skills)

    def occupation_index(self, entity_id: str) -> int:
        try:
            return self._occ_index[entity_id]
        except KeyError:
            raise DataError(f"unknown occupation id {entity_id!r}") from None

    def skill_index(self, entity_id: str) -> int:
        try:
            return self._skill_index[entity_id]
        except KeyError:
            raise DataError(f"unknown skill id {entity_id!r}") from None

    def texts(self) -> list[str]:
        return [e.text for e in self.occupations] + [e.text for e in self.skills]

    def require_nonempty(self):
        if not self.occupations:
            raise DataError("catalog has no occupations")
        if not self.skills:
            raise DataError("catalog has no skills")


@dataclass(frozen=True)
class Edge:
    occ: int
    skill: int
    demand: float


class SparseIncidence:
    """Observed (occupation, skill, demand) triples; every other pair is unobserved.

    Parameters
    ----------
    entries : iterable of (int, int, float)
    n_occupations, n_skills : int
        Catalog dimensions used for bounds checks.
    """

    def __init__(self, entries: Iterable, n_occupations: int, n_skills: int):
        self.n_occupations = n_occupations
        self.n_skills = n_skills
        edges = []
        seen = set()
        for occ, skill, demand in entries:
            occ, skill, demand = int(occ), int(skill), float(demand)
            if not (0 <= occ < n_occupations and 0 <= skill < n_skills):
                raise DataError(f"entry ({occ}, {skill}) outside catalog bounds")
            if not 0.0 < demand <= 1.0:
                raise DataError(f"demand {demand!r} for ({occ}, {skill}) not in (0, 1]")
            if (occ, skill) in seen:
                raise DataError(f"duplicate entry ({occ}, {skill})")
            seen.add((occ, skill))
            edges.append(Edge(occ, skill, demand))
        self.entries: tuple[Edge, ...] = tuple(edges)
        self._lookup = {(e.occ, e.skill): e.demand for e in edges}

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, pair):
        return tuple(pair) in self._lookup

    def __eq__(self, other):
        if not isinstance(other, SparseIncidence):
            return NotImplemented
        return (
            self.entries == other.entries
            and self.n_occupations == other.n_occupations
            and self.n_skills == other.n_skills
        )

    def __repr__(self):
        return (
            f"SparseIncidence({len(self)} entries, "
            f"shape=({self.n_occupations}, {self.n_skills}))"
        )

    def get(self, occ: int, skill: int, default=None):
        return self._lookup.get((occ, skill), default)

    def subset(self, positions: Sequence[int]) -> "SparseIncidence":
        return SparseIncidence(
            ((self.entries[p].occ, self.entries[p].skill, self.entries[p].demand)
             for p in positions),
            self.n_occupations,
            self.n_skills,
        )

    def mean_demand(self) -> float:
        if not self.entries:
            raise DataError("mean of empty incidence")
        return sum(e.demand for e in self.entries) / len(self.entries)

    def occupations_observed(self) -> set[int]:
        return {e.occ for e in self.entries}

    def skills_observed(self) -> set[int]:
        return {e.skill for e in self.entries}


def ingest_entities(path) -> EntityCatalog:
    """Read an entities file. File order defines entity indices."""
    occupations, skills = [], []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON ({exc.msg})", path, lineno) from None
            if not isinstance(rec, dict):
                raise DataError("record is not an object", path, lineno)
            missing = [k for k in ("id", "kind", "name", "text") if k not in rec]
            if missing:
                raise DataError(f"missing field(s) {', '.join(missing)}", path, lineno)
            if not all(isinstance(rec[k], str) for k in ("id", "kind", "name", "text")):
                raise DataError("fields id, kind, name, text must be strings", path, lineno)
            if rec["kind"] not in KINDS:
                raise DataError(f"unknown kind {rec['kind']!r}", path, lineno)
            if rec["id"] in seen:
                raise DataError(
                    f"duplicate id {rec['id']!r} (first at line {seen[rec['id']]})",
                    path, lineno,
                )
            seen[rec["id"]] = lineno
            ent = Entity(rec["id"], rec["name"], rec["text"])
            (occupations if rec["kind"] == "occupation" else skills).append(ent)
    catalog = EntityCatalog(tuple(occupations), tuple(skills))
    try:
        catalog.require_nonempty()
    except DataError as exc:
        raise DataError(str(exc), path) from None
    return catalog


def write_entities(catalog: EntityCatalog, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for kind, group in (("occupation", catalog.occupations), ("skill", catalog.skills)):
            for e in group:
                rec = {"id": e.id, "kind": kind, "name": e.name, "text": e.text}
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def ingest_edges(path, catalog: EntityCatalog) -> SparseIncidence:
    """Read an edges file against ``catalog``; errors name the file and line."""
    rows = []
    seen: dict[tuple[int, int], int] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if tuple(header.rstrip("\r\n").split("\t")) != EDGES_HEADER:
            raise DataError(
                "bad header, expected " + "\\t".join(EDGES_HEADER), path, 1
            )
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"expected 3 tab-separated fields, got {len(parts)}", path, lineno)
            occ_id, skill_id, demand_s = parts
            try:
                i = catalog.occupation_index(occ_id)
                j = catalog.skill_index(skill_id)
            except DataError as exc:
                raise DataError(str(exc), path, lineno) from None
            try:
                demand = float(demand_s)
            except ValueError:
                raise DataError(f"demand {demand_s!r} is not a number", path, lineno) from None
            if not 0.0 < demand <= 1.0:
                raise DataError(f"demand {demand_s} not in (0, 1]", path, lineno)
            if (i, j) in seen:
                raise DataError(
                    f"duplicate edge ({occ_id}, {skill_id}) (first at line {seen[(i, j)]})",
                    path, lineno,
                )
            seen[(i, j)] = lineno
            rows.append((i, j, demand))
    return SparseIncidence(rows, catalog.n_occupations, catalog.n_skills)


def write_edges(incidence: SparseIncidence, catalog: EntityCatalog, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(EDGES_HEADER) + "\n")
        for e in incidence:
            fh.write(
                f"{catalog.occupations[e.occ].id}\t{catalog.skills[e.skill].id}\t{e.demand!r}\n"
            )


def split_holdout(incidence: SparseIncidence, fraction: float, seed: int):
    """Partition observed entries uniformly at random into (train, heldout).

    ``round(fraction * n)`` entries are held out, clipped so that at least one
    remains in train and at least one is held out.
    """
    if not 0.0 < fraction < 1.0:
        raise DataError(f"holdout fraction {fraction!r} not in (0, 1)")
    n = len(incidence)
    if n < 2:
        raise DataError(f"need at least 2 entries to split, got {n}")
    n_held = min(max(round(fraction * n), 1), n - 1)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    held = sorted(order[:n_held])
    train = sorted(order[n_held:])
    return incidence.subset(train), incidence.subset(held)
