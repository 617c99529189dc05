"""Description strings to goal vectors, and the registry of discovered goals."""

from __future__ import annotations

import json
import string
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

DEFAULT_DIM = 50
FALLBACK_EMBEDDINGS = "catalog_embeddings_50d.txt"


class EmbeddingParseError(ValueError):
    pass


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: dict
    dim: int
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.vectors

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[word.lower()]


def fallback_embeddings_path() -> Path:
    return Path(str(resources.files("le2.data").joinpath(FALLBACK_EMBEDDINGS)))


def load_embeddings(path=None) -> EmbeddingTable:
    """Read a GloVe-format text file ("word v1 ... vD" per line).

    ``path=None`` loads the bundled catalog-word table.
    """
    path = fallback_embeddings_path() if path is None else Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"embedding file not found: {path}")
    vectors: dict[str, np.ndarray] = {}
    notes: list[str] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0].lower(), parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise EmbeddingParseError(f"{path}:{lineno}: no vector components")
            elif len(values) != dim:
                raise EmbeddingParseError(
                    f"{path}:{lineno}: expected {dim} components for {word!r}, got {len(values)}"
                )
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingParseError(f"{path}:{lineno}: {exc}") from None
            if word in vectors:
                msg = f"duplicate word {word!r} at line {lineno}; keeping the last occurrence"
                notes.append(msg)
                warnings.warn(msg, stacklevel=2)
            vectors[word] = vec
    if dim is None:
        raise EmbeddingParseError(f"{path}: empty embedding file")
    return EmbeddingTable(vectors, dim, tuple(notes))


def tokenize(description: str) -> list[str]:
    tokens = (tok.strip(string.punctuation) for tok in description.lower().split())
    return [t for t in tokens if t]


def encode(description: str, table: EmbeddingTable) -> np.ndarray:
    """Mean of the embeddings of the in-vocabulary tokens.

    Tokens are summed in sorted order so the result is bitwise independent of word order.
    """
    vecs = [table.vectors[t] for t in sorted(tokenize(description)) if t in table.vectors]
    if not vecs:
        raise EncodingError(f"no in-vocabulary tokens in description {description!r}")
    return np.mean(vecs, axis=0)


@dataclass
class GoalRecord:
    goal_id: int
    description: str
    encoding: np.ndarray
    discovery_episode: int


@dataclass
class GoalRegistry:
    """Discovered goals in discovery order; ids are dense from 0."""

    table: EmbeddingTable
    records: list[GoalRecord] = field(default_factory=list)
    current_episode: int = 0

    def __post_init__(self):
        self._by_description = {r.description: r.goal_id for r in self.records}
        self._encodings: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, description: str) -> bool:
        return description in self._by_description

    def register(self, description: str, episode: Optional[int] = None) -> int:
        if description in self._by_description:
            return self._by_description[description]
        enc = encode(description, self.table)
        gid = len(self.records)
        ep = self.current_episode if episode is None else episode
        self.records.append(GoalRecord(gid, description, enc, int(ep)))
        self._by_description[description] = gid
        self._encodings = None
        return gid

    def id_of(self, description: str) -> int:
        return self._by_description[description]

    def encoding(self, goal_id: int) -> np.ndarray:
        return self.records[goal_id].encoding

    @property
    def encodings(self) -> np.ndarray:
        """(n_goals, D) matrix, cached until the next registration."""
        if self._encodings is None:
            self._encodings = (np.stack([r.encoding for r in self.records])
                               if self.records else np.zeros((0, self.table.dim)))
        return self._encodings

    @property
    def descriptions(self) -> list[str]:
        return [r.description for r in self.records]

    def to_json(self) -> list[dict]:
        return [
            {"goal_id": r.goal_id, "description": r.description, "discovery_episode": r.discovery_episode}
            for r in self.records
        ]

    @classmethod
    def from_json(cls, rows: list[dict], table: EmbeddingTable) -> "GoalRegistry":
        reg = cls(table)
        for expected, row in enumerate(sorted(rows, key=lambda r: r["goal_id"])):
            if row["goal_id"] != expected:
                raise ValueError(f"registry ids must be contiguous; missing id {expected}")
            reg.register(row["description"], episode=row["discovery_episode"])
        return reg

    def dumps(self) -> str:
        return json.dumps(self.to_json())
