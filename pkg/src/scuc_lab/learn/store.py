"""Solved training variations and their on-disk layout."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..powergrid import ConstraintKey, ParameterVector, UCInstance, UCSolution, instance_from_dict, instance_to_dict, \
    sorted_keys
from ..sampling import materialize

STORE_FORMAT = "scuc-lab-store/1"


class StoreMismatchError(ValueError):
    """Store and query do not describe the same base system."""


@dataclass(frozen=True, eq=False)
class TrainingRecord:
    params: ParameterVector
    enforced: frozenset[ConstraintKey]
    solution: UCSolution
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "params": self.params.to_dict(),
            "enforced": [k.to_list() for k in sorted_keys(self.enforced)],
            "solution": self.solution.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "TrainingRecord":
        return cls(ParameterVector.from_dict(d["params"]), frozenset(ConstraintKey.from_list(k) for k in d["enforced"]),
                   UCSolution.from_dict(d["solution"]), d.get("seed"))


@dataclass(eq=False)
class TrainingStore:
    """Training records sharing one base system."""

    base: UCInstance
    records: list[TrainingRecord] = field(default_factory=list)
    reserve_fraction: float = 0.0

    @property
    def fingerprint(self) -> str:
        return self.base.fingerprint()

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: TrainingRecord) -> None:
        if record.solution.commitment.shape != (len(self.base.generators), self.base.horizon):
            raise StoreMismatchError("record commitment does not match the base system")
        self.records.append(record)

    def params_matrix(self) -> np.ndarray:
        if not self.records:
            raise ValueError("training store is empty")
        return np.vstack([r.params.as_array() for r in self.records])

    def instance(self, i: int) -> UCInstance:
        return materialize(self.base, self.records[i].params, self.reserve_fraction)

    def check_compatible(self, instance: UCInstance) -> None:
        if instance.fingerprint() != self.fingerprint:
            raise StoreMismatchError(
                f"instance fingerprint {instance.fingerprint()} differs from store {self.fingerprint}")

    def subset(self, indices: Iterable[int]) -> "TrainingStore":
        return TrainingStore(self.base, [self.records[i] for i in indices], self.reserve_fraction)

    def save(self, directory: str | Path) -> None:
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        for old in path.glob("sample_*.json"):
            old.unlink()
        manifest = {
            "format": STORE_FORMAT,
            "fingerprint": self.fingerprint,
            "count": len(self.records),
            "seeds": [r.seed for r in self.records],
            "reserve_fraction": self.reserve_fraction,
        }
        _dump(manifest, path / "manifest.json")
        _dump(instance_to_dict(self.base), path / "base.json")
        for i, record in enumerate(self.records, start=1):
            _dump(record.to_dict(), path / f"sample_{i}.json")

    @classmethod
    def load(cls, directory: str | Path, base: UCInstance | None = None) -> "TrainingStore":
        path = Path(directory)
        manifest = json.loads((path / "manifest.json").read_text())
        if manifest.get("format") != STORE_FORMAT:
            raise ValueError(f"{path}: unsupported store format {manifest.get('format')!r}")
        stored_base = instance_from_dict(json.loads((path / "base.json").read_text()))
        if stored_base.fingerprint() != manifest["fingerprint"]:
            raise StoreMismatchError(f"{path}: base.json does not match the manifest fingerprint")
        if base is not None and base.fingerprint() != manifest["fingerprint"]:
            raise StoreMismatchError(
                f"{path}: store built for {manifest['fingerprint']}, base system is {base.fingerprint()}")
        records = [TrainingRecord.from_dict(json.loads((path / f"sample_{i}.json").read_text()))
                   for i in range(1, manifest["count"] + 1)]
        return cls(base if base is not None else stored_base, records, manifest.get("reserve_fraction", 0.0))


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def stack_commitments(records: Sequence[TrainingRecord]) -> np.ndarray:
    """(s, G, T) array of rounded training commitments."""
    return np.rint(np.stack([r.solution.commitment for r in records])).astype(np.int8)
