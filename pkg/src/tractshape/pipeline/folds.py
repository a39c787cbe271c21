import hashlib
import json
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from ..errors import InvalidInputError


@dataclass(frozen=True)
class FoldAssignment:
    folds: Dict[str, int]
    k: int
    seed: int

    @property
    def subject_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(self.folds))

    def members(self, fold):
        return tuple(s for s in self.subject_ids if self.folds[s] == fold)

    def training(self, fold):
        return tuple(s for s in self.subject_ids if self.folds[s] != fold)

    def sizes(self):
        return [len(self.members(f)) for f in range(self.k)]

    def digest(self):
        blob = json.dumps({"k": self.k, "folds": sorted(self.folds.items())}).encode()
        return hashlib.sha256(blob).hexdigest()


def make_folds(subject_ids, k=5, seed=0):
    """Seeded shuffle of the sorted ids followed by round-robin fold assignment."""
    ids = sorted(set(str(s) for s in subject_ids))
    if len(ids) != len(list(subject_ids)):
        raise InvalidInputError("duplicate subject ids passed to make_folds")
    if k < 2:
        raise InvalidInputError(f"need at least 2 folds, got {k}")
    if len(ids) < k:
        raise InvalidInputError(f"cannot split {len(ids)} subjects into {k} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    folds = {ids[j]: int(pos % k) for pos, j in enumerate(order)}
    return FoldAssignment(folds, k, seed)
