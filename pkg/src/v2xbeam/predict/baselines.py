"""Location-only nearest-neighbour beam ranking."""
from __future__ import annotations

import numpy as np


class KnnLocationBaseline:
    """k-NN vote over training beam labels using the (x, y) MS location only.

    Labels are ranked by vote count, then by their nearest voter's distance,
    then by label index. Labels without votes follow in order of training
    frequency so every ranking is complete.
    """

    def __init__(self, locations, labels, n_classes: int, k: int = 5):
        locations = np.asarray(locations, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        if len(locations) == 0:
            raise ValueError("need at least one training record")
        if k < 1:
            raise ValueError("k must be >= 1")
        self.locations = locations
        self.labels = labels
        self.n_classes = int(n_classes)
        self.k = min(int(k), len(labels))
        counts = np.bincount(labels, minlength=self.n_classes)
        self._fallback = np.lexsort((np.arange(self.n_classes), -counts))

    def rank_one(self, loc) -> np.ndarray:
        d = np.hypot(*(self.locations - np.asarray(loc, dtype=float)).T)
        nearest = np.lexsort((np.arange(len(d)), d))[: self.k]
        votes: dict[int, list] = {}
        for idx in nearest:
            lab = int(self.labels[idx])
            v = votes.setdefault(lab, [0, d[idx]])
            v[0] += 1
        voted = sorted(votes, key=lambda lab: (-votes[lab][0], votes[lab][1], lab))
        seen = set(voted)
        rest = [int(c) for c in self._fallback if int(c) not in seen]
        return np.array(voted + rest, dtype=np.int64)

    def rank(self, vdf, loc) -> np.ndarray:
        """Same call shape as the VDBAN ranker; the VDF is ignored."""
        loc = np.asarray(loc, dtype=float)
        if len(loc) == 0:
            return np.empty((0, self.n_classes), dtype=np.int64)
        return np.stack([self.rank_one(p) for p in loc])
