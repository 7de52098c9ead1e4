"""Observations grouped by measurement time."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Snapshot:
    """Observations taken at one time ``t``; ``y`` is ``None`` for density samples."""

    t: float
    x: np.ndarray
    y: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", x)
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).ravel()
            if y.shape != x.shape:
                raise ValueError(f"snapshot at t={self.t}: {x.size} positions but {y.size} targets")
            object.__setattr__(self, "y", y)
        if not np.isfinite(self.t) or not np.all(np.isfinite(x)):
            raise ValueError(f"snapshot at t={self.t} has non-finite entries")

    def __len__(self):
        return self.x.size


class SnapshotSet:
    """An ordered collection of snapshots with strictly increasing times.

    The flat ordering used throughout groups samples by snapshot: all of
    the first snapshot, then all of the second, and so on.
    """

    def __init__(self, snapshots):
        snapshots = tuple(snapshots)
        times = [s.t for s in snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"snapshot times must be strictly increasing, got {times}")
        kinds = {s.y is None for s in snapshots}
        if len(kinds) > 1:
            raise ValueError("cannot mix labelled and unlabelled snapshots")
        self.snapshots = snapshots

    @classmethod
    def from_arrays(cls, t, x, y=None):
        """Group flat ``(t, x[, y])`` arrays into snapshots by distinct time."""
        t = np.asarray(t, dtype=float).ravel()
        x = np.asarray(x, dtype=float).ravel()
        y = None if y is None else np.asarray(y, dtype=float).ravel()
        snaps = []
        for tk in np.unique(t):
            mask = t == tk
            snaps.append(Snapshot(tk, x[mask], None if y is None else y[mask]))
        return cls(snaps)

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, k):
        return self.snapshots[k]

    def __repr__(self):
        sizes = ", ".join(f"t={s.t:g}:{len(s)}" for s in self.snapshots)
        return f"SnapshotSet({sizes})"

    @property
    def labelled(self):
        return bool(self.snapshots) and self.snapshots[0].y is not None

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def sizes(self):
        return np.array([len(s) for s in self.snapshots], dtype=int)

    @property
    def total(self):
        return int(self.sizes.sum())

    @property
    def positions(self):
        return np.concatenate([s.x for s in self.snapshots]) if self.snapshots else np.zeros(0)

    @property
    def targets(self):
        if not self.labelled:
            raise ValueError("snapshot set carries no targets")
        return np.concatenate([s.y for s in self.snapshots])

    @property
    def sample_times(self):
        """Time of each flat sample."""
        return np.repeat(self.times, self.sizes)

    @property
    def snapshot_index(self):
        return np.repeat(np.arange(len(self.snapshots)), self.sizes)

    @property
    def sample_index(self):
        return np.concatenate([np.arange(n) for n in self.sizes]) if self.snapshots else np.zeros(0, int)

    def block(self, k):
        """Slice of flat indices belonging to snapshot ``k``."""
        start = int(self.sizes[:k].sum())
        return slice(start, start + int(self.sizes[k]))
