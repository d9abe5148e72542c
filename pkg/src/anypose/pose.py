"""Core value types: poses, pose sequences, skeletons and query time grids.

Coordinates are millimeters and times are seconds throughout the package.
Query times are relative to the last observed pose, which sits at t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

DEFAULT_M_JOINTS = 22
DEFAULT_FRAME_INTERVAL_SEC = 0.04

# Prediction horizons used for reporting, in seconds (80 ms ... 1000 ms).
TABLE_GRID_SEC = (0.08, 0.16, 0.32, 0.40, 0.56, 0.72, 0.88, 1.00)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Positions of M joints at one instant, shape (M, 3)."""

    joints: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.joints, dtype=np.float64)
        if j.ndim != 2 or j.shape[1] != 3 or j.shape[0] < 1:
            raise ValueError(f"pose must have shape (M, 3) with M >= 1, got {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("pose contains non-finite coordinates")
        object.__setattr__(self, "joints", _frozen(j))

    @property
    def m_joints(self) -> int:
        return self.joints.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None and not copy:
            return self.joints
        return np.array(self.joints, dtype=dtype, copy=True)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.joints, other.joints)

    def __hash__(self):
        return hash(self.joints.tobytes())


def flatten(pose: Pose | np.ndarray) -> np.ndarray:
    """Row-major state vector ``[j0x, j0y, j0z, j1x, ...]`` of length 3M."""
    return np.asarray(pose, dtype=np.float64).reshape(-1).copy()


def unflatten(state: np.ndarray) -> Pose:
    state = np.asarray(state, dtype=np.float64)
    if state.ndim != 1 or state.size % 3 or state.size == 0:
        raise ValueError(f"state vector length must be a positive multiple of 3, got {state.shape}")
    return Pose(state.reshape(-1, 3))


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """Uniformly sampled poses; pose ``i`` sits at ``start_time_sec + i * frame_interval_sec``.

    Poses are stored as a read-only ``(T, M, 3)`` array; indexing yields ``Pose``.
    """

    poses: np.ndarray
    frame_interval_sec: float = DEFAULT_FRAME_INTERVAL_SEC
    start_time_sec: float = 0.0

    def __post_init__(self):
        if isinstance(self.poses, (list, tuple)):
            arr = np.stack([np.asarray(p, dtype=np.float64) for p in self.poses]) if self.poses else np.empty((0,))
        else:
            arr = np.asarray(self.poses, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] != 3:
            raise ValueError(f"sequence must have shape (T>=1, M>=1, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sequence contains non-finite coordinates")
        dt = float(self.frame_interval_sec)
        if not (np.isfinite(dt) and dt > 0):
            raise ValueError(f"frame_interval_sec must be positive and finite, got {self.frame_interval_sec}")
        if not np.isfinite(self.start_time_sec):
            raise ValueError("start_time_sec must be finite")
        object.__setattr__(self, "poses", _frozen(arr))
        object.__setattr__(self, "frame_interval_sec", dt)
        object.__setattr__(self, "start_time_sec", float(self.start_time_sec))

    def __len__(self) -> int:
        return self.poses.shape[0]

    def __getitem__(self, i: int) -> Pose:
        return Pose(self.poses[i])

    def __iter__(self) -> Iterator[Pose]:
        return (Pose(p) for p in self.poses)

    @property
    def m_joints(self) -> int:
        return self.poses.shape[1]

    def timestamps(self) -> np.ndarray:
        return self.start_time_sec + np.arange(len(self)) * self.frame_interval_sec

    def window(self, stop: int, length: int) -> "PoseSequence":
        """The ``length`` poses ending at index ``stop`` (inclusive)."""
        start = stop - length + 1
        if start < 0 or stop >= len(self):
            raise IndexError(f"window [{start}, {stop}] outside sequence of length {len(self)}")
        return PoseSequence(
            self.poses[start : stop + 1],
            self.frame_interval_sec,
            self.start_time_sec + start * self.frame_interval_sec,
        )


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing, positive query times in seconds (relative to t = 0)."""

    times_sec: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_sec, dtype=np.float64).reshape(-1)
        if t.size == 0:
            raise ValueError("time grid is empty")
        if not np.all(np.isfinite(t)):
            raise ValueError("time grid contains non-finite times")
        if np.any(t <= 0):
            raise ValueError(f"query times must be > 0, got min {t.min()}")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing (use canonicalize)")
        object.__setattr__(self, "times_sec", _frozen(t))

    def __len__(self) -> int:
        return self.times_sec.size

    def __iter__(self):
        return iter(self.times_sec.tolist())

    @property
    def last(self) -> float:
        return float(self.times_sec[-1])

    @classmethod
    def table(cls) -> "TimeGrid":
        return cls(np.array(TABLE_GRID_SEC))


def canonicalize(times: Sequence[float] | np.ndarray | TimeGrid) -> tuple[TimeGrid, np.ndarray]:
    """Sort and deduplicate query times.

    Returns the canonical grid and an index array ``inv`` such that
    ``grid.times_sec[inv]`` reproduces the input order, so per-time results
    can be scattered back to the caller's ordering.
    """
    if isinstance(times, TimeGrid):
        return times, np.arange(len(times))
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    if t.size == 1 or (t.size > 1 and bool((t[1:] > t[:-1]).all())):
        return TimeGrid(t), np.arange(t.size)  # already canonical; TimeGrid validates
    if t.size == 0:
        raise ValueError("time grid is empty")
    if not np.all(np.isfinite(t)):
        raise ValueError("time grid contains non-finite times")
    if np.any(t <= 0):
        raise ValueError(f"query times must be > 0, got {t[t <= 0][0]}")
    uniq, inv = np.unique(t, return_inverse=True)
    return TimeGrid(uniq), inv.reshape(-1)


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Joint tree; joint ``j`` hangs off ``parent[j]`` (``-1`` for the root).

    Each joint owns the bone from its parent to itself: at rest the joint sits
    at ``parent + bone_length_mm[j] * rest_direction[j]``. The root's parent is
    a fixed anchor at the origin.
    """

    parent: tuple[int, ...]
    bone_length_mm: np.ndarray
    rest_direction: np.ndarray = field(default=None)  # (M, 3) unit vectors; +x when omitted

    def __post_init__(self):
        parent = tuple(int(p) for p in self.parent)
        m = len(parent)
        lengths = np.asarray(self.bone_length_mm, dtype=np.float64).reshape(-1)
        if m < 1 or lengths.size != m:
            raise ValueError("skeleton needs M >= 1 parents and M bone lengths")
        if not np.all(np.isfinite(lengths)) or np.any(lengths <= 0):
            raise ValueError("bone lengths must be positive and finite")
        roots = [j for j, p in enumerate(parent) if p < 0 or p == j]
        if len(roots) != 1:
            raise ValueError(f"skeleton must have exactly one root, found {len(roots)}")
        parent = tuple(-1 if (p < 0 or p == j) else p for j, p in enumerate(parent))
        if any(p >= m for p in parent):
            raise ValueError("parent index out of range")
        for j in range(m):  # acyclicity: every walk reaches the root within M hops
            k, hops = j, 0
            while parent[k] >= 0:
                k = parent[k]
                hops += 1
                if hops > m:
                    raise ValueError("parent relation contains a cycle")
        if self.rest_direction is None:
            dirs = np.tile([1.0, 0.0, 0.0], (m, 1))
        else:
            dirs = np.asarray(self.rest_direction, dtype=np.float64).reshape(m, 3)
            norms = np.linalg.norm(dirs, axis=1)
            if np.any(norms == 0):
                raise ValueError("rest directions must be non-zero")
            dirs = dirs / norms[:, None]
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "bone_length_mm", _frozen(lengths))
        object.__setattr__(self, "rest_direction", _frozen(dirs))

    @property
    def m_joints(self) -> int:
        return len(self.parent)

    @property
    def root(self) -> int:
        return self.parent.index(-1)

    def rest_offsets(self) -> np.ndarray:
        return self.rest_direction * self.bone_length_mm[:, None]

    def topological_order(self) -> list[int]:
        """Joint indices ordered so every parent precedes its children."""
        children: dict[int, list[int]] = {j: [] for j in range(self.m_joints)}
        for j, p in enumerate(self.parent):
            if p >= 0:
                children[p].append(j)
        order, stack = [], [self.root]
        while stack:
            j = stack.pop()
            order.append(j)
            stack.extend(reversed(children[j]))
        return order
