"""Synthetic articulated motion, pose CSV files, and per-horizon evaluation.

Synthetic sequences come from forward kinematics of a joint tree whose joint
angles follow ``amplitude * sin(frequency * t + phase)`` about fixed axes
(exponential-map rotations). Poses can therefore be evaluated exactly at any
real time, which serves as ground truth between sampled frames.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from ._io import atomic_write_text
from .pose import (
    DEFAULT_FRAME_INTERVAL_SEC,
    DEFAULT_M_JOINTS,
    Pose,
    PoseSequence,
    Skeleton,
    TimeGrid,
    canonicalize,
)

log = logging.getLogger(__name__)

# -- rotations ----------------------------------------------------------------


def exp_map_rotate(axis_angle, point) -> np.ndarray:
    """Rotate ``point`` by ``|axis_angle|`` radians about ``axis_angle`` (Rodrigues)."""
    w = np.asarray(axis_angle, dtype=np.float64)
    p = np.asarray(point, dtype=np.float64)
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        return p.copy()
    k = w / theta
    c, s = math.cos(theta), math.sin(theta)
    return p * c + np.cross(k, p) * s + k * (np.dot(k, p) * (1.0 - c))


def _rotation_matrices(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues matrices for unit ``axes`` (M, 3) and signed ``angles`` (T, M) -> (T, M, 3, 3)."""
    x, y, z = axes[:, 0], axes[:, 1], axes[:, 2]
    s = np.sin(angles)
    c1 = 1.0 - np.cos(angles)
    R = np.empty(angles.shape + (3, 3))
    R[..., 0, 0] = 1.0 - c1 * (y * y + z * z)
    R[..., 0, 1] = -s * z + c1 * x * y
    R[..., 0, 2] = s * y + c1 * x * z
    R[..., 1, 0] = s * z + c1 * x * y
    R[..., 1, 1] = 1.0 - c1 * (x * x + z * z)
    R[..., 1, 2] = -s * x + c1 * y * z
    R[..., 2, 0] = -s * y + c1 * x * z
    R[..., 2, 1] = s * x + c1 * y * z
    R[..., 2, 2] = 1.0 - c1 * (x * x + y * y)
    return R


# Written out elementwise so results do not depend on the batch size.
def _matmul3(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.empty(np.broadcast_shapes(A.shape, B.shape))
    for i in range(3):
        for j in range(3):
            out[..., i, j] = A[..., i, 0] * B[..., 0, j] + A[..., i, 1] * B[..., 1, j] + A[..., i, 2] * B[..., 2, j]
    return out


def _matvec3(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty(A.shape[:-1])
    for i in range(3):
        out[..., i] = A[..., i, 0] * v[..., 0] + A[..., i, 1] * v[..., 1] + A[..., i, 2] * v[..., 2]
    return out


# -- skeletons ----------------------------------------------------------------

# (name, parent, rest direction, bone length mm)
_HUMANOID = [
    ("pelvis", -1, (0, 0, 1), 100),
    ("l_hip", 0, (1, 0, 0), 100),
    ("l_knee", 1, (0, 0, -1), 420),
    ("l_ankle", 2, (0, 0, -1), 400),
    ("l_toe", 3, (0, 1, 0), 120),
    ("r_hip", 0, (-1, 0, 0), 100),
    ("r_knee", 5, (0, 0, -1), 420),
    ("r_ankle", 6, (0, 0, -1), 400),
    ("r_toe", 7, (0, 1, 0), 120),
    ("spine", 0, (0, 0, 1), 220),
    ("chest", 9, (0, 0, 1), 220),
    ("neck", 10, (0, 0, 1), 200),
    ("head", 11, (0, 0, 1), 120),
    ("head_top", 12, (0, 0, 1), 100),
    ("l_shoulder", 10, (1, 0, 0), 180),
    ("l_elbow", 14, (0, 0, -1), 300),
    ("l_wrist", 15, (0, 0, -1), 260),
    ("l_hand", 16, (0, 0, -1), 90),
    ("r_shoulder", 10, (-1, 0, 0), 180),
    ("r_elbow", 18, (0, 0, -1), 300),
    ("r_wrist", 19, (0, 0, -1), 260),
    ("r_hand", 20, (0, 0, -1), 90),
]
JOINT_NAMES_22 = tuple(j[0] for j in _HUMANOID)

_DIRS = np.array([(1, 0, 0), (0, 1, 0), (0, 0, 1), (-1, 0, 0), (0, -1, 0), (0, 0, -1)], dtype=np.float64)


def humanoid_skeleton() -> Skeleton:
    return Skeleton(
        parent=tuple(j[1] for j in _HUMANOID),
        bone_length_mm=np.array([j[3] for j in _HUMANOID], dtype=np.float64),
        rest_direction=np.array([j[2] for j in _HUMANOID], dtype=np.float64),
    )


def chain_skeleton(bone_lengths_mm: Sequence[float]) -> Skeleton:
    """Serial chain laid out along +x at rest."""
    m = len(bone_lengths_mm)
    return Skeleton(parent=tuple(range(-1, m - 1)), bone_length_mm=np.asarray(bone_lengths_mm, dtype=np.float64))


def default_skeleton(m_joints: int = DEFAULT_M_JOINTS) -> Skeleton:
    """Humanoid for M = 22, otherwise a binary tree with lengths in [80, 450] mm."""
    if m_joints == 22:
        return humanoid_skeleton()
    if m_joints < 1:
        raise ValueError("m_joints must be >= 1")
    parent = tuple([-1] + [(j - 1) // 2 for j in range(1, m_joints)])
    lengths = np.array([80.0 + (j * 137) % 371 for j in range(m_joints)])
    return Skeleton(parent, lengths, _DIRS[np.arange(m_joints) % 6])


def skeleton_to_dict(sk: Skeleton) -> dict:
    return {
        "parent": list(sk.parent),
        "bone_length_mm": sk.bone_length_mm.tolist(),
        "rest_direction": sk.rest_direction.tolist(),
    }


def skeleton_from_dict(d: dict) -> Skeleton:
    return Skeleton(tuple(d["parent"]), np.asarray(d["bone_length_mm"]), np.asarray(d["rest_direction"]))


# -- synthetic motion ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SyntheticMotionSpec:
    skeleton: Skeleton
    axes: np.ndarray  # (M, 3) unit rotation axes
    amplitudes: np.ndarray  # (M,) rad
    frequencies: np.ndarray  # (M,) rad/s
    phases: np.ndarray  # (M,) rad
    duration_sec: float
    frame_interval_sec: float = DEFAULT_FRAME_INTERVAL_SEC
    seed: int | None = None

    def __post_init__(self):
        m = self.skeleton.m_joints
        axes = np.asarray(self.axes, dtype=np.float64).reshape(m, 3)
        if np.any(np.abs(np.linalg.norm(axes, axis=1) - 1.0) > 1e-9):
            raise ValueError("rotation axes must be unit vectors")
        arrays = {}
        for name in ("amplitudes", "frequencies", "phases"):
            a = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if a.size != m or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must hold {m} finite values")
            arrays[name] = a
        if np.any(np.abs(arrays["amplitudes"]) >= np.pi):
            raise ValueError("amplitudes must lie in (-pi, pi)")
        if np.any(arrays["frequencies"] < 0):
            raise ValueError("frequencies must be >= 0")
        if not (self.duration_sec > 0 and self.frame_interval_sec > 0):
            raise ValueError("duration and frame interval must be positive")
        object.__setattr__(self, "axes", axes)
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    def angles(self, times: np.ndarray) -> np.ndarray:
        t = np.asarray(times, dtype=np.float64)[..., None]
        return self.amplitudes * np.sin(self.frequencies * t + self.phases)

    def to_dict(self) -> dict:
        return {
            "axes": self.axes.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "frequencies": self.frequencies.tolist(),
            "phases": self.phases.tolist(),
            "duration_sec": self.duration_sec,
            "frame_interval_sec": self.frame_interval_sec,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict, skeleton: Skeleton) -> "SyntheticMotionSpec":
        return cls(skeleton=skeleton, **d)


def fk_poses(spec: SyntheticMotionSpec, times) -> np.ndarray:
    """Joint positions ``(T, M, 3)`` at arbitrary real times."""
    t = np.atleast_1d(np.asarray(times, dtype=np.float64))
    eps = 1e-9 * max(1.0, spec.duration_sec)
    if np.any(t < -eps) or np.any(t > spec.duration_sec + eps):
        raise ValueError(f"time outside [0, {spec.duration_sec}] s")
    sk = spec.skeleton
    local = _rotation_matrices(spec.axes, spec.angles(t))  # (T, M, 3, 3)
    offsets = sk.rest_offsets()
    world = np.empty_like(local)
    pos = np.empty(t.shape + (sk.m_joints, 3))
    for j in sk.topological_order():
        p = sk.parent[j]
        if p < 0:
            world[:, j] = local[:, j]
            pos[:, j] = _matvec3(world[:, j], offsets[j])
        else:
            world[:, j] = _matmul3(world[:, p], local[:, j])
            pos[:, j] = pos[:, p] + _matvec3(world[:, j], offsets[j])
    return pos


def fk_pose(spec: SyntheticMotionSpec, t_sec: float) -> Pose:
    return Pose(fk_poses(spec, [t_sec])[0])


@dataclass(frozen=True, eq=False)
class SyntheticSequence(PoseSequence):
    """A sampled sequence that keeps its generating spec as a continuous-time oracle."""

    spec: SyntheticMotionSpec | None = None

    def window(self, stop: int, length: int) -> "SyntheticSequence":
        w = super().window(stop, length)
        return SyntheticSequence(w.poses, w.frame_interval_sec, w.start_time_sec, spec=self.spec)

    def oracle(self, abs_times) -> np.ndarray:
        return fk_poses(self.spec, abs_times)


def sample_sequence(spec: SyntheticMotionSpec) -> SyntheticSequence:
    n = int(math.floor(spec.duration_sec / spec.frame_interval_sec + 1e-9)) + 1
    times = np.arange(n) * spec.frame_interval_sec
    return SyntheticSequence(fk_poses(spec, times), spec.frame_interval_sec, 0.0, spec=spec)


@dataclass(frozen=True)
class MotionFamily:
    """Ranges for randomized synthetic specs.

    Per-joint axes, base amplitudes and phase offsets are fixed by
    ``family_seed`` (one "activity"). Each sequence then draws a shared angular
    frequency, an amplitude scale and a global phase, so every sequence is a
    perturbed copy of the same periodic movement.
    """

    m_joints: int = DEFAULT_M_JOINTS
    amplitude_range: tuple[float, float] = (0.2, 0.6)
    frequency_range: tuple[float, float] = (2.2, 2.8)
    amplitude_jitter: float = 0.1
    root_amplitude_factor: float = 0.2
    duration_sec: float = 3.0
    frame_interval_sec: float = DEFAULT_FRAME_INTERVAL_SEC
    family_seed: int = 0

    def validate(self) -> None:
        lo, hi = self.amplitude_range
        if not (0 <= lo <= hi) or hi * (1 + self.amplitude_jitter) >= np.pi:
            raise ValueError(f"invalid amplitude range {self.amplitude_range}")
        flo, fhi = self.frequency_range
        if not (0 <= flo <= fhi):
            raise ValueError(f"invalid frequency range {self.frequency_range}")
        if not (0 <= self.amplitude_jitter < 1):
            raise ValueError("amplitude_jitter must lie in [0, 1)")
        if not (self.duration_sec > 0 and self.frame_interval_sec > 0):
            raise ValueError("duration and frame interval must be positive")
        if self.m_joints < 1:
            raise ValueError("m_joints must be >= 1")

    def to_dict(self) -> dict:
        return {
            "m_joints": self.m_joints,
            "amplitude_range": list(self.amplitude_range),
            "frequency_range": list(self.frequency_range),
            "amplitude_jitter": self.amplitude_jitter,
            "root_amplitude_factor": self.root_amplitude_factor,
            "duration_sec": self.duration_sec,
            "frame_interval_sec": self.frame_interval_sec,
            "family_seed": self.family_seed,
        }

    def base(self):
        rng = np.random.default_rng(self.family_seed)
        m = self.m_joints
        axes = rng.normal(size=(m, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        amps = rng.uniform(*self.amplitude_range, size=m)
        amps[default_skeleton(m).root] *= self.root_amplitude_factor
        phases = rng.uniform(0.0, 2 * np.pi, size=m)
        return axes, amps, phases

    def draw(self, rng: np.random.Generator, skeleton: Skeleton, seed: int | None = None) -> SyntheticMotionSpec:
        axes, amps, phases = self.base()
        omega = rng.uniform(*self.frequency_range)
        scale = rng.uniform(1 - self.amplitude_jitter, 1 + self.amplitude_jitter)
        shift = rng.uniform(0.0, 2 * np.pi)
        return SyntheticMotionSpec(
            skeleton=skeleton,
            axes=axes,
            amplitudes=amps * scale,
            frequencies=np.full(self.m_joints, omega),
            phases=np.mod(phases + shift, 2 * np.pi),
            duration_sec=self.duration_sec,
            frame_interval_sec=self.frame_interval_sec,
            seed=seed,
        )


@dataclass
class DatasetSplit:
    train: list[PoseSequence]
    validation: list[PoseSequence]
    test: list[PoseSequence]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [id(s) for s in self.train + self.validation + self.test]
        if len(ids) != len(set(ids)):
            raise ValueError("a sequence appears in more than one split")

    def parts(self) -> dict[str, list[PoseSequence]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}

    @property
    def m_joints(self) -> int:
        return (self.train or self.test or self.validation)[0].m_joints


def split_counts(n: int) -> tuple[int, int, int]:
    """80/10/10 with at least one sequence per split."""
    if n < 3:
        raise ValueError(f"need at least 3 sequences for train/validation/test, got {n}")
    n_val = max(1, int(round(0.1 * n)))
    n_test = max(1, int(round(0.1 * n)))
    return n - n_val - n_test, n_val, n_test


DEFAULT_N_SEQUENCES = 30
DEFAULT_DATA_SEED = 7


def generate_dataset(family: MotionFamily, n_sequences: int = DEFAULT_N_SEQUENCES, seed: int = DEFAULT_DATA_SEED) -> DatasetSplit:
    family.validate()
    n_train, n_val, _ = split_counts(n_sequences)
    skeleton = default_skeleton(family.m_joints)
    seqs = []
    for i, child in enumerate(np.random.SeedSequence(int(seed)).spawn(n_sequences)):
        spec = family.draw(np.random.default_rng(child), skeleton, seed=i)
        seqs.append(sample_sequence(spec))
    return DatasetSplit(
        train=seqs[:n_train],
        validation=seqs[n_train : n_train + n_val],
        test=seqs[n_train + n_val :],
        provenance={"generator": "synthetic", "seed": int(seed), "n_sequences": n_sequences, "family": family.to_dict()},
    )


# -- pose CSV -----------------------------------------------------------------

_HEADER_RE = re.compile(r"^#\s*m_joints=(\d+)\s+frame_interval_sec=(\S+)\s*$")


class PoseFileError(ValueError):
    pass


def format_sequence_csv(times: np.ndarray, poses: np.ndarray, frame_interval_sec: float) -> str:
    poses = np.asarray(poses, dtype=np.float64)
    m = poses.shape[1]
    lines = [f"# m_joints={m} frame_interval_sec={float(frame_interval_sec)!r}"]
    for t, p in zip(times, poses.reshape(len(poses), -1)):
        lines.append(",".join(f"{v:.17g}" for v in (float(t), *p)))
    return "\n".join(lines) + "\n"


def save_sequence(seq: PoseSequence, path) -> None:
    atomic_write_text(path, format_sequence_csv(seq.timestamps(), seq.poses, seq.frame_interval_sec))


def parse_sequence_csv(text: str, name: str = "<csv>") -> PoseSequence:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise PoseFileError(f"{name}: empty file")
    m_hdr = _HEADER_RE.match(lines[0].rstrip("\r"))
    if not m_hdr:
        raise PoseFileError(f"{name}: line 1: expected header '# m_joints=<int> frame_interval_sec=<float>'")
    m = int(m_hdr.group(1))
    try:
        dt = float(m_hdr.group(2))
    except ValueError:
        raise PoseFileError(f"{name}: line 1: bad frame_interval_sec {m_hdr.group(2)!r}") from None
    if m < 1 or not (math.isfinite(dt) and dt > 0):
        raise PoseFileError(f"{name}: line 1: m_joints must be >= 1 and frame_interval_sec > 0")
    n_fields = 1 + 3 * m
    times, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.rstrip("\r").split(",")
        if len(parts) != n_fields:
            raise PoseFileError(f"{name}: line {lineno}: expected {n_fields} fields, got {len(parts)}")
        try:
            vals = [float(x) for x in parts]
        except ValueError as e:
            raise PoseFileError(f"{name}: line {lineno}: {e}") from None
        if not all(math.isfinite(v) for v in vals):
            raise PoseFileError(f"{name}: line {lineno}: non-finite value")
        if times and vals[0] <= times[-1]:
            raise PoseFileError(f"{name}: line {lineno}: timestamp {vals[0]} not after {times[-1]}")
        times.append(vals[0])
        rows.append(vals[1:])
    if not rows:
        raise PoseFileError(f"{name}: no pose rows")
    return PoseSequence(np.array(rows).reshape(len(rows), m, 3), dt, times[0])


def load_sequences(path) -> list[PoseSequence]:
    """One sequence per CSV file; a directory loads every ``*.csv`` in name order."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    out = []
    for f in files:
        try:
            text = f.read_text(encoding="utf-8")
        except OSError as e:
            raise PoseFileError(f"{f}: {e.strerror}") from e
        out.append(parse_sequence_csv(text, str(f)))
    return out


MANIFEST = "manifest.json"


def write_dataset(split: DatasetSplit, out_dir, extra: dict | None = None) -> Path:
    """CSV per sequence plus ``manifest.json`` mapping file -> split (and oracle specs)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files, specs = {}, {}
    skeleton = None
    k = 0
    for part, seqs in split.parts().items():
        for seq in seqs:
            name = f"seq_{k:04d}.csv"
            k += 1
            save_sequence(seq, out / name)
            files[name] = part
            spec = getattr(seq, "spec", None)
            if spec is not None:
                specs[name] = spec.to_dict()
                skeleton = spec.skeleton
    manifest = {"files": files, "provenance": split.provenance}
    if skeleton is not None:
        manifest["skeleton"] = skeleton_to_dict(skeleton)
        manifest["specs"] = specs
    if extra:
        manifest.update(extra)
    atomic_write_text(out / MANIFEST, json.dumps(manifest, indent=1) + "\n")
    return out / MANIFEST


def read_dataset(data_dir) -> DatasetSplit:
    data_dir = Path(data_dir)
    mpath = data_dir / MANIFEST
    if not mpath.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {data_dir}")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    skeleton = skeleton_from_dict(manifest["skeleton"]) if "skeleton" in manifest else None
    specs = manifest.get("specs", {})
    parts: dict[str, list] = {"train": [], "validation": [], "test": []}
    for name, part in manifest["files"].items():
        (seq,) = load_sequences(data_dir / name)
        if name in specs and skeleton is not None:
            seq = SyntheticSequence(
                seq.poses, seq.frame_interval_sec, seq.start_time_sec,
                spec=SyntheticMotionSpec.from_dict(specs[name], skeleton),
            )
        if part not in parts:
            raise ValueError(f"{mpath}: unknown split {part!r} for {name}")
        parts[part].append(seq)
    return DatasetSplit(parts["train"], parts["validation"], parts["test"], manifest.get("provenance", {}))


# -- windows and evaluation ---------------------------------------------------


def frame_offsets(grid: TimeGrid, dt: float) -> np.ndarray | None:
    """Integer frame offsets for grid times that fall on the sampling lattice, else None."""
    k = grid.times_sec / dt
    r = np.round(k)
    if np.all(np.abs(k - r) <= 1e-6):
        return r.astype(int)
    return None


def window_ends(seq_len: int, max_offset: int, min_history: int = 2, stride: int = 1) -> range:
    return range(min_history - 1, seq_len - max_offset, stride)


def targets(seq: PoseSequence, end: int, grid: TimeGrid) -> np.ndarray:
    """Ground truth ``(N, M, 3)`` at ``grid`` times after frame ``end``."""
    offs = frame_offsets(grid, seq.frame_interval_sec)
    if offs is not None and end + offs[-1] < len(seq):
        return seq.poses[end + offs]
    spec = getattr(seq, "spec", None)
    if spec is None:
        raise ValueError("grid time not representable by data sampling and no oracle available")
    t_end = seq.start_time_sec + end * seq.frame_interval_sec
    return fk_poses(spec, t_end + grid.times_sec)


@dataclass
class Windows:
    """Stacked forecasting windows: observed histories and future ground truth."""

    histories: np.ndarray  # (B, H, M, 3)
    targets: np.ndarray  # (N, B, M, 3)
    frame_interval_sec: float
    specs: list = field(default_factory=list)  # generating spec per window (or None)
    end_times: np.ndarray | None = None  # absolute time of each window's last observed frame

    def __len__(self) -> int:
        return self.histories.shape[0]

    def take(self, idx) -> "Windows":
        idx = np.asarray(idx)
        return Windows(
            self.histories[idx],
            self.targets[:, idx],
            self.frame_interval_sec,
            [self.specs[i] for i in idx] if self.specs else [],
            None if self.end_times is None else self.end_times[idx],
        )


def make_windows(seqs: Sequence[PoseSequence], grid: TimeGrid, history: int = 2, stride: int = 1) -> Windows:
    """Every window with ``history`` observed poses and ground truth through ``grid.last``."""
    if not seqs:
        raise ValueError("no sequences")
    dt = seqs[0].frame_interval_sec
    max_off = int(math.ceil(grid.last / dt - 1e-6))
    hist, tgt, specs, ends_t = [], [], [], []
    for seq in seqs:
        if abs(seq.frame_interval_sec - dt) > 1e-12:
            raise ValueError("all sequences in a window set must share the frame interval")
        spec = getattr(seq, "spec", None)
        if spec is not None:
            last = min(len(seq) - 1, int(math.floor((spec.duration_sec - grid.last) / dt + 1e-6)))
            ends = range(history - 1, last + 1, stride)
        else:
            ends = window_ends(len(seq), max_off, history, stride)
        for e in ends:
            hist.append(seq.poses[e - history + 1 : e + 1])
            tgt.append(targets(seq, e, grid))
            specs.append(spec)
            ends_t.append(seq.start_time_sec + e * dt)
    if not hist:
        raise ValueError(f"sequences too short for history {history} and horizon {grid.last} s")
    return Windows(np.stack(hist), np.stack(tgt, axis=1), dt, specs, np.array(ends_t))


class Predictor(Protocol):
    history: int

    def predict(self, windows: Windows, grid: TimeGrid) -> np.ndarray:
        """Poses ``(N, B, M, 3)`` at ``grid`` for every window."""


class ZeroVelocity:
    """Repeats the last observed pose."""

    history = 1

    def predict(self, windows, grid):
        s0 = windows.histories[:, -1]
        return np.broadcast_to(s0, (len(grid),) + s0.shape).copy()


class ConstantVelocity:
    history = 2

    def predict(self, windows, grid):
        h = windows.histories
        v0 = (h[:, -1] - h[:, -2]) / windows.frame_interval_sec
        return h[None, :, -1] + grid.times_sec[:, None, None, None] * v0[None]


class OraclePredictor:
    """Evaluates each window's generating spec at the query times."""

    history = 1

    def predict(self, windows, grid):
        if not windows.specs or any(s is None for s in windows.specs):
            raise ValueError("oracle predictor needs synthetic windows")
        out = [fk_poses(s, t + grid.times_sec) for s, t in zip(windows.specs, windows.end_times)]
        return np.stack(out, axis=1)


def mpjpe_per_horizon(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Mean joint distance per horizon for ``(N, B, M, 3)`` arrays."""
    return np.linalg.norm(pred - gt, axis=-1).mean(axis=(1, 2))


@dataclass
class EvalReport:
    horizons_sec: list[float]
    mpjpe_mm: dict[str, list[float]]
    n_windows: int

    def to_dict(self) -> dict:
        return {
            "horizons_ms": [round(t * 1000, 6) for t in self.horizons_sec],
            "mpjpe_mm": self.mpjpe_mm,
            "n_windows": self.n_windows,
        }

    def table(self) -> str:
        head = ["msec"] + [f"{t * 1000:g}" for t in self.horizons_sec]
        rows = [head] + [[name] + [f"{v:.1f}" for v in vals] for name, vals in self.mpjpe_mm.items()]
        w0 = max(len(r[0]) for r in rows)
        wc = max(len(c) for r in rows for c in r[1:])
        fmt = lambda r: r[0].ljust(w0) + " | " + " ".join(c.rjust(wc) for c in r[1:])  # noqa: E731
        lines = [fmt(rows[0]), "-" * len(fmt(rows[0]))] + [fmt(r) for r in rows[1:]]
        return "\n".join(lines)


def evaluate(
    predictors: dict[str, Predictor] | Predictor,
    seqs: Sequence[PoseSequence] | DatasetSplit,
    grid: TimeGrid | Sequence[float] | None = None,
    stride: int = 1,
    history: int = 2,
) -> EvalReport:
    """Per-horizon MPJPE on every window of ``seqs`` (the test split for a ``DatasetSplit``).

    All predictors see identical windows; ``history`` only fixes where windows may start.
    """
    if isinstance(seqs, DatasetSplit):
        seqs = seqs.test
    grid = TimeGrid.table() if grid is None else canonicalize(grid)[0]
    if not isinstance(predictors, dict):
        predictors = {"model": predictors}
    history = max([history] + [p.history for p in predictors.values()])
    w = make_windows(seqs, grid, history, stride)
    out = {name: mpjpe_per_horizon(p.predict(w, grid), w.targets).tolist() for name, p in predictors.items()}
    return EvalReport(grid.times_sec.tolist(), out, len(w))
