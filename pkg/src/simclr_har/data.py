"""MotionSense ingestion, windowing, subject splits and synthetic fixtures."""

import csv
import enum
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numcore.checkpoint import load_tensors, save_tensors

log = logging.getLogger(__name__)

WINDOW_LENGTH = 400
WINDOW_OVERLAP = 0.5
SAMPLING_HZ = 50.0
N_SUBJECTS = 24
DEFAULT_TEST_SUBJECTS = (20, 21, 22, 23, 24)


class DataError(ValueError):
    """Malformed dataset content or arguments."""


class DatasetNotFoundError(DataError, FileNotFoundError):
    pass


class ActivityLabel(enum.IntEnum):
    DOWNSTAIRS = 0
    UPSTAIRS = 1
    WALKING = 2
    JOGGING = 3
    SITTING = 4
    STANDING = 5

    @property
    def prefix(self):
        return _PREFIXES[self]

    @classmethod
    def from_prefix(cls, prefix):
        try:
            return _BY_PREFIX[prefix]
        except KeyError:
            raise DataError(f"unknown activity folder prefix {prefix!r}") from None


_PREFIXES = {
    ActivityLabel.DOWNSTAIRS: "dws",
    ActivityLabel.UPSTAIRS: "ups",
    ActivityLabel.WALKING: "wlk",
    ActivityLabel.JOGGING: "jog",
    ActivityLabel.SITTING: "sit",
    ActivityLabel.STANDING: "std",
}
_BY_PREFIX = {v: k for k, v in _PREFIXES.items()}
CLASS_NAMES = [label.name.lower() for label in ActivityLabel]


@dataclass(frozen=True)
class Series:
    subject_id: int
    trial_id: int
    label: ActivityLabel
    values: np.ndarray  # [T, 3]


@dataclass(frozen=True)
class SensorWindow:
    values: np.ndarray  # [L, 3] float32
    subject_id: int
    label: int
    trial_id: int
    start: int = 0


@dataclass
class DatasetSplit:
    train: list
    test: list
    train_subjects: frozenset
    test_subjects: frozenset


# --------------------------------------------------------------------------
# MotionSense
# --------------------------------------------------------------------------

_TRIAL_DIR = re.compile(r"^([a-z]+)_(\d+)$")
_SUBJECT_FILE = re.compile(r"^sub_(\d+)\.csv$")
_ACCEL_COLUMNS = {
    "user": (["userAcceleration.x", "userAcceleration.y", "userAcceleration.z"], None),
    "total": (["userAcceleration.x", "userAcceleration.y", "userAcceleration.z"],
              ["gravity.x", "gravity.y", "gravity.z"]),
}


def _read_csv(path, accel):
    cols, extra = _ACCEL_COLUMNS[accel]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        try:
            idx = [header.index(c) for c in cols]
            idx_extra = [header.index(c) for c in extra] if extra else None
        except ValueError:
            raise DataError(f"{path}: missing acceleration columns {cols}") from None
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                vec = [float(row[i]) for i in idx]
                if idx_extra:
                    vec = [a + float(row[j]) for a, j in zip(vec, idx_extra)]
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: unparseable row") from None
            rows.append(vec)
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def load_motionsense(root, accel="user"):
    """Read every ``<prefix>_<trial>/sub_<id>.csv`` under ``root``.

    ``accel="user"`` takes the userAcceleration x/y/z columns; ``"total"``
    adds the gravity columns to them. Output is sorted by
    ``(subject, trial, label)`` whatever the directory listing order.
    """
    if accel not in _ACCEL_COLUMNS:
        raise DataError(f"accel must be one of {sorted(_ACCEL_COLUMNS)}, got {accel!r}")
    root = Path(root)
    if not root.is_dir():
        raise DatasetNotFoundError(f"dataset directory not found: {root}")
    series = []
    for trial_dir in root.iterdir():
        if not trial_dir.is_dir():
            continue
        m = _TRIAL_DIR.match(trial_dir.name)
        if m is None:
            continue
        label = ActivityLabel.from_prefix(m.group(1))
        trial = int(m.group(2))
        for f in trial_dir.iterdir():
            fm = _SUBJECT_FILE.match(f.name)
            if fm is None:
                continue
            series.append(Series(int(fm.group(1)), trial, label, _read_csv(f, accel)))
    if not series:
        raise DatasetNotFoundError(f"no MotionSense trial folders found under {root}")
    series.sort(key=lambda s: (s.subject_id, s.trial_id, int(s.label)))
    return series


# --------------------------------------------------------------------------
# Windowing and splitting
# --------------------------------------------------------------------------

def window_count(n, length=WINDOW_LENGTH, overlap=WINDOW_OVERLAP):
    stride = _stride(length, overlap)
    return max(0, (n - length) // stride + 1)


def _stride(length, overlap):
    if length < 1:
        raise DataError(f"window length must be >= 1, got {length}")
    if not 0.0 <= overlap < 1.0:
        raise DataError(f"overlap must lie in [0, 1), got {overlap}")
    return max(1, int(round(length * (1.0 - overlap))))


def make_windows(series, length=WINDOW_LENGTH, overlap=WINDOW_OVERLAP):
    """Cut one series into fixed-length windows; trailing partial data is dropped."""
    stride = _stride(length, overlap)
    values = np.asarray(series.values)
    out = []
    for start in range(0, values.shape[0] - length + 1, stride):
        out.append(SensorWindow(
            values=values[start:start + length].astype(np.float32),
            subject_id=series.subject_id,
            label=int(series.label),
            trial_id=series.trial_id,
            start=start,
        ))
    return out


def windows_from_series(series_list, length=WINDOW_LENGTH, overlap=WINDOW_OVERLAP):
    windows = []
    for s in series_list:
        windows.extend(make_windows(s, length, overlap))
    windows.sort(key=lambda w: (w.subject_id, w.trial_id, w.label, w.start))
    return windows


def split_by_subject(windows, test_subjects=DEFAULT_TEST_SUBJECTS):
    observed = {w.subject_id for w in windows}
    test = frozenset(int(s) for s in test_subjects)
    unknown = test - observed
    if unknown:
        raise DataError(f"unknown test subject id(s): {sorted(unknown)}")
    train_subjects = frozenset(observed - test)
    if not train_subjects:
        raise DataError("split leaves no training subjects")
    if not test:
        raise DataError("split leaves no test subjects")
    return DatasetSplit(
        train=[w for w in windows if w.subject_id not in test],
        test=[w for w in windows if w.subject_id in test],
        train_subjects=train_subjects,
        test_subjects=test,
    )


def stack(windows):
    """``(X [N, L, 3] float32, labels [N] int64, subjects [N] int64)``."""
    if not windows:
        raise DataError("cannot stack an empty window list")
    x = np.stack([w.values for w in windows]).astype(np.float32, copy=False)
    y = np.array([w.label for w in windows], dtype=np.int64)
    subj = np.array([w.subject_id for w in windows], dtype=np.int64)
    return x, y, subj


def standardize(split):
    """Per-channel z-scoring with statistics from the training side only."""
    x_train, _, _ = stack(split.train)
    mean = x_train.mean(axis=(0, 1))
    std = x_train.std(axis=(0, 1))
    std = np.where(std > 0, std, 1.0)

    def norm(ws):
        return [SensorWindow(((w.values - mean) / std).astype(np.float32),
                             w.subject_id, w.label, w.trial_id, w.start) for w in ws]

    return DatasetSplit(norm(split.train), norm(split.test),
                        split.train_subjects, split.test_subjects)


# --------------------------------------------------------------------------
# Synthetic fixtures
# --------------------------------------------------------------------------

def synth_dataset(n_per_class, n_classes=3, seed=0, length=WINDOW_LENGTH,
                  noise=0.1, n_subjects=N_SUBJECTS):
    """Class ``c`` is a unit sinusoid at ``(c + 1) * 0.5`` Hz (50 Hz sampling)
    with an independent random phase per channel plus N(0, noise^2).

    Windows are assigned to subjects ``1..n_subjects`` round-robin.
    """
    if not 1 <= n_classes <= len(ActivityLabel):
        raise DataError(f"n_classes must lie in [1, {len(ActivityLabel)}]")
    rng = np.random.default_rng(seed)
    t = np.arange(length) / SAMPLING_HZ
    windows = []
    i = 0
    for c in range(n_classes):
        freq = (c + 1) * 0.5
        for _ in range(n_per_class):
            phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
            sig = np.sin(2.0 * np.pi * freq * t[:, None] + phase[None, :])
            sig = sig + rng.normal(0.0, noise, size=sig.shape)
            windows.append(SensorWindow(sig.astype(np.float32), i % n_subjects + 1, c, i))
            i += 1
    return windows


# --------------------------------------------------------------------------
# Cache
# --------------------------------------------------------------------------

def save_windows(stem, windows, meta=None):
    x, y, subj = stack(windows)
    trial = np.array([w.trial_id for w in windows], dtype=np.float32)
    start = np.array([w.start for w in windows], dtype=np.float32)
    return save_tensors(stem, {
        "values": x,
        "label": y.astype(np.float32),
        "subject": subj.astype(np.float32),
        "trial": trial,
        "start": start,
    }, meta)


def load_windows(stem):
    t, meta = load_tensors(stem)
    windows = [
        SensorWindow(t["values"][i], int(t["subject"][i]), int(t["label"][i]),
                     int(t["trial"][i]), int(t["start"][i]))
        for i in range(t["values"].shape[0])
    ]
    return windows, meta
