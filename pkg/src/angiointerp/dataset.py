"""Training-set construction from screen-recorded clips: duplicate-frame
removal, privacy masking, triplet extraction and flip augmentation."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Triplet, as_image, load_frame, make_rng, save_frame
from .errors import ConfigError, DataError, DomainError, FormatError

RECORDING_FPS = 25.0
FRAME_SUFFIXES = (".pgm", ".png")
FLIP_TAGS = ("id", "h", "v", "hv")


@dataclass(frozen=True)
class MaskRegion:
    x: int
    y: int
    w: int
    h: int
    fill: float = 0.0

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.w < 1 or self.h < 1:
            raise ConfigError(f"mask region needs x, y >= 0 and w, h >= 1: {self}")
        if not 0.0 <= self.fill <= 1.0:
            raise ConfigError(f"mask fill must lie in [0, 1], got {self.fill}")

    @classmethod
    def parse(cls, text: str) -> "MaskRegion":
        """``x,y,w,h`` or ``x,y,w,h:fill``."""
        rect, _, fill = text.strip().partition(":")
        try:
            x, y, w, h = (int(v) for v in rect.split(","))
            return cls(x, y, w, h, float(fill) if fill else 0.0)
        except ValueError:
            raise ConfigError(f"cannot parse mask region {text!r} (want x,y,w,h[:fill])") from None

    def fits(self, shape) -> bool:
        return self.x + self.w <= shape[1] and self.y + self.h <= shape[0]


@dataclass(frozen=True)
class DedupConfig:
    """``threshold`` is a mean absolute difference in [0, 1] intensity units.

    The default of one 8-bit quantization step drops duplicates carrying
    uniform noise of amplitude 0.5/255 (expected difference 1/3 step) and
    keeps frames whose noise amplitude reaches 2/255 (4/3 step).
    """

    threshold: float = 1.0 / 255.0
    min_unique_gap: int = 1
    recording_fps: float = RECORDING_FPS

    def __post_init__(self):
        if not self.threshold >= 0:
            raise ConfigError("dedup threshold must be >= 0")
        if self.min_unique_gap < 1:
            raise ConfigError("min_unique_gap must be >= 1")
        if not self.recording_fps > 0:
            raise ConfigError("recording_fps must be > 0")


@dataclass
class DedupReport:
    total: int
    kept: list
    drop_runs: list = field(default_factory=list)
    recording_fps: float = RECORDING_FPS

    @property
    def estimated_source_fps(self) -> float:
        return len(self.kept) / self.total * self.recording_fps

    def lines(self):
        out = [
            f"total={self.total}",
            f"kept={len(self.kept)}",
            f"estimated_source_fps={self.estimated_source_fps:.4f}",
        ]
        out += [f"drop_run={start}-{stop}" for start, stop in self.drop_runs]
        return out


def mean_abs_diff(a, b) -> float:
    return float(np.mean(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def deduplicate(frames, cfg: DedupConfig | None = None):
    """Drop frames that repeat the last kept frame.

    Frame i is dropped iff its mean absolute difference to the last kept
    frame is <= ``threshold``, and frames less than ``min_unique_gap``
    positions after the last kept one are dropped too. The first frame is
    always kept.

    Returns:
        ``(kept_indices, DedupReport)``; drop runs are inclusive index ranges.
    """
    cfg = cfg or DedupConfig()
    n = len(frames)
    if n == 0:
        raise DataError("cannot deduplicate an empty sequence")
    kept = [0]
    last = np.asarray(frames[0], dtype=np.float64)
    for i in range(1, n):
        frame = np.asarray(frames[i], dtype=np.float64)
        if frame.shape != last.shape:
            raise DataError(f"frame {i} has shape {frame.shape}, expected {last.shape}")
        if i - kept[-1] < cfg.min_unique_gap or mean_abs_diff(frame, last) <= cfg.threshold:
            continue
        kept.append(i)
        last = frame
    runs = []
    for a, b in zip(kept, kept[1:] + [n]):
        if b - a > 1:
            runs.append((a + 1, b - 1))
    return kept, DedupReport(n, kept, runs, cfg.recording_fps)


def apply_mask(img, regions) -> np.ndarray:
    """Overwrite each rectangle with its fill value; pixels outside stay put."""
    img = np.asarray(img, dtype=np.float64)
    out = img.copy()
    for r in regions:
        if not r.fits(img.shape):
            raise DomainError(f"mask region {r} exceeds frame of shape {img.shape}")
        out[r.y : r.y + r.h, r.x : r.x + r.w] = r.fill
    return out


def extract_triplets(frames, stride: int = 1, *, source_id: str = "", indices=None):
    """Triplets ``(i, i+1, i+2)`` for ``i = 0, stride, 2*stride, ...``.

    ``indices`` optionally gives the original frame numbers (e.g. kept
    indices after dedup) to record as ``frame_index`` of the middle frame.
    """
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    n = len(frames)
    if n < 3:
        raise DataError(f"need at least 3 frames for a triplet, got {n}")
    indices = list(range(n)) if indices is None else list(indices)
    return [
        Triplet(frames[i], frames[i + 1], frames[i + 2], source_id=source_id, frame_index=indices[i + 1])
        for i in range(0, n - 2, stride)
    ]


def _flip(img, tag):
    if tag == "h":
        return img[:, ::-1]
    if tag == "v":
        return img[::-1, :]
    if tag == "hv":
        return img[::-1, ::-1]
    return img


def flip_triplet(t: Triplet, tag: str) -> Triplet:
    if tag not in FLIP_TAGS:
        raise ConfigError(f"unknown flip {tag!r}")
    return Triplet(
        np.ascontiguousarray(_flip(t.prev, tag)),
        np.ascontiguousarray(_flip(t.mid, tag)),
        np.ascontiguousarray(_flip(t.next, tag)),
        source_id=t.source_id,
        frame_index=t.frame_index,
    )


def augment_flips(t: Triplet):
    """The four members of the flip group, as ``[(tag, triplet), ...]``
    in the order identity, horizontal, vertical, both."""
    return [(tag, flip_triplet(t, tag)) for tag in FLIP_TAGS]


# ------------------------------------------------------------------ files

_NUMBER = re.compile(r"(\d+)")


def list_frames(directory):
    """Frame files (.pgm/.png) in ``directory`` ordered by their last number."""
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {d}")
    files = [p for p in d.iterdir() if p.suffix.lower() in FRAME_SUFFIXES]
    if not files:
        raise DataError(f"no .pgm/.png frames in {d}")

    def key(p):
        nums = _NUMBER.findall(p.stem)
        if not nums:
            raise FormatError(f"frame file {p.name} carries no frame number")
        return int(nums[-1]), p.name

    return sorted(files, key=key)


def load_frames(directory):
    paths = list_frames(directory)
    return paths, [load_frame(p) for p in paths]


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    frames: tuple
    augmentation: str = "id"

    def line(self) -> str:
        return f"{self.source_id} {','.join(str(i) for i in self.frames)} {self.augmentation}"

    @classmethod
    def parse(cls, line: str) -> "ManifestEntry":
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"bad manifest line {line!r}")
        try:
            frames = tuple(int(v) for v in parts[1].split(","))
        except ValueError:
            raise FormatError(f"bad frame indices in manifest line {line!r}") from None
        if len(frames) != 3:
            raise FormatError(f"manifest line needs three frame indices: {line!r}")
        if parts[2] not in FLIP_TAGS:
            raise FormatError(f"unknown augmentation tag in {line!r}")
        return cls(parts[0], frames, parts[2])


def read_manifest(path):
    lines = Path(path).read_text().splitlines()
    return [ManifestEntry.parse(l) for l in lines if l.strip() and not l.startswith("#")]


def write_manifest(entries, path):
    Path(path).write_text("".join(e.line() + "\n" for e in entries))


def sample_subset(entries, n: int, seed: int):
    """``n`` entries drawn without replacement, reproducible from ``seed``,
    returned in their original order."""
    if n < 0:
        raise ConfigError("subset size must be >= 0")
    if n > len(entries):
        raise DataError(f"cannot sample {n} of {len(entries)} entries")
    picks = make_rng(seed).choice(len(entries), size=n, replace=False)
    return [entries[i] for i in sorted(picks)]


def write_triplet_tree(triplets, out_dir, *, clip: str, start: int = 0):
    """Write ``<out>/<clip>/<index>/{0,1,2}.pgm``, one directory per triplet."""
    root = Path(out_dir) / clip
    written = []
    for n, t in enumerate(triplets, start):
        d = root / f"{n:06d}"
        d.mkdir(parents=True, exist_ok=True)
        for k, img in enumerate((t.prev, t.mid, t.next)):
            save_frame(img, d / f"{k}.pgm")
        written.append(d)
    return written


def read_triplet_tree(directory, clip=None):
    """Load triplets written by :func:`write_triplet_tree`.

    ``directory`` is either a clip directory or a root holding clip
    directories; triplets come back ordered by clip then index.
    """
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    if (root / "0.pgm").exists():
        dirs = [root]
    else:
        dirs = sorted(p.parent for p in root.rglob("0.pgm"))
    if not dirs:
        raise DataError(f"no triplets under {root}")
    out = []
    for d in dirs:
        frames = [as_image(load_frame(d / f"{k}.pgm")) for k in range(3)]
        index = int(d.name) if d.name.isdigit() else 0
        out.append(Triplet(*frames, source_id=clip or d.parent.name, frame_index=index))
    return out
