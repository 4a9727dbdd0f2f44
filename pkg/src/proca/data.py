"""Synthetic two-domain class-incremental datasets and feature-file I/O.

The generator places K class means on a sphere (rejection-sampled so every
pair is at least class_sep apart), draws Gaussian source samples around them,
and builds the target domain from the same means pushed through a fixed
random plane rotation plus a translation, with fresh noise.  Target classes
are split into disjoint per-step groups; source-private classes never appear
in the stream.

CSV format: header ``label,f0,...,f{d-1}``, one row per sample, UTF-8, LF
line endings.  Label -1 in a target file means the ground truth is withheld.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInput, FormatError, InvalidConfig, InvalidLabel
from .numerics import as_matrix
from .rng import RngStream

_MEAN_RADIUS_FACTOR = 1.5   # sphere radius as a multiple of class_sep
_INTRA_PAIR_FACTOR = 1.1    # gap of confusable pairs sharing a step
_CROSS_PAIR_FACTOR = 1.3    # gap of the confusable pair spanning steps
_ANCHOR_SEP_FACTOR = 1.7    # minimum distance between placement anchors
_PAIR_AXIS_SHIFT_COS = 0.6  # pair-axis component along the translation
_PLACEMENT_TRIES = 1000


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray   # n x d
    labels: np.ndarray     # n, ints in 0..K-1 (or -1 for withheld)
    K: int

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class StreamStep:
    features: np.ndarray
    hidden_labels: np.ndarray   # evaluation only; -1 when withheld
    true_classes: tuple


@dataclass(frozen=True)
class IncrementalStream:
    steps: tuple   # of StreamStep
    K: int
    d: int


def make_dataset(features, labels, K: int) -> LabeledDataset:
    X = as_matrix(features, "features")
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise EmptyInput(f"labels must have shape ({X.shape[0]},), got {y.shape}")
    if X.shape[0] == 0:
        raise EmptyInput("dataset has no rows")
    if y.max(initial=-1) >= K or y.min(initial=0) < -1:
        raise InvalidLabel(f"labels must lie in -1..{K - 1}")
    return LabeledDataset(features=X, labels=y, K=int(K))


@dataclass(frozen=True)
class SynthConfig:
    K: int = 12
    d: int = 16
    shared_per_step: int = 5
    num_steps: int = 2
    private_source_classes: int = 2
    samples_per_class_source: int = 40
    samples_per_class_target: int = 40
    class_sep: float = 5.0
    noise_sigma: float = 1.0
    rotation_angle: float = 0.5      # radians, fixed random plane
    translation_scale: float = 2.0   # norm of the domain-shift offset
    seed: int = 0

    def validate(self) -> "SynthConfig":
        if self.num_steps * self.shared_per_step + self.private_source_classes != self.K:
            raise InvalidConfig(
                "num_steps*shared_per_step + private_source_classes must equal K "
                f"({self.num_steps}*{self.shared_per_step}+{self.private_source_classes}"
                f" != {self.K})")
        if self.class_sep <= 0 or self.noise_sigma <= 0:
            raise InvalidConfig("class_sep and noise_sigma must be > 0")
        if self.d < 2:
            raise InvalidConfig("d must be >= 2 for a rotation plane")
        if min(self.K, self.shared_per_step, self.num_steps,
               self.samples_per_class_source, self.samples_per_class_target) < 1:
            raise InvalidConfig("counts must be >= 1")
        if self.private_source_classes < 0:
            raise InvalidConfig("private_source_classes must be >= 0")
        return self


def _sphere_point(radius: float, d: int, rng: RngStream,
                  existing: list, min_dist: float) -> np.ndarray:
    for _ in range(_PLACEMENT_TRIES):
        v = rng.normal(size=(d,))
        v *= radius / np.linalg.norm(v)
        if all(np.linalg.norm(v - e) >= min_dist for e in existing):
            return v
    raise InvalidConfig(
        f"could not place class means at separation {min_dist:.3g} "
        f"in {d} dimensions")


def _sphere_pair(center: np.ndarray, gap: float, radius: float,
                 rng: RngStream, shift_dir: np.ndarray):
    """Two points on the sphere straddling `center` at chord distance gap.

    The pair axis keeps a fixed component along the domain-shift direction,
    so the translation reliably pushes the second member toward the first
    member's source region (that member returned last).
    """
    tangent_shift = shift_dir - (shift_dir @ center) * center / (radius * radius)
    ts_norm = np.linalg.norm(tangent_shift)
    u = rng.normal(size=center.shape)
    u -= (u @ center) * center / (radius * radius)
    if ts_norm > 1e-12:
        t_hat = tangent_shift / ts_norm
        u -= (u @ t_hat) * t_hat
        u /= np.linalg.norm(u)
        axis = (_PAIR_AXIS_SHIFT_COS * t_hat
                + np.sqrt(1.0 - _PAIR_AXIS_SHIFT_COS ** 2) * u)
    else:
        axis = u / np.linalg.norm(u)
    half_angle = np.arcsin(gap / (2.0 * radius))
    c, s = np.cos(half_angle), np.sin(half_angle)
    downstream = c * center + s * radius * axis
    upstream = c * center - s * radius * axis
    return downstream, upstream


def _place_means(cfg: SynthConfig, rng: RngStream, shift_dir: np.ndarray):
    """Class means on a sphere with planted confusability structure.

    The opening step holds only well-separated classes; every later step
    holds confusable pairs (gap 1.1*class_sep) whose axes lean along the
    domain-shift direction, so the shift reliably confuses their members
    with each other, i.e. with co-present classes: adaptation has damage to
    repair and detection stays clean.  Consecutive steps additionally share
    one slightly wider pair (1.3*class_sep) oriented so the later member
    drifts toward the earlier one's region, exerting pressure on knowledge
    from the earlier step.  Private classes are isolated.  All pairwise
    distances stay >= class_sep.
    """
    radius = _MEAN_RADIUS_FACTOR * cfg.class_sep
    anchor_min = _ANCHOR_SEP_FACTOR * cfg.class_sep
    means = np.zeros((cfg.K, cfg.d))
    anchors: list = []
    next_id = 0

    def place_pair(gap):
        nonlocal next_id
        center = _sphere_point(radius, cfg.d, rng, anchors, anchor_min)
        anchors.append(center)
        down, up = _sphere_pair(center, gap, radius, rng, shift_dir)
        ids = (next_id, next_id + 1)
        means[ids[0]] = down
        means[ids[1]] = up
        next_id += 2
        return ids

    def place_single():
        nonlocal next_id
        point = _sphere_point(radius, cfg.d, rng, anchors, anchor_min)
        anchors.append(point)
        means[next_id] = point
        next_id += 1
        return next_id - 1

    budgets = [cfg.shared_per_step] * cfg.num_steps
    step_members = [[] for _ in range(cfg.num_steps)]

    # one cross pair per consecutive-step boundary, budget permitting; the
    # downstream member joins the earlier step
    for s in range(cfg.num_steps - 1):
        if budgets[s] >= 1 and budgets[s + 1] >= 1:
            down, up = place_pair(_CROSS_PAIR_FACTOR * cfg.class_sep)
            step_members[s].append(down)
            step_members[s + 1].append(up)
            budgets[s] -= 1
            budgets[s + 1] -= 1

    for s in range(cfg.num_steps):
        while budgets[s] >= 2 and s > 0:
            step_members[s].extend(place_pair(_INTRA_PAIR_FACTOR * cfg.class_sep))
            budgets[s] -= 2
        while budgets[s] >= 1:
            step_members[s].append(place_single())
            budgets[s] -= 1
    groups = [tuple(sorted(g)) for g in step_members]

    for _ in range(cfg.private_source_classes):
        place_single()

    dists = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
    np.fill_diagonal(dists, np.inf)
    if dists.min() < cfg.class_sep - 1e-9:
        raise InvalidConfig("planted structure violates the separation floor; "
                            "increase d or lower class_sep")
    return means, groups


def _random_rotation(d: int, angle: float, rng: RngStream) -> np.ndarray:
    """Fixed random rotation with every principal angle equal to `angle`.

    A random orthonormal basis is paired into floor(d/2) planes and each
    plane is rotated by the same angle, so every point at radius r moves by
    exactly 2*sin(angle/2)*r (any leftover odd direction stays fixed).
    """
    basis = np.zeros((d, d))
    for i in range(d):
        for _ in range(_PLACEMENT_TRIES):
            v = rng.normal(size=(d,))
            v -= basis[:i].T @ (basis[:i] @ v)
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                basis[i] = v / norm
                break
        else:  # pragma: no cover - astronomically unlikely
            raise InvalidConfig("failed to build a rotation basis")
    R = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    for p in range(d // 2):
        u, v = basis[2 * p], basis[2 * p + 1]
        R += ((c - 1.0) * (np.outer(u, u) + np.outer(v, v))
              + s * (np.outer(u, v) - np.outer(v, u)))
    return R


def gen_synthetic(cfg: SynthConfig):
    """Build (source dataset, incremental target stream) from the config."""
    cfg.validate()
    rng = RngStream(cfg.seed, "synth")
    t_dir = rng.child("translation").normal(size=(cfg.d,))
    t_dir /= np.linalg.norm(t_dir)
    shift = cfg.translation_scale * t_dir
    means, step_groups = _place_means(cfg, rng.child("means"), t_dir)
    R = _random_rotation(cfg.d, cfg.rotation_angle, rng.child("rotation"))

    src_rng = rng.child("source")
    rows, labels = [], []
    for k in range(cfg.K):
        noise = src_rng.normal(size=(cfg.samples_per_class_source, cfg.d))
        rows.append(means[k] + cfg.noise_sigma * noise)
        labels.append(np.full(cfg.samples_per_class_source, k, dtype=np.int64))
    source = make_dataset(np.vstack(rows), np.concatenate(labels), cfg.K)

    tgt_rng = rng.child("target")
    steps = []
    for group in step_groups:
        rows, labels = [], []
        for k in group:
            shifted_mean = R @ means[k] + shift
            noise = tgt_rng.normal(size=(cfg.samples_per_class_target, cfg.d))
            rows.append(shifted_mean + cfg.noise_sigma * noise)
            labels.append(np.full(cfg.samples_per_class_target, k, dtype=np.int64))
        steps.append(StreamStep(features=np.vstack(rows),
                                hidden_labels=np.concatenate(labels),
                                true_classes=group))
    stream = IncrementalStream(steps=tuple(steps), K=cfg.K, d=cfg.d)
    return source, stream


def save_csv(features, labels, path) -> None:
    X = as_matrix(features, "features")
    y = np.asarray(labels, dtype=np.int64)
    header = "label," + ",".join(f"f{i}" for i in range(X.shape[1]))
    lines = [header]
    for i in range(X.shape[0]):
        lines.append(f"{int(y[i])}," + ",".join("%.17g" % v for v in X[i]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_csv(path, K: int | None = None) -> LabeledDataset:
    """Parse a feature CSV; malformed content raises FormatError with the line."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise FormatError(path, 1, "empty file")
    header = lines[0].split(",")
    if header[0] != "label" or header[1:] != [f"f{i}" for i in range(len(header) - 1)]:
        raise FormatError(path, 1, f"bad header {lines[0]!r}")
    d = len(header) - 1
    feats, labels = [], []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != d + 1:
            raise FormatError(path, ln, f"expected {d + 1} columns, got {len(cells)}")
        try:
            labels.append(int(cells[0]))
            feats.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise FormatError(path, ln, str(exc)) from None
    if not feats:
        raise FormatError(path, 2, "no data rows")
    X = np.asarray(feats, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if K is None:
        K = int(y.max()) + 1 if y.max() >= 0 else 1
    return make_dataset(X, y, K)


def write_dataset(source: LabeledDataset, stream: IncrementalStream,
                  out_dir) -> Path:
    """Write source/step CSVs plus the stream manifest; returns its path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(source.features, source.labels, out / "source.csv")
    entries = []
    for i, step in enumerate(stream.steps, start=1):
        name = f"step{i}.csv"
        save_csv(step.features, step.hidden_labels, out / name)
        entries.append({"file": name, "true_classes": list(step.true_classes)})
    manifest = {"K": stream.K, "d": stream.d, "source_file": "source.csv",
                "steps": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_manifest(path):
    """Read a manifest and its CSVs back into (source, stream)."""
    mpath = Path(path)
    payload = json.loads(mpath.read_text())
    for field in ("K", "d", "source_file", "steps"):
        if field not in payload:
            raise FormatError(mpath, 1, f"manifest missing field {field!r}")
    K, d = int(payload["K"]), int(payload["d"])
    base = mpath.parent
    source = load_csv(base / payload["source_file"], K=K)
    steps = []
    for item in payload["steps"]:
        ds = load_csv(base / item["file"], K=K)
        steps.append(StreamStep(features=ds.features, hidden_labels=ds.labels,
                                true_classes=tuple(int(c) for c in item["true_classes"])))
    if not steps:
        raise FormatError(mpath, 1, "manifest has no steps")
    return source, IncrementalStream(steps=tuple(steps), K=K, d=d)
