"""Stimulus samples, EPP targets, synthetic data and splits.

CSV layout (header required)::

    id,modality,f1,f2,f3,f4,f5,fear,sadness,anger,calmness,happiness

Pairing layout::

    pair_id,animation_id,music_id
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .numkernel import make_rng

MODALITIES = ("animation", "music")
FEATURE_NAMES = {
    "animation": ("speed", "jitter", "consonance", "bigsmall", "updown"),
    "music": ("pitch", "tonnetz", "volume", "tempo", "duration"),
}
EMOTIONS = ("fear", "sadness", "anger", "calmness", "happiness")
SAMPLE_HEADER = ("id", "modality", "f1", "f2", "f3", "f4", "f5") + EMOTIONS
PAIR_HEADER = ("pair_id", "animation_id", "music_id")

# emotions ordered negative -> positive, equally spaced
POSITIVITY = np.array([0.0, 0.25, 0.5, 0.75, 1.0])


class DatasetError(ValueError):
    pass


def compute_epp(ratings) -> float:
    """Rating-weighted mean positivity of the five emotions, in [0, 1]."""
    r = np.asarray(ratings, dtype=np.float64)
    if r.shape != (5,):
        raise DatasetError(f"expected 5 ratings, got shape {r.shape}")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise DatasetError("ratings must be finite and non-negative")
    total = r.sum()
    if total <= 0:
        raise DatasetError("ratings are all zero; EPP undefined")
    return float(np.clip(r @ POSITIVITY / total, 0.0, 1.0))


def normalize_epp(values) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant sequence maps to 0.5."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DatasetError("normalize_epp: empty input")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full(v.shape, 0.5)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


@dataclass(frozen=True)
class Sample:
    id: str
    modality: str
    features: tuple[float, ...]
    ratings: tuple[float, ...]
    epp_target: float = field(init=False)

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise DatasetError(f"unknown modality {self.modality!r}")
        feats = tuple(float(f) for f in self.features)
        rats = tuple(float(r) for r in self.ratings)
        if len(feats) != 5 or any(not 0.0 <= f <= 1.0 for f in feats):
            raise DatasetError(f"sample {self.id}: features must be 5 values in [0,1]")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "ratings", rats)
        object.__setattr__(self, "epp_target", compute_epp(rats))


@dataclass(frozen=True)
class Pair:
    id: str
    animation: Sample
    music: Sample
    epp_target: float


@dataclass(frozen=True)
class PairedDataset:
    pairs: tuple[Pair, ...]
    seed: int | None = None
    source: str = "synthetic"
    music_proportion: float = 0.5

    def __len__(self):
        return len(self.pairs)

    @property
    def metadata(self) -> dict:
        return {
            "pairs": len(self.pairs),
            "samples": 2 * len(self.pairs),
            "seed": self.seed,
            "source": self.source,
            "music_proportion": self.music_proportion,
        }

    def samples(self) -> list[Sample]:
        return [p.animation for p in self.pairs] + [p.music for p in self.pairs]

    def subset(self, indices) -> "PairedDataset":
        return PairedDataset(
            tuple(self.pairs[i] for i in indices), self.seed, self.source, self.music_proportion
        )


def fuse_epp(epp_animation: float, epp_music: float, music_proportion: float = 0.5) -> float:
    return (1.0 - music_proportion) * epp_animation + music_proportion * epp_music


def make_pairs(
    animations: Sequence[Sample],
    musics: Sequence[Sample],
    pair_ids: Sequence[str] | None = None,
    music_proportion: float = 0.5,
) -> tuple[Pair, ...]:
    if len(animations) != len(musics):
        raise DatasetError(f"{len(animations)} animation vs {len(musics)} music samples")
    if not 0.0 <= music_proportion <= 1.0:
        raise DatasetError("music_proportion must lie in [0, 1]")
    if pair_ids is None:
        pair_ids = [f"p{i:04d}" for i in range(len(animations))]
    return tuple(
        Pair(pid, a, m, fuse_epp(a.epp_target, m.epp_target, music_proportion))
        for pid, a, m in zip(pair_ids, animations, musics)
    )


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def _read_rows(csv_text: str, header: tuple[str, ...]):
    reader = csv.reader(io.StringIO(csv_text))
    try:
        head = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DatasetError("CSV is empty; header row required") from None
    missing = [h for h in header if h not in head]
    if missing:
        raise DatasetError(f"missing column(s): {', '.join(missing)}")
    col = {h: head.index(h) for h in header}
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(head):
            raise DatasetError(f"row {rowno}: expected {len(head)} cells, got {len(row)}")
        yield rowno, {h: row[col[h]].strip() for h in header}


def parse_samples(csv_text: str) -> list[Sample]:
    samples = []
    for rowno, rec in _read_rows(csv_text, SAMPLE_HEADER):
        values = {}
        for name in SAMPLE_HEADER[2:]:
            try:
                values[name] = float(rec[name])
            except ValueError:
                raise DatasetError(
                    f"row {rowno}, column {name}: non-numeric value {rec[name]!r}"
                ) from None
            if not np.isfinite(values[name]):
                raise DatasetError(f"row {rowno}, column {name}: non-finite value")
        if rec["modality"] not in MODALITIES:
            raise DatasetError(f"row {rowno}, column modality: unknown {rec['modality']!r}")
        for name in ("f1", "f2", "f3", "f4", "f5"):
            if not 0.0 <= values[name] <= 1.0:
                raise DatasetError(
                    f"row {rowno}, column {name}: feature {values[name]} outside [0,1]"
                )
        ratings = [values[e] for e in EMOTIONS]
        if any(r < 0 for r in ratings):
            raise DatasetError(f"row {rowno}: negative rating")
        if sum(ratings) <= 0:
            raise DatasetError(f"row {rowno}: all ratings are zero")
        samples.append(
            Sample(rec["id"], rec["modality"], [values[f"f{i}"] for i in range(1, 6)], ratings)
        )
    return samples


def serialize_samples(samples: Sequence[Sample]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SAMPLE_HEADER)
    for s in samples:
        writer.writerow([s.id, s.modality, *map(repr, s.features), *map(repr, s.ratings)])
    return buf.getvalue()


def parse_pairs(csv_text: str, samples: Sequence[Sample], music_proportion: float = 0.5):
    by_id = {s.id: s for s in samples}
    ids, anims, musics = [], [], []
    for rowno, rec in _read_rows(csv_text, PAIR_HEADER):
        a, m = by_id.get(rec["animation_id"]), by_id.get(rec["music_id"])
        if a is None or a.modality != "animation":
            raise DatasetError(f"row {rowno}: no animation sample {rec['animation_id']!r}")
        if m is None or m.modality != "music":
            raise DatasetError(f"row {rowno}: no music sample {rec['music_id']!r}")
        ids.append(rec["pair_id"])
        anims.append(a)
        musics.append(m)
    return make_pairs(anims, musics, ids, music_proportion)


def serialize_pairs(dataset: PairedDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PAIR_HEADER)
    for p in dataset.pairs:
        writer.writerow([p.id, p.animation.id, p.music.id])
    return buf.getvalue()


def load_dataset(
    samples_path, pairs_path=None, music_proportion: float = 0.5
) -> PairedDataset:
    """Read a sample CSV (and optional pairing CSV) from disk.

    Without a pairing file the i-th animation row is paired with the i-th
    music row.
    """
    samples = parse_samples(Path(samples_path).read_text(encoding="utf-8"))
    if pairs_path is not None:
        pairs = parse_pairs(Path(pairs_path).read_text(encoding="utf-8"), samples, music_proportion)
    else:
        anims = [s for s in samples if s.modality == "animation"]
        musics = [s for s in samples if s.modality == "music"]
        pairs = make_pairs(anims, musics, music_proportion=music_proportion)
    return PairedDataset(pairs, None, str(samples_path), music_proportion)


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

# Ground-truth emotion maps: rating_e = sigmoid(gain * (W_e . (f - 0.5)) + bias_e).
# Rows follow EMOTIONS, columns the modality's FEATURE_NAMES.
ANIMATION_MAP = np.array([
    # speed jitter consonance bigsmall updown
    [0.6, 1.0, -0.8, 0.2, -0.2],    # fear
    [-1.0, -0.2, 0.0, -0.6, -0.8],  # sadness
    [0.8, 0.6, -0.8, 0.8, 0.0],     # anger
    [-0.8, -0.8, 0.6, -0.4, 0.0],   # calmness
    [0.6, -0.4, 0.8, 0.2, 0.8],     # happiness
])
# The music map agrees with the animation map on the emotional direction of
# each shared slider, so a pair's two EPPs are strongly correlated.
MUSIC_MAP = np.array([
    # pitch tonnetz volume tempo duration
    [0.4, 0.8, -1.0, 0.0, -0.2],    # fear
    [-1.0, -0.4, 0.2, -0.4, -0.6],  # sadness
    [0.6, 0.8, -0.6, 1.0, 0.0],     # anger
    [-1.0, -0.6, 0.8, -0.2, 0.2],   # calmness
    [0.8, -0.2, 0.6, 0.2, 0.6],     # happiness
])
EMOTION_BIAS = np.array([-0.5, -0.5, -0.5, -0.3, -0.3])
MAP_GAIN = {"animation": 4.0, "music": 3.0}


def ground_truth_ratings(features, modality: str) -> np.ndarray:
    """Noise-free ratings for an (n, 5) feature array."""
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    table = ANIMATION_MAP if modality == "animation" else MUSIC_MAP
    z = MAP_GAIN[modality] * (f - 0.5) @ table.T + EMOTION_BIAS
    return 1.0 / (1.0 + np.exp(-z))


def generate_synthetic(
    n_pairs: int,
    seed: int,
    noise: float = 0.05,
    music_proportion: float = 0.5,
    render_noise: float = 0.05,
) -> PairedDataset:
    """Draw ``n_pairs`` congruent animation/music pairs.

    Each pair shares one setting of the five generator sliders, uniform on
    [0, 1]. Both stimuli render that setting with their own uniform jitter
    of +-``render_noise`` (clipped to [0, 1]), so a pair's features agree up
    to rendering noise. Ratings are the modality's ground-truth map of its
    own rendered features plus uniform noise in [-noise, noise], clipped at
    zero.
    """
    if n_pairs < 1:
        raise DatasetError("n_pairs must be >= 1")
    rng = make_rng(seed)
    sliders = rng.uniform(0.0, 1.0, size=(n_pairs, 5))
    out = {}
    for modality in MODALITIES:
        feats = np.clip(sliders + rng.uniform(-render_noise, render_noise, sliders.shape), 0.0, 1.0)
        ratings = ground_truth_ratings(feats, modality)
        if noise:
            ratings = np.clip(ratings + rng.uniform(-noise, noise, size=ratings.shape), 0.0, None)
        prefix = "a" if modality == "animation" else "m"
        out[modality] = [
            Sample(f"{prefix}{i:04d}", modality, feats[i], ratings[i])
            for i in range(n_pairs)
        ]
    pairs = make_pairs(out["animation"], out["music"], music_proportion=music_proportion)
    return PairedDataset(pairs, seed, "synthetic", music_proportion)


def split(dataset: PairedDataset, train_fraction: float = 0.8, seed: int = 0):
    """Seeded shuffle of pair indices into disjoint (train, test) datasets."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    order = make_rng(seed).permutation(n)
    n_train = int(round(n * train_fraction))
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])
