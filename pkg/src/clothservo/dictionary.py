"""Visual feedback dictionary: paired feature-space and gripper velocities.

A recording of (gripper configuration, feature vector) frames is mined for
velocity pairs by differencing random frame pairs, normalized by their time
separation. K-means clusters the feature-space velocities and each cluster
keeps its single nearest sampled pair as a dictionary word, so every stored
(delta_s, delta_r) is an actually observed correspondence, never an average.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DictionaryLoadError, InsufficientDataError, ParameterError

FORMAT_NAME = "feedback-dictionary"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Recording:
    """Time series of gripper configurations and their feature vectors."""

    configs: np.ndarray    # (T, n_dof)
    features: np.ndarray   # (T, d)
    layout_id: str
    frame_rate: float      # control frames per second

    def __post_init__(self):
        c = np.asarray(self.configs, dtype=np.float64)
        f = np.asarray(self.features, dtype=np.float64)
        if c.ndim != 2 or f.ndim != 2 or c.shape[0] != f.shape[0]:
            raise ContractError(
                f"configs {c.shape} and features {f.shape} must share a time axis"
            )
        if not (self.frame_rate > 0):
            raise ParameterError("frame_rate must be > 0")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(f))):
            raise ContractError("recording arrays must be finite")
        c.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "configs", c)
        object.__setattr__(self, "features", f)

    def __len__(self) -> int:
        return self.configs.shape[0]

    @property
    def n_dof(self) -> int:
        return self.configs.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def sample_pairs(recording: Recording, n_pairs: int, rng: np.random.Generator):
    """Random frame pairs turned into time-normalized velocities.

    Each pair draws two distinct frame indices uniformly with replacement
    (equal draws are rejected and redrawn). The index gap, in seconds at the
    recording's frame rate, divides both differences, so a pair spanning ten
    frames and a pair spanning two describe the same motion at the same scale.

    Returns (delta_s, delta_r) with shapes (n_pairs, d) and (n_pairs, n_dof).
    """
    T = len(recording)
    if T < 2:
        raise InsufficientDataError(f"need at least 2 frames to sample pairs, have {T}")
    if n_pairs < 1:
        raise ParameterError("n_pairs must be >= 1")
    first = np.empty(n_pairs, dtype=np.intp)
    second = np.empty(n_pairs, dtype=np.intp)
    for i in range(n_pairs):
        while True:
            p, q = rng.integers(0, T, size=2)
            if p != q:
                break
        first[i], second[i] = p, q
    gap_seconds = (first - second).astype(np.float64) / recording.frame_rate
    delta_r = (recording.configs[first] - recording.configs[second]) / gap_seconds[:, None]
    delta_s = (recording.features[first] - recording.features[second]) / gap_seconds[:, None]
    return delta_s, delta_r


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray          # (k, d)
    labels: np.ndarray           # (n,)
    inertia_history: tuple       # inertia after each assignment pass


def kmeans(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when the relative inertia change drops below ``tol`` or after
    ``max_iter`` assignment passes. Empty clusters are reseeded to the point
    currently farthest from its center, which cannot increase inertia, so the
    recorded history is non-increasing.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ContractError(f"points must be 2-d, got shape {pts.shape}")
    n = pts.shape[0]
    if k < 1:
        raise ParameterError("k must be >= 1")
    if n < k:
        raise InsufficientDataError(f"cannot form {k} clusters from {n} points")

    # k-means++: spread the initial centers with D^2 weighting
    centers = np.empty((k, pts.shape[1]))
    first = int(rng.integers(0, n))
    centers[0] = pts[first]
    closest_sq = np.sum((pts - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest_sq.sum()
        if total <= 0.0:
            centers[c] = pts[int(rng.integers(0, n))]
        else:
            pick = int(rng.choice(n, p=closest_sq / total))
            centers[c] = pts[pick]
        closest_sq = np.minimum(closest_sq, np.sum((pts - centers[c]) ** 2, axis=1))

    history = []
    labels = np.zeros(n, dtype=np.intp)
    prev_inertia = None
    for _ in range(max_iter):
        sq = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(sq, axis=1)
        inertia = float(sq[np.arange(n), labels].sum())
        history.append(inertia)
        if prev_inertia is not None:
            if prev_inertia == 0.0 or abs(prev_inertia - inertia) <= tol * prev_inertia:
                break
        prev_inertia = inertia

        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = pts[members].mean(axis=0)
            else:
                farthest = int(np.argmax(sq[np.arange(n), labels]))
                centers[c] = pts[farthest]
                labels[farthest] = c
                sq[farthest, :] = 0.0  # its distance is now zero; later reseeds look elsewhere

    return KMeansResult(centers=centers, labels=labels, inertia_history=tuple(history))


@dataclass(frozen=True)
class FeedbackDictionary:
    """The learned mapping: k words of paired velocities plus provenance."""

    delta_s: np.ndarray           # (k, d) feature-space velocities
    delta_r: np.ndarray           # (k, n_dof) gripper velocities
    feature_config: dict          # enough to rebuild the extraction pipeline
    layout_id: str
    frame_rate: float
    seed: int | None = None
    sources: tuple = ()

    def __post_init__(self):
        ds = np.asarray(self.delta_s, dtype=np.float64)
        dr = np.asarray(self.delta_r, dtype=np.float64)
        if ds.ndim != 2 or dr.ndim != 2 or ds.shape[0] != dr.shape[0]:
            raise ContractError(
                f"word arrays disagree: delta_s {ds.shape}, delta_r {dr.shape}"
            )
        if ds.shape[0] == 0:
            raise ContractError("dictionary must contain at least one word")
        if not (np.all(np.isfinite(ds)) and np.all(np.isfinite(dr))):
            raise ContractError("dictionary words must be finite")
        ds.setflags(write=False)
        dr.setflags(write=False)
        object.__setattr__(self, "delta_s", ds)
        object.__setattr__(self, "delta_r", dr)

    def __len__(self) -> int:
        return self.delta_s.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.delta_s.shape[1]

    @property
    def n_dof(self) -> int:
        return self.delta_r.shape[1]

    def _payload(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "feature_config": self.feature_config,
            "layout_id": self.layout_id,
            "frame_rate": self.frame_rate,
            "n_dof": self.n_dof,
            "seed": self.seed,
            "sources": list(self.sources),
            "words": {
                "delta_s": [list(row) for row in self.delta_s.tolist()],
                "delta_r": [list(row) for row in self.delta_r.tolist()],
            },
        }

    def save(self, path) -> None:
        payload = self._payload()
        payload["checksum"] = _checksum(payload)
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "FeedbackDictionary":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DictionaryLoadError(f"cannot read dictionary: {exc}") from exc
        if not isinstance(payload, dict):
            raise DictionaryLoadError("dictionary file is not a JSON object")
        if payload.get("format") != FORMAT_NAME:
            raise DictionaryLoadError(
                f"unrecognized format {payload.get('format')!r}", field="format"
            )
        if payload.get("version") != FORMAT_VERSION:
            raise DictionaryLoadError(
                f"unsupported version {payload.get('version')!r}", field="version"
            )
        stored = payload.get("checksum")
        if stored is None:
            raise DictionaryLoadError("missing checksum", field="checksum")
        body = {key: val for key, val in payload.items() if key != "checksum"}
        actual = _checksum(body)
        if actual != stored:
            raise DictionaryLoadError(
                f"checksum mismatch: file says {stored[:12]}.., content is {actual[:12]}..",
                field="checksum",
            )
        words = payload.get("words")
        if not isinstance(words, dict) or "delta_s" not in words or "delta_r" not in words:
            raise DictionaryLoadError("words block malformed", field="words")
        try:
            return cls(
                delta_s=np.array(words["delta_s"], dtype=np.float64),
                delta_r=np.array(words["delta_r"], dtype=np.float64),
                feature_config=payload["feature_config"],
                layout_id=payload["layout_id"],
                frame_rate=float(payload["frame_rate"]),
                seed=payload.get("seed"),
                sources=tuple(payload.get("sources", ())),
            )
        except (KeyError, TypeError, ValueError, ContractError) as exc:
            raise DictionaryLoadError(f"invalid dictionary content: {exc}") from exc


def _checksum(body: dict) -> str:
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_dictionary(
    recording: Recording,
    n_words: int,
    n_pairs: int,
    rng: np.random.Generator,
    feature_config: dict,
    seed: int | None = None,
    sources: tuple = (),
    pairs=None,
) -> FeedbackDictionary:
    """Sample velocity pairs, cluster the feature side, keep nearest exemplars.

    Clustering runs on delta_s alone; delta_r rides along with whichever pair
    is selected. Pass ``pairs`` (a (delta_s, delta_r) tuple) to reuse an
    existing sample instead of drawing a fresh one.
    """
    if pairs is None:
        delta_s, delta_r = sample_pairs(recording, n_pairs, rng)
    else:
        delta_s, delta_r = pairs
        delta_s = np.asarray(delta_s, dtype=np.float64)
        delta_r = np.asarray(delta_r, dtype=np.float64)
    if delta_s.shape[0] < n_words:
        raise InsufficientDataError(
            f"{delta_s.shape[0]} pairs cannot support {n_words} words"
        )
    result = kmeans(delta_s, n_words, rng)
    chosen = []
    for center in result.centers:
        dist = np.sum((delta_s - center) ** 2, axis=1)
        chosen.append(int(np.argmin(dist)))  # argmin takes the lowest index on ties
    chosen = np.array(chosen, dtype=np.intp)
    return FeedbackDictionary(
        delta_s=delta_s[chosen],
        delta_r=delta_r[chosen],
        feature_config=dict(feature_config),
        layout_id=recording.layout_id,
        frame_rate=recording.frame_rate,
        seed=seed,
        sources=tuple(sources),
    )
