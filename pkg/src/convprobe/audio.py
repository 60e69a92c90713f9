"""Word-token audio handling: loading, padding, splitting, toy synthesis.

A token is one word utterance, left padded with 25 ms of silence and right
padded with zeros to the fixed network input length.  Sample values live in
[-1, 1] (the scale of a tanh Generator output).  Integer PCM is normalized
once, by full-scale division, and tokens carry a ``normalized`` flag so the
division is never applied twice.

Phone intervals are sample ranges into the *padded* waveform; the synthetic
corpus marks each token's class-distinguishing segment this way, standing in
for hand-annotated frication intervals in real speech.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.io import wavfile

from . import container
from .errors import (
    IntervalError,
    LengthError,
    StratificationError,
    UnsupportedFormatError,
    UserInputError,
    WavFormatError,
)

LEFT_PAD_SECONDS = 0.025
DEFAULT_SAMPLE_RATE = 16000
DEFAULT_TARGET_LEN = 16384


@dataclass(frozen=True)
class PhoneInterval:
    """Annotated sample range [start_sample, end_sample) in padded coordinates."""

    phone: str
    start_sample: int
    end_sample: int

    def __post_init__(self):
        if not (0 <= self.start_sample < self.end_sample):
            raise IntervalError(
                f"bad interval [{self.start_sample}, {self.end_sample}) for phone {self.phone!r}"
            )


@dataclass
class AudioToken:
    """One padded word utterance."""

    token_id: str
    word: str
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    intervals: list[PhoneInterval] = field(default_factory=list)
    normalized: bool = True

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        for iv in self.intervals:
            if iv.end_sample > len(self.samples):
                raise IntervalError(
                    f"{self.token_id}: interval [{iv.start_sample}, {iv.end_sample}) "
                    f"exceeds padded length {len(self.samples)}"
                )


@dataclass
class CorpusSplit:
    train: list[AudioToken]
    test: list[AudioToken]
    seed: int


def left_pad_samples(sample_rate: int) -> int:
    """Number of zero samples in the 25 ms left pad."""
    return int(round(LEFT_PAD_SECONDS * sample_rate))


def load_wav(path, token_id: str | None = None, word: str = "") -> AudioToken:
    """Read a mono PCM WAV file and normalize to [-1, 1].

    Accepts 8-bit unsigned, 16-bit signed or 32-bit float samples.  Integer
    samples are divided by full scale (128 after the 128 offset for 8-bit,
    32768 for 16-bit); float samples are taken as already normalized.
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except Exception as exc:
        raise WavFormatError(f"{path}: cannot read WAV ({exc})") from exc
    if data.ndim != 1:
        raise UnsupportedFormatError(
            f"{path}: expected mono audio, got {data.ndim} dimensions"
        )
    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported sample format {data.dtype}")
    if token_id is None:
        token_id = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return AudioToken(token_id=token_id, word=word, samples=samples, sample_rate=int(rate))


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write normalized samples as 16-bit PCM."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    buf = io.BytesIO()
    wavfile.write(buf, sample_rate, pcm)
    container.atomic_write_bytes(path, buf.getvalue())


def pad_token(
    raw: np.ndarray,
    sample_rate: int,
    target_len: int,
    *,
    token_id: str = "",
    word: str = "",
    intervals: list[PhoneInterval] | None = None,
) -> AudioToken:
    """Left pad 25 ms of silence, right pad zeros to ``target_len``.

    ``intervals`` are given in raw-signal coordinates and shifted by the left
    pad into padded coordinates.
    """
    raw = np.asarray(raw, dtype=np.float64)
    left = left_pad_samples(sample_rate)
    if len(raw) + left > target_len:
        overflow = len(raw) + left - target_len
        raise LengthError(
            f"raw signal of {len(raw)} samples plus {left} left-pad samples "
            f"overflows target length {target_len} by {overflow}",
            overflow=overflow,
        )
    out = np.zeros(target_len, dtype=np.float64)
    out[left : left + len(raw)] = raw
    shifted = [
        PhoneInterval(iv.phone, iv.start_sample + left, iv.end_sample + left)
        for iv in (intervals or [])
    ]
    return AudioToken(
        token_id=token_id,
        word=word,
        samples=out,
        sample_rate=sample_rate,
        intervals=shifted,
    )


def split_corpus(tokens: list[AudioToken], ratio: float, seed: int) -> CorpusSplit:
    """Deterministic per-class stratified train/test split.

    Each class is shuffled independently under ``seed`` and split so the
    train fraction is within one token of ``ratio``; both sides of every
    class stay non-empty.
    """
    if not 0.0 < ratio < 1.0:
        raise UserInputError(f"split ratio must be in (0, 1), got {ratio}")
    by_word: dict[str, list[AudioToken]] = {}
    for tok in tokens:
        by_word.setdefault(tok.word, []).append(tok)
    for word, toks in sorted(by_word.items()):
        if len(toks) < 2:
            raise StratificationError(
                f"class {word!r} has {len(toks)} token(s); need at least 2 to stratify"
            )
    rng = np.random.default_rng(seed)
    train: list[AudioToken] = []
    test: list[AudioToken] = []
    for word in sorted(by_word):
        toks = sorted(by_word[word], key=lambda t: t.token_id)
        order = rng.permutation(len(toks))
        n_train = int(round(ratio * len(toks)))
        n_train = min(max(n_train, 1), len(toks) - 1)
        for rank, idx in enumerate(order):
            (train if rank < n_train else test).append(toks[idx])
    return CorpusSplit(train=train, test=test, seed=seed)


# ---------------------------------------------------------------------------
# Synthetic toy corpus
# ---------------------------------------------------------------------------

# Segment pools.  A segment is rendered from a (kind, arg) pair: "tone" holds
# a frequency in Hz, "noise" an index into per-class fixed noise sequences.
_PREFIXES = [
    ("tone", 400.0),
    ("tone", 700.0),
    ("noise", 0),
    ("tone", 260.0),
    ("tone", 560.0),
    ("noise", 1),
]
_MIDDLES = [
    ("tone", 1800.0),
    ("noise", 2),
    ("tone", 1100.0),
    ("tone", 2400.0),
    ("noise", 3),
    ("tone", 1450.0),
]
_SUFFIXES = [
    ("tone", 500.0),
    ("tone", 900.0),
    ("tone", 330.0),
    ("noise", 4),
    ("tone", 640.0),
]

# Class recipes as (prefix, middle, suffix) pool indices.  The first four are
# arranged for contrast experiments: w0/w1 differ ONLY in the middle segment
# (the annotated interval), while w2/w3 share middle and suffix and differ
# only in the prefix, so their annotated intervals are distributionally
# identical.
CLASS_TEMPLATES: list[tuple[int, int, int]] = [
    (0, 0, 0),  # w0: tone400 | tone1800 | tone500
    (0, 1, 0),  # w1: tone400 | noise    | tone500
    (1, 2, 1),  # w2: tone700 | tone1100 | tone900
    (2, 2, 1),  # w3: noise   | tone1100 | tone900
    (1, 0, 1),
    (2, 3, 0),
    (3, 2, 2),
    (0, 3, 1),
    (1, 1, 2),
    (3, 0, 3),
    (4, 4, 0),
    (2, 5, 2),
    (3, 4, 4),
    (4, 2, 3),
    (5, 5, 1),
    (4, 0, 4),
]

# Segment spans as fractions of the raw token duration.
_SEGMENT_FRACTIONS = (0.30, 0.40, 0.30)
_BASE_DURATION_FRACTION = 0.68  # of target_len, before the 25 ms left pad
_BASE_AMPLITUDE = 0.7
_RAMP_SECONDS = 0.004

MAX_CLASSES = len(CLASS_TEMPLATES)


def _noise_table(sample_rate: int, max_len: int) -> np.ndarray:
    """Fixed pseudo-noise sequences shared by all corpora (seeded by index)."""
    table = np.empty((5, max_len))
    for i in range(5):
        rng = np.random.default_rng(977001 + i)
        seq = rng.standard_normal(max_len)
        table[i] = seq / (3.5 * seq.std())
    return table


def _render_segment(kind, arg, length, sample_rate, phase, noise_table):
    t = np.arange(length) / sample_rate
    if kind == "tone":
        seg = np.sin(2.0 * np.pi * arg * t + phase)
    else:
        base = noise_table[arg]
        shift = int(phase / (2.0 * np.pi) * length) % max(length, 1)
        idx = (np.arange(length) + shift) % len(base)
        seg = 3.0 * base[idx]
    ramp = min(int(_RAMP_SECONDS * sample_rate), length // 4)
    if ramp > 0:
        win = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        seg[:ramp] *= win
        seg[-ramp:] *= win[::-1]
    return seg


def render_template(class_index: int, sample_rate: int, duration: int) -> np.ndarray:
    """Clean (jitter-free) class template of ``duration`` samples."""
    recipe = CLASS_TEMPLATES[class_index]
    pools = (_PREFIXES, _MIDDLES, _SUFFIXES)
    noise = _noise_table(sample_rate, duration)
    bounds = _segment_bounds(duration)
    out = np.zeros(duration)
    for (pool, idx), (a, b) in zip(zip(pools, recipe), bounds):
        kind, arg = pool[idx]
        out[a:b] = _render_segment(kind, arg, b - a, sample_rate, 0.0, noise)
    return _BASE_AMPLITUDE * out


def _segment_bounds(duration: int) -> list[tuple[int, int]]:
    edges = np.cumsum((0.0,) + _SEGMENT_FRACTIONS)
    pts = np.round(edges * duration).astype(int)
    return [(pts[i], pts[i + 1]) for i in range(3)]


def middle_segment_phone(class_index: int) -> str:
    kind, arg = _MIDDLES[CLASS_TEMPLATES[class_index][1]]
    return f"T{int(arg)}" if kind == "tone" else f"NZ{arg}"


def synth_toy_corpus(
    n_classes: int,
    tokens_per_class: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
    target_len: int = DEFAULT_TARGET_LEN,
) -> list[AudioToken]:
    """Generate a padded desk-scale corpus of acoustically distinct classes.

    Every token is its class template rendered with jitter: total duration
    +-10 %, amplitude +-20 %, and per-segment phase (tones get a random
    phase offset, noise segments a circular shift).  The middle segment is
    annotated with a PhoneInterval naming its content.
    """
    if n_classes > MAX_CLASSES:
        raise UserInputError(f"at most {MAX_CLASSES} synthetic classes, got {n_classes}")
    if n_classes < 1 or tokens_per_class < 1:
        raise UserInputError("need at least one class and one token per class")
    rng = np.random.default_rng(seed)
    base_duration = int(round(_BASE_DURATION_FRACTION * target_len))
    noise = _noise_table(sample_rate, int(1.1 * base_duration) + 8)
    pools = (_PREFIXES, _MIDDLES, _SUFFIXES)
    tokens = []
    for cls in range(n_classes):
        word = f"w{cls}"
        recipe = CLASS_TEMPLATES[cls]
        for i in range(tokens_per_class):
            duration = int(round(base_duration * rng.uniform(0.9, 1.1)))
            amp = _BASE_AMPLITUDE * rng.uniform(0.8, 1.2)
            bounds = _segment_bounds(duration)
            raw = np.zeros(duration)
            for (pool, idx), (a, b) in zip(zip(pools, recipe), bounds):
                kind, arg = pool[idx]
                phase = rng.uniform(0.0, 2.0 * np.pi)
                raw[a:b] = _render_segment(kind, arg, b - a, sample_rate, phase, noise)
            raw *= amp
            mid = PhoneInterval(middle_segment_phone(cls), bounds[1][0], bounds[1][1])
            tokens.append(
                pad_token(
                    raw,
                    sample_rate,
                    target_len,
                    token_id=f"{word}_{i:04d}",
                    word=word,
                    intervals=[mid],
                )
            )
    return tokens


# ---------------------------------------------------------------------------
# Corpus files: annotation CSV, manifest JSON, prepared-corpus container
# ---------------------------------------------------------------------------


def write_annotations(path, tokens: list[AudioToken]) -> None:
    """CSV with columns token_id, phone, start_sample, end_sample (padded coords)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["token_id", "phone", "start_sample", "end_sample"])
    for tok in tokens:
        for iv in tok.intervals:
            w.writerow([tok.token_id, iv.phone, iv.start_sample, iv.end_sample])
    container.atomic_write_text(path, buf.getvalue())


def read_annotations(path) -> dict[str, list[PhoneInterval]]:
    out: dict[str, list[PhoneInterval]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                iv = PhoneInterval(row["phone"], int(row["start_sample"]), int(row["end_sample"]))
            except (KeyError, ValueError) as exc:
                raise UserInputError(f"{path}: bad annotation row {row} ({exc})") from exc
            out.setdefault(row["token_id"], []).append(iv)
    return out


def write_manifest(path, entries: list[dict], sample_rate: int, target_len: int) -> None:
    """Manifest JSON: token_id -> file path, word, split."""
    doc = {
        "sample_rate": sample_rate,
        "target_len": target_len,
        "tokens": sorted(entries, key=lambda e: e["token_id"]),
    }
    container.atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("sample_rate", "target_len", "tokens"):
        if key not in doc:
            raise UserInputError(f"{path}: manifest missing key {key!r}")
    return doc


def save_corpus(path, split: CorpusSplit, sample_rate: int, target_len: int) -> None:
    """Prepared-corpus container: padded sample matrix plus token metadata."""
    tokens = list(split.train) + list(split.test)
    mat = np.stack([t.samples for t in tokens]).astype(np.float32)
    meta = {
        "kind": "corpus",
        "sample_rate": sample_rate,
        "target_len": target_len,
        "seed": split.seed,
        "tokens": [
            {
                "token_id": t.token_id,
                "word": t.word,
                "split": "train" if i < len(split.train) else "test",
                "intervals": [
                    [iv.phone, iv.start_sample, iv.end_sample] for iv in t.intervals
                ],
            }
            for i, t in enumerate(tokens)
        ],
    }
    container.save(path, {"samples": mat}, meta)


def load_corpus(path) -> tuple[CorpusSplit, dict]:
    tensors, meta = container.load(path)
    if meta.get("kind") != "corpus":
        raise UserInputError(f"{path}: not a prepared corpus container")
    mat = tensors["samples"]
    train, test = [], []
    for row, info in zip(mat, meta["tokens"]):
        tok = AudioToken(
            token_id=info["token_id"],
            word=info["word"],
            samples=row.astype(np.float64),
            sample_rate=meta["sample_rate"],
            intervals=[PhoneInterval(p, a, b) for p, a, b in info["intervals"]],
        )
        (train if info["split"] == "train" else test).append(tok)
    return CorpusSplit(train=train, test=test, seed=meta["seed"]), meta


def attach_intervals(tokens: list[AudioToken], annotations: dict[str, list]) -> list[AudioToken]:
    """Return tokens with intervals replaced by the annotation table's entries."""
    return [replace(tok, intervals=annotations.get(tok.token_id, [])) for tok in tokens]
