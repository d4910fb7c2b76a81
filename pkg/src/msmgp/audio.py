"""WAV ingestion and deterministic synthesis of harmonic test material.

The original study's guitar recording is not available, so evaluation
fixtures are synthesized: damped harmonic tones with a 1/j amplitude
roll-off, plus ground-truth piano-rolls for scoring.
"""

from __future__ import annotations

import csv
import math
import re
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import FormatError, InvalidInputError, InvalidParameterError

_NOTE_OFFSETS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}


def note_to_hz(label: str) -> float:
    """Fundamental frequency of a note name like ``C4`` or ``F#3`` (A4=440)."""
    m = re.fullmatch(r"([A-Ga-g])([#b]?)(-?\d+)", label.strip())
    if m is None:
        raise InvalidInputError(f"cannot parse note name {label!r}")
    semitone = _NOTE_OFFSETS[m.group(1).upper()]
    if m.group(2) == "#":
        semitone += 1
    elif m.group(2) == "b":
        semitone -= 1
    midi = semitone + 12 * (int(m.group(3)) + 1)
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray       # float64 in [-1, 1]
    sample_rate: float
    label: str = ""

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


@dataclass
class GroundTruthRoll:
    """Per-pitch note intervals with fundamentals, for scoring."""

    pitches: list[tuple[str, float]]                 # (label, f0_hz)
    intervals: dict[str, list[tuple[float, float]]]  # label -> [(on, off)]

    @property
    def labels(self) -> list[str]:
        return [p[0] for p in self.pitches]

    def duration(self) -> float:
        return max(
            (off for ivs in self.intervals.values() for _, off in ivs),
            default=0.0,
        )


def load_wav(path) -> AudioClip:
    """Read a PCM16 or float32 WAV; multichannel keeps channel 0."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:  # malformed RIFF, unsupported codec
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if data.ndim > 1:
        warnings.warn(f"{path}: {data.shape[1]} channels, keeping channel 0")
        data = data[:, 0]
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = np.clip(data.astype(np.float64), -1.0, 1.0)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}")
    return AudioClip(samples=samples, sample_rate=float(rate), label=str(path))


def save_wav(path, clip: AudioClip) -> None:
    """Write PCM16 little-endian RIFF."""
    x = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, int(round(clip.sample_rate)), pcm)


@dataclass(frozen=True)
class NoteSpec:
    """Synthesis recipe for one pitch."""

    label: str
    f0_hz: float
    n_harmonics: int = 10
    amps: tuple[float, ...] | None = None        # default 1/j roll-off
    decays_s: tuple[float, ...] | None = None    # default 0.5 s each
    attack_s: float = 0.02

    def harmonic_amps(self) -> np.ndarray:
        if self.amps is not None:
            return np.asarray(self.amps, dtype=float)
        return 1.0 / np.arange(1, self.n_harmonics + 1)

    def harmonic_decays(self) -> np.ndarray:
        if self.decays_s is not None:
            return np.asarray(self.decays_s, dtype=float)
        return np.full(self.n_harmonics, 0.5)


def synth_note(
    f0_hz: float,
    n_harmonics: int,
    harmonic_amps: np.ndarray,
    harmonic_decays_s: np.ndarray,
    duration_s: float,
    sample_rate: float,
    attack_s: float = 0.0,
) -> AudioClip:
    """Damped harmonic tone: sum_j a_j * exp(-t / tau_j) * sin(2 pi j f0 t),
    with a linear attack ramp, peak-normalized to 0.9.

    Harmonics at or above Nyquist are dropped with a warning.
    """
    if not f0_hz > 0.0:
        raise InvalidParameterError("f0_hz must be > 0")
    amps = np.asarray(harmonic_amps, dtype=float)
    decays = np.asarray(harmonic_decays_s, dtype=float)
    if amps.size != n_harmonics or decays.size != n_harmonics:
        raise InvalidParameterError("amps and decays must have length n_harmonics")
    n = int(round(duration_s * sample_rate))
    if n < 1:
        raise InvalidInputError("duration too short, no samples to synthesize")
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    dropped = []
    for j in range(1, n_harmonics + 1):
        if j * f0_hz >= sample_rate / 2.0:
            dropped.append(j)
            continue
        x += amps[j - 1] * np.exp(-t / decays[j - 1]) * np.sin(
            2.0 * math.pi * j * f0_hz * t
        )
    if dropped:
        warnings.warn(f"dropped harmonics {dropped} at or above Nyquist")
    if attack_s > 0.0:
        ramp = np.minimum(t / attack_s, 1.0)
        x *= ramp
    peak = np.abs(x).max()
    if peak > 0.0:
        x *= 0.9 / peak
    return AudioClip(samples=x, sample_rate=float(sample_rate))


def synth_mixture(
    notes: list[tuple[NoteSpec, float, float]],
    sample_rate: float,
    duration_s: float | None = None,
) -> tuple[AudioClip, GroundTruthRoll]:
    """Sample-accurate sum of note renderings placed at their onsets.

    ``notes`` is a list of (spec, onset_s, offset_s).  The mixture is
    renormalized to peak 0.9 and paired with its ground-truth roll.
    """
    if duration_s is None:
        duration_s = max(off for _, _, off in notes)
    for _, on, off in notes:
        if not on < off:
            raise InvalidParameterError("onset must precede offset")
        if off > duration_s + 1e-9:
            raise InvalidParameterError("note extends past requested duration")
    n = int(round(duration_s * sample_rate))
    mix = np.zeros(n)
    pitches: dict[str, float] = {}
    intervals: dict[str, list[tuple[float, float]]] = {}
    for spec, on, off in notes:
        clip = synth_note(
            spec.f0_hz,
            spec.n_harmonics,
            spec.harmonic_amps(),
            spec.harmonic_decays(),
            off - on,
            sample_rate,
            spec.attack_s,
        )
        i0 = int(round(on * sample_rate))
        seg = clip.samples[: n - i0]
        mix[i0 : i0 + seg.size] += seg
        pitches.setdefault(spec.label, spec.f0_hz)
        intervals.setdefault(spec.label, []).append((on, off))
    peak = np.abs(mix).max()
    if peak > 0.0:
        mix *= 0.9 / peak
    truth = GroundTruthRoll(
        pitches=sorted(pitches.items()),
        intervals={k: sorted(v) for k, v in intervals.items()},
    )
    return AudioClip(samples=mix, sample_rate=float(sample_rate)), truth


def seven_event_sequence(
    specs: list[NoteSpec],
    event_duration_s: float = 2.0,
    sample_rate: float = 16000.0,
) -> tuple[AudioClip, GroundTruthRoll]:
    """The three-pitch evaluation protocol: each pitch solo, then every pair,
    then all three together, in consecutive equal-length events."""
    if len(specs) != 3:
        raise InvalidParameterError("seven_event_sequence takes exactly 3 pitches")
    a, b, c = specs
    events = [[a], [b], [c], [a, b], [a, c], [b, c], [a, b, c]]
    notes = []
    for i, group in enumerate(events):
        on = i * event_duration_s
        for spec in group:
            notes.append((spec, on, on + event_duration_s))
    return synth_mixture(notes, sample_rate)


# ---------------------------------------------------------------------------
# ground-truth CSV: pitch_label, f0_hz, onset_s, offset_s
# ---------------------------------------------------------------------------

def save_truth_csv(path, truth: GroundTruthRoll) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pitch_label", "f0_hz", "onset_s", "offset_s"])
        f0 = dict(truth.pitches)
        for label in truth.labels:
            for on, off in truth.intervals[label]:
                writer.writerow([label, repr(f0[label]), repr(on), repr(off)])


def load_truth_csv(path) -> GroundTruthRoll:
    pitches: dict[str, float] = {}
    intervals: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "pitch_label" not in reader.fieldnames:
            raise FormatError(f"{path}: missing ground-truth header")
        for row in reader:
            label = row["pitch_label"]
            pitches.setdefault(label, float(row["f0_hz"]))
            intervals.setdefault(label, []).append(
                (float(row["onset_s"]), float(row["offset_s"]))
            )
    return GroundTruthRoll(
        pitches=sorted(pitches.items()),
        intervals={k: sorted(v) for k, v in intervals.items()},
    )
