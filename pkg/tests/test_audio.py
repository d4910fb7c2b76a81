"""Unit tests for WAV handling and harmonic synthesis."""

import numpy as np
import pytest

from msmgp.audio import (
    AudioClip,
    NoteSpec,
    load_truth_csv,
    load_wav,
    note_to_hz,
    save_truth_csv,
    save_wav,
    seven_event_sequence,
    synth_mixture,
    synth_note,
)
from msmgp.errors import FormatError, InvalidInputError, InvalidParameterError


def test_note_to_hz_reference_pitches():
    assert note_to_hz("A4") == pytest.approx(440.0)
    assert note_to_hz("C4") == pytest.approx(261.6256, rel=1e-5)
    assert note_to_hz("E4") == pytest.approx(329.6276, rel=1e-5)
    assert note_to_hz("A3") == pytest.approx(220.0)
    assert note_to_hz("c#2") == pytest.approx(note_to_hz("Db2"))


def test_note_to_hz_rejects_garbage():
    for bad in ("H4", "C", "4C", "C##4", ""):
        with pytest.raises(InvalidInputError):
            note_to_hz(bad)


def test_wav_round_trip_quantization(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.99, 0.99, 4000)
    clip = AudioClip(samples=x, sample_rate=16000.0)
    path = tmp_path / "a.wav"
    save_wav(path, clip)
    back = load_wav(path)
    assert back.sample_rate == 16000.0
    assert np.abs(back.samples - x).max() <= 1.0 / 32768.0


def test_wav_clips_out_of_range(tmp_path):
    clip = AudioClip(samples=np.array([1.5, -2.0, 1.0]), sample_rate=8000.0)
    path = tmp_path / "b.wav"
    save_wav(path, clip)
    back = load_wav(path)
    assert back.samples[0] == pytest.approx(32767.0 / 32768.0)
    assert back.samples[1] == pytest.approx(-1.0)


def test_load_wav_rejects_garbage(tmp_path):
    path = tmp_path / "c.wav"
    path.write_bytes(b"not a riff file at all")
    with pytest.raises(FormatError):
        load_wav(path)
    with pytest.raises(FileNotFoundError):
        load_wav(tmp_path / "missing.wav")


def test_synth_note_peak_and_harmonics():
    sr = 8000.0
    clip = synth_note(200.0, 2, np.array([1.0, 0.5]), np.array([4.0, 4.0]), 1.0, sr)
    assert np.abs(clip.samples).max() == pytest.approx(0.9)
    assert clip.duration == pytest.approx(1.0)
    spec = np.abs(np.fft.rfft(clip.samples))
    freqs = np.fft.rfftfreq(clip.samples.size, 1.0 / sr)
    top2 = freqs[np.argsort(spec)[-2:]]
    assert sorted(np.round(top2)) == [200.0, 400.0]


def test_synth_note_drops_nyquist_harmonics():
    with pytest.warns(UserWarning):
        clip = synth_note(
            3000.0, 2, np.array([1.0, 0.5]), np.array([1.0, 1.0]), 0.5, 8000.0
        )
    assert np.abs(clip.samples).max() > 0.0


def test_synth_mixture_truth_roll():
    a = NoteSpec(label="C4", f0_hz=note_to_hz("C4"), n_harmonics=2)
    b = NoteSpec(label="E4", f0_hz=note_to_hz("E4"), n_harmonics=2)
    mix, truth = synth_mixture([(a, 0.0, 1.0), (b, 0.5, 2.0)], 8000.0)
    assert mix.duration == pytest.approx(2.0)
    assert truth.labels == ["C4", "E4"]
    assert truth.intervals["E4"] == [(0.5, 2.0)]
    assert truth.duration() == pytest.approx(2.0)
    with pytest.raises(InvalidParameterError):
        synth_mixture([(a, 1.0, 1.0)], 8000.0)


def test_seven_event_sequence_protocol():
    specs = [
        NoteSpec(label=l, f0_hz=note_to_hz(l), n_harmonics=2)
        for l in ("C4", "E4", "G4")
    ]
    mix, truth = seven_event_sequence(specs, event_duration_s=0.25, sample_rate=8000.0)
    assert mix.duration == pytest.approx(7 * 0.25)
    # each pitch appears in 4 of the 7 events: solo, two pairs, triad
    for label in ("C4", "E4", "G4"):
        assert len(truth.intervals[label]) == 4
    with pytest.raises(InvalidParameterError):
        seven_event_sequence(specs[:2])


def test_truth_csv_round_trip(tmp_path):
    specs = [
        NoteSpec(label=l, f0_hz=note_to_hz(l), n_harmonics=2) for l in ("C4", "E4")
    ]
    _, truth = synth_mixture(
        [(specs[0], 0.0, 1.0), (specs[1], 0.25, 0.75)], 8000.0
    )
    path = tmp_path / "truth.csv"
    save_truth_csv(path, truth)
    back = load_truth_csv(path)
    assert back.labels == truth.labels
    assert back.intervals == truth.intervals
    assert dict(back.pitches)["E4"] == pytest.approx(note_to_hz("E4"))


def test_load_truth_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(FormatError):
        load_truth_csv(path)
