"""Full transcription of a two-pitch mixture into a piano-roll.

Learns C4 and E4 kernels from isolated training notes, runs the windowed
variational transcription on a mixture (each note solo, then both), and
scores the result against the known ground truth.

Run:  python3 demos/03_transcribe_mixture.py      (about half a minute)
"""

import os
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from msmgp import (
    NoteSpec,
    TranscribeConfig,
    frame_f_measure,
    learn_kernel,
    note_to_hz,
    synth_mixture,
    synth_note,
    transcribe,
)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

sr = 16000.0
specs = [
    NoteSpec(label=l, f0_hz=note_to_hz(l), n_harmonics=2, decays_s=(4.0, 4.0))
    for l in ("C4", "E4")
]

kernels = {}
for spec in specs:
    train = synth_note(
        spec.f0_hz, spec.n_harmonics, spec.harmonic_amps(),
        spec.harmonic_decays(), 2.0, sr, spec.attack_s,
    )
    kernels[spec.label] = learn_kernel(train, "fl", spec.label, n_harmonics=2)
    print(f"learned {spec.label}: "
          + ", ".join(f"{c.freq_hz:.1f} Hz" for c in kernels[spec.label].components))

c4, e4 = specs
mixture, truth = synth_mixture(
    [(c4, 0.0, 1.0), (e4, 1.25, 2.25), (c4, 2.5, 3.5), (e4, 2.5, 3.5)], sr
)

start = time.time()
roll, dec, trace = transcribe(mixture, kernels, mode="sig",
                              config=TranscribeConfig(seed=0))
print(f"transcribed {mixture.duration:.1f}s of audio "
      f"in {time.time() - start:.1f}s")

result = frame_f_measure(roll, truth)
print(f"precision {result.precision:.4f}  recall {result.recall:.4f}  "
      f"F {result.f_measure:.4f}")
for label, (p, r, f) in sorted(result.per_pitch.items()):
    print(f"  {label}: P={p:.4f} R={r:.4f} F={f:.4f}")

fig, axes = plt.subplots(2, 1, figsize=(9, 5), sharex=True)
for i, label in enumerate(dec.activation_labels):
    axes[0].plot(dec.times, dec.activations[i], lw=0.9, label=label)
axes[0].axhline(0.5, color="grey", lw=0.5)
axes[0].set_ylabel("activation")
axes[0].legend()
axes[1].imshow(
    roll.active, aspect="auto", interpolation="nearest", origin="lower",
    extent=[0, roll.n_frames * roll.frame_hop_s, -0.5, len(roll.pitch_labels) - 0.5],
    cmap="Greys",
)
axes[1].set_yticks(range(len(roll.pitch_labels)))
axes[1].set_yticklabels(roll.pitch_labels)
axes[1].set_xlabel("time [s]")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "03_transcription.png"), dpi=120)
print(f"wrote {OUT}/03_transcription.png")
