"""Compare the three mixture models on one short two-pitch segment.

The sigmoid model treats each pitch activation independently; the softmax
model couples them through a shared normalization with an explicit silence
slot; the leave-one-out model transcribes one target pitch against the
merged spectrum of everything else.

Run:  python3 demos/04_model_variants.py      (a few minutes; softmax is
the slow one because its expectation is Monte Carlo)
"""

import time

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
    transcribe_loo_all,
)

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

c4, e4 = specs
mixture, truth = synth_mixture([(c4, 0.0, 1.0), (e4, 0.5, 1.5)], sr)
config = TranscribeConfig(seed=0, max_iters=25, mc_samples=200)

for mode in ("sig", "sof"):
    start = time.time()
    roll, dec, _ = transcribe(mixture, kernels, mode=mode, config=config)
    f = frame_f_measure(roll, truth).f_measure
    print(f"{mode:8s}  F = {f:.4f}   ({time.time() - start:.1f}s)")
    if mode == "sof":
        sums = dec.activations.sum(axis=0)
        print(f"          softmax activations sum to 1 "
              f"(max deviation {np.abs(sums - 1).max():.2e})")

start = time.time()
roll, _ = transcribe_loo_all(mixture, kernels, config)
f = frame_f_measure(roll, truth).f_measure
print(f"sig-loo   F = {f:.4f}   ({time.time() - start:.1f}s)")
