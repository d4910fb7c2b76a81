"""Learn a harmonic kernel from one isolated note, in the frequency domain.

Synthesizes a C4 guitar-like tone, takes its magnitude Fourier transform,
greedily fits one Lorentzian per partial, and overlays the fitted spectral
density on the measured spectrum.  The resulting kernel is saved as JSON.

Run:  python3 demos/01_learn_kernel_from_note.py
Outputs land in demos/output/.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from msmgp import (
    NoteSpec,
    fit_msm_frequency_domain,
    magnitude_ft,
    msm_spectral_density,
    note_to_hz,
    save_kernel,
    synth_note,
)
from msmgp.kernels import TWO_PI

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

sr = 16000.0
spec = NoteSpec(label="C4", f0_hz=note_to_hz("C4"), n_harmonics=6)
clip = synth_note(
    spec.f0_hz, spec.n_harmonics, spec.harmonic_amps(), spec.harmonic_decays(),
    2.0, sr, spec.attack_s,
)

ft = magnitude_ft(clip.samples, clip.sample_rate)
report = fit_msm_frequency_domain(ft, n_harmonics=6)
kernel = report.kernel

print(f"fitted {report.n_fitted}/{report.n_requested} partials")
for c in kernel.components:
    print(
        f"  partial at {c.freq_hz:8.2f} Hz   variance {c.variance:.4g}   "
        f"lengthscale {c.lengthscale * 1e3:.1f} ms"
    )
print("residual l2 per peak:", [f"{r:.3f}" for r in report.residual_l2])

save_kernel(os.path.join(OUT, "C4_kernel.json"), kernel, "C4")

dens = msm_spectral_density(kernel, TWO_PI * ft.freqs)
fig, ax = plt.subplots(figsize=(9, 4))
ax.plot(ft.freqs, ft.mags, lw=0.8, label="magnitude FT of the note")
ax.plot(ft.freqs, dens * ft.mags.max() / dens.max(), lw=0.8,
        label="fitted spectral density (scaled)")
ax.set_xlim(0, 2000)
ax.set_xlabel("frequency [Hz]")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(OUT, "01_spectrum_fit.png"), dpi=120)
print(f"wrote {OUT}/C4_kernel.json and {OUT}/01_spectrum_fit.png")
