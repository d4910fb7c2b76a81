"""End-to-end transcription orchestration and evaluation metrics.

Learning modes for the per-pitch kernels:

* ``fl`` -- frequency-domain Lorentzian fitting of a training note,
* ``tm`` -- manual harmonic initialization,
* ``ml`` -- manual initialization refined by exact-GP marginal likelihood
  on a short snippet.

Transcription fits the chosen mixture model window by window over the
recording (each window is an independent variational fit), samples the
activation curves at frame centers, and thresholds them into a piano-roll.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .audio import AudioClip, GroundTruthRoll, note_to_hz
from .errors import ConfigError, InvalidInputError, InvalidParameterError
from .kernels import MsmKernel
from .models import (
    McConfig,
    ModelSpec,
    SIGMOID,
    SIGMOID_LOO,
    SOFTMAX,
    SourceDecomposition,
    build_loo_spec,
    decompose,
    default_activation_kernel,
    make_model,
)
from .spectral_fit import (
    fit_msm_frequency_domain,
    init_manual,
    magnitude_ft,
    refine_marginal_likelihood,
)
from .vgp import ElboBreakdown, FitConfig, fit

MODES = ("fl", "tm", "ml")
MODEL_KINDS = {"sig": SIGMOID, "sof": SOFTMAX, "sig-loo": SIGMOID_LOO}


@dataclass
class PianoRoll:
    pitch_labels: list[str]
    frame_hop_s: float
    active: np.ndarray           # bool, (n_pitches, n_frames)
    start_time_s: float = 0.0

    @property
    def n_frames(self) -> int:
        return self.active.shape[1]

    def frame_times(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.n_frames) * self.frame_hop_s


@dataclass
class EvalResult:
    precision: float
    recall: float
    f_measure: float
    per_pitch: dict[str, tuple[float, float, float]] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# kernel learning (TM / ML / FL)
# ---------------------------------------------------------------------------

def learn_kernel(
    clip: AudioClip,
    mode: str,
    pitch_label: str,
    n_harmonics: int = 10,
    peak_window_hz: float = 40.0,
    f0_hz: float | None = None,
    tm_variance: float | None = None,
    tm_lengthscale_s: float = 0.5,
    ml_max_iters: int = 50,
    ml_max_samples: int = 2048,
) -> MsmKernel:
    """Learn one pitch's harmonic kernel from an isolated-note clip."""
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "fl":
        spec = magnitude_ft(clip.samples, clip.sample_rate)
        report = fit_msm_frequency_domain(spec, n_harmonics, peak_window_hz)
        if report.kernel is None:
            raise InvalidInputError(
                f"no resolvable spectral peaks in training clip for {pitch_label}"
            )
        return report.kernel
    if f0_hz is None:
        f0_hz = note_to_hz(pitch_label)
    k0 = init_manual(f0_hz, n_harmonics, tm_variance, tm_lengthscale_s)
    if mode == "tm":
        return k0
    # ml: exact-GP refinement on a cubic-cost-bounded snippet
    n = min(clip.samples.size, ml_max_samples)
    times = np.arange(n) / clip.sample_rate
    return refine_marginal_likelihood(
        k0, clip.samples[:n], times, max_iters=ml_max_iters
    ).kernel


# ---------------------------------------------------------------------------
# piano-roll extraction and scoring
# ---------------------------------------------------------------------------

def extract_roll(
    dec: SourceDecomposition, threshold: float, frame_hop_s: float
) -> PianoRoll:
    """Threshold mean per-frame activations into a boolean roll.

    A frame is active only on strict inequality (activation > threshold);
    the softmax silence row is excluded.
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidParameterError("threshold must be in (0, 1)")
    t = dec.times
    duration = float(t.max()) + frame_hop_s / 2.0 if t.size else 0.0
    n_frames = max(int(math.ceil(duration / frame_hop_s)), 1)
    frame_idx = np.minimum((t / frame_hop_s).astype(int), n_frames - 1)
    labels = dec.labels
    active = np.zeros((len(labels), n_frames), dtype=bool)
    for i in range(len(labels)):
        phi = dec.activations[i]
        sums = np.bincount(frame_idx, weights=phi, minlength=n_frames)
        counts = np.bincount(frame_idx, minlength=n_frames)
        seen = counts > 0
        means = np.zeros(n_frames)
        means[seen] = sums[seen] / counts[seen]
        active[i] = means > threshold
    return PianoRoll(pitch_labels=list(labels), frame_hop_s=frame_hop_s, active=active)


def discretize_truth(
    truth: GroundTruthRoll, frame_hop_s: float, n_frames: int, labels: list[str]
) -> np.ndarray:
    """Boolean truth matrix at a frame hop: a frame is active when its center
    falls inside a note interval."""
    centers = (np.arange(n_frames) + 0.5) * frame_hop_s
    out = np.zeros((len(labels), n_frames), dtype=bool)
    for i, label in enumerate(labels):
        for on, off in truth.intervals.get(label, []):
            out[i] |= (centers >= on) & (centers < off)
    return out


def frame_f_measure(pred: PianoRoll, truth: GroundTruthRoll) -> EvalResult:
    """Frame-level precision / recall / F over all (pitch, frame) cells."""
    if set(pred.pitch_labels) != set(truth.labels):
        raise InvalidInputError(
            f"pitch label mismatch: predicted {sorted(pred.pitch_labels)} "
            f"vs truth {sorted(truth.labels)}"
        )
    truth_mat = discretize_truth(
        truth, pred.frame_hop_s, pred.n_frames, pred.pitch_labels
    )

    def prf(p, t):
        tp = int((p & t).sum())
        fp = int((p & ~t).sum())
        fn = int((~p & t).sum())
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        return prec, rec, f

    per_pitch = {
        label: prf(pred.active[i], truth_mat[i])
        for i, label in enumerate(pred.pitch_labels)
    }
    prec, rec, f = prf(pred.active, truth_mat)
    return EvalResult(precision=prec, recall=rec, f_measure=f, per_pitch=per_pitch)


# ---------------------------------------------------------------------------
# transcription
# ---------------------------------------------------------------------------

@dataclass
class TranscribeConfig:
    window_s: float = 0.25
    max_points_per_window: int = 400
    frame_hop_s: float = 0.01
    threshold: float = 0.5
    seed: int = 0
    max_iters: int = 40
    learning_rate: float = 0.05
    quad_order: int = 20
    noise_var_rel: float = 1e-3
    activation_lengthscale_s: float = 0.5
    activation_variance: float = 10.0
    n_inducing_g: int = 8
    mc_samples: int = 500
    normalize_kernel_power: bool = True


def _window_fit_config(cfg: TranscribeConfig, noise_var: float, seed: int) -> FitConfig:
    return FitConfig(
        max_iters=cfg.max_iters,
        learning_rate=cfg.learning_rate,
        quad_order=cfg.quad_order,
        seed=seed,
        noise_var=noise_var,
        optimizer="adam",
        n_inducing_g=cfg.n_inducing_g,
        mc=McConfig(n_samples=cfg.mc_samples, seed=seed),
    )


def _build_model(
    kernels: dict[str, MsmKernel],
    kind: str,
    target_pitch: str | None,
    activation_kernel: MsmKernel,
) -> ModelSpec:
    labels = sorted(kernels)
    if kind == SIGMOID_LOO:
        if target_pitch is None:
            raise ConfigError("sig-loo mode needs a target pitch")
        if target_pitch not in kernels:
            raise ConfigError(f"no kernel for target pitch {target_pitch!r}")
        others = [kernels[l] for l in labels if l != target_pitch]
        return build_loo_spec(
            kernels[target_pitch], others, target_label=target_pitch,
            activation_kernel=activation_kernel,
        )
    return make_model(kind, [kernels[l] for l in labels], labels, activation_kernel)


def transcribe(
    mixture: AudioClip,
    kernels: dict[str, MsmKernel],
    mode: str = "sig",
    target_pitch: str | None = None,
    config: TranscribeConfig = TranscribeConfig(),
) -> tuple[PianoRoll, SourceDecomposition, list[ElboBreakdown]]:
    """Transcribe a mixture into per-pitch activations and a piano-roll.

    The recording is split into windows; each window gets an independent
    variational fit (inducing points for the component processes sit on the
    strided data grid so harmonic content is representable).  Activations
    are evaluated at frame centers and concatenated across windows.
    ``sig-loo`` mode transcribes only the target pitch; call once per pitch
    to assemble a full roll.
    """
    kind = MODEL_KINDS.get(mode)
    if kind is None:
        raise ConfigError(f"mode must be one of {sorted(MODEL_KINDS)}, got {mode!r}")
    if not kernels:
        raise ConfigError("no kernels given")

    y_all = mixture.samples
    sr = mixture.sample_rate
    power = float(np.mean(y_all**2))
    if power == 0.0:
        power = 1.0
    use_kernels = kernels
    if config.normalize_kernel_power:
        # FT magnitudes scale with training duration; rescale each kernel so
        # the component prior power matches the mixture power
        use_kernels = {
            l: k.scaled(power / k.total_variance) for l, k in kernels.items()
        }
    act_kernel = default_activation_kernel(
        config.activation_lengthscale_s, config.activation_variance
    )
    model = _build_model(use_kernels, kind, target_pitch, act_kernel)
    noise_var = max(config.noise_var_rel * power, 1e-10)

    n = y_all.size
    win = max(int(round(config.window_s * sr)), 1)
    n_windows = max(int(math.ceil(n / win)), 1)
    stride = max(int(math.ceil(win / config.max_points_per_window)), 1)

    all_times: list[np.ndarray] = []
    all_phi: list[np.ndarray] = []
    trace: list[ElboBreakdown] = []
    comp_moms = None
    act_moms = None
    for w in range(n_windows):
        i0, i1 = w * win, min((w + 1) * win, n)
        idx = np.arange(i0, i1, stride)
        if idx.size < 2:
            continue
        times = idx / sr
        y = y_all[idx]
        cfg = _window_fit_config(config, noise_var, config.seed + w)
        cfg = replace(cfg, inducing_f=times)
        state, tr = fit(model, (times, y), cfg)
        trace.extend(tr)
        # evaluate activations at the frame centers inside this window
        t_lo, t_hi = i0 / sr, i1 / sr
        k0 = int(math.floor(t_lo / config.frame_hop_s))
        k1 = int(math.ceil(t_hi / config.frame_hop_s))
        centers = (np.arange(k0, k1) + 0.5) * config.frame_hop_s
        centers = centers[(centers >= t_lo) & (centers < t_hi)]
        if centers.size == 0:
            continue
        dec_w = decompose(model, state, centers)
        all_times.append(centers)
        all_phi.append(dec_w.activations)
        comp_moms = dec_w.component_moments
        act_moms = dec_w.activation_moments

    times_cat = np.concatenate(all_times)
    phi_cat = np.concatenate(all_phi, axis=1)
    if kind == SIGMOID_LOO:
        # report only the target pitch row
        labels = [target_pitch]
        phi_rows = phi_cat[:1]
        act_labels = [target_pitch]
    else:
        labels = sorted(use_kernels)
        phi_rows = phi_cat[: len(labels)]
        act_labels = labels + (["<silence>"] if kind == SOFTMAX else [])
        if kind == SOFTMAX:
            phi_rows = phi_cat
    dec = SourceDecomposition(
        times=times_cat,
        labels=labels,
        activations=phi_rows,
        activation_labels=act_labels,
        component_moments=comp_moms or [],
        activation_moments=act_moms or [],
    )
    roll = extract_roll(dec, config.threshold, config.frame_hop_s)
    return roll, dec, trace


def transcribe_loo_all(
    mixture: AudioClip,
    kernels: dict[str, MsmKernel],
    config: TranscribeConfig = TranscribeConfig(),
) -> tuple[PianoRoll, dict[str, SourceDecomposition]]:
    """Run leave-one-out transcription once per pitch and stack the rows."""
    labels = sorted(kernels)
    rows = []
    decs = {}
    n_frames = 0
    for label in labels:
        roll, dec, _ = transcribe(
            mixture, kernels, mode="sig-loo", target_pitch=label, config=config
        )
        rows.append(roll.active[0])
        decs[label] = dec
        n_frames = max(n_frames, roll.n_frames)
    active = np.zeros((len(labels), n_frames), dtype=bool)
    for i, row in enumerate(rows):
        active[i, : row.size] = row
    return (
        PianoRoll(pitch_labels=labels, frame_hop_s=config.frame_hop_s, active=active),
        decs,
    )


# ---------------------------------------------------------------------------
# roll CSV: header = time_s + pitch labels; one 0/1 row per frame
# ---------------------------------------------------------------------------

def save_roll_csv(path, roll: PianoRoll) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s"] + list(roll.pitch_labels))
        for j, t in enumerate(roll.frame_times()):
            writer.writerow([f"{t:.6f}"] + [int(v) for v in roll.active[:, j]])


def load_roll_csv(path) -> PianoRoll:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "time_s":
            raise InvalidInputError(f"{path}: not a piano-roll CSV")
        labels = header[1:]
        times = []
        rows = []
        for row in reader:
            times.append(float(row[0]))
            rows.append([bool(int(v)) for v in row[1:]])
    if len(times) < 1:
        raise InvalidInputError(f"{path}: empty piano-roll")
    hop = times[1] - times[0] if len(times) > 1 else 0.01
    return PianoRoll(
        pitch_labels=labels,
        frame_hop_s=hop,
        active=np.array(rows, dtype=bool).T,
        start_time_s=times[0],
    )
