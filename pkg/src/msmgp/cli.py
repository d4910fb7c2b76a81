"""Command-line interface.

Subcommands: ``learn`` (fit a pitch kernel from an isolated note),
``transcribe`` (mixture -> piano-roll), ``eval`` (frame F-measure),
``synth`` (generate synthetic fixtures).  Exit codes: 0 success, 2 config
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace


from . import audio, kernels, pipeline
from .errors import ConfigError, FormatError, InvalidInputError, NumericalError
from .kernels import TWO_PI
from .pipeline import TranscribeConfig
from .spectral_fit import magnitude_ft

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _plot_spectrum(path, spec, kernel):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(spec.freqs, spec.mags, lw=0.8, label="magnitude FT")
    dens = kernels.msm_spectral_density(kernel, TWO_PI * spec.freqs)
    scale = spec.mags.max() / dens.max() if dens.max() > 0 else 1.0
    ax.plot(spec.freqs, dens * scale, lw=0.8, label="fitted density (scaled)")
    ax.set_xlabel("frequency [Hz]")
    ax.set_xlim(0, min(spec.freqs[-1], 4000))
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_transcription(out_dir, dec, roll):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(9, 4))
    for i, label in enumerate(dec.activation_labels):
        ax.plot(dec.times, dec.activations[i], lw=0.9, label=label)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("activation")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "activations.png"), dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(9, 2 + 0.4 * len(roll.pitch_labels)))
    ax.imshow(
        roll.active,
        aspect="auto",
        interpolation="nearest",
        origin="lower",
        extent=[0, roll.n_frames * roll.frame_hop_s, -0.5, len(roll.pitch_labels) - 0.5],
        cmap="Greys",
    )
    ax.set_yticks(range(len(roll.pitch_labels)))
    ax.set_yticklabels(roll.pitch_labels)
    ax.set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "roll.png"), dpi=120)
    plt.close(fig)


def cmd_learn(args) -> int:
    clip = audio.load_wav(args.input)
    kernel = pipeline.learn_kernel(
        clip,
        mode=args.mode,
        pitch_label=args.pitch_label,
        n_harmonics=args.n_harmonics,
        peak_window_hz=args.peak_window_hz,
    )
    kernels.save_kernel(args.out, kernel, args.pitch_label)
    print(f"wrote {args.out} ({kernel.n_components} components)")
    if args.plot:
        _plot_spectrum(args.plot, magnitude_ft(clip.samples, clip.sample_rate), kernel)
        print(f"wrote {args.plot}")
    return EXIT_OK


def _load_kernel_dir(path) -> dict[str, kernels.MsmKernel]:
    out = {}
    if os.path.isfile(path):
        label, k = kernels.load_kernel(path)
        return {label: k}
    for name in sorted(os.listdir(path)):
        if name.endswith(".json"):
            label, k = kernels.load_kernel(os.path.join(path, name))
            out[label] = k
    if not out:
        raise ConfigError(f"no kernel JSON files found in {path}")
    return out


def _transcribe_config(args) -> TranscribeConfig:
    cfg = TranscribeConfig(threshold=args.threshold, seed=args.seed)
    if args.config:
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib

        with open(args.config, "rb") as fh:
            overrides = tomllib.load(fh)
        valid = {f.name for f in fields(TranscribeConfig)}
        unknown = set(overrides) - valid
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **overrides)
    return cfg


def cmd_transcribe(args) -> int:
    mixture = audio.load_wav(args.input)
    kernel_map = _load_kernel_dir(args.kernels)
    cfg = _transcribe_config(args)
    if args.mode == "sig-loo" and args.target_pitch is None:
        roll, decs = pipeline.transcribe_loo_all(mixture, kernel_map, cfg)
        dec = decs[sorted(decs)[0]]
        trace = []
    else:
        roll, dec, trace = pipeline.transcribe(
            mixture,
            kernel_map,
            mode=args.mode,
            target_pitch=args.target_pitch,
            config=cfg,
        )
    pipeline.save_roll_csv(args.out, roll)
    print(f"wrote {args.out} ({roll.n_frames} frames x {len(roll.pitch_labels)} pitches)")
    if args.trace and trace:
        with open(args.trace, "w") as fh:
            fh.write("iteration,expected_loglik,kl_f_total,kl_g_total,elbo\n")
            for i, b in enumerate(trace):
                fh.write(
                    f"{i},{b.expected_loglik!r},{b.kl_f_total!r},"
                    f"{b.kl_g_total!r},{b.elbo!r}\n"
                )
        print(f"wrote {args.trace}")
    if args.plot:
        os.makedirs(args.plot, exist_ok=True)
        _plot_transcription(args.plot, dec, roll)
        print(f"wrote plots to {args.plot}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = pipeline.load_roll_csv(args.pred)
    truth = audio.load_truth_csv(args.truth)
    result = pipeline.frame_f_measure(pred, truth)
    print(f"# protocol: frame_hop_s={pred.frame_hop_s:.6f}, frame-level cells")
    print(f"precision {result.precision:.4f}")
    print(f"recall    {result.recall:.4f}")
    print(f"f_measure {result.f_measure:.4f}")
    for label, (p, r, f) in sorted(result.per_pitch.items()):
        print(f"  {label}: P={p:.4f} R={r:.4f} F={f:.4f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    with open(args.spec) as fh:
        spec = json.load(fh)
    sr = float(spec.get("sample_rate", 16000.0))
    train_dur = float(spec.get("training_note_duration_s", 2.0))
    note_specs = {}
    for p in spec["pitches"]:
        label = p["label"]
        note_specs[label] = audio.NoteSpec(
            label=label,
            f0_hz=float(p.get("f0_hz", audio.note_to_hz(label))),
            n_harmonics=int(p.get("n_harmonics", 10)),
        )
    os.makedirs(args.out, exist_ok=True)
    for label, ns in note_specs.items():
        clip = audio.synth_note(
            ns.f0_hz, ns.n_harmonics, ns.harmonic_amps(), ns.harmonic_decays(),
            train_dur, sr, ns.attack_s,
        )
        path = os.path.join(args.out, f"train_{label}.wav")
        audio.save_wav(path, clip)
        print(f"wrote {path}")
    events = spec.get("events")
    if events is None:
        if len(note_specs) != 3:
            raise ConfigError("default event sequence needs exactly 3 pitches")
        mixture, truth = audio.seven_event_sequence(
            list(note_specs.values()), event_duration_s=train_dur, sample_rate=sr
        )
    else:
        notes = [
            (note_specs[lab], float(ev["onset_s"]), float(ev["offset_s"]))
            for ev in events
            for lab in ev["pitches"]
        ]
        mixture, truth = audio.synth_mixture(notes, sr)
    mix_path = os.path.join(args.out, "mixture.wav")
    truth_path = os.path.join(args.out, "truth.csv")
    audio.save_wav(mix_path, mixture)
    audio.save_truth_csv(truth_path, truth)
    print(f"wrote {mix_path}")
    print(f"wrote {truth_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msmgp", description="Harmonic-GP polyphonic pitch detection"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="fit a pitch kernel from an isolated note")
    p.add_argument("--input", required=True, help="training note WAV")
    p.add_argument("--pitch-label", required=True)
    p.add_argument("--n-harmonics", type=int, default=10)
    p.add_argument("--mode", choices=pipeline.MODES, default="fl")
    p.add_argument("--out", required=True, help="output kernel JSON")
    p.add_argument("--peak-window-hz", type=float, default=40.0)
    p.add_argument("--plot", help="optional spectrum/density overlay PNG")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("transcribe", help="mixture WAV -> piano-roll CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--kernels", required=True, help="kernel JSON file or directory")
    p.add_argument("--mode", choices=sorted(pipeline.MODEL_KINDS), default="sig")
    p.add_argument("--target-pitch", help="target pitch for sig-loo mode")
    p.add_argument("--out", required=True, help="output roll CSV")
    p.add_argument("--trace", help="optional ELBO trace CSV")
    p.add_argument("--plot", help="optional output directory for PNG plots")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="TOML file overriding TranscribeConfig fields")
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("eval", help="score a predicted roll against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic fixture audio")
    p.add_argument("--spec", required=True, help="fixture description JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
