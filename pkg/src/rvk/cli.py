"""Command-line entry points.

Exit codes: 0 success, 2 invalid input, 3 training diverged.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import augment as aug
from . import pqmf, trainer
from .audio_io import read_wav, write_wav
from .dsp import SAMPLE_RATE
from .errors import InvalidInput, TrainingDiverged
from .nn import (Conv1d, Conv2d, ConvTranspose1d, Dropout, LeakyReLU,
                 ResidualStack, Tanh, grad_check)
from .pitch import F0Config, estimate_f0
from .tensorio import read_tensor, write_tensor


def _cmd_analyze(args):
    wav = read_wav(args.input, SAMPLE_RATE)
    contour = estimate_f0(wav, F0Config())
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(f"{prefix}.f0.rmtn", contour.values.astype(np.float32))
    with open(f"{prefix}.f0.csv", "w") as f:
        f.write("frame_index,f0_hz\n")
        for i, v in enumerate(contour.values):
            f.write(f"{i},{v:.4f}\n")
    voiced = int(np.sum(contour.values > 0))
    print(f"{contour.n_frames} frames, {voiced} voiced -> {prefix}.f0.rmtn, {prefix}.f0.csv")
    return 0


def _cmd_augment(args):
    wav = read_wav(args.input, SAMPLE_RATE)
    rng = np.random.default_rng(args.seed)
    policy = aug.AugmentPolicy("use_all" if args.method == "all" else args.method)
    params_list = aug.sample_params(policy, rng)
    overridden = []
    for p in params_list:
        if p.method == "hn":
            hn = aug.HnParams(alpha=args.alpha if args.alpha is not None else p.hn.alpha,
                              beta=args.beta if args.beta is not None else p.hn.beta)
            p = aug.AugmentParams("hn", hn=hn, seed=p.seed)
        elif p.method == "pn" and args.alpha is not None:
            p = aug.AugmentParams("pn", pn=aug.PnParams(alpha=args.alpha), seed=p.seed)
        overridden.append(p)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for p in overridden:
        out = aug.apply_augmentation(wav, p)
        path = f"{prefix}.{p.method}.wav"
        write_wav(path, out)
        lines.append(f"{p.method}: seed={p.seed} "
                     + {"hs": lambda: f"formant_ratio={p.hs.formant_ratio:.4f} "
                                      f"pitch_median={p.hs.pitch_median:.2f} "
                                      f"pitch_range_factor={p.hs.pitch_range_factor:.4f}",
                        "hn": lambda: f"alpha={p.hn.alpha:g} beta={p.hn.beta:g}",
                        "pn": lambda: f"alpha={p.pn.alpha:g}"}[p.method]())
        print(f"wrote {path}")
    Path(f"{prefix}.params.txt").write_text("\n".join(lines) + "\n")
    return 0


def _cmd_pqmf_check(args):
    wav = read_wav(args.input, SAMPLE_RATE)
    bank = pqmf.design_bank()
    snr = pqmf.roundtrip_snr(wav, bank)
    print(f"PQMF round-trip SNR: {snr:.2f} dB ({bank.n_bands} bands, "
          f"{bank.taps} taps)")
    return 0


def _cmd_train(args):
    cfg = trainer.parse_config_file(args.config)
    path = trainer.train(cfg)
    print(f"final checkpoint: {path}")
    return 0


def _cmd_copysyn(args):
    if args.input.endswith(".rmtn"):
        source = read_tensor(args.input)
    else:
        source = args.input
    out = trainer.copysyn(args.ckpt, source)
    write_wav(args.output, out)
    print(f"wrote {args.output} ({len(out)} samples)")
    return 0


def _cmd_eval(args):
    rows, skipped = trainer.evaluate(args.ref_dir, args.test_dir)
    for name in skipped:
        print(f"skipped (unpaired): {name}", file=sys.stderr)
    print("name,f0_rmse_hz,common_voiced_frames,stft_loss")
    for name, rmse, count, loss in rows:
        print(f"{name},{rmse:.4f},{count},{loss:.6f}")
    if rows:
        print(f"mean,{np.mean([r[1] for r in rows]):.4f},"
              f"{int(np.mean([r[2] for r in rows]))},"
              f"{np.mean([r[3] for r in rows]):.6f}")
    return 0


def _cmd_gradcheck(args):
    rng = np.random.default_rng(7)
    entries = 60 if args.quick else 200
    cases = [
        ("Conv1d", Conv1d(3, 4, 3, dilation=2, rng=rng, dtype=np.float64),
         rng.standard_normal((2, 3, 17))),
        ("ConvTranspose1d", ConvTranspose1d(3, 2, 4, rng=rng, dtype=np.float64),
         rng.standard_normal((2, 3, 9))),
        ("Conv2d", Conv2d(2, 3, 3, stride=(2, 1), rng=rng, dtype=np.float64),
         rng.standard_normal((1, 2, 12, 7))),
        ("LeakyReLU", LeakyReLU(), rng.standard_normal((2, 3, 11))),
        ("Tanh", Tanh(), rng.standard_normal((2, 3, 11))),
        ("Dropout(train)", Dropout(0.5), rng.standard_normal((2, 3, 11))),
        ("ResidualStack", ResidualStack(4, rng=rng, dtype=np.float64),
         rng.standard_normal((1, 4, 13))),
    ]
    ok = True
    for name, layer, x in cases:
        err = grad_check(layer, x, train=name.endswith("(train)"),
                         max_entries=entries)
        status = "PASS" if err < 1e-4 else "FAIL"
        ok &= err < 1e-4
        print(f"{status} {name:.<24s} max rel err {err:.3e}")
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="rvk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="extract an F0 contour to RMTN + CSV")
    p.add_argument("input")
    p.add_argument("out_prefix")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("augment", help="write augmented fake samples")
    p.add_argument("--method", choices=["hs", "hn", "pn", "all"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=None,
                   help="override the sampled alpha (hn/pn)")
    p.add_argument("--beta", type=float, default=None,
                   help="override the sampled beta (hn)")
    p.add_argument("input")
    p.add_argument("out_prefix")
    p.set_defaults(fn=_cmd_augment)

    p = sub.add_parser("pqmf-check", help="print filterbank round-trip SNR for a WAV")
    p.add_argument("input")
    p.set_defaults(fn=_cmd_pqmf_check)

    p = sub.add_parser("train", help="run a full training job")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("copysyn", help="re-synthesize a WAV or mel tensor")
    p.add_argument("--ckpt", required=True)
    p.add_argument("input", help="WAV file or RMTN mel tensor")
    p.add_argument("output")
    p.set_defaults(fn=_cmd_copysyn)

    p = sub.add_parser("eval", help="pairwise F0-RMSE / spectral loss report")
    p.add_argument("ref_dir")
    p.add_argument("test_dir")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer kind")
    p.add_argument("--quick", action="store_true")
    p.set_defaults(fn=_cmd_gradcheck)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
