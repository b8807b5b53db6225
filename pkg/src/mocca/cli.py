"""Command-line front end: simulate, calibrate, reconstruct, smooth, metrics, pipeline.

Reports are ``key = value`` text lines.  Exit codes: 0 success, 2 usage
error, 3 file format or ACS coverage error, 4 numerical failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .calibration import CalibrationConfig, calibrate
from .errors import FormatError, NumericalError
from .io import (
    STACK_MAGIC,
    decode_pgm,
    decode_stack,
    read_mask,
    read_stack,
    write_mask,
    write_pgm,
    write_stack,
)
from .metrics import quality_report
from .phantom import PhantomSpec, simulate
from .reconstruct import ReconConfig, finalize_sos, reconstruct
from .smoothing import LAMBDA_PRESETS, SmoothingConfig, smooth_step

__all__ = ["main", "build_parser", "run_pipeline"]

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("mocca")


class UsageError(Exception):
    pass


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(_fmt(float(v)) for v in value)
    return str(value)


def _write_report(path, items):
    text = "".join(f"{k} = {_fmt(v)}\n" for k, v in items)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read_image(path):
    """Real image from a graymap or a single-coil image-domain stack file."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    if data.startswith(STACK_MAGIC.encode()):
        stack, _ = decode_stack(data)
        if stack.shape[0] != 1:
            raise FormatError(f"{path}: expected a single image, found {stack.shape[0]} coils")
        return np.abs(stack[0])
    return decode_pgm(data)


def _num_singular(text):
    if text == "auto":
        return None
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a positive integer, got {text!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError("number of singular vectors must be positive")
    return k


def cmd_simulate(args):
    spec = PhantomSpec(
        N=args.n,
        num_coils=args.coils,
        L=args.support_l,
        seed=args.seed,
        magnetization_kind=args.magnetization,
        noise_level=args.noise,
    )
    masked, pattern, truth, *_ = simulate(spec, args.pattern, args.acs_m)
    write_stack(args.out_kspace, masked)
    write_pgm(args.out_truth, truth)
    if args.out_mask:
        write_mask(args.out_mask, pattern, args.acs_m, args.support_l)
    log.info("simulated N=%d coils=%d pattern=%s R=%.3f", args.n, args.coils,
             pattern.descriptor, pattern.reduction_rate)


def cmd_calibrate(args):
    stack, domain = read_stack(args.kspace)
    if domain != "kspace":
        raise FormatError(f"{args.kspace} holds {domain} data, expected kspace")
    cfg = CalibrationConfig(
        L=args.support_l,
        M=args.acs_m,
        num_singular_vectors=args.num_singular,
        d_threshold=args.d_threshold,
        method=args.method,
    )
    mask = read_mask(args.mask)[0].mask if args.mask else None
    res = calibrate(stack, cfg, mask)
    write_stack(args.out_sens, res.sensitivities.normalized, domain="image")
    sv = res.singular_values
    _write_report(args.report, [
        ("coils", stack.shape[0]),
        ("n", stack.shape[-1]),
        ("support_l", cfg.L),
        ("acs_m", cfg.M),
        ("method", cfg.method),
        ("num_singular_used", res.num_singular_used),
        ("d_threshold", float(res.sensitivities.threshold)),
        ("d_min", float(res.sensitivities.d.min())),
        ("d_max", float(res.sensitivities.d.max())),
        ("sigma_max", float(sv.max()) if sv.size else 0.0),
        ("singular_values", sv),
    ])


def cmd_reconstruct(args):
    stack, domain = read_stack(args.kspace)
    if domain != "kspace":
        raise FormatError(f"{args.kspace} holds {domain} data, expected kspace")
    pattern, _, _ = read_mask(args.mask)
    sens, sdomain = read_stack(args.sens)
    if sdomain != "image":
        raise FormatError(f"{args.sens} holds {sdomain} data, expected image-domain maps")
    if sens.shape != stack.shape:
        raise FormatError(f"sensitivity shape {sens.shape} does not match k-space {stack.shape}")
    if pattern.n != stack.shape[-1]:
        raise FormatError(f"mask size {pattern.n} does not match k-space size {stack.shape[-1]}")
    cfg = ReconConfig(beta=args.beta, tol=args.tol, max_iter=args.max_iter,
                      solver=args.solver, singular=args.singular)
    res = reconstruct(stack * pattern.mask, pattern, sens, cfg)
    image, _ = finalize_sos(res.image, sens)
    write_pgm(args.out_image, image)
    if args.out_complex:
        write_stack(args.out_complex, res.image, domain="image")
    items = [
        ("solver", res.solver),
        ("pattern", pattern.descriptor),
        ("beta", float(cfg.beta)),
        ("iterations", res.iterations),
        ("converged", res.converged),
        ("residuals", res.residuals),
    ]
    if res.diagnostic is not None:
        items += [(f"diagnostic_{k}", v) for k, v in res.diagnostic.items()]
    _write_report(args.report, items)


def cmd_smooth(args):
    image = _read_image(args.image)
    norm = np.linalg.norm(image)
    if norm == 0:
        raise NumericalError("cannot smooth an all-zero image")
    lam = args.lam
    if lam is None:
        lam = LAMBDA_PRESETS.get(args.preset) if args.preset else SmoothingConfig().lam
        if lam is None:
            raise UsageError(f"unknown lambda preset {args.preset!r}")
    cfg = SmoothingConfig(lam=lam, steps=args.steps, literal_weights=args.literal_weights)
    # presets are tuned for unit-norm images
    out = smooth_step(image / norm, cfg)
    write_pgm(args.out_image, out)


def cmd_metrics(args):
    ref = _read_image(args.reference)
    test = _read_image(args.test)
    rep = quality_report(ref, test, clip=args.clip)
    _write_report(args.report, [("psnr", rep.psnr), ("ssim", rep.ssim),
                                ("max_rel_err", rep.max_rel_err)])
    if args.out_error_map:
        write_pgm(args.out_error_map, rep.error_map, peak=args.clip)


_STAGE_DEFAULTS = {
    "simulate": {"n": 32, "coils": 4, "support_l": 3, "seed": 0, "pattern": "cols:2",
                 "acs_m": 8, "noise": 0.0, "magnetization": "piecewise"},
    "calibrate": {"num_singular": "auto", "d_threshold": None, "method": "svd"},
    "reconstruct": {"solver": "auto", "beta": 1e-3, "max_iter": 200, "tol": 1e-9,
                    "singular": "pinv"},
    "smooth": {"lambda": None, "preset": None, "steps": 1, "literal_weights": False},
    "metrics": {"clip": 0.12},
}


def _stage(config, name):
    section = config.get(name, {})
    if not isinstance(section, dict):
        raise UsageError(f"config section {name!r} must be an object")
    unknown = set(section) - set(_STAGE_DEFAULTS[name])
    if unknown:
        raise UsageError(f"unknown keys in {name!r}: {', '.join(sorted(unknown))}")
    return {**_STAGE_DEFAULTS[name], **section}


def run_pipeline(config, base=Path(".")):
    """Run all stages from a config dict; files go to ``config["output_dir"]``."""
    unknown = set(config) - {"output_dir", *_STAGE_DEFAULTS}
    if unknown:
        raise UsageError(f"unknown config sections: {', '.join(sorted(unknown))}")
    out = base / config.get("output_dir", "mocca_out")
    out.mkdir(parents=True, exist_ok=True)
    sim = _stage(config, "simulate")
    cal = _stage(config, "calibrate")
    rec = _stage(config, "reconstruct")
    smo = _stage(config, "smooth")
    met = _stage(config, "metrics")
    ns = argparse.Namespace
    files = {k: out / v for k, v in {
        "kspace": "kspace.ksp", "mask": "mask.msk", "truth": "truth.pgm", "sens": "sens.ksp",
        "image": "recon.pgm", "complex": "recon.ksp", "smooth": "smooth.pgm",
        "err": "error_recon.pgm", "err_s": "error_smooth.pgm",
    }.items()}
    cmd_simulate(ns(out_kspace=files["kspace"], out_truth=files["truth"], out_mask=files["mask"], **sim))
    cmd_calibrate(ns(kspace=files["kspace"], mask=files["mask"], acs_m=sim["acs_m"], support_l=sim["support_l"],
                     num_singular=_num_singular(str(cal["num_singular"])),
                     d_threshold=cal["d_threshold"], method=cal["method"],
                     out_sens=files["sens"], report=out / "calibrate.txt"))
    cmd_reconstruct(ns(kspace=files["kspace"], mask=files["mask"], sens=files["sens"],
                       out_image=files["image"], out_complex=files["complex"],
                       report=out / "reconstruct.txt", **rec))
    preset = smo["preset"] or (sim["pattern"] if sim["pattern"] in LAMBDA_PRESETS else None)
    cmd_smooth(ns(image=files["image"], lam=smo["lambda"], preset=preset if smo["lambda"] is None else None,
                  steps=smo["steps"], literal_weights=smo["literal_weights"], out_image=files["smooth"]))
    cmd_metrics(ns(reference=files["truth"], test=files["image"], clip=met["clip"],
                   report=out / "metrics.txt", out_error_map=files["err"]))
    cmd_metrics(ns(reference=files["truth"], test=files["smooth"], clip=met["clip"],
                   report=out / "metrics_smooth.txt", out_error_map=files["err_s"]))
    return out


def cmd_pipeline(args):
    try:
        config = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise FormatError(f"cannot read {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{args.config} is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise FormatError("pipeline config must be a JSON object")
    run_pipeline(config, Path(args.config).resolve().parent)


def build_parser():
    p = argparse.ArgumentParser(prog="mocca", description="Parallel MRI reconstruction with calibrated coil sensitivities.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="phantom, mask, masked k-space and ground truth")
    s.add_argument("--n", type=int, default=32)
    s.add_argument("--coils", type=int, default=4)
    s.add_argument("--support-l", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pattern", default="cols:2")
    s.add_argument("--acs-m", type=int, default=8)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--magnetization", choices=["piecewise", "dense_random", "sparse"], default="piecewise")
    s.add_argument("--out-kspace", required=True)
    s.add_argument("--out-truth", required=True)
    s.add_argument("--out-mask")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="sensitivity maps from the ACS block")
    c.add_argument("--kspace", required=True)
    c.add_argument("--mask", help="acquisition mask; default: nonzero samples")
    c.add_argument("--acs-m", type=int, default=20)
    c.add_argument("--support-l", type=int, default=5)
    c.add_argument("--num-singular", type=_num_singular, default=None)
    c.add_argument("--d-threshold", type=float)
    c.add_argument("--method", choices=["svd", "inverse_power"], default="svd")
    c.add_argument("--out-sens", required=True)
    c.add_argument("--report")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("reconstruct", help="image from undersampled k-space and sensitivities")
    r.add_argument("--kspace", required=True)
    r.add_argument("--mask", required=True)
    r.add_argument("--sens", required=True)
    r.add_argument("--solver", choices=["auto", "iterative", "direct"], default="auto")
    r.add_argument("--beta", type=float, default=1e-3)
    r.add_argument("--max-iter", type=int, default=200)
    r.add_argument("--tol", type=float, default=1e-9)
    r.add_argument("--singular", choices=["pinv", "raise"], default="pinv")
    r.add_argument("--out-image", required=True)
    r.add_argument("--out-complex")
    r.add_argument("--report")
    r.set_defaults(func=cmd_reconstruct)

    m = sub.add_parser("smooth", help="one or more Perona-Malik smoothing steps")
    m.add_argument("--image", required=True)
    m.add_argument("--lambda", dest="lam", type=float)
    m.add_argument("--preset", help="pattern descriptor selecting a lambda preset")
    m.add_argument("--steps", type=int, default=1)
    m.add_argument("--literal-weights", action="store_true")
    m.add_argument("--out-image", required=True)
    m.set_defaults(func=cmd_smooth)

    q = sub.add_parser("metrics", help="PSNR, SSIM and relative error against a reference")
    q.add_argument("--reference", required=True)
    q.add_argument("--test", required=True)
    q.add_argument("--clip", type=float, default=0.12)
    q.add_argument("--report")
    q.add_argument("--out-error-map")
    q.set_defaults(func=cmd_metrics)

    pl = sub.add_parser("pipeline", help="run all stages from a JSON config")
    pl.add_argument("--config", required=True)
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except FormatError as exc:
        print(f"mocca: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"mocca: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, ValueError, TypeError) as exc:
        print(f"mocca: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
