"""Command-line interface.

Subcommands: ``phantom``, ``angles``, ``simulate``, ``reconstruct``,
``evaluate``, ``experiment``.  Solver settings may come from a flat
``key = value`` config file; explicit flags override file values.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .adsir import AdsirConfig, adsir
from .experiment import ExperimentPlan, format_report, report, run_experiment
from .fileio import (
    read_image,
    read_sinogram,
    write_image,
    write_pgm,
    write_sinogram,
    write_trace_csv,
)
from .geometry import (
    SamplingMode,
    AngleSet,
    ea_angles,
    es_angles,
    read_angles,
    write_angles,
)
from .metrics import rmse, ssim
from .phantom import (
    NoiseSpec,
    default_phantom,
    make_atom_phantom,
    read_atoms,
    simulate,
)
from .projector import ImageGrid, default_n_bins
from .sart import SartConfig, circle_support, os_sart

log = logging.getLogger(__name__)


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip()] = value.strip()
    return values


def _config_value(args, config: dict[str, str], name: str, cast, default):
    """Flag beats config file beats default."""
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if name in config:
        return cast(config[name])
    return default


def _add_phantom(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("phantom", help="generate a test object raster")
    p.add_argument("--seed", type=int, default=0, help="seed for the default object")
    p.add_argument("--atoms", help="atom spec file (x y amplitude sigma per line)")
    p.add_argument("--height", type=int, default=121)
    p.add_argument("--width", type=int, default=121)
    p.add_argument("--pixel-size", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output raster path")
    p.add_argument("--pgm", help="also export an 8-bit PGM")
    p.add_argument("--window", type=float, nargs=2, default=(0.0, 1.0e5),
                   help="display window for the PGM export")


def _add_angles(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("angles", help="generate an acquisition angle file")
    p.add_argument("--mode", choices=("ea", "es"), required=True)
    p.add_argument("--n", type=int, required=True,
                   help="views for ea; slope half-count for es")
    p.add_argument("--range", type=float, dest="tilt", default=72.6,
                   help="symmetric tilt bound in degrees")
    p.add_argument("--target", type=int,
                   help="es only: subsample to this many views with endpoints")
    p.add_argument("--out", help="output file (default: stdout)")


def _add_simulate(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("simulate", help="forward-project a phantom raster")
    p.add_argument("--phantom", required=True, help="input image raster")
    p.add_argument("--angles", required=True, help="angle text file (degrees)")
    p.add_argument("--n-bins", type=int)
    p.add_argument("--bin-spacing", type=float)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output sinogram raster")


def _add_reconstruct(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("reconstruct", help="solve one sinogram")
    p.add_argument("--sino", required=True, help="input sinogram raster")
    p.add_argument("--method", choices=("sart", "adsir"), default="sart")
    p.add_argument("--iters", type=int, required=True, help="iteration count")
    p.add_argument("--iter-unit", choices=("subset", "cycle"), default="cycle",
                   help="what one iteration means for sart: one subset pass "
                        "or one full pass over all subsets")
    p.add_argument("--init", default="zero", help="'zero' or an image raster path")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--pixel-size", type=float)
    p.add_argument("--subsets", type=int, help="default: one view per subset")
    p.add_argument("--no-nonneg", action="store_true")
    p.add_argument("--support", choices=("none", "circle"), default="circle")
    p.add_argument("--config", help="key = value settings file")
    # dictionary-solver settings (config file keys share these names)
    p.add_argument("--lam", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--eps-mode", choices=("relative", "absolute"), dest="eps_mode")
    p.add_argument("--sparsity", type=int)
    p.add_argument("--patch-edge", type=int, dest="patch_edge")
    p.add_argument("--n-atoms", type=int, dest="n_atoms")
    p.add_argument("--retrain-every", type=int, dest="retrain_every")
    p.add_argument("--warm-start", type=int, dest="warm_start",
                   help="adsir warm-start cycles")
    p.add_argument("--ksvd-sweeps", type=int, dest="ksvd_sweeps")
    p.add_argument("--seed", type=int)
    p.add_argument("--reference", help="image raster for the metric trace")
    p.add_argument("--trace", help="write per-pass metrics CSV here")
    p.add_argument("--checkpoint-dir", help="adsir: write periodic checkpoints")
    p.add_argument("--out", required=True)


def _add_evaluate(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("evaluate", help="score an image against a reference")
    p.add_argument("--image", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", help="write a one-row CSV (default: print)")


def _add_experiment(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("experiment", help="run the full comparison matrix")
    p.add_argument("--outdir", default="experiment_out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--views", default="69,55,31", help="comma-separated view counts")
    p.add_argument("--modes", default="es,ea")
    p.add_argument("--methods", default="sart,adsir")
    p.add_argument("--range", type=float, dest="tilt", default=72.6)
    p.add_argument("--phantom", help="image raster; default: seeded object")
    p.add_argument("--sart-cycles", type=int, dest="sart_cycles")
    p.add_argument("--adsir-cycles", type=int, dest="adsir_cycles")
    p.add_argument("--warm-start", type=int, dest="warm_start")
    p.add_argument("--config", help="key = value settings file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wedgetomo",
        description="Limited-tilt parallel-beam reconstruction toolkit",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_phantom(sub)
    _add_angles(sub)
    _add_simulate(sub)
    _add_reconstruct(sub)
    _add_evaluate(sub)
    _add_experiment(sub)
    return parser


def _cmd_phantom(args) -> int:
    if args.atoms:
        image = make_atom_phantom(args.height, args.width, args.pixel_size, read_atoms(args.atoms))
    else:
        image = default_phantom(args.seed)
    write_image(args.out, image)
    if args.pgm:
        write_pgm(args.pgm, image, tuple(args.window))
    return 0


def _cmd_angles(args) -> int:
    if args.mode == "ea":
        if args.target is not None:
            raise ValueError("--target applies to equally-sloped sets only")
        angles = ea_angles(args.n, -args.tilt, args.tilt)
    else:
        angles = es_angles(args.n, -args.tilt, args.tilt, target=args.target)
    if args.out:
        write_angles(args.out, angles)
    else:
        for a in angles:
            sys.stdout.write(f"{a:.9g}\n")
    return 0


def _cmd_simulate(args) -> int:
    image = read_image(args.phantom)
    angles = read_angles(args.angles)
    noise = NoiseSpec(args.noise_sigma) if args.noise_sigma else None
    sino = simulate(
        image, angles, noise=noise, seed=args.seed,
        n_bins=args.n_bins, bin_spacing=args.bin_spacing,
    )
    write_sinogram(args.out, sino)
    return 0


def _cmd_reconstruct(args) -> int:
    sino = read_sinogram(args.sino)
    config_file = _read_config_file(args.config) if args.config else {}
    height = _config_value(args, config_file, "height", int,
                           int(np.ceil(sino.n_bins / np.sqrt(2.0))))
    width = _config_value(args, config_file, "width", int, height)
    pixel_size = _config_value(args, config_file, "pixel_size", float, sino.bin_spacing)
    subsets = _config_value(args, config_file, "subsets", int, sino.n_views)
    shape = (height, width)

    if args.init == "zero":
        initial = ImageGrid(np.zeros(shape), pixel_size)
    else:
        initial = read_image(args.init)
        shape = initial.values.shape
    support = circle_support(shape) if args.support == "circle" else None
    reference = read_image(args.reference) if args.reference else None
    iters = args.iters * (subsets if args.iter_unit == "cycle" else 1)

    if args.method == "sart":
        cfg = SartConfig(
            iterations=iters,
            subsets=subsets,
            nonnegativity=not args.no_nonneg,
            support_mask=support,
        )
        image, trace = os_sart(initial, sino, cfg, reference=reference)
        trace_columns = ["iteration", "rmse", "ssim"]
    else:
        defaults = AdsirConfig()
        warm = _config_value(args, config_file, "warm_start", int, 0)
        cfg = AdsirConfig(
            lam=_config_value(args, config_file, "lam", float, defaults.lam),
            eps=_config_value(args, config_file, "eps", float, defaults.eps),
            eps_mode=_config_value(args, config_file, "eps_mode", str, defaults.eps_mode),
            sparsity=_config_value(args, config_file, "sparsity", int, defaults.sparsity),
            patch_edge=_config_value(args, config_file, "patch_edge", int, defaults.patch_edge),
            n_atoms=_config_value(args, config_file, "n_atoms", int, defaults.n_atoms),
            retrain_every=_config_value(args, config_file, "retrain_every", int,
                                        defaults.retrain_every),
            iterations=args.iters,
            warm_start_iterations=warm * subsets,
            subsets=subsets,
            ksvd_sweeps=_config_value(args, config_file, "ksvd_sweeps", int,
                                      defaults.ksvd_sweeps),
            nonnegativity=not args.no_nonneg,
            support_mask=support,
            seed=args.seed,
        )
        image, trace = adsir(
            sino, shape, cfg, pixel_size=pixel_size, initial=None if args.init == "zero" else initial,
            reference=reference, checkpoint_dir=args.checkpoint_dir,
        )
        trace_columns = ["k", "objective", "data_term", "patch_term", "rmse", "ssim"]

    write_image(args.out, image)
    if args.trace:
        write_trace_csv(args.trace, trace, trace_columns)
    return 0


def _cmd_evaluate(args) -> int:
    image = read_image(args.image)
    reference = read_image(args.reference)
    row = {"rmse": rmse(image, reference), "ssim": ssim(image, reference)}
    if args.out:
        write_trace_csv(args.out, [row], ["rmse", "ssim"])
    else:
        sys.stdout.write(f"rmse,{row['rmse']:.17g}\nssim,{row['ssim']:.17g}\n")
    return 0


def _cmd_experiment(args) -> int:
    config_file = _read_config_file(args.config) if args.config else {}
    defaults = ExperimentPlan.__dataclass_fields__
    adsir_defaults = AdsirConfig()
    solver = AdsirConfig(
        lam=float(config_file.get("lam", adsir_defaults.lam)),
        eps=float(config_file.get("eps", adsir_defaults.eps)),
        eps_mode=config_file.get("eps_mode", adsir_defaults.eps_mode),
        sparsity=int(config_file.get("sparsity", adsir_defaults.sparsity)),
        patch_edge=int(config_file.get("patch_edge", adsir_defaults.patch_edge)),
        n_atoms=int(config_file.get("n_atoms", adsir_defaults.n_atoms)),
        retrain_every=int(config_file.get("retrain_every", adsir_defaults.retrain_every)),
        ksvd_sweeps=int(config_file.get("ksvd_sweeps", adsir_defaults.ksvd_sweeps)),
    )
    plan = ExperimentPlan(
        view_counts=tuple(int(v) for v in args.views.split(",")),
        modes=tuple(m.strip() for m in args.modes.split(",")),
        methods=tuple(m.strip() for m in args.methods.split(",")),
        tilt_min=-args.tilt,
        tilt_max=args.tilt,
        phantom_seed=args.seed,
        phantom_path=args.phantom,
        sart_cycles=_config_value(args, config_file, "sart_cycles", int,
                                  defaults["sart_cycles"].default),
        adsir_cycles=_config_value(args, config_file, "adsir_cycles", int,
                                   defaults["adsir_cycles"].default),
        warm_start_cycles=_config_value(args, config_file, "warm_start", int,
                                        defaults["warm_start_cycles"].default),
        adsir_config=solver,
        output_dir=args.outdir,
    )
    rows = run_experiment(plan)
    summary = report(rows)
    text = format_report(summary, eps_mode=solver.eps_mode)
    (Path(args.outdir) / "report.txt").write_text(text)
    sys.stdout.write(text)
    return 0


_COMMANDS = {
    "phantom": _cmd_phantom,
    "angles": _cmd_angles,
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
