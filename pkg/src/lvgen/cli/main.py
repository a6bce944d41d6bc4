"""Command-line entry point.

One subcommand per pipeline stage, plus `pipeline` to run the whole
chain from a single config file and `replay` to re-execute a manifest
and verify bit-identical outputs. Exit codes: 0 success, 2 configuration
error, 3 data or validation error, 4 numerical failure.
"""

import argparse
import sys
from pathlib import Path

from .. import __version__
from ..errors import ConfigError, NumericalError, ValidationError
from .config import RunConfig
from .stages import replay_manifest, run_pipeline, run_stage

_STAGE_HELP = {
    "synth": "draw a synthetic mesh population",
    "split": "partition the dataset 70/5/25 into train/val/test",
    "train-vae": "fit the mesh autoencoder on the training split",
    "encode": "encode train and val splits to latent vectors",
    "train-ddpm": "fit the latent denoiser on encoded latents",
    "sample": "draw latent vectors by reverse diffusion",
    "generate": "sample latents, decode and destandardize to meshes",
    "evaluate": "score generated meshes against the test split",
    "report": "render the metric report as text, CSV and figures",
    "gradcheck": "finite-difference check of every layer and network",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="INI run configuration; flags override file values")
    common.add_argument("--workdir", metavar="DIR", default=None,
                        help="root directory for all artifacts (default: .)")
    common.add_argument("--seed", type=int, dest="master_seed", metavar="N",
                        help="master seed; per-stage seeds derive from it")
    common.add_argument("--phase", choices=("ed", "es"),
                        help="cardiac phase of the synthetic population")
    common.add_argument("--threads", type=int, metavar="N",
                        help="worker bound for the pairwise metric matrix")

    parser = argparse.ArgumentParser(
        prog="lvgen",
        description="synthetic left-ventricle meshes: generate a "
                    "population, train a latent diffusion model, sample "
                    "and evaluate")
    parser.add_argument("--version", action="version",
                        version=f"lvgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="subcommand")

    stage_parsers = {name: sub.add_parser(name, parents=[common],
                                          help=text)
                     for name, text in _STAGE_HELP.items()}
    stage_parsers["synth"].add_argument("--n", type=int,
                                        help="population size")
    stage_parsers["synth"].add_argument("--spec", metavar="PATH",
                                        help="population spec INI "
                                             "(default: packaged, per phase)")
    stage_parsers["train-vae"].add_argument("--epochs", type=int)
    stage_parsers["train-ddpm"].add_argument("--epochs", type=int)
    stage_parsers["sample"].add_argument("--n", type=int,
                                         help="number of samples")
    stage_parsers["generate"].add_argument("--n", type=int,
                                           help="number of meshes")
    stage_parsers["gradcheck"].add_argument("--h", type=float,
                                            help="finite-difference step")
    stage_parsers["gradcheck"].add_argument("--tol", type=float,
                                            help="max relative error allowed")

    pipe = sub.add_parser("pipeline", parents=[common],
                          help="run synth through report from one config")
    pipe.add_argument("--skip-existing", action="store_true",
                      help="skip stages whose outputs already exist")

    replay = sub.add_parser("replay", parents=[common],
                            help="re-run a manifest and verify that every "
                                 "output is bit-identical")
    replay.add_argument("manifest", help="path to a stage manifest JSON")
    return parser


def _apply_overrides(cfg, args):
    if getattr(args, "master_seed", None) is not None:
        cfg.set("run", "master_seed", args.master_seed)
    if getattr(args, "phase", None) is not None:
        cfg.set("run", "phase", args.phase)
    if getattr(args, "threads", None) is not None:
        cfg.set("run", "threads", args.threads)
    if getattr(args, "n", None) is not None:
        cfg.set("synth" if args.command == "synth" else "sample", "n", args.n)
    if getattr(args, "spec", None):
        cfg.set("synth", "spec", args.spec)
    if getattr(args, "epochs", None) is not None:
        cfg.set("vae" if args.command == "train-vae" else "ddpm",
                "epochs", args.epochs)
    if getattr(args, "h", None) is not None:
        cfg.set("gradcheck", "h", args.h)
    if getattr(args, "tol", None) is not None:
        cfg.set("gradcheck", "tol", args.tol)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; --help and --version exit 0
        return 0 if exc.code in (0, None) else int(exc.code)
    try:
        cfg = RunConfig()
        if args.config:
            cfg.load(args.config)
        _apply_overrides(cfg, args)
        workdir = Path(args.workdir) if args.workdir else Path(".")
        if args.command == "pipeline":
            run_pipeline(cfg, workdir, skip_existing=args.skip_existing)
        elif args.command == "replay":
            replay_manifest(args.manifest, workdir=args.workdir)
        else:
            run_stage(args.command, cfg, workdir)
    except ConfigError as exc:
        print(f"lvgen: config error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"lvgen: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"lvgen: numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
