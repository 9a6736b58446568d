"""
Command-line front end for simulation, feature extraction, classifier
training/evaluation, pipeline runs and reports.

Usage:
    python -m scripts.gtrack simulate --scenarios 1 3 6 --duration 60
    python -m scripts.gtrack extract
    python -m scripts.gtrack train --methods svm knn
    python -m scripts.gtrack eval --grid methods levels features
    python -m scripts.gtrack run --method svm --features both
    python -m scripts.gtrack report
    python -m scripts.gtrack serve --port 8000

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from config import OUTPUT_DIR, load_run_config, setup_logging
from models.classifier import METHODS
from utils.commands import EVAL_GRIDS, cmd_eval, cmd_extract, cmd_report, cmd_run, cmd_simulate, cmd_train
from utils.errors import ConfigError, DataError

logger = logging.getLogger("gtrack")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--output", default=OUTPUT_DIR, help="output root directory")
    p.add_argument("--scenarios", type=int, nargs="+")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, dest="duration_s")
    p.add_argument("--fidelity", choices=["signal", "point_cloud"])
    p.add_argument("--no-mti", dest="mti", action="store_const", const=False)
    p.add_argument("--no-feedback", dest="count_feedback", action="store_const", const=False)
    p.add_argument("--no-classifier", dest="classifier", action="store_const", const=False)
    p.add_argument("--no-cubes", dest="write_cubes", action="store_const", const=False)
    p.add_argument("--cvd-baseline", dest="cvd_baseline", action="store_const", const=True)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--features")
    p.add_argument("--channels", type=int, dest="n_channels")
    p.add_argument("--workers", type=int)
    p.add_argument("--log-level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gtrack", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write simulated scenarios (truth + cubes or point clouds)")
    _common(p)
    p.add_argument("--seeds", type=int, nargs="+", help="one dataset per seed (default: --seed)")

    p = sub.add_parser("extract", help="track training scenarios and write the feature table")
    _common(p)
    p.add_argument("--seeds", type=int, nargs="+", help="default: train_seeds from the config")

    p = sub.add_parser("train", help="train seamless classifiers")
    _common(p)
    p.add_argument("--methods", nargs="+", choices=METHODS)
    p.add_argument("--features-csv", type=Path)

    p = sub.add_parser("eval", help="70/30 comparison grids")
    _common(p)
    p.add_argument("--grid", nargs="+", default=["methods"], choices=sorted(EVAL_GRIDS))
    p.add_argument("--methods", nargs="+", choices=METHODS)
    p.add_argument("--features-csv", type=Path)

    p = sub.add_parser("run", help="stream scenarios through the full pipeline")
    _common(p)

    p = sub.add_parser("report", help="collect run outputs into an Excel workbook")
    _common(p)

    p = sub.add_parser("serve", help="start the HTTP API")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--log-level")
    return parser


OVERRIDES = ("scenarios", "seed", "duration_s", "fidelity", "mti", "count_feedback", "classifier",
             "write_cubes", "cvd_baseline", "method", "features", "n_channels", "workers")


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "serve":
        import uvicorn
        uvicorn.run("main:app", host=args.host, port=args.port)
        return EXIT_OK

    overrides = {k: getattr(args, k) for k in OVERRIDES}
    if overrides["scenarios"] is not None:
        overrides["scenarios"] = tuple(overrides["scenarios"])
    cfg = load_run_config(args.config, **overrides)
    root = Path(args.output)
    root.mkdir(parents=True, exist_ok=True)

    if args.command == "simulate":
        for s in cmd_simulate(cfg, root, args.seeds):
            print(f"scenario {s['scenario']} seed {s['seed']}: {s['frames']} frames, "
                  f"{s['people']} people ({s['motion']}), {s['fidelity']} -> {s['dir']}")
    elif args.command == "extract":
        print(cmd_extract(cfg, root, args.seeds))
    elif args.command == "train":
        for path in cmd_train(cfg, root, args.methods, args.features_csv):
            print(path)
    elif args.command == "eval":
        print(cmd_eval(cfg, root, args.grid, args.methods, args.features_csv))
    elif args.command == "run":
        print(cmd_run(cfg, root).to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    elif args.command == "report":
        print(cmd_report(cfg, root)[0])
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return dispatch(args)
    except (ConfigError, ValidationError) as e:
        print(f"gtrack {args.command}: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        print(f"gtrack {args.command}: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
