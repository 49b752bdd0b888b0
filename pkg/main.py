"""
qkinetic - numerics for the weak-coupling limit of a quantum gas
"""

import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from cli.config import COMMANDS, ConfigError, load_config
from cli.display import Display
from cli.engine import CommandEngine


load_dotenv()

logger = logging.getLogger("qkinetic")


def _floats(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


def _ladder(text: str):
    """'1e-1:4' -> (start, points)."""
    try:
        start, points = text.split(":")
        return float(start), int(points)
    except ValueError:
        raise argparse.ArgumentTypeError(f"ladder must look like START:POINTS, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkinetic",
        description="Weak-coupling kinetic limit: series solver, term probes and convergence checks",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON run configuration")
    common.add_argument("--out", type=str, default=None, help="Result path (.json, or .csv for the table)")
    common.add_argument("--json", action="store_true", help="Print the JSON result instead of the report")
    common.add_argument("--seed", type=int, default=None, help="Master seed")
    common.add_argument("--dim", type=int, default=None, help="Space dimension")
    common.add_argument("--log-level", type=str, default=None,
                        help="Logging level (or set QKINETIC_LOG_LEVEL env var)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cross-section", parents=[common], help="Tabulate B(ω, w) and collision moments")
    p.add_argument("--w", type=_floats, default=None, help="Relative velocity, comma separated")
    p.add_argument("--grid", type=int, default=None, help="Direction grid points per angle")

    p = sub.add_parser("solve", parents=[common], help="Truncated Boltzmann series at one phase point")
    p.add_argument("--t", type=float, default=None, help="Final time (default: a fraction of the radius)")
    p.add_argument("--nmax", type=int, default=None, help="Highest series order")
    p.add_argument("--override", action="store_true", default=None, help="Allow t beyond the radius")
    p.add_argument("--no-oracle", dest="oracle", action="store_false", default=None,
                   help="Skip the homogeneous Picard comparison")

    p = sub.add_parser("probe", parents=[common], help="ε-scaling of a diagnostic term")
    p.add_argument("--term", type=str, default=None, help="I1, I2, I3, I4_case1..3, I4_recollision, A_eps, T_eps")
    p.add_argument("--j", type=int, default=None, help="Subsystem size")
    p.add_argument("--summed", action="store_true", default=None,
                   help="Keep the full sign sum on single-branch terms")
    p.add_argument("--ladder", type=_ladder, default=None, help="START:POINTS, e.g. 1e-1:4")
    p.add_argument("--t", type=float, default=None, help="Final time")

    p = sub.add_parser("converge", parents=[common], help="𝒯^ε against 𝒯 along an ε ladder")
    p.add_argument("--n", type=int, default=None, help="Collision count (0, 1 or 2)")
    p.add_argument("--t", type=float, default=None, help="Final time")
    p.add_argument("--eps", type=_floats, default=None, help="Decreasing ε values, comma separated")

    p = sub.add_parser("bound-check", parents=[common], help="Uniform bound and gap decay of the integrand")
    p.add_argument("--n", type=int, default=None, help="Collision count (1 or 2)")
    p.add_argument("--t", type=float, default=None, help="Final time")
    p.add_argument("--s", type=_floats, default=None, help="Rescaled gaps, comma separated")
    p.add_argument("--eps", type=_floats, default=None, help="ε values for the integrand bound, comma separated")

    p = sub.add_parser("delta-check", parents=[common], help="Dirichlet-kernel and sphere δ reductions")
    p.add_argument("--headline-T", dest="headline_T", type=float, default=None, help="Largest cut-off")

    p = sub.add_parser("oracle-compare", parents=[common], help="Fourier-side 𝒯^ε against the direct form (d=1)")
    p.add_argument("--eps", type=float, default=None, help="ε")
    p.add_argument("--t", type=float, default=None, help="Final time")
    p.add_argument("--t1", type=float, default=None, help="Collision time")
    return parser


def command_options(args: argparse.Namespace) -> dict:
    """Subcommand flags mapped onto config option names."""
    names = {"nmax": "n_max"}
    skip = {"command", "config", "out", "json", "seed", "dim", "log_level", "ladder"}
    options = {names.get(k, k): v for k, v in vars(args).items() if k not in skip}
    if getattr(args, "ladder", None) is not None:
        options["ladder_start"], options["ladder_points"] = args.ladder
    return options


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = args.log_level or os.environ.get("QKINETIC_LOG_LEVEL", "WARNING")
    logging.basicConfig(level=level.upper(), format="%(asctime)s %(name)s %(levelname)s %(message)s")

    display = Display()
    try:
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, dimension=args.dim, command=args.command, **command_options(args)
        )
        engine = CommandEngine(cfg, display, quiet=args.json)
        result = engine.run(args.command, out=args.out)
    except ConfigError as e:
        display.show_error(f"Error: {e}")
        return 2
    except ValueError as e:
        logger.debug("%s failed", args.command, exc_info=True)
        display.show_error(f"Numerical failure: {e}")
        return 1
    except KeyboardInterrupt:
        display.show_error("Interrupted.")
        return 130

    if args.json:
        print(result.to_json())
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
