"""
Oscillation checker CLI.
Run with: python cli.py <command> (--example ID | --problem PATH) [options]

Examples:
    python cli.py check --example 3.1
    python cli.py check --example 3.1 --theorem 2.4 --skip-hypotheses
    python cli.py check --example 3.2 --theorem 2.4 --skip-hypotheses

Both built-in examples fail the sampled H1 check p >= (alpha-1) r, so without
--skip-hypotheses their criteria print Skipped(hypotheses violated: H1).
    python cli.py hypotheses --problem config/problems/example_3_1.yaml
    python cli.py simulate --example 3.2 --t-end 3 --dt 5e-4 --nx 51 --format json,csv,svg
    python cli.py reduce --example 3.1 --t-end 60 --format csv,svg
    python cli.py report --example 3.1 --out output/ex31

Exit codes:
    0  evaluation finished (whatever the verdict)
    2  configuration error (bad problem file, unknown example, bad flag value)
    3  numeric failure (quadrature breakdown, simulation blow-up)
"""

import os
import sys
import logging
import argparse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from orchestrator.dispatcher import EXIT_CONFIG, CommandDispatcher
from orchestrator.output_manager import OUTPUT_ROOT, OutputManager
from orchestrator.runner import THEOREM_IDS, CriteriaRunner

logger = logging.getLogger("oscillation-checker")

COMMANDS = ("check", "hypotheses", "simulate", "reduce", "report")
FORMATS = ("json", "csv", "svg")


@dataclass
class RunConfig:
    """One invocation: problem source, command, theorem selection and numeric overrides."""

    command: str
    problem_path: Optional[str] = None
    example_id: Optional[str] = None
    theorems: list[str] = field(default_factory=lambda: list(THEOREM_IDS))
    t_end: Optional[float] = None
    dt: Optional[float] = None
    nx: Optional[int] = None
    relax_tol: Optional[float] = None
    max_iter: Optional[int] = None
    out: Path = OUTPUT_ROOT
    formats: tuple[str, ...] = ("json", "csv")
    skip_hypotheses: bool = False
    undamped: bool = False
    settings_path: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"Unknown command: {self.command}")
        if (self.problem_path is None) == (self.example_id is None):
            raise ValueError("exactly one of --problem and --example is required")
        unknown = set(self.formats) - set(FORMATS)
        if unknown:
            raise ValueError(f"Unknown output formats: {sorted(unknown)} (known: {', '.join(FORMATS)})")
        self.out = Path(self.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Oscillation criteria checker for damped quasilinear wave equations")
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--problem", help="Problem file (YAML)")
    source.add_argument("--example", help="Built-in example id (3.1 or 3.2)")
    parser.add_argument(
        "--theorem", action="append", choices=[*THEOREM_IDS, "all"],
        help="Theorem to check; repeat for several (default: all)",
    )
    parser.add_argument("--t-end", type=float, help="End of the simulation window")
    parser.add_argument("--dt", type=float, help="Time step")
    parser.add_argument("--nx", type=int, help="Spatial nodes for the PDE simulation")
    parser.add_argument("--relax-tol", type=float, help="Waveform relaxation tolerance")
    parser.add_argument("--max-iter", type=int, help="Waveform relaxation iteration cap")
    parser.add_argument("--out", default=str(OUTPUT_ROOT), help="Output directory")
    parser.add_argument("--format", default="json,csv", help="Comma-separated subset of json,csv,svg")
    parser.add_argument("--settings", help="Settings YAML (default: $SETTINGS_PATH or config/settings.yaml)")
    parser.add_argument(
        "--skip-hypotheses", action="store_true",
        help="Evaluate criteria even when the hypothesis sampling finds violations "
             "(needed for the built-in examples, which fail H1)",
    )
    parser.add_argument("--undamped", action="store_true", help="Evaluate criteria with the damping term removed")
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    theorems = args.theorem or ["all"]
    selected = list(THEOREM_IDS) if "all" in theorems else list(dict.fromkeys(theorems))
    formats = tuple(f.strip().lower() for f in args.format.split(",") if f.strip())
    return RunConfig(
        command=args.command,
        problem_path=args.problem,
        example_id=args.example,
        theorems=selected,
        t_end=args.t_end,
        dt=args.dt,
        nx=args.nx,
        relax_tol=args.relax_tol,
        max_iter=args.max_iter,
        out=Path(args.out),
        formats=formats,
        skip_hypotheses=args.skip_hypotheses,
        undamped=args.undamped,
        settings_path=args.settings,
    )


def run(config: RunConfig) -> dict:
    """Execute one command. Returns the dispatcher's result dict (see CommandDispatcher.dispatch)."""
    runner = CriteriaRunner(config.settings_path)
    output = OutputManager(config.out, formats=config.formats)
    dispatcher = CommandDispatcher(runner, output)
    return dispatcher.dispatch(config)


def _configure_logging():
    logging.basicConfig(
        level=os.environ.get("LOG_LEVEL", "INFO"),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=[
            logging.StreamHandler(sys.stderr),
            logging.FileHandler(os.environ.get("LOG_FILE", "oscillation_checker.log")),
        ],
    )


def main(argv: Optional[list[str]] = None) -> int:
    load_dotenv()
    _configure_logging()
    args = build_parser().parse_args(argv)

    try:
        config = build_config(args)
    except ValueError as e:
        logger.error(str(e))
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    result = run(config)
    if not result["success"]:
        error = result["error"]
        print(f"Error ({error['type']}): {error['message']}", file=sys.stderr)
        return result["exit_code"]

    payload = result["result"]
    if "table" in payload:
        print(payload["table"], end="")
    if "sign_changes" in payload:
        sc = payload["sign_changes"]
        print(f"sign changes of v(t): {sc['count']} (first at {sc['first_crossing']})")
    if "reduced" in payload:
        sc = payload["reduced"]["sign_changes"]
        print(f"reduced equation sign changes: {sc['count']} (first at {sc['first_crossing']})")
    print(f"--- {len(payload['files'])} files written to {config.out} ---")
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
