"""
Command dispatcher. Maps each CLI command to a handler, buffers the
handler's artifacts in the output manager and turns failures into
structured diagnostics with an exit code.
"""

import logging
from typing import TYPE_CHECKING, Callable

from criteria.derived import derive_coefficients
from orchestrator.output_manager import OutputManager
from orchestrator.plots import line_plot_svg
from orchestrator.problem_files import ProblemFile, ProblemFileError, load_run_inputs
from orchestrator.runner import CriteriaRunner, format_summary
from problem.examples import builtin_example
from simulation.pde import simulate_pde
from simulation.reduced import SimulationError, reduced_residual, simulate_reduced
from simulation.reduction import reduce_trace
from simulation.signs import detect_sign_changes

if TYPE_CHECKING:
    from cli import RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def exit_code_for(error: BaseException) -> int:
    """2 for configuration problems (ValueError family, missing files), 3 for numeric failure."""
    if isinstance(error, (OSError, ValueError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


class CommandDispatcher:
    """Routes a RunConfig to its command handler."""

    def __init__(self, runner: CriteriaRunner, output: OutputManager):
        self.runner = runner
        self.output = output
        self.handler_map: dict[str, Callable[["RunConfig", ProblemFile], dict]] = {
            "check": self._handle_check,
            "hypotheses": self._handle_hypotheses,
            "simulate": self._handle_simulate,
            "reduce": self._handle_reduce,
            "report": self._handle_report,
        }

    def dispatch(self, config: "RunConfig") -> dict:
        """
        Execute one command.

        Returns:
            dict with 'success' (bool), 'result' (dict or None),
            'exit_code' (int) and 'error' (dict or None)
        """
        handler = self.handler_map.get(config.command)
        try:
            if handler is None:
                raise ValueError(f"Unknown command: {config.command} (known: {', '.join(self.handler_map)})")
            problem = self._load(config)
            result = handler(config, problem)
            files = self.output.flush(config.command, metadata={"problem": problem.spec.name})
        except (OSError, ValueError, ArithmeticError, RuntimeError) as e:
            return self._failure(config, e)

        result["files"] = files
        if result.get("blowup"):
            error = SimulationError(f"overflow guard hit at t={result['blowup_at']:.6g}; partial trace written")
            return self._failure(config, error, result)
        return {"success": True, "result": result, "exit_code": EXIT_OK, "error": None}

    def _failure(self, config: "RunConfig", error: BaseException, result=None) -> dict:
        code = exit_code_for(error)
        logger.error(f"{config.command} failed ({type(error).__name__}): {error}")
        details = {"type": type(error).__name__, "message": str(error), "exit_code": code}
        if isinstance(error, ProblemFileError):
            details.update({"key": error.key, "offset": error.offset})
        self.output.write_diagnostics({"success": False, "command": config.command, "error": details})
        return {"success": False, "result": result, "exit_code": code, "error": details}

    def _load(self, config: "RunConfig") -> ProblemFile:
        if config.example_id is not None:
            return ProblemFile(spec=builtin_example(config.example_id))
        return load_run_inputs(config.problem_path)

    def _controls(self, config: "RunConfig", problem: ProblemFile) -> dict:
        return self.runner.simulation_controls(
            problem.simulation,
            {
                "t_end": config.t_end,
                "dt": config.dt,
                "nx": config.nx,
                "relax_tol": config.relax_tol,
                "max_iter": config.max_iter,
            },
        )

    # ─── Handlers ───

    def _handle_hypotheses(self, config: "RunConfig", problem: ProblemFile) -> dict:
        report = self.runner.hypotheses(problem.spec)
        self.output.add_json("hypotheses.json", report.to_dict())
        text = "\n".join(entry.summary() for entry in report.entries.values()) + "\n"
        self.output.add_text("hypotheses.txt", text)
        return {"violated": report.violated(), "table": text}

    def _handle_check(self, config: "RunConfig", problem: ProblemFile) -> dict:
        tuning = self.runner.tuning(problem.tuning, force_undamped=config.undamped)
        result = self.runner.check(problem.spec, tuning, config.theorems, skip_hypotheses=config.skip_hypotheses)

        self.output.add_json("hypotheses.json", result.hypotheses.to_dict())
        for tid, report in result.reports.items():
            self.output.add_json(f"report_{tid}.json", report.to_dict())
        self.output.add_json("summary.json", result.to_dict(), always=True)
        table = format_summary(result.summary, result.banner)
        self.output.add_text("summary.txt", table)
        return {**result.to_dict(), "table": table}

    def _handle_simulate(self, config: "RunConfig", problem: ProblemFile) -> dict:
        spec = problem.spec
        c = self._controls(config, problem)
        trace = simulate_pde(
            spec,
            nx=int(c["nx"]),
            dt=float(c["dt"]),
            window=(spec.t0, float(c["t_end"])),
            init=problem.initial,
            relax_tol=float(c["relax_tol"]),
            max_iter=int(c["max_iter"]),
            epsilon=float(c["epsilon"]),
        )
        self.output.add_csv("trace.csv", ["t", "x", "u"], trace.rows())
        result = {"simulation": trace.metadata, "blowup": trace.blowup}
        if trace.blowup:
            result["blowup_at"] = float(trace.t[-1])

        if len(trace.t) >= 2:
            reduced = reduce_trace(trace, spec.alpha, spec.bc)
            signs = detect_sign_changes(reduced)
            self.output.add_csv("reduced.csv", ["t", "v", "vprime"], reduced.rows())
            self.output.add_svg("reduced.svg", line_plot_svg(reduced.t, reduced.v, signs.crossings, title=spec.name))
            result["sign_changes"] = signs.to_dict()
            self.output.add_json("sign_changes.json", signs.to_dict())

        self.output.add_json("simulation.json", trace.metadata)
        return result

    def _handle_reduce(self, config: "RunConfig", problem: ProblemFile) -> dict:
        spec = problem.spec
        c = self._controls(config, problem)
        derived = derive_coefficients(spec, self.runner.tuning(problem.tuning, force_undamped=config.undamped))
        traj = simulate_reduced(
            derived.p1,
            derived.Q,
            spec.m,
            window=(spec.t0, float(c["t_end"])),
            init=(1.0, 0.0),
            dt=float(c["dt"]),
            relax_tol=float(c["relax_tol"]),
            max_iter=int(c["max_iter"]),
        )
        residual, scale = reduced_residual(traj, derived.p1, derived.Q, spec.m)
        signs = detect_sign_changes(traj)
        meta = {**traj.metadata(), "residual": residual, "max_abs_vpp": scale, "sign_changes": signs.to_dict()}

        self.output.add_csv("reduced_ode.csv", ["t", "v", "vprime"], traj.rows())
        self.output.add_json("reduced_ode.json", meta)
        self.output.add_svg("reduced_ode.svg", line_plot_svg(traj.t, traj.v, signs.crossings, title=spec.name))
        return {"reduced": meta}

    def _handle_report(self, config: "RunConfig", problem: ProblemFile) -> dict:
        result = self._handle_check(config, problem)
        result.update(self._handle_reduce(config, problem))
        self.output.add_json("report.json", result, always=True)
        return result
