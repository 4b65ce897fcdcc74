"""
Criteria runner. Gates on the structural hypotheses, evaluates the selected
theorems concurrently and assembles the summary table.
"""

import os
import logging
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from criteria.derived import TuningParams
from criteria.theorems import THEOREMS, CriterionReport
from numerics.quad import ProbeSettings
from problem.hypotheses import HypothesisReport, check_hypotheses
from problem.model import ProblemSpec

logger = logging.getLogger(__name__)

SETTINGS_PATH = os.environ.get("SETTINGS_PATH", "./config/settings.yaml")
THEOREM_IDS = tuple(THEOREMS)
SKIPPED = "Skipped"

DEFAULT_SETTINGS = {
    "quadrature": {"tol": 1e-9, "tail_tol": 1e-6, "doublings": 16, "r2_threshold": 0.99},
    "criteria": {"scan_points": 48, "tail_samples": 64, "x_coarse": 33},
    "hypotheses": {"n_t": 200, "n_x": 20, "t_range_factor": 100.0},
    "simulation": {"dt": 1e-3, "nx": 51, "t_end": 10.0, "relax_tol": 1e-6, "max_iter": 30, "epsilon": 1e-8},
    "runner": {"max_workers": 4},
}


def skipped(reason: str) -> str:
    return f"{SKIPPED}({reason})"


@dataclass
class CheckResult:
    """Outcome of one `check`: per-theorem reports, the four-row summary and the gate."""

    reports: dict[str, CriterionReport]
    summary: list[dict]
    hypotheses: HypothesisReport
    banner: Optional[str] = None
    errors: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "banner": self.banner,
            "errors": self.errors,
            "hypotheses_violated": self.hypotheses.violated(),
        }


class CriteriaRunner:
    """Runs hypothesis checks and theorem criteria with settings from YAML."""

    def __init__(self, settings_path: Optional[str] = None):
        self.settings_path = settings_path or SETTINGS_PATH
        self.settings = self._load_settings(self.settings_path)

    def _load_settings(self, path: str) -> dict:
        settings = {section: dict(values) for section, values in DEFAULT_SETTINGS.items()}
        if not Path(path).exists():
            logger.warning(f"No settings file at {path}; using built-in defaults")
            return settings

        with open(path) as f:
            loaded = yaml.safe_load(f) or {}
        for section, values in loaded.items():
            if section not in settings or not isinstance(values, dict):
                logger.warning(f"Ignoring unknown settings section: {section}")
                continue
            for key, value in values.items():
                if key not in settings[section]:
                    logger.warning(f"Ignoring unknown setting: {section}.{key}")
                    continue
                settings[section][key] = value
        return settings

    # ─── Parameters ───

    def probe_settings(self) -> ProbeSettings:
        q = self.settings["quadrature"]
        return ProbeSettings(
            tol=float(q["tol"]),
            tail_tol=float(q["tail_tol"]),
            doublings=int(q["doublings"]),
            r2_threshold=float(q["r2_threshold"]),
        )

    def tuning(self, base: Optional[TuningParams] = None, force_undamped: bool = False) -> TuningParams:
        """Problem-file tuning completed with the numeric controls from settings."""
        c = self.settings["criteria"]
        return dataclasses.replace(
            base or TuningParams(),
            probes=self.probe_settings(),
            scan_points=int(c["scan_points"]),
            tail_samples=int(c["tail_samples"]),
            x_coarse=int(c["x_coarse"]),
            force_undamped=force_undamped or (base.force_undamped if base else False),
        )

    def simulation_controls(self, *layers: Optional[dict]) -> dict:
        """settings.yaml values overridden by each later layer's non-None entries."""
        controls = dict(self.settings["simulation"])
        for layer in layers:
            for key, value in (layer or {}).items():
                if value is not None:
                    controls[key] = value
        return controls

    # ─── Hypotheses ───

    def hypotheses(self, spec: ProblemSpec) -> HypothesisReport:
        h = self.settings["hypotheses"]
        t_range = (spec.t0, spec.t0 * float(h["t_range_factor"]))
        report = check_hypotheses(spec, t_range, n_t=int(h["n_t"]), n_x=int(h["n_x"]))
        for entry in report.entries.values():
            logger.info(entry.summary())
        return report

    # ─── Theorems ───

    def run_theorem(self, theorem_id: str, spec: ProblemSpec, tuning: TuningParams) -> CriterionReport:
        if theorem_id not in THEOREMS:
            raise ValueError(f"Unknown theorem: {theorem_id} (known: {', '.join(THEOREM_IDS)})")
        logger.info(f"Checking theorem {theorem_id} for {spec.name or 'problem'}")
        report = THEOREMS[theorem_id](spec, tuning)
        logger.info(f"Theorem {theorem_id}: {report.summary_line()}")
        return report

    def check(
        self,
        spec: ProblemSpec,
        tuning: TuningParams,
        theorem_ids: Optional[list[str]] = None,
        skip_hypotheses: bool = False,
        hypotheses: Optional[HypothesisReport] = None,
    ) -> CheckResult:
        """
        Evaluate the selected theorems.

        Returns:
            CheckResult whose summary always has one row per theorem with
            verdict Oscillatory, Inconclusive or Skipped(reason).
        """
        selected = list(theorem_ids or THEOREM_IDS)
        for tid in selected:
            if tid not in THEOREMS:
                raise ValueError(f"Unknown theorem: {tid} (known: {', '.join(THEOREM_IDS)})")

        hypotheses = hypotheses or self.hypotheses(spec)
        violated = hypotheses.violated()
        banner = None
        reports: dict[str, CriterionReport] = {}
        errors: dict[str, str] = {}

        if violated and not skip_hypotheses:
            reason = f"hypotheses violated: {', '.join(violated)}"
            logger.warning(f"{reason}; criteria not evaluated (use --skip-hypotheses to override)")
            for tid in selected:
                errors[tid] = reason
        else:
            if violated:
                banner = f"WARNING: hypotheses violated on the sample grid ({', '.join(violated)}); criteria evaluated anyway"
                logger.warning(banner)
            reports, errors = self._evaluate(spec, tuning, selected)

        summary = []
        for tid in THEOREM_IDS:
            if tid in reports:
                summary.append({"theorem": tid, "verdict": reports[tid].overall, "summary": reports[tid].summary_line()})
            else:
                reason = errors.get(tid, "not selected")
                summary.append({"theorem": tid, "verdict": skipped(reason), "summary": skipped(reason)})
        return CheckResult(reports, summary, hypotheses, banner, errors)

    def _evaluate(self, spec, tuning, selected):
        reports, errors = {}, {}
        workers = max(1, min(int(self.settings["runner"]["max_workers"]), len(selected)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {tid: pool.submit(self.run_theorem, tid, spec, tuning) for tid in selected}
            for tid, future in futures.items():
                try:
                    reports[tid] = future.result()
                except (ValueError, ArithmeticError, RuntimeError) as e:
                    logger.error(f"Theorem {tid} failed: {e}")
                    errors[tid] = f"{type(e).__name__}: {e}"
        return reports, errors


def format_summary(summary: list[dict], banner: Optional[str] = None) -> str:
    """Plain-text summary table, one row per theorem."""
    lines = []
    if banner:
        lines.append(banner)
    lines.append(f"{'Theorem':<9}Verdict")
    lines.append(f"{'-' * 8:<9}{'-' * 7}")
    for row in summary:
        lines.append(f"{row['theorem']:<9}{row['summary']}")
    return "\n".join(lines) + "\n"
