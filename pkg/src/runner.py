"""Dispatch one CLI command and write the run summary."""
import logging
from pathlib import Path
from typing import List, Optional, Tuple

from src.commands.analyses import analysis_router
from src.commands.context import RunContext
from src.commands.router import CommandRouter
from src.commands.suites import suite_router
from src.errors import ScenarioError, ValidationFailure
from src.exports import write_json
from src.scenario import Scenario
from src.schemas import AnalysisRecord, RunSummary
from src.settings import Settings

logger = logging.getLogger(__name__)

router = CommandRouter()
router.include_router(analysis_router)
router.include_router(suite_router)

SUMMARY_FILE = "summary.json"


def _effective_seed(settings: Settings, scenario: Optional[Scenario]) -> int:
    if settings.seed is not None:
        return settings.seed
    return scenario.spec.seed if scenario is not None else 0


def run(scenario: Optional[Scenario], command: str, output_dir: Path, settings: Settings,
        resolution: Optional[List[int]] = None,
        lambda_window: Optional[Tuple[float, float]] = None) -> RunSummary:
    """Run ``command`` and write ``summary.json``; the summary carries no timestamps."""
    cmd = router.resolve(command)
    output_dir = Path(output_dir)
    ctx = RunContext(scenario, command, output_dir, settings, resolution, lambda_window)
    passed = None
    if cmd.needs_scenario:
        if scenario is None:
            raise ValidationFailure(f"command '{command}' needs --scenario")
        selected = [(k, a) for k, a in enumerate(scenario.analyses) if a.kind == command]
        if not selected:
            raise ScenarioError(f"scenario '{scenario.name}' declares no '{command}' analysis")
        results: List[AnalysisRecord] = []
        for index, analysis in selected:
            label = analysis.name or f"{command}_{index}"
            logger.info("running %s analysis '%s'", command, label)
            results.append(cmd.handler(ctx, analysis, label))
    else:
        results, passed = cmd.handler(ctx)

    summary = RunSummary(
        command=command,
        scenario=scenario.name if scenario is not None else "-",
        seed=_effective_seed(settings, scenario),
        eps_rank=settings.eps_rank,
        results=results,
        passed=passed,
    )
    write_json(ctx.output(SUMMARY_FILE), summary)
    return summary
