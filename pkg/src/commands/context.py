from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Tuple

from src.measure import SampleSpace
from src.scenario import Scenario
from src.schemas import AnalysisSpec
from src.settings import Settings
from src.spectral import WindowPolicy


@dataclass
class RunContext:
    """Everything a command handler needs: the scenario, overrides and the output directory."""
    scenario: Optional[Scenario]
    command: str
    output_dir: Path
    settings: Settings
    resolution: Optional[List[int]] = None
    lambda_window: Optional[Tuple[float, float]] = None

    @cached_property
    def space(self) -> SampleSpace:
        return self.scenario.build_space(self.resolution)

    def eps_rank(self, analysis: AnalysisSpec) -> float:
        return analysis.eps_rank if analysis.eps_rank is not None else self.settings.eps_rank

    def window_policy(self, analysis: AnalysisSpec) -> WindowPolicy:
        if analysis.window == "mass":
            return WindowPolicy.mass(analysis.model)
        lo, hi = self.lambda_window or analysis.lambda_window or (1e-4, 1e-2)
        return WindowPolicy(lo=lo, hi=hi, model=analysis.model)

    def output(self, filename: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / filename
