"""Scenario analyses, one command per analysis kind."""
import logging
from typing import Optional

import numpy as np

from src.commands.context import RunContext
from src.commands.router import CommandRouter
from src.divisor import (
    DetectionPolicy,
    annotate_multiplicities,
    describe_clusters,
    divisor_of_complex,
    divisor_of_map,
    divisor_of_object,
)
from src.errors import ScenarioError
from src.excat import ExtObject, extended_cohomology, injective_representative
from src.exports import write_branches_csv, write_divisor_csv, write_json, write_mask_grid, write_sdf_csv
from src.germ import germ_analysis
from src.measure import DensityMeasure, region_mask, restrict_measure
from src.schemas import AnalysisRecord, AnalysisSpec, BettiReport
from src.spectral import capacity, sdf_from_map
from src.torus import torus_sequence_report

logger = logging.getLogger(__name__)

analysis_router = CommandRouter(tags=["analyses"])

EXCEPTIONAL_FRACTION = 0.05


def _measure(ctx: RunContext, analysis: AnalysisSpec) -> Optional[DensityMeasure]:
    if analysis.region is None:
        return None
    lower, upper = analysis.region
    mask = region_mask(ctx.space, lower, upper)
    if not mask.any():
        raise ScenarioError(f"region {analysis.region} contains no cell")
    return restrict_measure(ctx.space, mask)


def _object(ctx: RunContext, analysis: AnalysisSpec) -> ExtObject:
    return ExtObject(ctx.scenario.bundle_map(analysis.target, ctx.space))


def _sdf(ctx: RunContext, analysis: AnalysisSpec):
    eps = ctx.eps_rank(analysis)
    X = injective_representative(_object(ctx, analysis), eps)
    return sdf_from_map(X, _measure(ctx, analysis), eps_rank=eps)


@analysis_router.command("sdf", "spectral density function of a field")
def run_sdf(ctx: RunContext, analysis: AnalysisSpec, label: str) -> AnalysisRecord:
    F = _sdf(ctx, analysis)
    csv_path = write_sdf_csv(ctx.output(f"{label}_sdf.csv"), F)
    report = {"total": F.total, "breakpoints": int(F.breakpoints.size),
              "smallest_breakpoint": float(F.breakpoints[0]) if F.breakpoints.size else None}
    return AnalysisRecord(name=label, kind="sdf", outputs=[csv_path.name], report=report)


@analysis_router.command("capacity", "Novikov-Shubin number and capacity of a field")
def run_capacity(ctx: RunContext, analysis: AnalysisSpec, label: str) -> AnalysisRecord:
    F = _sdf(ctx, analysis)
    estimate = capacity(F, ctx.window_policy(analysis))
    csv_path = write_sdf_csv(ctx.output(f"{label}_sdf.csv"), F)
    json_path = write_json(ctx.output(f"{label}_capacity.json"), estimate)
    return AnalysisRecord(name=label, kind="capacity", outputs=[csv_path.name, json_path.name],
                          report=estimate.model_dump())


@analysis_router.command("divisor", "divisor of a torsion field")
def run_divisor(ctx: RunContext, analysis: AnalysisSpec, label: str) -> AnalysisRecord:
    eps = ctx.eps_rank(analysis)
    X = _object(ctx, analysis)
    policy = DetectionPolicy(mode=analysis.mode, c_grid=analysis.c_grid, eps_rank=eps,
                             budget_fraction=analysis.budget if analysis.budget is not None else 0.25)
    if np.array_equal(X.source.dims, X.target.dims):
        report = divisor_of_map(X.alpha, policy)
    else:
        report = divisor_of_object(X, policy)
    if analysis.multiplicities:
        annotate_multiplicities(report, X, eps_rank=eps)
    else:
        describe_clusters(report)
    summary = report.summary()
    outputs = [
        write_divisor_csv(ctx.output(f"{label}_divisor.csv"), report).name,
        write_mask_grid(ctx.output(f"{label}_mask.csv"), report).name,
        write_json(ctx.output(f"{label}_divisor.json"), summary).name,
    ]
    return AnalysisRecord(name=label, kind="divisor", outputs=outputs, report=summary.model_dump())


@analysis_router.command("betti", "generic Betti numbers and divisor of a complex")
def run_betti(ctx: RunContext, analysis: AnalysisSpec, label: str) -> AnalysisRecord:
    eps = ctx.eps_rank(analysis)
    C = ctx.scenario.bundle_complex(analysis.target, ctx.space)
    coh = extended_cohomology(C, eps)
    policy = DetectionPolicy(mode=analysis.mode, c_grid=analysis.c_grid, eps_rank=eps)
    found = divisor_of_complex(C, eps, policy)
    describe_clusters(found.report)
    for d in coh.degrees:
        if d.exceptional_mass > EXCEPTIONAL_FRACTION * ctx.space.total_measure:
            logger.warning("%s: Betti number of degree %d jumps on %.3g of the measure; "
                           "proj_dim leaves those cells out, refine the grid", label, d.degree,
                           d.exceptional_mass / ctx.space.total_measure)
    report = BettiReport(
        generic_betti=found.generic_betti,
        proj_dims=[d.proj_dim for d in coh.degrees],
        betti_integrals=[d.betti_integral for d in coh.degrees],
        exceptional_masses=[d.exceptional_mass for d in coh.degrees],
        torsion_all=found.torsion_all,
        vanishes=found.vanishes,
        jump_cells=int(found.report.exact_jumps.sum()),
        divisor=found.report.summary(),
    )
    outputs = [
        write_divisor_csv(ctx.output(f"{label}_divisor.csv"), found.report).name,
        write_json(ctx.output(f"{label}_betti.json"), report).name,
    ]
    return AnalysisRecord(name=label, kind="betti", outputs=outputs, report=report.model_dump())


@analysis_router.command("germ", "germ height at a divisor point of a 1-D complex")
def run_germ(ctx: RunContext, analysis: AnalysisSpec, label: str) -> AnalysisRecord:
    C = ctx.scenario.bundle_complex(analysis.target, ctx.space)
    report, branches = germ_analysis(C, analysis.degree, analysis.t0, analysis.epsilon,
                                     ctx.eps_rank(analysis))
    outputs = [
        write_branches_csv(ctx.output(f"{label}_branches.csv"), branches).name,
        write_json(ctx.output(f"{label}_germ.json"), report).name,
    ]
    return AnalysisRecord(name=label, kind="germ", outputs=outputs, report=report.model_dump())


@analysis_router.command("torus", "extended cohomology of a mapping torus")
def run_torus(ctx: RunContext, analysis: AnalysisSpec, label: str) -> AnalysisRecord:
    eps = ctx.eps_rank(analysis)
    spec = ctx.scenario.torus_spec(ctx.space, eps)
    detection = DetectionPolicy(mode=analysis.mode, c_grid=analysis.c_grid, eps_rank=eps)
    policy = ctx.window_policy(analysis) if analysis.lambda_window or ctx.lambda_window else None
    report = torus_sequence_report(spec, analysis.degree, eps, policy, detection)
    json_path = write_json(ctx.output(f"{label}_torus.json"), report)
    return AnalysisRecord(name=label, kind="torus", outputs=[json_path.name], report=report.model_dump())
