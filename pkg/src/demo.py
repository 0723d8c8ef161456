"""Worked examples with known capacities, heights and divisors.

Every row compares a measured invariant with its closed-form value; a row
passes within 10 % relative error.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy import stats

from src.bundle import ROUNDOFF_EPS_RANK, BundleComplex, BundleMap
from src.excat import ExtObject, direct_sum, is_zero
from src.expressions import coordinate_names, evaluate, parse_expression
from src.germ import germ_height
from src.measure import Factor, SampleSpace, build_grid
from src.schemas import DemoRow
from src.spectral import StepFunction, WindowPolicy, capacity, dilatation_compare, sdf_from_map
from src.torus import MappingTorusSpec, torus_cohomology, torus_sequence_report

logger = logging.getLogger(__name__)

TOLERANCE = 0.1
JORDAN_EPS_RANK = 1e-14


@dataclass(frozen=True)
class DemoConfig:
    circle_cells: int = 200_000
    line_cells: int = 200_000
    square_cells: int = 2000
    power_square_cells: int = 1000
    cube_cells: int = 160
    germ_cells: int = 20_000
    jordan_cells: int = 200_000

    @classmethod
    def quick(cls) -> "DemoConfig":
        return cls(circle_cells=20_000, line_cells=20_000, square_cells=600,
                   power_square_cells=400, cube_cells=80, germ_cells=20_000, jordan_cells=20_000)


def make_row(case: str, parameter: str, expected: float, measured: float,
             tol: float = TOLERANCE) -> DemoRow:
    if expected:
        rel = abs(measured - expected) / abs(expected)
    else:
        rel = abs(measured)
    if math.isnan(rel):
        rel = math.inf
    return DemoRow(case=case, parameter=parameter, expected=expected, measured=measured,
                   rel_error=rel, passed=rel <= tol)


def scalar_field(space: SampleSpace, text: str) -> BundleMap:
    node = parse_expression(text, coordinate_names(space.dim))
    env = {name: space.coordinate(k) for k, name in enumerate(coordinate_names(space.dim))}
    return BundleMap.from_scalar(space, evaluate(node, env, space.size))


def field_sdf(space: SampleSpace, text: str) -> StepFunction:
    # a scalar field has a kernel only where it is exactly zero
    return sdf_from_map(ExtObject(scalar_field(space, text)), relative_cutoff=True)


def _equivalence_row(case: str, parameter: str, F: Callable, G: Callable,
                     window: Tuple[float, float], expect_equivalent: bool = True) -> DemoRow:
    verdict = dilatation_compare(F, G, window).verdict
    wanted = "equivalent" if expect_equivalent else "inequivalent"
    return make_row(case, parameter, 1.0, 1.0 if verdict == wanted else 0.0)


def circle_family(config: DemoConfig, nus: Sequence[float] = (0.5, 1.0, 2.0),
                  theta: float = 0.7) -> List[DemoRow]:
    """|z - e^{i theta}|^nu on the circle: capacity nu."""
    space = build_grid([Factor("circle", 2 * math.pi)], config.circle_cells)
    rows = []
    for nu in nus:
        F = field_sdf(space, f"abs(cis(x1) - cis({theta}))^{nu}")
        est = capacity(F, WindowPolicy(model="power"))
        rows.append(make_row("4.4", f"nu={nu:g}", nu, est.capacity))
    return rows


def transversal_powers(config: DemoConfig, ms: Sequence[int] = (1, 2, 3)) -> List[DemoRow]:
    """f^m for a transversal analytic f on a line: capacity m, SDF ~ lambda^(1/m)."""
    space = build_grid([Factor("interval", lower=-1.0, upper=1.0)], config.line_cells)
    rows = []
    for m in ms:
        F = field_sdf(space, f"sin(x1)^{m}")
        est = capacity(F, WindowPolicy.mass("power"))
        rows.append(make_row("4.6", f"m={m}", float(m), est.capacity))
        rows.append(_equivalence_row("4.6", f"m={m} ~ lambda^(1/{m})", F,
                                     lambda lam, m=m: np.asarray(lam) ** (1.0 / m), est.fit_window))
    return rows


def direct_sums(config: DemoConfig,
                pairs: Sequence[Tuple[int, int]] = ((1, 3), (2, 2))) -> List[DemoRow]:
    """|x|^a (+) |x|^b on a line: the capacity of a direct sum is the larger one."""
    space = build_grid([Factor("interval", lower=-1.0, upper=1.0)], config.line_cells)
    rows = []
    for a, b in pairs:
        summed = direct_sum(ExtObject(scalar_field(space, f"abs(x1)^{a}")),
                            ExtObject(scalar_field(space, f"abs(x1)^{b}")))
        F = sdf_from_map(summed, eps_rank=ROUNDOFF_EPS_RANK, relative_cutoff=True)
        est = capacity(F, WindowPolicy.mass("power"))
        rows.append(make_row("3.10", f"|x|^{a} + |x|^{b}", float(max(a, b)), est.capacity))
    return rows


def cross(config: DemoConfig) -> List[DemoRow]:
    """xy on the unit torus: F ~ lambda (1 - log lambda), capacity 1."""
    n = config.square_cells
    space = build_grid([Factor("torus", 1.0), Factor("torus", 1.0)], (n, n))
    F = field_sdf(space, "x1*x2")
    est = capacity(F)
    window = (1e-4, 1e-2)
    grid = np.logspace(-4, -2, 201)
    fit = stats.linregress(1.0 - np.log(grid), F(grid) / grid)
    return [
        make_row("4.7", "capacity", 1.0, est.capacity),
        _equivalence_row("4.7", "inequivalent to lambda", F, lambda lam: np.asarray(lam), window,
                         expect_equivalent=False),
        make_row("4.7", "R^2 of F/lambda against 1 - log lambda", 1.0, float(fit.rvalue ** 2),
                 tol=0.01),
    ]


def tangency(config: DemoConfig, ks: Sequence[int] = (1, 2, 3), half_width: float = 2.0) -> List[DemoRow]:
    """y (y - x^k): capacity 2k / (k + 1)."""
    n = config.square_cells
    axis = Factor("interval", lower=-half_width, upper=half_width)
    space = build_grid([axis, axis], (n, n))
    rows = []
    for k in ks:
        F = field_sdf(space, f"x2*(x2 - x1^{k})")
        est = capacity(F)
        rows.append(make_row("4.8", f"k={k}", 2.0 * k / (k + 1), est.capacity))
    return rows


def power_family(config: DemoConfig,
                 cases: Sequence[Tuple[int, int]] = ((2, 1), (3, 1), (2, 2))) -> List[DemoRow]:
    """(sum x_i^2)^m on T^n: capacity 2m / n, SDF ~ lambda^(n / 2m)."""
    rows = []
    for n, m in cases:
        cells = config.power_square_cells if n == 2 else config.cube_cells
        space = build_grid([Factor("torus", 1.0)] * n, cells)
        radius = " + ".join(f"x{k}^2" for k in range(1, n + 1))
        F = field_sdf(space, f"({radius})^{m}")
        policy = WindowPolicy.mass("power") if n == 2 else WindowPolicy(model="power")
        est = capacity(F, policy)
        rows.append(make_row("4.9", f"n={n},m={m}", 2.0 * m / n, est.capacity))
        rows.append(_equivalence_row("4.9", f"n={n},m={m} ~ lambda^({n}/{2 * m})", F,
                                     lambda lam, e=n / (2.0 * m): np.asarray(lam) ** e, est.fit_window))
    return rows


def planted_germs(config: DemoConfig,
                  planted: Sequence[Tuple[int, ...]] = ((1,), (2,), (1, 3), (2, 4)),
                  t0: float = 0.3, epsilon: float = 0.2) -> List[DemoRow]:
    """diag((t - t0)^k_1, ...): height max k_i, equal to the local capacity."""
    space = build_grid([Factor("interval", lower=-1.0, upper=1.0)], config.germ_cells)
    rows = []
    for orders in planted:
        maps = [scalar_field(space, f"(x1 - {t0})^{k}").blocks[:, 0, 0] for k in orders]
        blocks = np.zeros((space.size, len(orders), len(orders)), dtype=np.complex128)
        for j, values in enumerate(maps):
            blocks[:, j, j] = values
        C = BundleComplex.from_maps([BundleMap.from_blocks(space, blocks)])
        report = germ_height(C, 1, t0, epsilon, strict=False)
        label = ",".join(str(k) for k in orders)
        rows.append(make_row("4.13", f"height k=({label})", float(max(orders)), float(report.height)))
        rows.append(make_row("4.13", f"capacity k=({label})", float(max(orders)),
                             report.local_capacity.capacity))
    return rows


def jordan_block(m: int, eigenvalue: complex = 1.0) -> np.ndarray:
    return eigenvalue * np.eye(m) + np.diag(np.ones(m - 1), 1)


def jordan_oracle_order(m: int, samples: int = 25) -> int:
    """Exponent of sigma_min(tau I - J_m) in |tau - 1|, sampled near tau = 1."""
    xi = np.logspace(-4, -2, samples)
    tau = np.exp(1j * xi)
    J = jordan_block(m)
    sigma = np.array([np.linalg.svd(t * np.eye(m) - J, compute_uv=False)[-1] for t in tau])
    slope = stats.linregress(np.log(np.abs(tau - 1.0)), np.log(sigma)).slope
    return int(round(slope))


def mapping_torus(config: DemoConfig, ms: Sequence[int] = (1, 2, 3)) -> List[DemoRow]:
    """tau = e^{i xi} against a Jordan block of size m with eigenvalue 1: capacity m."""
    space = build_grid([Factor("circle", 2 * math.pi)], config.jordan_cells)
    tau = np.exp(1j * space.coordinate(0))
    rows = []
    for m in ms:
        expected = jordan_oracle_order(m)
        spec = MappingTorusSpec(space, tau, {0: jordan_block(m)}, eps_rank=JORDAN_EPS_RANK)
        report = torus_sequence_report(spec, 1, JORDAN_EPS_RANK,
                                       WindowPolicy(lo=1e-8, hi=1e-4, model="power"))
        measured = report.ext_capacity.capacity if report.ext_capacity else 0.0
        rows.append(make_row("6.12.5", f"Jordan m={m}", float(expected), measured))
    missing = MappingTorusSpec(space, tau, {0: np.array([[2.0]])})
    vanished = is_zero(torus_cohomology(missing, 1))
    rows.append(make_row("6.12.5", "spectrum {2} misses tau(Z): vanishes", 1.0, 1.0 if vanished else 0.0))
    return rows


SECTIONS: List[Callable[[DemoConfig], List[DemoRow]]] = [
    circle_family,
    transversal_powers,
    direct_sums,
    cross,
    tangency,
    power_family,
    planted_germs,
    mapping_torus,
]


def run_demo(config: DemoConfig = DemoConfig()) -> List[DemoRow]:
    rows: List[DemoRow] = []
    for section in SECTIONS:
        section_rows = section(config)
        for row in section_rows:
            level = logging.INFO if row.passed else logging.WARNING
            logger.log(level, "%s %s: expected %.4g, measured %.4g", row.case, row.parameter,
                       row.expected, row.measured)
        rows.extend(section_rows)
    return rows
