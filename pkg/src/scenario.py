"""Scenario files: TOML documents declaring a domain, fields, complexes and analyses.

    name = "circle_nu2"
    [domain]
    factors = [{kind = "circle", length = 6.283185307179586}]
    resolution = [200000]
    [fields.f]
    expr = "abs(cis(x1) - cis(0.7))^2"
    [[analyses]]
    kind = "capacity"
    target = "f"

A field is a scalar expression (``expr``), a matrix of entries that are numbers
or expressions (``matrix``), or a ``.npy`` table with one block per cell
(``table``, path relative to the scenario file).
"""
import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.bundle import BundleComplex, BundleMap
from src.errors import ExpressionError, ScenarioError
from src.expressions import Node, Number, coordinate_names, evaluate, parse_expression
from src.measure import Factor, SampleSpace, build_grid
from src.schemas import AnalysisSpec, FactorSpec, FieldSpec, ScenarioFile
from src.torus import MappingTorusSpec

logger = logging.getLogger(__name__)

PROBE_POINTS = 8

FIELD_TARGETS = ("sdf", "capacity", "divisor")
COMPLEX_TARGETS = ("betti", "germ")

Entry = Union[float, str]


def _factor(spec: FactorSpec) -> Factor:
    return Factor(spec.kind, spec.length, spec.lower, spec.upper)


def _entry(value: Entry, names: Sequence[str], where: str) -> Node:
    if isinstance(value, (int, float)):
        return Number(complex(value))
    try:
        return parse_expression(value, names)
    except ExpressionError as e:
        raise ScenarioError(f"{where}: {e.detail}") from None


def constant_matrix(rows: List[List[Entry]], where: str) -> np.ndarray:
    """Matrix of constant entries (numbers or expressions without coordinates)."""
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ScenarioError(f"{where}: matrix rows must be nonempty and of equal length")
    return np.array([[complex(evaluate(_entry(v, [], where), {}, 1)[0]) for v in row] for row in rows],
                    dtype=np.complex128)


@dataclass
class CompiledField:
    """A field in evaluable form: an expression matrix or a per-cell table."""
    name: str
    entries: Optional[List[List[Node]]] = None
    table: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int]:
        if self.entries is not None:
            return len(self.entries), len(self.entries[0])
        return self.table.shape[1], self.table.shape[2]

    def blocks(self, points: np.ndarray, env: Dict[str, np.ndarray]) -> np.ndarray:
        n = points.shape[0]
        if self.table is not None:
            if self.table.shape[0] != n:
                raise ScenarioError(
                    f"field '{self.name}': table has {self.table.shape[0]} cells, grid has {n}")
            return self.table
        m, k = self.shape
        out = np.empty((n, m, k), dtype=np.complex128)
        for r, row in enumerate(self.entries):
            for c, node in enumerate(row):
                out[:, r, c] = evaluate(node, env, n)
        return out


def _compile_field(name: str, spec: FieldSpec, names: Sequence[str], root: Path) -> CompiledField:
    given = [k for k in ("expr", "matrix", "table") if getattr(spec, k) is not None]
    if len(given) != 1:
        raise ScenarioError(f"field '{name}' needs exactly one of expr, matrix, table")
    if spec.expr is not None:
        return CompiledField(name, entries=[[_entry(spec.expr, names, f"field '{name}'")]])
    if spec.matrix is not None:
        rows = spec.matrix
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise ScenarioError(f"field '{name}': matrix rows must be nonempty and of equal length")
        return CompiledField(name, entries=[[_entry(v, names, f"field '{name}'") for v in row]
                                            for row in rows])
    path = (root / spec.table).resolve()
    try:
        table = np.load(path)
    except (OSError, ValueError) as e:
        raise ScenarioError(f"field '{name}': cannot read table {path}: {e}") from None
    table = np.asarray(table, dtype=np.complex128)
    if table.ndim == 1:
        table = table[:, None, None]
    if table.ndim != 3:
        raise ScenarioError(f"field '{name}': table must have shape (cells,) or (cells, m, k)")
    return CompiledField(name, table=table)


@dataclass
class Scenario:
    spec: ScenarioFile
    path: Optional[Path]
    factors: Tuple[Factor, ...]
    fields: Dict[str, CompiledField]
    density: Optional[Node] = None
    tau: Optional[Node] = None

    @property
    def name(self) -> str:
        if self.spec.name:
            return self.spec.name
        return self.path.stem if self.path else "scenario"

    @property
    def analyses(self) -> List[AnalysisSpec]:
        return self.spec.analyses

    def env(self, points: np.ndarray) -> Dict[str, np.ndarray]:
        return {name: points[:, k] for k, name in enumerate(coordinate_names(points.shape[1]))}

    def build_space(self, resolution: Optional[Union[int, Sequence[int]]] = None) -> SampleSpace:
        if resolution is None:
            resolution = self.spec.domain.resolution
        if not np.isscalar(resolution) and len(resolution) == 1:
            resolution = int(resolution[0])
        space = build_grid(self.factors, resolution)
        if self.density is None:
            return space
        g = evaluate(self.density, self.env(space.points), space.size)
        if np.any(np.abs(g.imag) > 0) or np.any(g.real <= 0) or not np.all(np.isfinite(g)):
            raise ScenarioError("measure density must be real, finite and positive at every cell")
        return build_grid(self.factors, resolution, g.real)

    def bundle_map(self, name: str, space: SampleSpace) -> BundleMap:
        if name not in self.fields:
            raise ScenarioError(f"unknown field '{name}'")
        compiled = self.fields[name]
        return BundleMap.from_blocks(space, compiled.blocks(space.points, self.env(space.points)))

    def bundle_complex(self, name: str, space: SampleSpace) -> BundleComplex:
        if name not in self.spec.complexes:
            raise ScenarioError(f"unknown complex '{name}'")
        return BundleComplex.from_maps([self.bundle_map(m, space)
                                        for m in self.spec.complexes[name].maps])

    def torus_spec(self, space: SampleSpace, eps_rank: float) -> MappingTorusSpec:
        if self.spec.torus is None or self.tau is None:
            raise ScenarioError("scenario has no [torus] section")
        tau = evaluate(self.tau, self.env(space.points), space.size)
        phi = {int(degree): constant_matrix(rows, f"torus phi in degree {degree}")
               for degree, rows in self.spec.torus.phi.items()}
        return MappingTorusSpec(space, tau, phi, self.spec.torus.bound, eps_rank)


def _check_references(spec: ScenarioFile, fields: Dict[str, CompiledField]) -> None:
    for cname, cspec in spec.complexes.items():
        for m in cspec.maps:
            if m not in fields:
                raise ScenarioError(f"complex '{cname}' refers to unknown field '{m}'")
        shapes = [fields[m].shape for m in cspec.maps]
        for j, ((m_rows, _), (_, k_next)) in enumerate(zip(shapes, shapes[1:])):
            if m_rows != k_next:
                raise ScenarioError(
                    f"complex '{cname}': map {j} has {m_rows} rows but map {j + 1} has {k_next} columns")
    for a in spec.analyses:
        label = a.name or a.kind
        if a.kind in FIELD_TARGETS and a.target not in fields:
            raise ScenarioError(f"analysis '{label}' refers to unknown field '{a.target}'")
        if a.kind in COMPLEX_TARGETS and a.target not in spec.complexes:
            raise ScenarioError(f"analysis '{label}' refers to unknown complex '{a.target}'")
        if a.kind == "germ" and (a.t0 is None or a.epsilon is None):
            raise ScenarioError(f"germ analysis '{label}' needs t0 and epsilon")
        if a.kind == "torus" and spec.torus is None:
            raise ScenarioError(f"torus analysis '{label}' needs a [torus] section")


def _check_finite_at_samples(scenario: Scenario, seed: int) -> None:
    """Evaluate every expression at a few random points of the domain."""
    rng = np.random.default_rng(seed)
    cols = []
    for f in scenario.factors:
        lo = f.start
        cols.append(lo + f.extent * rng.random(PROBE_POINTS))
    points = np.stack(cols, axis=1)
    env = scenario.env(points)
    checks = [(name, node) for name, cf in scenario.fields.items() if cf.entries is not None
              for row in cf.entries for node in row]
    if scenario.density is not None:
        checks.append(("measure density", scenario.density))
    if scenario.tau is not None:
        checks.append(("torus tau", scenario.tau))
    for label, node in checks:
        values = evaluate(node, env, PROBE_POINTS)
        if not np.all(np.isfinite(values)):
            bad = points[int(np.argmin(np.isfinite(values)))]
            raise ScenarioError(f"'{label}' is not finite at sample point {bad.tolist()}")


def load_scenario(path: Union[str, Path], seed: Optional[int] = None) -> Scenario:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioError(f"scenario file {path} not found") from None
    except (OSError, UnicodeDecodeError) as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"{path}: {e}") from None
    return scenario_from_dict(raw, path, seed)


def scenario_from_dict(raw: dict, path: Optional[Path] = None, seed: Optional[int] = None) -> Scenario:
    try:
        spec = ScenarioFile.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ScenarioError(f"invalid scenario at '{where}': {first['msg']}") from None

    factors = tuple(_factor(f) for f in spec.domain.factors)
    if len(spec.domain.resolution) not in (1, len(factors)):
        raise ScenarioError("domain.resolution needs one entry or one per factor")
    names = coordinate_names(len(factors))
    root = path.parent if path else Path(".")
    fields = {name: _compile_field(name, f, names, root) for name, f in spec.fields.items()}
    _check_references(spec, fields)

    density = _entry(spec.measure.density, names, "measure density") if spec.measure.density else None
    tau = _entry(spec.torus.tau, names, "torus tau") if spec.torus else None
    if spec.torus:
        for degree, rows in spec.torus.phi.items():
            if not degree.isdigit():
                raise ScenarioError(f"torus phi degree '{degree}' is not a nonnegative integer")
            constant_matrix(rows, f"torus phi in degree {degree}")
    scenario = Scenario(spec, path, factors, fields, density, tau)
    _check_finite_at_samples(scenario, spec.seed if seed is None else seed)
    logger.info("loaded scenario '%s': %d fields, %d analyses",
                scenario.name, len(fields), len(spec.analyses))
    return scenario
