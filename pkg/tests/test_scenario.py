from pathlib import Path

import numpy as np
import pytest

from src.errors import ScenarioError
from src.scenario import load_scenario, scenario_from_dict

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def scenario_dict(**extra) -> dict:
    raw = {
        "domain": {"factors": [{"kind": "interval", "lower": -1.0, "upper": 1.0}], "resolution": [100]},
        "fields": {"f": {"expr": "x1"}},
        "analyses": [{"kind": "capacity", "target": "f"}],
    }
    raw.update(extra)
    return raw


def test_minimal_scenario():
    scenario = scenario_from_dict(scenario_dict())
    assert scenario.name == "scenario"
    space = scenario.build_space()
    assert space.size == 100
    T = scenario.bundle_map("f", space)
    np.testing.assert_allclose(T.blocks[:, 0, 0].real, space.coordinate(0))
    assert scenario.build_space([10]).size == 10


def test_matrix_field_with_constants():
    scenario = scenario_from_dict(scenario_dict(fields={"T": {"matrix": [["x1", 2], ["0", "pi"]]}},
                                                analyses=[]))
    T = scenario.bundle_map("T", scenario.build_space())
    assert T.blocks.shape == (100, 2, 2)
    assert T.blocks[0, 1, 1] == pytest.approx(np.pi)


@pytest.mark.parametrize("raw,message", [
    (scenario_dict(domain={"factors": [{"kind": "sphere"}], "resolution": [10]}), "domain.factors.0.kind"),
    (scenario_dict(domain={"factors": [{"kind": "circle"}], "resolution": [10, 10]}), "resolution"),
    (scenario_dict(fields={"f": {"expr": "x1", "matrix": [[1]]}}), "exactly one"),
    (scenario_dict(fields={"f": {"expr": "x1 + y"}}), "field 'f'"),
    (scenario_dict(fields={"f": {"matrix": [[1, 2], [3]]}}), "equal length"),
    (scenario_dict(analyses=[{"kind": "capacity", "target": "g"}]), "unknown field 'g'"),
    (scenario_dict(analyses=[{"kind": "betti", "target": "f"}]), "unknown complex 'f'"),
    (scenario_dict(complexes={"c": {"maps": ["f"]}}, analyses=[{"kind": "germ", "target": "c"}]),
     "needs t0 and epsilon"),
    (scenario_dict(analyses=[{"kind": "torus"}]), r"\[torus\] section"),
    (scenario_dict(fields={"f": {"expr": "1 / (x1 - x1)"}}), "not finite at sample point"),
])
def test_invalid_scenarios(raw, message):
    with pytest.raises(ScenarioError, match=message):
        scenario_from_dict(raw)


def test_complex_maps_must_compose():
    fields = {"d0": {"matrix": [["x1"], ["1"]]}, "d1": {"expr": "x1"}}
    with pytest.raises(ScenarioError, match="map 0 has 2 rows"):
        scenario_from_dict(scenario_dict(fields=fields, complexes={"c": {"maps": ["d0", "d1"]}},
                                         analyses=[]))


def test_density_must_be_positive():
    scenario = scenario_from_dict(scenario_dict(measure={"density": "x1"}))
    with pytest.raises(ScenarioError):
        scenario.build_space()
    weighted = scenario_from_dict(scenario_dict(measure={"density": "1 + x1^2"}))
    assert weighted.build_space(2000).total_measure == pytest.approx(2.0 + 2.0 / 3.0, rel=1e-5)


def test_table_field(tmp_path):
    np.save(tmp_path / "values.npy", np.arange(10.0))
    raw = scenario_dict(fields={"f": {"table": "values.npy"}})
    scenario = scenario_from_dict(raw, tmp_path / "table.toml")
    T = scenario.bundle_map("f", scenario.build_space(10))
    assert T.blocks.shape == (10, 1, 1)
    with pytest.raises(ScenarioError, match="table has 10 cells"):
        scenario.bundle_map("f", scenario.build_space(12))


def test_missing_table(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read table"):
        scenario_from_dict(scenario_dict(fields={"f": {"table": "nope.npy"}}), tmp_path / "s.toml")


def test_torus_section():
    raw = {
        "domain": {"factors": [{"kind": "circle", "length": 6.283185307179586}], "resolution": [100]},
        "torus": {"tau": "cis(x1)", "phi": {"0": [[2.0]]}},
        "analyses": [{"kind": "torus"}],
    }
    scenario = scenario_from_dict(raw)
    spec = scenario.torus_spec(scenario.build_space(), 1e-8)
    assert spec.coefficient_dims == {0: 1}
    raw["torus"]["phi"] = {"zero": [[1.0]]}
    with pytest.raises(ScenarioError, match="not a nonnegative integer"):
        scenario_from_dict(raw)


def test_load_errors(tmp_path):
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("name = \n", encoding="utf-8")
    with pytest.raises(ScenarioError):
        load_scenario(bad)


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.toml")), ids=lambda p: p.stem)
def test_bundled_scenarios_load(path):
    scenario = load_scenario(path)
    assert scenario.name == path.stem
    assert scenario.analyses
