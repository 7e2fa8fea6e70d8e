import json

import pytest

from abrsim.scenario import ScenarioError, bundled_names, load_scenario, scenario_from_dict


def test_all_bundled_scenarios_validate():
    names = bundled_names()
    assert {"fig4-500cps", "fig5-bidir", "fig6-pathology", "becn-panic"} <= set(names)
    for name in names:
        sc = load_scenario(name)
        assert sc.validate() == [] and sc.description


def test_load_from_path(tmp_path):
    sc = load_scenario("fig4-50cps")
    path = tmp_path / "s.json"
    path.write_text(json.dumps(sc.raw))
    assert load_scenario(path).vcs[0].params == sc.vcs[0].params


def test_bad_json_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{")
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_link_direction_overrides():
    sc = scenario_from_dict({
        "nodes": {"A": {}, "B": {}},
        "links": [{"a": "A", "b": "B", "capacity": 10, "capacity_ba": 20, "delay": 0.1, "delay_ba": 0.3}],
        "vcs": [],
    })
    link = sc.link_between("B", "A")
    assert (link.capacity_from("A"), link.capacity_from("B")) == (10, 20)
    assert (link.delay_from("A"), link.delay_from("B")) == (0.1, 0.3)


def test_bidirectional_defaults_reverse():
    sc = load_scenario("fig5-bidir")
    vc = sc.vcs[0]
    assert vc.bidirectional and vc.reverse_params == vc.params


@pytest.mark.parametrize("data", [[], {"nodes": {}, "vcs": [{"id": "v"}]}, {"links": []}])
def test_malformed(data):
    with pytest.raises(ScenarioError):
        scenario_from_dict(data)
