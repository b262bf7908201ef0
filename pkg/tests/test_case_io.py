import numpy as np
import pytest

from wccopf.case_io import (MatpowerParseError, WindConfigError,
                            apply_stress_modifiers, load_wind_config,
                            parse_matpower_case, repair_correlation,
                            serialize_matpower_case)

import helpers


def test_round_trip_toy():
    net = helpers.triangle_network()
    text = serialize_matpower_case(net)
    assert parse_matpower_case(text) == net


def test_round_trip_bundled_case(net118):
    text = serialize_matpower_case(net118)
    assert parse_matpower_case(text) == net118
    assert net118.n_bus == 118
    assert net118.n_line == 186


def test_unlimited_line_round_trips_through_zero_rate():
    net = helpers.triangle_network(limits=(60.0, np.inf, 100.0))
    text = serialize_matpower_case(net)
    assert parse_matpower_case(text).lines[1].limit_mw == np.inf


def test_parse_error_reports_line_number():
    text = serialize_matpower_case(helpers.triangle_network())
    lines = text.splitlines()
    bus_start = next(i for i, ln in enumerate(lines) if "mpc.bus" in ln)
    lines[bus_start + 1] = "\t1\t3\tnot_a_number\t0\t0;"
    with pytest.raises(MatpowerParseError) as err:
        parse_matpower_case("\n".join(lines))
    assert err.value.line == bus_start + 2


def test_missing_bus_section_rejected():
    text = serialize_matpower_case(helpers.triangle_network())
    text = text.replace("mpc.bus", "mpc.busted", 1)
    with pytest.raises(MatpowerParseError):
        parse_matpower_case(text)


def test_nonlinear_gencost_rejected():
    text = serialize_matpower_case(helpers.triangle_network())
    lines = text.splitlines()
    start = next(i for i, ln in enumerate(lines) if "mpc.gencost" in ln)
    lines[start + 1] = "\t2\t0\t0\t3\t0.02\t10\t0;"
    with pytest.raises(MatpowerParseError):
        parse_matpower_case("\n".join(lines))


def test_slack_bus_read_from_bus_type(net118):
    assert net118.slack_bus == 69
    assert net118.reference_bus() == 69


def _wind_doc(**kw):
    doc = {"plants": [{"bus": 2, "mean_mw": 60.0, "std_mw": 18.0,
                       "policy": {"type": "reserve"}}]}
    doc.update(kw)
    return doc


def test_wind_config_parses():
    import json
    cfg = load_wind_config(json.dumps(_wind_doc(seed=5)))
    assert cfg.seed == 5
    assert cfg.plants[0].std_mw == 18.0
    assert np.array_equal(cfg.correlation, np.eye(1))


def test_wind_config_std_fraction():
    import json
    doc = {"plants": [{"bus": 2, "mean_mw": 50.0, "std_fraction": 0.1,
                       "policy": {"type": "mean_only"}}]}
    cfg = load_wind_config(json.dumps(doc))
    assert cfg.plants[0].std_mw == pytest.approx(5.0)


@pytest.mark.parametrize("mutate,fragment", [
    (lambda p: p.update(std_fraction=0.1), "not both"),
    (lambda p: p.pop("std_mw"), "std_mw or std_fraction"),
    (lambda p: p.update(policy={"type": "cap"}), "cap_mw"),
    (lambda p: p.update(policy={"type": "tracking"}), "unknown policy"),
    (lambda p: p.update(mean_mw=-3.0), "negative"),
])
def test_wind_config_rejects(mutate, fragment):
    import json
    doc = _wind_doc()
    mutate(doc["plants"][0])
    with pytest.raises(WindConfigError, match=fragment):
        load_wind_config(json.dumps(doc))


def test_wind_config_checks_buses_against_network():
    import json
    doc = _wind_doc()
    doc["plants"][0]["bus"] = 99
    with pytest.raises(WindConfigError, match="bus 99"):
        load_wind_config(json.dumps(doc), network=helpers.triangle_network())


def test_wind_config_correlation_shape_checked():
    import json
    doc = _wind_doc(correlation=[[1.0, 0.5], [0.5, 1.0]])
    with pytest.raises(WindConfigError, match="correlation"):
        load_wind_config(json.dumps(doc))


def test_repair_correlation_passes_psd_through():
    corr = np.array([[1.0, 0.4], [0.4, 1.0]])
    assert np.array_equal(repair_correlation(corr), corr)


def test_repair_correlation_projects_indefinite():
    corr = np.array([[1.0, 0.99, 0.0],
                     [0.99, 1.0, 0.99],
                     [0.0, 0.99, 1.0]])
    assert np.linalg.eigvalsh(corr).min() < 0
    with pytest.warns(UserWarning, match="indefinite"):
        fixed = repair_correlation(corr)
    assert np.linalg.eigvalsh(fixed).min() >= -1e-10
    assert np.allclose(np.diag(fixed), 1.0)


def test_repair_correlation_rejects_asymmetry():
    with pytest.raises(WindConfigError, match="symmetric"):
        repair_correlation(np.array([[1.0, 0.2], [0.6, 1.0]]))


def test_stress_modifiers():
    net = helpers.triangle_network()
    net.generators[0].p_min = 20.0
    stressed = apply_stress_modifiers(net)
    assert np.allclose(stressed.loads_mw, net.loads_mw * 1.25)
    assert stressed.lines[0].limit_mw == pytest.approx(45.0)
    assert stressed.generators[0].p_min == 0.0
    # the input network is left alone
    assert net.lines[0].limit_mw == 60.0
    assert net.generators[0].p_min == 20.0


def test_total_load_and_connectivity(net118):
    assert net118.total_load == pytest.approx(4241.6)
    assert net118.connected()
