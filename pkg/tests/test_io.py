import filecmp
import json
import math
import os

import numpy as np
import pytest

from dplqg.cli import main
from dplqg.errors import DomainError, ScenarioError, ScenarioValidationError
from dplqg.io import (
    ResultBundle,
    Table,
    coupled_cost_matrix,
    load_scenario,
    read_table,
    scenario_from_dict,
    scenario_hash,
    scenario_to_dict,
    write_results,
    write_table,
)
from dplqg.matrix import is_positive_definite
from dplqg.presets import PRESETS, case_study_document, run_preset


def minimal_doc():
    return {
        "agents": [{
            "A": [[1.0]], "B": [[1.0]], "C": [[1.0]], "W": [[1.0]],
            "privacy": {"epsilon": 1.0, "delta": 0.01},
            "reference_privacy": {"epsilon": 1.0, "delta": 0.1},
            "reference_limit": [1.0],
        }],
        "cost": {"Q": [[1.0]], "R": {"scaled_identity": 0.5}},
        "sim": {"steps": 10, "seed": 3},
    }


def write_doc(tmp_path, doc, name="sc.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


class TestLoad:
    def test_minimal(self, tmp_path):
        sc = load_scenario(write_doc(tmp_path, minimal_doc()))
        assert len(sc.agents) == 1 and sc.steps == 10 and sc.seed == 3
        np.testing.assert_array_equal(sc.R, [[0.5]])

    def test_seed_override(self, tmp_path):
        assert load_scenario(write_doc(tmp_path, minimal_doc()), seed=11).seed == 11

    def test_non_pd_process_noise_names_key(self, tmp_path):
        doc = minimal_doc()
        doc["agents"][0]["W"] = [[-1.0]]
        with pytest.raises(ScenarioValidationError) as info:
            load_scenario(write_doc(tmp_path, doc))
        assert info.value.key == "W" and info.value.section == "agents[0]"
        assert "agents[0].W" in str(info.value)

    @pytest.mark.parametrize("mutate, key", [
        (lambda d: d["agents"][0].pop("C"), "C"),
        (lambda d: d["agents"][0].update(B=[[1.0], [2.0]]), "B"),
        (lambda d: d["agents"][0].update(reference_limit=[1.0, 2.0]), "reference_limit"),
        (lambda d: d["agents"][0].update(privacy={"epsilon": -1, "delta": 0.01}), "privacy"),
        (lambda d: d["cost"].update(Q=[[1.0, 0.0], [0.0, 1.0]]), "Q"),
        (lambda d: d["cost"].update(Q=[[-1.0]]), "Q"),
        (lambda d: d["cost"].update(R={"bogus": 1}), "R"),
    ])
    def test_validation_errors(self, tmp_path, mutate, key):
        doc = minimal_doc()
        mutate(doc)
        with pytest.raises(ScenarioValidationError) as info:
            load_scenario(write_doc(tmp_path, doc))
        assert info.value.key == key

    def test_bad_sim_section(self, tmp_path):
        doc = minimal_doc()
        doc["sim"]["steps"] = 0
        with pytest.raises(ScenarioValidationError) as info:
            load_scenario(write_doc(tmp_path, doc))
        assert info.value.section == "sim"

    def test_parse_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{ not json")
        with pytest.raises(ScenarioError, match="line 1"):
            load_scenario(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="cannot read"):
            load_scenario(str(tmp_path / "nope.json"))

    def test_case_study_document(self):
        sc = scenario_from_dict(case_study_document())
        assert len(sc.agents) == 100 and sc.steps == 100
        a = sc.agents[0]
        np.testing.assert_allclose(a.A, [[1.0, 0.1], [0.0, 1.0]])
        np.testing.assert_allclose(a.B, [[0.005], [0.1]])
        np.testing.assert_array_equal(a.reference_limit, [1.0, 1.0])
        assert a.privacy.epsilon == pytest.approx(math.log(3)) and a.privacy.delta == 0.001
        assert a.reference_privacy.delta == 0.2
        assert sc.Q.shape == (200, 200) and np.all(np.diag(sc.Q) == 500)
        assert np.count_nonzero(sc.Q - np.diag(np.diag(sc.Q))) > 0
        assert is_positive_definite(sc.Q)


class TestCoupling:
    def test_symmetric_pd_and_reproducible(self):
        a = coupled_cost_matrix(20, 500.0, -5, 5, seed=1)
        np.testing.assert_array_equal(a, a.T)
        np.testing.assert_array_equal(a, coupled_cost_matrix(20, 500.0, -5, 5, seed=1))
        assert is_positive_definite(a)

    def test_shrinks_until_pd(self):
        a = coupled_cost_matrix(30, 1.0, -1, 1, seed=2)
        assert is_positive_definite(a)
        off = a - np.eye(30)
        assert 0 < np.abs(off).max() < 1

    def test_gives_up(self):
        with pytest.raises(ScenarioValidationError):
            coupled_cost_matrix(30, 1e-6, 10, 20, seed=0)


class TestHash:
    def test_round_trip_keeps_hash(self):
        sc = scenario_from_dict(minimal_doc())
        again = scenario_from_dict(scenario_to_dict(sc))
        assert scenario_hash(sc) == scenario_hash(again)

    def test_changes_with_semantic_fields(self):
        base = scenario_hash(scenario_from_dict(minimal_doc()))
        for mutate in (lambda d: d["sim"].update(seed=4), lambda d: d["agents"][0].update(A=[[0.9]]),
                       lambda d: d["agents"][0]["privacy"].update(epsilon=2.0), lambda d: d["cost"].update(Q=[[2.0]])):
            doc = minimal_doc()
            mutate(doc)
            assert scenario_hash(scenario_from_dict(doc)) != base

    def test_name_is_not_semantic(self):
        doc = minimal_doc()
        doc["name"] = "renamed"
        assert scenario_hash(scenario_from_dict(doc)) == scenario_hash(scenario_from_dict(minimal_doc()))


class TestResults:
    def test_table_round_trip(self, tmp_path):
        rows = np.array([[0.0, math.pi, -1e-300], [1.0, 1 / 3, 1e300]])
        p = str(tmp_path / "t.csv")
        write_table(p, Table(["k", "a", "b"], rows))
        back = read_table(p)
        assert back.columns == ["k", "a", "b"]
        np.testing.assert_array_equal(back.rows, rows)

    def test_empty_table_is_header_only(self, tmp_path):
        b = ResultBundle(name="x", seed=0)
        b.add_table("trace", ["a", "b"], np.empty((0, 2)))
        write_results(b, tmp_path)
        assert (tmp_path / "trace.csv").read_text() == "k,a,b\n"

    def test_manifest(self, tmp_path):
        sc = scenario_from_dict(minimal_doc())
        b = ResultBundle(name="x", seed=3, scenario=sc, reports={"r": {"v": np.float64(1.5), "w": math.inf}})
        b.add_table("t", ["a"], [[1.0], [2.0]])
        files = write_results(b, tmp_path)
        assert files == ["manifest.json", "reports.json", "scenario.json", "t.csv"]
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["scenario_hash"] == scenario_hash(sc) and man["seed"] == 3
        assert json.loads((tmp_path / "reports.json").read_text())["r"] == {"v": 1.5, "w": "inf"}
        assert read_table(str(tmp_path / "t.csv")).rows[:, 0].tolist() == [0.0, 1.0]

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        from dplqg.errors import DplqgError
        with pytest.raises(DplqgError, match="cannot write"):
            write_results(ResultBundle(name="x", seed=0), str(blocker / "sub"))


class TestPresets:
    def test_table1(self):
        t = run_preset("table1").tables["table1"]
        cols = {c: t.rows[:, i] for i, c in enumerate(t.columns)}
        np.testing.assert_allclose(cols["epsilon"], [0.1, 0.2, 0.4, 0.6, 0.8, 1.0])
        np.testing.assert_allclose(cols["trace_sigma_bar"], [38.821, 17.083, 7.981, 5.155, 3.771, 2.9505], rtol=1e-3)
        np.testing.assert_allclose(cols["upper"], [560.93, 145.10, 38.658, 18.21, 10.81, 7.2736], rtol=1e-3)
        np.testing.assert_allclose(cols["lower"], [1.9929, 1.9728, 1.9016, 1.8021, 1.6878, 1.5687], rtol=1e-4)
        assert np.all(cols["prior_lower"] <= cols["trace_sigma"]) and np.all(cols["trace_sigma"] <= cols["prior_upper"])

    def test_unknown(self):
        with pytest.raises(DomainError, match="unknown preset"):
            run_preset("nope")

    def test_cost_rate_sweep(self):
        t = run_preset("cost-rate-sweep").tables["cost_rate"]
        assert t.rows.shape == (20, 7)
        lo, st, hi = t.rows[:, 2], t.rows[:, 3], t.rows[:, 4]
        assert np.all(lo <= st) and np.all(st <= hi)

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_reproducible(self, tmp_path, name):
        write_results(run_preset(name, seed=5), tmp_path / "a")
        write_results(run_preset(name, seed=5), tmp_path / "b")
        files = sorted(os.listdir(tmp_path / "a"))
        assert files == sorted(os.listdir(tmp_path / "b"))
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
        assert mismatch == [] and errors == []


class TestCli:
    def test_verbs_on_minimal_scenario(self, tmp_path, capsys):
        path = write_doc(tmp_path, minimal_doc())
        for verb in ("synth", "cost", "simulate"):
            assert main([verb, "--scenario", path]) == 0
            capsys.readouterr()
        assert main(["calibrate", "--scenario", path, "--band", "1.01", "10"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["feasible"] and out["lower"] < out["upper"]
        assert main(["bounds", "--scenario", path, "--out", str(tmp_path / "b")]) == 0
        rep = json.loads((tmp_path / "b" / "reports.json").read_text())["bounds"]
        lo, hi = rep["trace_sigma"]
        assert lo <= rep["exact"]["trace_sigma"] <= hi

    def test_calibrate_cost_cap(self, tmp_path, capsys):
        path = write_doc(tmp_path, minimal_doc())
        assert main(["calibrate", "--scenario", path, "--cost-cap", "50"]) == 0
        assert json.loads(capsys.readouterr().out)["epsilon_min"] > 0

    def test_simulate_bundle(self, tmp_path, capsys):
        doc = minimal_doc()
        doc["sim"]["runs"] = 2
        path = write_doc(tmp_path, doc)
        assert main(["simulate", "--scenario", path, "--out", str(tmp_path / "s"), "--nonprivate"]) == 0
        files = sorted(os.listdir(tmp_path / "s"))
        assert {"trace_run0.csv", "trace_run1.csv", "manifest.json", "scenario.json"} <= set(files)
        t = read_table(str(tmp_path / "s" / "trace_run0.csv"))
        assert t.rows.shape[0] == 10 and t.columns[0] == "k"

    def test_preset_out(self, tmp_path, capsys):
        assert main(["preset", "table1", "--out", str(tmp_path / "t")]) == 0
        assert (tmp_path / "t" / "table1.csv").exists()

    def test_exit_codes(self, tmp_path, capsys):
        assert main(["synth", "--scenario", str(tmp_path / "missing.json")]) == 2
        doc = minimal_doc()
        doc["agents"][0]["W"] = [[0.0]]
        assert main(["synth", "--scenario", write_doc(tmp_path, doc)]) == 3
        path = write_doc(tmp_path, minimal_doc(), "ok.json")
        assert main(["calibrate", "--scenario", path, "--band", "1.0", "3.0"]) == 5
        assert main(["calibrate", "--scenario", path, "--cost-cap", "0.01"]) == 5
        assert main(["calibrate", "--scenario", path]) == 1
        err = capsys.readouterr().err
        assert "agents[0].W" in err
