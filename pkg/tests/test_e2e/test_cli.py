import csv
import io
import json

import pytest

from bicausal.bounds import BoundReport, SuiteResult, summarize
from bicausal.context import Context
from bicausal.measures import standard_example, standard_example_base
from bicausal.smoothing import standard_example_smooth_aw
from bicausal.state import PathMeasure
from tests.helpers import run_cli, write_measure, write_payload


@pytest.fixture
def measures(tmp_path):
    mu = write_measure(tmp_path, standard_example_base(), "base.json")
    nu = write_measure(tmp_path, standard_example(0.5), "eps.json")
    return str(mu), str(nu)


def test_standard_example(capsys):
    code, out, err = run_cli(["example", "standard", "--eps", "0.5"], capsys)
    assert code == 0, err
    payload = json.loads(out)
    assert payload["value"] == pytest.approx(1.5)
    assert payload["aw"] == pytest.approx(1.5)
    assert payload["w"] == pytest.approx(0.5)


def test_smoothed_standard_example(capsys):
    code, out, _ = run_cli(
        ["example", "standard", "--eps", "0.5", "--sigma", "0.5"],
        capsys,
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["sigma"] == 0.5
    assert payload["value"] == pytest.approx(standard_example_smooth_aw(0.5, 0.5))


@pytest.mark.parametrize("kind, expected", (("aw", 1.5), ("tv", 2.0), ("av", 1.0)))
def test_dist(measures, capsys, kind, expected):
    code, out, err = run_cli(["dist", kind, *measures, "--threads", "1"], capsys)
    assert code == 0, err
    assert json.loads(out) == {
        "distance": kind,
        "p": 1.0,
        "value": pytest.approx(expected),
    }


def test_dist_csv(measures, capsys):
    argv = ["dist", "w", *measures, "--p", "2", "--format", "csv"]
    code, out, _ = run_cli(argv, capsys)
    assert code == 0
    (row,) = list(csv.DictReader(io.StringIO(out)))
    assert row["distance"] == "w"
    assert float(row["p"]) == 2.0
    assert float(row["value"]) == pytest.approx(0.5)


def test_dist_is_deterministic(measures, capsys):
    _, first, _ = run_cli(["dist", "aw", *measures, "--p", "2"], capsys)
    _, again, _ = run_cli(
        ["dist", "aw", *measures, "--p", "2", "--threads", "1"],
        capsys,
    )
    assert first == again


@pytest.mark.parametrize(
    "payload, prefix",
    (
        ("{", "malformed-json:"),
        (
            {"d": 1, "T": 2, "atoms": [{"path": [[0], [1]], "weight": 0.9}]},
            "weight-sum:",
        ),
        (
            {"d": 1, "T": 2, "atoms": [{"path": [[0], [-1]], "weight": -1.0}]},
            "non-positive-weight:",
        ),
    ),
)
def test_bad_measure_file(tmp_path, measures, capsys, payload, prefix):
    bad = write_payload(tmp_path, payload)
    code, out, err = run_cli(["dist", "aw", str(bad), measures[1]], capsys)
    assert code == 1
    assert out == ""
    assert "error: " in err
    assert prefix in err


def test_missing_file(tmp_path, measures, capsys):
    missing = str(tmp_path / "nope.json")
    code, _, err = run_cli(["dist", "w", missing, measures[0]], capsys)
    assert code == 1
    assert "error: " in err


def test_measures_on_different_spaces(tmp_path, measures, capsys):
    single = write_measure(tmp_path, PathMeasure.dirac([0.0]), "single.json")
    code, _, err = run_cli(["dist", "aw", str(single), measures[0]], capsys)
    assert code == 1
    assert "dimension-mismatch:" in err


def test_invalid_parameter(measures, capsys):
    code, _, err = run_cli(["dist", "aw", *measures, "--p", "0.5"], capsys)
    assert code == 1
    assert "invalid-parameter: --p" in err


@pytest.mark.parametrize(
    "argv",
    (["teleport"], ["dist", "kl", "a.json", "b.json"], ["example", "standard"], []),
)
def test_usage_errors(capsys, argv):
    code, _, err = run_cli(argv, capsys)
    assert code == 1
    assert "usage: " in err


def test_modulus(measures, capsys):
    code, out, err = run_cli(
        ["modulus", measures[1], "--delta", "4", "--delta", "0.25"],
        capsys,
    )
    assert code == 0, err
    payload = json.loads(out)
    assert payload["t"] == 1
    assert payload["future"] is False
    assert [s["delta"] for s in payload["samples"]] == [0.25, 4.0]
    assert [s["value"] for s in payload["samples"]] == pytest.approx([0.5, 2.0])


def test_modulus_time_index(measures, capsys):
    code, _, err = run_cli(["modulus", measures[1], "--t", "2"], capsys)
    assert code == 1
    assert "error: " in err


def test_h_iter(measures, capsys):
    code, out, _ = run_cli(["h-iter", measures[1], "--sigma", "0.25"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["h"] == pytest.approx([0.25, 0.5])
    assert payload["sum"] == pytest.approx(0.75)


def test_clip_to_file(tmp_path, capsys):
    mu = write_measure(tmp_path, PathMeasure.dirac([3.0, 0.5]))
    target = tmp_path / "clipped.json"
    code, out, _ = run_cli(
        ["clip", str(mu), "--R", "1", "--out", str(target)],
        capsys,
        out=target,
    )
    assert code == 0
    assert json.loads(out)["atoms"] == [{"path": [[1.0], [0.5]], "weight": 1.0}]


def test_clip_csv(tmp_path, capsys):
    mu = write_measure(tmp_path, PathMeasure.dirac([3.0, 0.5]))
    code, out, _ = run_cli(["clip", str(mu), "--R", "1", "--format", "csv"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "x0,x1,weight"


def test_smooth_dist(measures, capsys):
    code, out, err = run_cli(
        [
            "smooth-dist",
            "aw",
            *measures,
            "--sigma",
            "0.5",
            "--grid-step",
            "0.25",
            "--radius-mult",
            "3",
            "--threads",
            "1",
        ],
        capsys,
    )
    assert code == 0, err
    payload = json.loads(out)
    assert set(payload) == {
        "distance",
        "p",
        "sigma",
        "noise",
        "grid_step",
        "radius_mult",
        "value",
        "budget",
    }
    assert payload["grid_step"] == 0.25
    assert payload["budget"] > 0
    assert payload["value"] > 0


def test_bounds_run(capsys):
    code, out, err = run_cli(
        ["bounds", "run", "--count", "1", "--seed", "2", "--threads", "1"],
        capsys,
    )
    assert code == 0, err
    payload = json.loads(out)
    assert payload["suite"] == "core"
    assert payload["seed"] == 2
    assert all(report["verdict"] == "pass" for report in payload["reports"])


def test_bounds_run_failure(monkeypatch, tmp_path, capsys):
    failing = BoundReport(
        bound_id="awtv",
        instance={"check": "check_awtv"},
        lhs=2.0,
        rhs=1.0,
    )

    def run_suite(self, name, seed=None, **_kwargs):
        return SuiteResult(
            suite=name,
            seed=0,
            reports=(failing,),
            summary=summarize([failing]),
        )

    monkeypatch.setattr(Context, "run_suite", run_suite)
    target = tmp_path / "core.json"
    code, out, err = run_cli(
        ["bounds", "run", "--out", str(target)],
        capsys,
        out=target,
    )
    assert code == 2
    assert json.loads(out)["reports"][0]["verdict"] == "fail"
    assert "bound-violation:" in err


def test_rates_run(capsys):
    code, out, err = run_cli(
        ["rates", "run", "--n", "8", "--n", "16", "--count", "2", "--threads", "1"],
        capsys,
    )
    assert code == 0, err
    payload = json.loads(out)
    assert payload["ns"] == [8, 16]
    assert payload["predicted_slope"] == pytest.approx(-0.5)
    assert len(payload["values"]) == 2
