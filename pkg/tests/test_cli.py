"""
Tests for the command line.
"""

import csv
import io
import json
import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from nbmc import config_base as config
from nbmc.cli import main, parse_m_grid, parse_N_grid
from nbmc.core import min_margin, mu1_bound_new, mu2_bound
from nbmc.database import list_sessions
from nbmc.exact_conf import exact_confidence
from nbmc.exceptions import ParameterError
from nbmc.models import SessionStatus
from nbmc.report import ReportEnvelope


def run_cli(capsys, *argv):
    """Run the CLI in-process; returns (exit code, stdout, stderr)."""
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv):
    code, out, err = run_cli(capsys, *argv)
    return code, json.loads(out) if out else None, err


class TestPlanCommand:
    """Tests for `nbmc plan`."""

    def test_worked_example(self, capsys):
        """Test planning 75% confidence at margin 0.2375."""
        code, report, _ = run_json(capsys, "plan", "--margin", 0.2375, "--confidence", 0.75)
        assert code == 0
        assert report["command"] == "plan"
        assert report["tool_version"] == config.TOOL_VERSION
        results = report["results"]
        assert results["N"] == 30
        assert results["c_bar"] > 0.75
        assert results["conditions"]["all_ok"] is True
        assert results["legacy"]["certifiable"] is False
        assert results["legacy"]["min_margin"] == pytest.approx(0.245, abs=5e-4)

    def test_wide_margin(self, capsys):
        """Test that a wide margin plans N = 3."""
        code, report, _ = run_json(capsys, "plan", "--margin", 2.0, "--confidence", 0.5)
        assert code == 0
        assert report["results"]["N"] == 3

    def test_legacy_certifiable_reports_p_limit(self, capsys):
        """Test that a certifiable legacy plan reports its p limit."""
        code, report, _ = run_json(capsys, "plan", "--margin", 0.5, "--confidence", 0.5)
        legacy = report["results"]["legacy"]
        assert code == 0
        if legacy["certifiable"]:
            assert 0 < legacy["p_limit"] < 1

    def test_asymmetric(self, capsys):
        """Test planning from a pair of factors."""
        code, report, _ = run_json(capsys, "plan", "--mu1", 1.4, "--mu2", 1.3, "--confidence", 0.8)
        assert code == 0
        assert report["results"]["margin"] is None
        assert report["results"]["conditions"]["all_ok"] is True

    def test_unachievable(self, capsys):
        """Test the exit code and empty stdout for an unreachable target."""
        code, out, err = run_cli(capsys, "plan", "--margin", 0.05, "--confidence", 0.99, "--max-N", 100)
        assert code == 2
        assert out == ""
        assert "error:" in err

    def test_needs_factors(self, capsys):
        """Test that --mu1 without --mu2 is a usage error."""
        code, _, err = run_cli(capsys, "plan", "--mu1", 1.4, "--confidence", 0.8)
        assert code == 2
        assert "--mu2" in err

    def test_csv(self, capsys):
        """Test CSV output for a plan."""
        code, out, _ = run_cli(capsys, "plan", "--margin", 0.2375, "--confidence", 0.75, "--format", "csv")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0
        assert len(rows) == 1
        assert rows[0]["N"] == "30"
        assert rows[0]["legacy.certifiable"] == "false"


class TestExactCommand:
    """Tests for `nbmc exact`."""

    def test_matches_library(self, capsys):
        """Test that the report matches the library result."""
        code, report, _ = run_json(capsys, "exact", "--N", 10, "--p", 0.1, "--margin", 0.5)
        expected = exact_confidence(10, 0.1, 1.5, 1.5).to_dict()
        assert code == 0
        for key in ("n1", "n2", "c1", "c2", "c", "c_bar", "margin"):
            assert report["results"][key] == expected[key]

    def test_positive_margin_under_conditions(self, capsys):
        """Test that factors at their bounds give a positive margin."""
        N = 10
        code, report, _ = run_json(
            capsys, "exact", "--N", N, "--p", 0.3, "--mu1", repr(mu1_bound_new(N)), "--mu2", repr(mu2_bound(N))
        )
        assert code == 0
        assert report["results"]["margin"] > 0
        assert report["warnings"] == []

    def test_interval_below_support(self, capsys):
        """Test the warning for an interval below N."""
        code, report, _ = run_json(capsys, "exact", "--N", 3, "--p", 0.99, "--mu1", 1.05, "--mu2", 1.05)
        assert code == 0
        assert report["results"]["c"] == 0.0
        assert report["results"]["interval_below_support"] is True
        assert any("impossible" in w for w in report["warnings"])

    def test_term_cap(self, capsys):
        """Test the exit code for an oversized sum."""
        code, out, err = run_cli(capsys, "exact", "--N", 30, "--p", 1e-9, "--margin", 0.3)
        assert code == 3
        assert out == ""
        assert "cap" in err

    def test_bad_p(self, capsys):
        """Test that p above one is a usage error."""
        code, _, _ = run_cli(capsys, "exact", "--N", 10, "--p", 1.5, "--margin", 0.3)
        assert code == 2


class TestRunCommand:
    """Tests for `nbmc run`."""

    def test_all_ones_file(self, capsys, ones_file):
        """Test a replay file where every trial occurs."""
        path = ones_file(12)
        code, report, _ = run_json(capsys, "run", "--N", 10, "--margin", 0.5, "--source", "file", "--path", path)
        results = report["results"]
        assert code == 0
        assert results["status"] == "stopped"
        assert results["n"] == 10
        assert results["p_hat"] == 0.9

    def test_malformed_line(self, capsys, tmp_path):
        """Test the exit code and message for a bad line."""
        path = tmp_path / "bad.txt"
        path.write_text("1\n# comment\n2\n")
        code, out, err = run_cli(capsys, "run", "--N", 3, "--margin", 0.5, "--source", "file", "--path", path)
        assert code == 4
        assert out == ""
        assert f"{path}:3:" in err

    def test_exhausted(self, capsys, ones_file):
        """Test a replay file that ends early."""
        path = ones_file(3)
        code, report, _ = run_json(capsys, "run", "--N", 10, "--margin", 0.5, "--source", "file", "--path", path)
        assert code == 0
        assert report["results"]["status"] == "exhausted"
        assert report["results"]["trials"] == 3
        assert report["warnings"]

    def test_synthetic_golden(self, capsys):
        """Test the stopping time recorded for seed 7 at p = 0.1."""
        code, report, _ = run_json(
            capsys, "run", "--N", 10, "--margin", 0.5, "--source", "synthetic", "--p", 0.1, "--seed", 7
        )
        draws = np.random.Generator(np.random.PCG64(7)).random(config.RNG_BLOCK_SIZE) < 0.1
        expected_n = int(np.flatnonzero(draws)[9]) + 1
        assert code == 0
        assert expected_n == 97
        assert report["results"]["n"] == expected_n
        assert report["results"]["p_hat"] == 9 / expected_n

    def test_synthetic_needs_seed(self, capsys):
        """Test that a synthetic run without --seed is rejected."""
        code, _, err = run_cli(capsys, "run", "--N", 10, "--margin", 0.5, "--p", 0.1)
        assert code == 2
        assert "--seed" in err

    def test_stdin(self, capsys, monkeypatch):
        """Test reading outcomes from stdin."""
        monkeypatch.setattr(sys, "stdin", io.StringIO("0\n1\n1\n1\n"))
        code, report, _ = run_json(capsys, "run", "--N", 3, "--margin", 0.5, "--source", "stdin")
        assert code == 0
        assert report["results"]["n"] == 4

    def test_max_trials(self, capsys):
        """Test that --max-trials caps the run."""
        code, report, _ = run_json(
            capsys, "run", "--N", 10, "--margin", 0.5, "--p", 1e-6, "--seed", 1, "--max-trials", 100
        )
        assert code == 0
        assert report["results"]["status"] == "capped"
        assert report["results"]["trials"] == 100

    def test_store_and_resume(self, capsys, tmp_path):
        """Test that a stored capped run resumes to the uninterrupted result."""
        url = f"sqlite:///{tmp_path / 'runs.db'}"
        base = ["run", "--N", 10, "--margin", 0.5, "--p", 0.05, "--seed", 11]
        _, full, _ = run_json(capsys, *base)
        assert full["results"]["n"] == 121
        cap = (full["results"]["n"] + 10) // 2

        code, partial, _ = run_json(capsys, *base, "--max-trials", cap, "--store", url)
        assert code == 0
        assert partial["results"]["status"] == "capped"
        session_id = partial["results"]["session_id"]

        code, resumed, _ = run_json(capsys, "run", "--store", url, "--resume", session_id)
        assert code == 0
        assert resumed["results"]["status"] == "stopped"
        assert resumed["results"]["n"] == full["results"]["n"]
        assert resumed["results"]["session_id"] == session_id

    def test_malformed_line_saves_partial_session(self, capsys, tmp_path):
        """Test that a stored run keeps its progress when the replay file has a bad line."""
        url = f"sqlite:///{tmp_path / 'runs.db'}"
        path = tmp_path / "trials.txt"
        path.write_text("1\n0\n# note\n1\nx\n1\n")
        code, out, err = run_cli(
            capsys, "run", "--N", 3, "--margin", 0.5, "--source", "file", "--path", path, "--store", url
        )
        assert code == 4
        assert out == ""
        assert f"{path}:5:" in err
        (record,) = list_sessions()
        assert (record.trials, record.successes) == (3, 2)
        assert SessionStatus(record.status) is SessionStatus.RUNNING

        path.write_text("1\n0\n1\n1\n")
        code, resumed, _ = run_json(capsys, "run", "--store", url, "--resume", record.id, "--path", path)
        assert code == 0
        assert resumed["results"]["status"] == "stopped"
        assert resumed["results"]["n"] == 4

    def test_resume_needs_store(self, capsys):
        """Test that --resume without --store is rejected."""
        code, _, _ = run_cli(capsys, "run", "--resume", 1)
        assert code == 2


class TestVerifyCommand:
    """Tests for `nbmc verify`."""

    def test_vacuous_lemma(self, capsys):
        """Test the lemma check alone at a point with nothing to check."""
        code, report, _ = run_json(capsys, "verify", "--lemma1", "--N", 3, "--p", 0.9)
        assert code == 0
        assert report["results"]["all_hold"] is True
        assert report["results"]["lemma1_points_checked"] == 0
        assert "coefficients" not in report["results"]

    def test_coefficients(self, capsys):
        """Test the coefficient check alone for both families."""
        code, report, _ = run_json(capsys, "verify", "--coefficients", "--j-max", 20, "--N-max", 50)
        assert code == 0
        assert [r["family"] for r in report["results"]["coefficients"]] == ["x", "x_prime"]

    def test_failure_exit_code(self, capsys, monkeypatch):
        """Test the exit code when a check fails."""
        monkeypatch.setattr(config, "COEFFICIENT_TOLERANCE", -1.0)
        code, report, _ = run_json(capsys, "verify", "--coefficients", "--N-max", 5, "--j-max", 2, "--density", 10)
        assert code == 5
        assert report["results"]["all_hold"] is False

    def test_csv(self, capsys):
        """Test CSV output of the lemma check."""
        code, out, _ = run_cli(capsys, "verify", "--lemma1", "--N", 5, "--p", 0.3, "--p", 0.7, "--format", "csv")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0
        assert [row["p"] for row in rows] == ["0.29999999999999999", "0.69999999999999996"]


class TestCurvesCommand:
    """Tests for `nbmc curves`."""

    def test_min_curve_inversion(self, capsys, tmp_path):
        """Test writing the minimum-N curve to a file."""
        out = tmp_path / "curves.csv"
        m = min_margin(30)
        code, report, _ = run_json(capsys, "curves", "--m-grid", repr(m), "--out", out)
        assert code == 0
        assert report["results"]["rows"] == 1
        with out.open() as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["m", "N", "c_bar", "is_min_curve"]
        assert rows[1][1] == "30"
        assert rows[1][3] == "1"

    def test_stdout_csv(self, capsys):
        """Test curve rows on stdout."""
        code, out, _ = run_cli(capsys, "curves", "--m-grid", "0.5,1.0", "--N-grid", "10", "--format", "csv")
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0
        assert all(len(row) == 4 for row in rows)
        assert len(rows) == 1 + 2 + 2

    @pytest.mark.parametrize("grid", ["0.1:1:0", "", "abc"])
    def test_empty_or_bad_grid(self, capsys, grid):
        """Test that bad margin grids are rejected."""
        code, _, _ = run_cli(capsys, "curves", "--m-grid", grid)
        assert code == 2

    def test_legacy_rule(self, capsys):
        """Test curves under the legacy rule."""
        code, report, _ = run_json(capsys, "curves", "--m-grid", "0.3", "--rule", "legacy")
        assert code == 0
        assert report["results"][0]["N"] >= 3


class TestCoverageCommand:
    """Tests for `nbmc coverage`."""

    def test_report(self, capsys):
        """Test the coverage report counts."""
        code, report, _ = run_json(
            capsys, "coverage", "--N", 10, "--margin", 0.5, "--p", 0.05, "--runs", 200, "--seed", 1
        )
        results = report["results"]
        assert code == 0
        assert results["covered"] + results["lower_misses"] + results["upper_misses"] == 200
        assert 0 <= results["empirical_coverage"] <= 1


class TestGrids:
    """Tests for grid parsing."""

    def test_m_range(self):
        """Test a start:stop:count margin grid."""
        np.testing.assert_allclose(parse_m_grid("0.1:0.5:5"), [0.1, 0.2, 0.3, 0.4, 0.5])

    def test_N_range(self):
        """Test range and list N grids."""
        assert parse_N_grid("3:6") == [3, 4, 5, 6]
        assert parse_N_grid("5,10") == [5, 10]

    def test_N_below_three(self):
        """Test that N below three is rejected."""
        with pytest.raises(ParameterError):
            parse_N_grid("2,5")

    def test_nonpositive_margin(self):
        """Test that a zero margin is rejected."""
        with pytest.raises(ParameterError):
            parse_m_grid("0,0.5")


class TestReportEnvelope:
    """Tests for the JSON envelope."""

    def test_rejects_non_finite(self):
        """Test that infinity is rejected."""
        with pytest.raises(ValueError, match="non-finite"):
            ReportEnvelope("exact", {}, {"c": float("inf")}).to_json()

    def test_numpy_values(self):
        """Test that numpy scalars serialise as native values."""
        data = json.loads(ReportEnvelope("x", {"n": np.int64(3)}, [np.float64(0.5), np.bool_(True)]).to_json())
        assert data["parameters"] == {"n": 3}
        assert data["results"] == [0.5, True]

    def test_floats_have_17_digits(self):
        """Test that JSON floats carry 17 significant digits and read back exactly."""
        text = ReportEnvelope("x", {"p": 0.1}, {"c": 1.0, "tiny": 1e-300, "whole": np.float64(3)}).to_json()
        assert '"p": 0.10000000000000001' in text
        assert '"c": 1.0' in text
        assert '"whole": 3.0' in text
        data = json.loads(text)
        assert data["parameters"]["p"] == 0.1
        assert data["results"]["tiny"] == 1e-300
        assert isinstance(data["results"]["whole"], float)

    def test_rejects_nested_non_finite(self):
        """Test that NaN is rejected inside nested lists too."""
        with pytest.raises(ValueError, match="non-finite"):
            ReportEnvelope("x", {}, {"rows": [[0.5, float("nan")]]}).to_json()
