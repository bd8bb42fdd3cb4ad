"""Tests for the command-line interface."""

import json
import os
import shutil
import stat
import tempfile
from dataclasses import replace
from pathlib import Path

from click.testing import CliRunner

from stackdrive import __version__
from stackdrive.cli import cli
from stackdrive.config import emit_config, packaged_scenario, parse_config
from stackdrive.reporting import write_section_stats, write_trace
from stackdrive.sim_engine import SectionStats, run_scenario


def remove_readonly(func, path, excinfo):
    """Error handler for readonly files.

    This function is called when shutil.rmtree encounters a permission error.
    It attempts to change the file permissions and retry the operation.
    """
    os.chmod(path, stat.S_IWRITE)
    func(path)


class TestCLI:
    """Test CLI commands."""

    def setup_method(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()
        self.base_path = Path(self.temp_dir)
        self.runner = CliRunner()

        short = replace(parse_config(packaged_scenario("two_vehicle")), duration=2.0)
        self.short_config = self.base_path / "short.yaml"
        self.short_config.write_text(emit_config(short))

    def teardown_method(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.temp_dir, onerror=remove_readonly)

    def _section(self, out, mix="props"):
        return self.runner.invoke(
            cli,
            [
                "section",
                "--mix",
                mix,
                "--density",
                "2",
                "--duration",
                "2",
                "--seed",
                "3",
                "-o",
                str(out),
            ],
        )

    def test_version(self):
        """Test the version option."""
        result = self.runner.invoke(cli, ["--version"])

        assert result.exit_code == 0
        assert __version__ in result.output

    def test_unit_command(self):
        """Test that unit writes traces, events, verdicts and a manifest."""
        out = self.base_path / "unit"

        result = self.runner.invoke(
            cli, ["unit", "-c", str(self.short_config), "-o", str(out)]
        )

        # Verdicts judged on a shortened run may fail; that is exit 3.
        assert result.exit_code in (0, 3), result.output
        for slug in (
            "normal_normal",
            "aggressive_cautious",
            "aggressive_aggressive",
            "cautious_cautious",
        ):
            assert (out / f"trace_{slug}.csv").exists()
        assert (out / "events.csv").exists()
        assert (out / "verdicts.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "unit"
        assert manifest["config_path"] == str(self.short_config)

    def test_unit_compact(self):
        """Test gzip traces."""
        out = self.base_path / "unit"

        self.runner.invoke(
            cli, ["unit", "-c", str(self.short_config), "-o", str(out), "--compact"]
        )

        assert (out / "trace_normal_normal.csv.gz").exists()

    def test_montecarlo_command(self):
        """Test the surface files; two runs are too few for the trend checks."""
        out = self.base_path / "mc"

        result = self.runner.invoke(
            cli,
            ["montecarlo", "-c", str(self.short_config), "--runs", "2", "-o", str(out)],
        )

        assert result.exit_code == 3, result.output
        assert "peak_falls_with_separation_normal_normal" in result.output
        assert (out / "surface.csv").exists()
        checks = (out / "surface_checks.csv").read_text().splitlines()
        assert checks[0] == "verdict,result,detail"
        assert len(checks) == 1 + 2 + 3
        samples = (out / "surface_samples.csv").read_text().splitlines()
        assert len(samples) == 1 + 3 * 2

    def test_montecarlo_rejects_zero_runs(self):
        """Test that --runs 0 is a usage error."""
        result = self.runner.invoke(cli, ["montecarlo", "--runs", "0"])

        assert result.exit_code == 1

    def test_section_command(self):
        """Test a short section run."""
        out = self.base_path / "section"

        result = self._section(out)

        assert result.exit_code == 0, result.output
        assert "0 crashes" in result.output
        assert (out / "section_props_d2.csv").exists()
        assert (out / "manifest.json").exists()

    def test_section_rejects_unknown_mix(self):
        """Test that an unknown mix is a usage error."""
        result = self._section(self.base_path / "section", mix="reckless")

        assert result.exit_code == 1

    def test_compare_command(self):
        """Test comparing two section stats files."""
        attentive = self.base_path / "att"
        inattentive = self.base_path / "inatt"
        self._section(attentive, "attentive")
        self._section(inattentive, "inattentive75")
        out = self.base_path / "cmp"

        result = self.runner.invoke(
            cli,
            [
                "compare",
                str(attentive / "section_attentive_d2.csv"),
                str(inattentive / "section_inattentive75_d2.csv"),
                "-o",
                str(out),
            ],
        )

        # Two-second runs rarely produce events, so the orderings may fail.
        assert result.exit_code in (0, 3), result.output
        assert "qualitative" in result.output
        rows = (out / "comparison.csv").read_text().splitlines()
        assert rows[0].startswith("kind,population")

    def _stats_file(self, name, crashes, near_crashes):
        path = self.base_path / f"{name}.csv"
        stats = SectionStats(
            mix=name,
            density=6,
            duration=60.0,
            seed=0,
            crashes=crashes,
            near_crashes=near_crashes,
            vehicle_miles=10.0,
            cumulative_possibility=0.0,
            injected=6,
            exited=0,
            deferred=0,
        )
        write_section_stats([stats], path)
        return path

    def test_compare_passes_when_inattentive_worse(self):
        """Test exit 0 when the inattentive population has more events."""
        result = self.runner.invoke(
            cli,
            [
                "compare",
                str(self._stats_file("attentive", 1, 12)),
                str(self._stats_file("inattentive75", 2, 26)),
                "-o",
                str(self.base_path / "cmp"),
            ],
        )

        assert result.exit_code == 0, result.output

    def test_compare_fails_when_inattentive_better(self):
        """Test exit 3 when the inattentive population has fewer events."""
        out = self.base_path / "cmp"

        result = self.runner.invoke(
            cli,
            [
                "compare",
                str(self._stats_file("attentive", 5, 30)),
                str(self._stats_file("inattentive75", 1, 2)),
                "-o",
                str(out),
            ],
        )

        assert result.exit_code == 3
        assert "crash_inattentive_exceeds_attentive" in result.output
        assert (out / "comparison.csv").exists()

    def test_fig14_command(self):
        """Test a one-cell-per-mix sweep."""
        out = self.base_path / "fig14"

        result = self.runner.invoke(
            cli,
            [
                "fig14",
                "--density",
                "2",
                "--runs",
                "1",
                "--duration",
                "0.5",
                "-o",
                str(out),
            ],
        )

        assert result.exit_code in (0, 3), result.output
        assert (out / "sweep.csv").exists()
        assert (out / "sweep_checks.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "fig14"

    def test_sweep_alias(self):
        """Test that sweep runs the same command as fig14."""
        out = self.base_path / "sweep"

        result = self.runner.invoke(
            cli,
            [
                "sweep",
                "--density",
                "2",
                "--runs",
                "1",
                "--duration",
                "0.5",
                "-o",
                str(out),
            ],
        )

        assert result.exit_code in (0, 3), result.output
        assert (out / "sweep.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "fig14"

    def test_sweep_rejects_bad_list(self):
        """Test that malformed run counts are usage errors."""
        result = self.runner.invoke(cli, ["sweep", "--runs", "5,x"])

        assert result.exit_code == 1

    def test_bad_config_reports_line(self):
        """Test that config errors exit 2 with the offending line."""
        bad = self.base_path / "bad.yaml"
        bad.write_text("seed: 0\ndt: fast\n")

        result = self.runner.invoke(
            cli, ["unit", "-c", str(bad), "-o", str(self.base_path / "x")]
        )

        assert result.exit_code == 2
        assert f"{bad}:2:" in result.output

    def test_replay_reproduces_section(self):
        """Test that a replay from the manifest alone gives the same numbers."""
        first = self.base_path / "first"
        self._section(first, "aggr_timid")
        second = self.base_path / "second"

        result = self.runner.invoke(
            cli, ["replay", str(first / "manifest.json"), "-o", str(second)]
        )

        assert result.exit_code == 0, result.output
        name = "section_aggr_timid_d2.csv"
        assert (second / name).read_bytes() == (first / name).read_bytes()

    def test_replay_rejects_malformed_manifest(self):
        """Test that an incomplete manifest is a config error."""
        manifest = self.base_path / "manifest.json"
        manifest.write_text(json.dumps({"subcommand": "compare"}))

        result = self.runner.invoke(
            cli, ["replay", str(manifest), "-o", str(self.base_path / "r")]
        )

        assert result.exit_code == 2

    def test_score_trace_command(self):
        """Test scoring a recorded trace."""
        config = parse_config(self.short_config)
        trace = self.base_path / "trace.csv"
        write_trace(run_scenario(replace(config, duration=0.5)), trace)
        out = self.base_path / "scored"

        result = self.runner.invoke(cli, ["score-trace", str(trace), "-o", str(out)])

        assert result.exit_code == 0, result.output
        assert "50 steps scored" in result.output
        assert (out / "pair_scores.csv").exists()
        assert (out / "events.csv").exists()

    def test_score_trace_rejects_non_trace(self):
        """Test that a CSV without pose columns is a usage error."""
        junk = self.base_path / "junk.csv"
        junk.write_text("a,b\n1,2\n")

        result = self.runner.invoke(
            cli, ["score-trace", str(junk), "-o", str(self.base_path / "s")]
        )

        assert result.exit_code == 1
