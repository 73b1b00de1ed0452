import json

import pytest
from click.testing import CliRunner

from capmesh import cli, harness
from capmesh.config import DEMO_DIR, load_config
from capmesh.errors import ScenarioFailed, SeedValidationError


class TestBootAndSeed:
    def test_boot_reports_seven_healthy_components(self):
        stack = harness.boot(load_config())
        health = stack.health()
        assert len(health) == 7
        assert set(health.values()) == {"ok"}
        stack.shutdown()

    def test_seed_counts_match_fixture_dir(self):
        stack = harness.boot(load_config())
        counts = harness.seed(stack)
        manifest = json.loads((DEMO_DIR / "seed.json").read_text())
        assert counts == {
            "methodologies": len(manifest["methodologies"]),
            "profiles": len(json.loads((DEMO_DIR / "profiles.json").read_text())),
            "tools": len(manifest["managed_tools"]),
        }
        stack.shutdown()

    def test_missing_fixture_dir_rejected(self, tmp_path):
        stack = harness.boot(load_config())
        with pytest.raises(SeedValidationError):
            harness.seed(stack, tmp_path / "nope")
        stack.shutdown()

    def test_seeded_tools_are_available_in_registry(self, stack):
        states = {t.tool_id: t.state for t in stack.registry.list_tools()}
        assert states == {
            "nearby-city-finder": "available",
            "attraction-lookup": "available",
        }


class TestScenarios:
    def test_scenarios_match_goldens_in_sequence(self, stack):
        for n in (1, 2, 3):
            transcript = harness.run_scenario_checked(stack, n)
            assert transcript["scenario"] == n

    def test_scenario_2_halts_with_needs_tool(self, stack):
        transcript = harness.run_scenario(stack, 2)
        assert transcript["final"]["status"] == "needs_tool"
        unmet = transcript["final"]["payload"]["unmet_steps"][0]
        assert (
            unmet["description"]
            == "Excluding cities with adverse weather during the travel period"
        )

    def test_scenario_3_excludes_adverse_city(self, stack):
        transcript = harness.run_scenario(stack, 3)
        cities = [c["name"] for c in transcript["final"]["payload"]["candidate_cities"]]
        assert cities == ["C1", "C3"]  # C2 has the storm in the fixture

    def test_divergence_reported_with_position(self, stack, tmp_path):
        golden = json.loads(harness.golden_path(1).read_text())
        golden["final"]["status"] = "failed"
        wrong = tmp_path / "wrong.json"
        wrong.write_text(json.dumps(golden))
        with pytest.raises(ScenarioFailed) as err:
            harness.run_scenario_checked(stack, 1, golden_file=wrong)
        assert "$.final.status" in str(err.value)

    def test_transcript_determinism_across_runs(self):
        transcripts = []
        for _ in range(2):
            stack = harness.boot(load_config())
            harness.seed(stack)
            transcripts.append(
                harness.normalize_transcript(harness.run_scenario(stack, 1))
            )
            stack.shutdown()
        assert transcripts[0] == transcripts[1]


class TestNormalization:
    def test_ids_replaced_in_first_seen_order(self):
        doc = {
            "a": "task-0123456789ab started",
            "b": ["inst-aaaaaaaaaaaa", "task-0123456789ab"],
        }
        out = harness.normalize_transcript(doc)
        assert out == {"a": "<task-1> started", "b": ["<inst-1>", "<task-1>"]}

    def test_timestamps_replaced(self):
        doc = {"at": "2026-07-01T10:20:30Z", "also": "2026-07-01T10:20:30+02:00"}
        out = harness.normalize_transcript(doc)
        assert out == {"at": "<ts>", "also": "<ts>"}

    def test_normalization_is_idempotent(self):
        doc = {"x": "task-0123456789ab at 2026-07-01T10:20:30Z"}
        once = harness.normalize_transcript(doc)
        assert harness.normalize_transcript(once) == once


class TestCli:
    def test_scenario_command_exit_zero_on_match(self):
        runner = CliRunner()
        result = runner.invoke(cli.main, ["scenario", "1"])
        assert result.exit_code == 0, result.output

    def test_scenario_command_exit_one_on_divergence(self, tmp_path):
        golden = json.loads(harness.golden_path(1).read_text())
        golden["final"]["summary"] = "something else entirely"
        wrong = tmp_path / "wrong.json"
        wrong.write_text(json.dumps(golden))
        runner = CliRunner()
        result = runner.invoke(cli.main, ["scenario", "1", "--golden", str(wrong)])
        assert result.exit_code == 1

    def test_seed_command_prints_counts(self):
        runner = CliRunner()
        result = runner.invoke(cli.main, ["seed", str(DEMO_DIR)])
        assert result.exit_code == 0
        assert json.loads(result.output) == {
            "methodologies": 1,
            "profiles": 1,
            "tools": 2,
        }

    def test_transcript_normalize_stdin(self):
        runner = CliRunner()
        raw = json.dumps({"x": "inst-aaaaaaaaaaaa"})
        result = runner.invoke(cli.main, ["transcript"], input=raw)
        assert result.exit_code == 0
        assert json.loads(result.output) == {"x": "<inst-1>"}
