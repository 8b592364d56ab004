import json

import pytest
from pydantic import ValidationError

from dexgrasp.controller.rollout import ExpertController
from dexgrasp.eval.gates import evaluate_gates, gate_floor, gate_margin, gate_monotonic, success_at
from dexgrasp.eval.harness import format_table, load_results, run_suite, run_trial, success_table, trial_counts, write_report
from dexgrasp.eval.long_horizon import bbox_accurate, run_long_horizon, summarize
from dexgrasp.eval.suites import RecipeGroup, SuiteRecipe, expand_recipe, load_suite, save_suite
from dexgrasp.planner.backends import OracleBackend
from dexgrasp.schema.eval import BenchmarkSuite, LongHorizonResult, SuiteEntry, TrialResult
from dexgrasp.schema.observation import BBox
from dexgrasp.sim.distribution import SceneDistribution


def make_results(group: str, successes: int, total: int, k_max: int = 3) -> list[TrialResult]:
    """`successes` trials succeed on the first attempt, the rest use all attempts."""
    return [
        TrialResult(
            trial_id=f"{group}-{i:04d}",
            conditions={"group": group},
            k_max=k_max,
            attempts=1 if i < successes else k_max,
            first_success=1 if i < successes else None,
        )
        for i in range(total)
    ]


def small_recipe(kind: str = "grasp") -> SuiteRecipe:
    return SuiteRecipe(
        name="tiny",
        kind=kind,
        seed=11,
        k_max=2,
        groups=[
            RecipeGroup(label="seen", trials=2, distribution=SceneDistribution(combos="seen")),
            RecipeGroup(label="unseen", trials=2, distribution=SceneDistribution(combos="unseen")),
        ],
    )


class TestTrialResult:
    def test_attempt_bounds(self):
        with pytest.raises(ValidationError):
            TrialResult(trial_id="t", k_max=3, attempts=0)
        with pytest.raises(ValidationError):
            TrialResult(trial_id="t", k_max=3, attempts=4)

    def test_stops_at_first_success(self):
        with pytest.raises(ValidationError):
            TrialResult(trial_id="t", k_max=3, attempts=3, first_success=2)
        r = TrialResult(trial_id="t", k_max=3, attempts=2, first_success=2)
        assert r.success
        assert not r.success_at(1)
        assert r.success_at(2) and r.success_at(3)

    def test_subtask_counts_validated(self):
        with pytest.raises(ValidationError):
            LongHorizonResult(trial_id="t", prompt="p", outcome="done", task_success=True,
                              objects_grasped=1, executions=1, subtask_counts={"grasping": (2, 1)})


class TestTables:
    def test_aggregate_pools_trials(self):
        results = make_results("a", 9, 10) + make_results("b", 7, 10)
        table = success_table(results)
        assert table.loc["success@1", "a"] == pytest.approx(0.9)
        assert table.loc["success@1", "b"] == pytest.approx(0.7)
        assert table.loc["success@1", "aggregate"] == pytest.approx(0.8)
        assert list(table.index) == ["success@1", "success@2", "success@3"]

    def test_success_at_k_is_monotonic(self):
        results = [
            TrialResult(trial_id=f"t{i}", conditions={"group": "g"}, k_max=3,
                        attempts=a, first_success=a if ok else None)
            for i, (a, ok) in enumerate([(1, True), (2, True), (3, True), (3, False)])
        ]
        column = success_table(results)["g"].tolist()
        assert column == pytest.approx([0.25, 0.5, 0.75])
        assert column == sorted(column)
        assert gate_monotonic(results).passed

    def test_counts_and_format(self):
        results = make_results("a", 1, 2) + make_results("b", 2, 3)
        counts = trial_counts(results)
        assert counts["a"] == 2 and counts["b"] == 3 and counts["aggregate"] == 5
        text = format_table(success_table(results), counts)
        assert "50.0%" in text
        assert "trials" in text

    def test_empty_results(self):
        with pytest.raises(ValueError):
            success_table([])

    def test_report_round_trip(self, tmp_path):
        results = make_results("a", 3, 4)
        paths = write_report(tmp_path, "seen", results)
        assert load_results(paths["results"]) == results
        assert paths["csv"].read_text().startswith("metric,")
        with open(paths["results"]) as f:
            assert len(json.load(f)) == 4


class TestGates:
    def test_success_at(self):
        results = make_results("seen", 3, 4) + make_results("unseen_lighting", 1, 4)
        assert success_at(results) == pytest.approx(0.5)
        assert success_at(results, group="seen") == pytest.approx(0.75)
        with pytest.raises(ValueError):
            success_at(results, group="missing")

    def test_floor_and_margin(self):
        model = make_results("g", 8, 10)
        baseline = make_results("g", 6, 10)
        assert gate_floor("floor", model, 0.7).passed
        assert not gate_floor("floor", model, 0.9).passed
        margin = gate_margin("margin", model, baseline, 0.15)
        assert margin.value == pytest.approx(0.2)
        assert margin.passed
        assert not gate_margin("margin", baseline, model, 0.15).passed

    def test_evaluate_gates_by_suite(self):
        seen = evaluate_gates("seen", make_results("seen", 6, 10))
        assert [g.name for g in seen] == ["success@k nondecreasing", "seen success@1"]
        assert not seen[1].passed

        lighting = evaluate_gates("unseen_lighting", make_results("l", 9, 10), make_results("l", 5, 10))
        assert all(g.passed for g in lighting)
        assert len(evaluate_gates("unseen_lighting", make_results("l", 9, 10))) == 1

        nonprehensile = make_results("seen", 7, 10) + make_results("unseen_lighting", 6, 10)
        baseline = make_results("seen", 7, 10) + make_results("unseen_lighting", 6, 10)
        gates = evaluate_gates("nonprehensile", nonprehensile, baseline)
        assert [g.passed for g in gates] == [True, True, False]
        assert "FAIL" in gates[2].describe()


class TestSuites:
    def test_expand_is_deterministic(self):
        a, b = expand_recipe(small_recipe()), expand_recipe(small_recipe())
        assert a == b
        assert [e.trial_id for e in a.entries] == ["seen-0000", "seen-0001", "unseen-0000", "unseen-0001"]
        assert all(e.k_max == 2 for e in a.entries)
        for entry in a.entries:
            assert entry.scene.object(entry.target_object_id).graspable
            assert entry.conditions["objects"] in ("seen", "unseen")
            assert entry.prompt.startswith("Grasp the ")

    def test_save_and_load(self, tmp_path):
        suite = expand_recipe(small_recipe())
        path = save_suite(tmp_path / "tiny.json", suite)
        assert load_suite(path) == suite
        recipe_path = tmp_path / "recipe.json"
        recipe_path.write_text(small_recipe().model_dump_json())
        assert load_suite(recipe_path) == suite

    def test_checked_in_recipes_expand(self):
        suite = load_suite("seen")
        assert suite.name == "seen"
        assert len(suite.entries) == 60
        assert suite.k_max == 3

    def test_long_horizon_prompts(self):
        recipe = SuiteRecipe(name="lh", kind="long_horizon", seed=3, groups=[
            RecipeGroup(label="color", trials=3, prompts=["grasp all {color} objects"],
                        distribution=SceneDistribution(n_objects=(4, 6))),
        ])
        suite = expand_recipe(recipe)
        for entry in suite.entries:
            assert entry.target_object_id is None
            color = entry.prompt.split()[2]
            assert sum(o.tags[0] == color for o in entry.scene.objects) >= 2

    def test_suite_validation(self, three_object_scene):
        entry = SuiteEntry(trial_id="a", scene=three_object_scene, prompt="p", target_object_id="obj0")
        with pytest.raises(ValidationError):
            BenchmarkSuite(name="dup", seed=0, entries=[entry, entry])
        with pytest.raises(ValidationError):
            BenchmarkSuite(name="empty", seed=0, entries=[])
        with pytest.raises(ValidationError):
            BenchmarkSuite(name="untargeted", seed=0,
                           entries=[entry.model_copy(update={"target_object_id": None})])


class TestHarness:
    def test_expert_trial_succeeds_first_attempt(self, three_object_scene, sim_config, tmp_path):
        entry = SuiteEntry(trial_id="t-0", scene=three_object_scene, prompt="Grasp the green square.",
                           target_object_id="obj1", conditions={"group": "seen"})
        result = run_trial(entry, ExpertController(), OracleBackend, sim_config, transcript_dir=tmp_path)
        assert result.first_success == 1
        assert result.attempts == 1
        assert result.steps > 0
        assert (tmp_path / "t-0_attempt1.json").exists()

    def test_suite_order_independent_of_jobs(self, three_object_scene, sim_config):
        entries = [
            SuiteEntry(trial_id=f"t-{i}", scene=three_object_scene, prompt="p", target_object_id=target, k_max=2)
            for i, target in enumerate(["obj2", "obj0", "obj1"])
        ]
        suite = BenchmarkSuite(name="s", seed=1, entries=entries)
        seen = []

        def factory(seed):
            return ExpertController(seed=seed)

        serial = run_suite(suite, factory, OracleBackend, sim_config, progress=seen.append)
        threaded = run_suite(suite, factory, OracleBackend, sim_config, jobs=3)
        assert [r.trial_id for r in serial] == ["t-0", "t-1", "t-2"]
        assert serial == threaded
        assert len(seen) == 3
        assert all(r.success for r in serial)


class TestLongHorizon:
    def test_bbox_slack(self):
        truth = BBox(x1=10, y1=10, x2=20, y2=20)
        assert bbox_accurate(BBox(x1=11, y1=9, x2=21, y2=19), truth, slack=1)
        assert not bbox_accurate(BBox(x1=12, y1=10, x2=20, y2=20), truth, slack=1)

    def test_clear_the_table_counts(self, three_object_scene, sim_config, tmp_path):
        entry = SuiteEntry(trial_id="lh-0", scene=three_object_scene, prompt="clear the table",
                           conditions={"group": "plain"})
        result = run_long_horizon(entry, ExpertController(), OracleBackend, sim_config, transcript_dir=tmp_path)
        assert result.task_success
        assert result.objects_grasped == 3
        assert result.executions == 3
        assert result.subtask_counts == {
            "propose_instruction": (3, 3),
            "predict_bbox": (3, 3),
            "grasping": (3, 3),
            "check_completion": (4, 4),
        }
        assert (tmp_path / "lh-0.json").exists()

        summary = summarize([result])
        assert summary["task_success"] == 1.0
        assert summary["avg_attempts_per_grasp"] == 1.0
        assert summary["predict_bbox"] == 1.0
