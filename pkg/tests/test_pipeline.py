import json

import numpy as np
import pytest

from parcelcast import pipeline
from parcelcast.datastore import IntervalSpec
from parcelcast.errors import ConfigError, DataError
from parcelcast.pipeline import DayPlan, RunConfig


def fast_config(log_path, out_dir, **kw):
    base = dict(log_path=str(log_path), out_dir=str(out_dir), val_days=1, test_days=1,
                epochs=3, ensemble_epochs=3, trees=5)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def week_run(week_log_path, tmp_path_factory):
    return pipeline.run(fast_config(week_log_path, tmp_path_factory.mktemp("run")))


class TestDayPlan:
    def test_default_split(self):
        plan = DayPlan.for_days(30, 3, 3)
        assert plan.train == tuple(range(2, 24))
        assert plan.val == (24, 25, 26) and plan.test == (27, 28, 29)

    def test_too_short(self):
        with pytest.raises(ConfigError):
            DayPlan.for_days(6, 2, 2)


class TestRunConfig:
    def test_defaults_resolve_demo(self):
        cfg = RunConfig()
        cfg.validate()
        assert cfg.spec() == IntervalSpec(15, 95, 0)

    @pytest.mark.parametrize("kw", [dict(methods=("naive", "arima")), dict(methods=()), dict(interval=7),
                                    dict(horizon=-1), dict(test_days=0), dict(pooling="median"),
                                    dict(network="/nonexistent.ini")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw).validate()

    def test_hash(self):
        assert pipeline.config_hash(RunConfig()) == pipeline.config_hash(RunConfig())
        assert pipeline.config_hash(RunConfig()) != pipeline.config_hash(RunConfig(model_seed=1))

    def test_unknown_hub(self):
        with pytest.raises(ConfigError):
            pipeline.load_inputs(RunConfig(target_hub="ZZ"))


class TestHelpers:
    def test_stage_prefix(self):
        with pytest.raises(DataError, match=r"^\[load\] broken"):
            with pipeline.stage("load"):
                raise DataError("broken")

    def test_closed_by(self):
        spec = IntervalSpec(15, 3, 0)
        mask = pipeline._closed_by([0, 15], spec, 45)
        np.testing.assert_array_equal(mask, [[True, True, True, False], [True, True, False, False]])

    def test_plan_text(self):
        text = pipeline.plan_text(RunConfig())
        assert "target_hub: G1" in text and "config_hash: " in text


class TestRun:
    def test_methods_and_files(self, week_run):
        assert [r.method for r in week_run.reports] == list(pipeline.METHODS)
        for key in ("summary", "horizon_mase", "series", "manifest"):
            assert week_run.files[key].exists()
        manifest = json.loads(week_run.files["manifest"].read_text())
        assert manifest["days"]["test"] == [6] and manifest["days"]["val"] == [5]
        assert manifest["files"]["summary"]["sha256"] == pipeline.file_hash(week_run.files["summary"])

    def test_naive_is_one(self, week_run):
        assert week_run.report("naive").mase == 1.0

    def test_scored_pairs(self, week_run):
        # test day 6 ends the log: pair (t_o, t) is scored when t_o + (t+1)*15 <= 7*1440
        n = sum(min(96, (7 * 1440 - t_o) // 15) for t_o in range(6 * 1440, 7 * 1440, 15))
        assert all(r.n_pairs == n for r in week_run.reports)

    def test_conservation(self, week_run):
        assert week_run.conservation_violations == 0 and week_run.test_violations == 0
        assert week_run.n_test_forecasts == 96
        assert week_run.n_ordered_forecasts == 96 * 5

    def test_sum_is_sum(self, week_run):
        # ensemble_sum forecasts are non-negative sums of non-negative parts
        rec = next(r for r in week_run.records if r.method == "ensemble_sum")
        assert (rec.forecast >= 0).all() and np.isfinite(rec.forecast).all()

    def test_deterministic(self, week_run, week_log_path, tmp_path):
        again = pipeline.run(fast_config(week_log_path, tmp_path))
        for key in ("summary", "horizon_mase", "series"):
            assert again.files[key].read_bytes() == week_run.files[key].read_bytes()

    def test_subset(self, week_log_path, tmp_path):
        res = pipeline.run(fast_config(week_log_path, tmp_path, methods=("naive", "holt_winters")), write=False)
        assert [r.method for r in res.reports] == ["naive", "holt_winters"]
        assert res.files == {} and not (tmp_path / "summary.tsv").exists()
