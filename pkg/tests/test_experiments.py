import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from csgan_eeg.errors import (ConfigError, DegenerateTestError, SplitError, SubjectError)
from csgan_eeg.experiments import (ExperimentReport, ExperimentSpec, ablation_config,
                                   derive_seed, paired_t_test, run_ablation, run_adaptive,
                                   run_experiment, run_loo, sweep_counts, train_subject_gans,
                                   _generate, _split, prepare)
from csgan_eeg.csgan import GanTrainConfig
from csgan_eeg.synthetic import make_cross_subject

# per-subject accuracies of the leave-one-subject-out, adapt-100-real,
# adapt-100-fake and adapt-3000-fake rows of the published cross-subject table
LOO = [69.10, 36.81, 60.76, 45.83, 33.33, 42.71, 45.83, 65.97, 68.75]
REAL100 = [72.87, 42.55, 70.74, 53.72, 40.96, 41.49, 66.49, 76.06, 69.68]
FAKE100 = [77.13, 38.30, 69.15, 51.60, 39.36, 39.89, 65.96, 78.72, 62.77]
FAKE3000 = [81.91, 53.19, 79.26, 60.11, 44.68, 49.47, 80.32, 84.04, 78.72]

TINY = dict(dataset="2b", gan_count=10, adapt_count=10,
            gan={"iterations": 1, "critic_steps": 1, "snapshot_every": 0},
            classifier={"epochs": 1, "batch_size": 20})


@pytest.fixture(scope="module")
def data():
    return make_cross_subject(n_subjects=3, n_trials=30, n_channels=3, n_classes=2, seed=1)


def _report(acc):
    return ExperimentReport("r", {}, [f"S{i}" for i in range(len(acc))], list(acc),
                            [0.0] * len(acc))


class TestStatistics:
    @pytest.mark.parametrize("row,mean,std", [(LOO, 52.12, 14.08), (REAL100, 59.40, 14.67),
                                              (FAKE100, 58.10, 16.24),
                                              (FAKE3000, 67.97, 15.86)])
    def test_table_mean_std(self, row, mean, std):
        r = _report(row)
        assert r.mean == pytest.approx(mean, abs=0.006)
        assert r.std == pytest.approx(std, abs=0.006)

    def test_table_significance(self):
        assert paired_t_test(FAKE3000, LOO)[1] < 0.001
        assert paired_t_test(REAL100, LOO)[1] < 0.05
        assert paired_t_test(FAKE100, REAL100)[1] > 0.05

    @given(st.lists(st.floats(0, 1), min_size=3, max_size=12), st.integers(0, 100))
    def test_matches_scipy(self, a, seed):
        b = np.asarray(a) + np.random.default_rng(seed).normal(0, 0.1, len(a))
        if np.std(np.asarray(a) - b) == 0:
            return
        t, p = paired_t_test(a, b)
        ref = stats.ttest_rel(a, b)
        assert t == pytest.approx(ref.statistic, rel=1e-9)
        assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-300)

    def test_degenerate(self):
        with pytest.raises(DegenerateTestError):
            paired_t_test([0.5, 0.6], [0.4, 0.5])
        with pytest.raises(DegenerateTestError):
            paired_t_test([0.5], [0.4])

    def test_compare_requires_same_subjects(self):
        with pytest.raises(ConfigError):
            _report([1, 2]).compare_to(_report([1, 2, 3]))


class TestSpec:
    def test_presets(self):
        a = ExperimentSpec().resolved()
        assert (a.gan_count, a.adapt_count, a.m, a.stratified_gan_pool) == (100, 3000, 4, False)
        b = ExperimentSpec(dataset="2b").resolved()
        assert (b.gan_count, b.adapt_count, b.m, b.stratified_gan_pool) == (50, 1000, 3, True)
        assert ExperimentSpec(gan_count=5).resolved().gan_count == 5

    def test_validation(self):
        for bad in ({"protocol": "kfold"}, {"dataset": "3c"}, {"augmentation_method": "vae"},
                    {"ablation_flags": ("no_gp",)},
                    {"augmentation_method": "noise", "ablation_flags": ("no_ev_loss",)},
                    {"clf_stats_scope": "test"}, {"gan_stats_scope": "mixture"}):
            with pytest.raises(ConfigError):
                ExperimentSpec(**bad)

    def test_round_trip_and_hash(self):
        s = ExperimentSpec(**TINY)
        back = ExperimentSpec.from_dict(json.loads(json.dumps(s.to_dict())))
        assert back == s and back.config_hash() == s.config_hash()
        assert dataclasses.replace(s, seed=1).config_hash() != s.config_hash()

    def test_ablation_flags(self):
        base = GanTrainConfig()
        assert ablation_config(base, ()) == base
        none_cs = ablation_config(base, ["no_cs_module"])
        assert not none_cs.use_cs and none_cs.lambda_cs == 0
        allx = ablation_config(base, ["ablate_all"])
        assert (allx.use_cs, allx.lambda_cov, allx.lambda_ev) == (False, 0, 0)
        assert allx.lambda_gp == base.lambda_gp

    def test_derive_seed(self):
        assert derive_seed(0, "gan", "S1", 0) == derive_seed(0, "gan", "S1", 0)
        assert derive_seed(0, "gan", "S1", 0) != derive_seed(0, "gan", "S1", 1)
        assert derive_seed(0, "gan") != derive_seed(1, "gan")


class TestPipeline:
    def test_adapt_zero_is_loo(self, data):
        spec = ExperimentSpec(protocol="adapt_fake", **{**TINY, "adapt_count": 0})
        loo = run_loo(data, spec)
        zero = run_adaptive(data, spec, source="fake")
        assert zero.accuracy == loo.accuracy and zero.kappa == loo.kappa

    def test_loo_report(self, data, tmp_path):
        rep = run_loo(data, ExperimentSpec(**TINY))
        assert rep.subjects == ["S01", "S02", "S03"]
        assert all(d["n_adapt"] == 0 and d["n_test"] == 20 for d in rep.details)
        rep.write(tmp_path)
        body = json.loads((tmp_path / "report.json").read_text())
        assert body["spec"]["dataset"] == "2b" and len(body["per_subject"]) == 3
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0] == "subject,accuracy,kappa" and len(lines) == 4
        assert not list(tmp_path.glob("*.tmp"))

    def test_reproducible(self, data):
        spec = ExperimentSpec(protocol="adapt_fake", target_subjects=("S02",), **TINY)
        a = run_adaptive(data, spec)
        b = run_adaptive(data, spec)
        assert a.accuracy == b.accuracy
        assert a.to_dict(timing=False) == b.to_dict(timing=False)
        assert a.details[0]["n_adapt"] == 10
        assert a.lambdas["lambda_cov"] == 3.0

    def test_real_adaptation_draws_from_pool(self, data):
        spec = ExperimentSpec(protocol="adapt_real", target_subjects=("S01",), **TINY)
        assert run_adaptive(data, spec, source="real").details[0]["n_adapt"] == 10
        with pytest.raises(SplitError):
            run_adaptive(data, dataclasses.replace(spec, adapt_count=11), source="real")

    @pytest.mark.parametrize("method", ["noise", "snr"])
    def test_baseline_methods(self, data, method):
        spec = ExperimentSpec(protocol="adapt_fake", target_subjects=("S03",),
                              augmentation_method=method, **TINY)
        assert 0 <= run_adaptive(data, spec).accuracy[0] <= 1

    def test_uneven_class_split(self, data):
        spec = ExperimentSpec(target_subjects=("S01",), augmentation_method="noise",
                              **{**TINY, "adapt_count": 11})
        with pytest.raises(ConfigError):
            run_adaptive(data, spec)

    def test_generated_set_balanced_and_raw_units(self, data):
        spec = ExperimentSpec(**TINY).resolved()
        prepped = prepare(data, spec)
        _, pool, test = _split(prepped, "S01", spec)
        gans = train_subject_gans(pool, spec)
        aug = _generate(pool, spec, 10, gans)
        np.testing.assert_array_equal(np.bincount(aug.labels), [5, 5])
        # the de-standardization uses statistics of the pool itself
        np.testing.assert_allclose(gans[1].mu, pool.epochs.mean(axis=(0, 2)), rtol=1e-4)
        assert not set(pool.trial_ids) & set(test.trial_ids)

    def test_sweep_reuses_gans(self, data, monkeypatch):
        import csgan_eeg.experiments as ex
        calls = []
        real = ex.train_subject_gans

        def counting(*a, **k):
            calls.append(a[0].subject)
            return real(*a, **k)
        monkeypatch.setattr(ex, "train_subject_gans", counting)
        spec = ExperimentSpec(protocol="sweep", target_subjects=("S01", "S02"), **TINY)
        reps = sweep_counts(data, spec, counts=[0, 4, 10])
        assert [r.name for r in reps] == ["sweep 0", "sweep 4", "sweep 10"]
        assert [r.details[0]["n_adapt"] for r in reps] == [0, 4, 10]
        assert calls == ["S01", "S02"]

    def test_run_experiment_pairs_with_loo(self, data):
        spec = ExperimentSpec(protocol="ablation", ablation_flags=("no_cs_module",), **TINY)
        loo, abl = run_experiment(data, spec)
        assert loo.name == "loo" and abl.name == "ablation no_cs_module"
        assert abl.lambdas["use_cs"] is False
        assert run_ablation(data, spec).accuracy == abl.accuracy

    def test_standardization_scopes(self, data):
        base = ExperimentSpec(protocol="adapt_fake", target_subjects=("S01",),
                              augmentation_method="noise", **TINY)
        ref = run_adaptive(data, base).accuracy
        for kw in ({"clf_stats_scope": "train"}, {"gan_stats_scope": "train"}):
            rep = run_adaptive(data, dataclasses.replace(base, **kw))
            assert rep.spec[next(iter(kw))] == "train"
            assert 0 <= rep.accuracy[0] <= 1
        spec = dataclasses.replace(base, augmentation_method="csgan", gan_stats_scope="train")
        prepped = prepare(data, spec.resolved())
        train, pool, _ = _split(prepped, "S01", spec.resolved())
        _, st_, _ = train_subject_gans(pool, spec.resolved(), train=train)
        np.testing.assert_allclose(st_.mu, train.epochs.mean(axis=(0, 2)), rtol=1e-4, atol=1e-6)

    def test_subject_errors(self, data):
        with pytest.raises(SubjectError):
            run_loo({"S01": data["S01"]}, ExperimentSpec(**TINY))
        with pytest.raises(SubjectError):
            run_loo(data, ExperimentSpec(target_subjects=("S99",), **TINY))
