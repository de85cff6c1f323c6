import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kqiest.preprocess import (
    PreprocessError,
    SplitSpec,
    TargetScaler,
    aggregate_sessions,
    apply_scaler,
    clean,
    drop_zero_variance,
    fit_scaler,
    lower_median,
    split,
    unscale,
)
from kqiest.schema import DatasetMatrix, LeakageError, to_matrix

from conftest import make_sample


def experiment(eid, n=120, **overrides):
    return [make_sample(experiment_id=eid, t_s=t, **overrides) for t in range(n)]


class TestClean:
    def test_simulated_campaign_is_clean(self, small_campaign):
        kept, report = clean(small_campaign)
        assert len(kept) == len(small_campaign)
        assert report.total_drops == 0

    def test_negative_latency_dropped(self):
        samples = experiment(0)
        samples[7] = make_sample(experiment_id=0, t_s=7, latency_ms=-5.0)
        kept, report = clean(samples)
        assert len(kept) == 119
        assert report.sample_drops == [{"experiment_id": 0, "t_s": 7, "reason": "latency_ms < 0"}]

    def test_corrupted_experiment_dropped_whole(self):
        bad = experiment(1)
        for t in range(15):  # 15 of 120 = 12.5% > 10%
            bad[t] = make_sample(experiment_id=1, t_s=t, frame_rate_fps=float("nan"))
        kept, report = clean(experiment(0) + bad)
        assert len(kept) == 120
        assert {s.experiment_id for s in kept} == {0}
        assert report.experiment_drops[0]["experiment_id"] == 1

    def test_twelve_bad_is_tolerated(self):
        bad = experiment(1)
        for t in range(12):  # exactly 10%
            bad[t] = make_sample(experiment_id=1, t_s=t, channel_util=1.5)
        kept, _ = clean(bad)
        assert len(kept) == 108

    def test_throughput_above_channel_cap(self):
        # 20 MHz -> 75 Mbps peak, 1.2x margin = 90
        samples = experiment(0)
        samples[0] = make_sample(client_throughput_mbps=90.5)
        kept, report = clean(samples)
        assert len(kept) == 119
        assert report.sample_drops[0]["reason"].startswith("client_throughput")

    def test_all_dropped_raises(self):
        with pytest.raises(PreprocessError):
            clean([make_sample(latency_ms=-1.0)])

    def test_idempotent(self, small_campaign):
        mixed = list(small_campaign[:360])
        mixed[10] = make_sample(experiment_id=mixed[10].experiment_id, t_s=10, latency_ms=-2.0)
        once, _ = clean(mixed)
        twice, report = clean(once)
        assert twice == once and report.total_drops == 0


class TestZeroVariance:
    def test_constant_columns(self, small_sessions):
        ds, dropped = drop_zero_variance(to_matrix(small_sessions))
        assert "technology" in dropped and "carrier_freq_mhz" in dropped
        assert "technology" not in ds.feature_names

    def test_added_constant_column(self):
        X = np.array([[1.0, 7.0, 2.0], [2.0, 7.0, 2.0], [3.0, 7.0, 2.5]])
        ds = DatasetMatrix(("a", "sevens", "c"), X, {})
        out, dropped = drop_zero_variance(ds)
        assert dropped == ["sevens"]
        assert out.d == 2 and out.feature_names == ("a", "c")

    def test_all_constant_raises(self):
        with pytest.raises(PreprocessError):
            drop_zero_variance(DatasetMatrix(("a",), np.ones((3, 1)), {}))

    def test_rejects_test_matrix(self):
        with pytest.raises(LeakageError):
            drop_zero_variance(DatasetMatrix(("a",), np.arange(3.0)[:, None], {}, "test"))


class TestAggregate:
    def test_one_record_per_experiment(self, small_campaign):
        assert len(aggregate_sessions(small_campaign)) == 60

    def test_constant_kqis(self):
        rec = aggregate_sessions(experiment(4))[0]
        assert rec.kqis == make_sample().kqis
        assert rec.kpis.dl_throughput_mbps == 9.5

    def test_median_tie_lower(self):
        samples = [make_sample(experiment_id=0, t_s=t, resolution_level=r)
                   for t, r in enumerate([3, 3, 4, 4])]
        assert aggregate_sessions(samples)[0].kqis.resolution_level == 3
        assert lower_median([4, 3, 4, 3]) == 3

    @settings(max_examples=30, deadline=None)
    @given(st.permutations(list(range(120))))
    def test_commutes_with_reordering(self, perm):
        base = [make_sample(experiment_id=0, t_s=t, latency_ms=40.0 + (t * 37 % 11) * 0.1,
                            resolution_level=t % 6) for t in range(120)]
        assert aggregate_sessions([base[i] for i in perm]) == aggregate_sessions(base)


class TestSplit:
    def test_stratified_sizes(self, small_sessions):
        train, test = split(small_sessions, SplitSpec(0.7, seed=1))
        # 5 per stratum -> floor(3.5 + 0.5) = 4 train, 1 test
        assert len(train) == 48 and len(test) == 12
        labels = [r.config.label for r in test]
        assert all(labels.count(l) == 1 for l in set(labels))
        assert {r.experiment_id for r in train}.isdisjoint(r.experiment_id for r in test)

    def test_seed_changes_membership_not_size(self, small_sessions):
        a = split(small_sessions, SplitSpec(0.7, seed=1))
        b = split(small_sessions, SplitSpec(0.7, seed=2))
        assert len(a[0]) == len(b[0])
        assert {r.experiment_id for r in a[0]} != {r.experiment_id for r in b[0]}
        assert split(small_sessions, SplitSpec(0.7, seed=1)) == a

    @pytest.mark.parametrize("f", [0.0, 1.0, 1.5])
    def test_bad_fraction(self, f):
        with pytest.raises(PreprocessError):
            SplitSpec(f)

    def test_tiny_stratum_named(self, small_sessions):
        with pytest.raises(PreprocessError, match="LTE/5MHz/MaxPT"):
            split(small_sessions[:1], SplitSpec())

    def test_per_sample_keeps_experiments_whole(self, small_campaign):
        train, test = split(small_campaign, SplitSpec(0.7, seed=0))
        assert {s.experiment_id for s in train}.isdisjoint(s.experiment_id for s in test)
        assert len(train) % 120 == 0


class TestScaler:
    def test_train_standardized(self, session_split):
        train, _ = session_split
        z = apply_scaler(fit_scaler(train), train)
        assert np.all(np.abs(z.X.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(z.X.std(axis=0) - 1) < 1e-9)

    def test_shifted_copy(self, session_split):
        train, _ = session_split
        params = fit_scaler(train)
        shift = np.linspace(1.0, 3.0, train.d)
        fake_test = train.with_features(train.X + shift, train.feature_names).tagged("test")
        z = apply_scaler(params, fake_test)
        # closed form: column mean moves by shift / sigma
        np.testing.assert_allclose(z.X.mean(axis=0), shift / params.std, atol=1e-9)

    def test_inverse(self, session_split):
        _, test = session_split
        params = fit_scaler(session_split[0])
        back = unscale(params, apply_scaler(params, test))
        np.testing.assert_allclose(back.X, test.X, rtol=1e-12, atol=1e-12)

    def test_fit_on_test_rejected(self, session_split):
        with pytest.raises(LeakageError):
            fit_scaler(session_split[1])

    def test_target_scaler(self, session_split):
        train, test = session_split
        ts = TargetScaler.fit(train, "latency_ms")
        y = train.targets["latency_ms"]
        np.testing.assert_allclose(ts.inverse(ts.transform(y)), y, rtol=1e-12)
        with pytest.raises(LeakageError):
            TargetScaler.fit(test, "latency_ms")
