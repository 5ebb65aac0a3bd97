import datetime as dt

import numpy as np
import pytest

from routedmlp import data
from routedmlp.cluster import Standardizer
from routedmlp.data import (
    CSV_HEADER,
    Dataset,
    Record,
    SynthConfig,
    expand_labels,
    ingest_csv,
    mc_split,
    participant_profiles,
    segment_by_gaps,
    stratified_resample,
    synth_generate,
    temporal_split,
    write_csv,
)


def day(n):
    return dt.date(2021, 6, 28) + dt.timedelta(days=n)


def make_dataset(day_offsets, pid="P000", label=0, sex="F", feature=0.0):
    records = [
        Record(pid, day(o), tuple([feature] * data.N_FEATURES), label, sex)
        for o in day_offsets
    ]
    return Dataset.from_records(records)


class TestIngest:
    def _write(self, path, rows):
        with open(path, "w") as fh:
            fh.write(",".join(CSV_HEADER) + "\n")
            for row in rows:
                fh.write(",".join(str(v) for v in row) + "\n")

    def _row(self, pid="P000", date="2021-06-28", sex="F", label=0, features=None):
        features = features if features is not None else [0.1] * data.N_FEATURES
        return [pid, date, sex, label] + features

    def test_round_trip(self, tmp_path, small_synth):
        path = tmp_path / "d.csv"
        write_csv(small_synth.dataset, path)
        report = ingest_csv(path)
        assert report.n_rejected == 0
        np.testing.assert_array_equal(report.dataset.X, small_synth.dataset.X)
        np.testing.assert_array_equal(report.dataset.y, small_synth.dataset.y)
        assert list(report.dataset.ids) == list(small_synth.dataset.ids)
        assert list(report.dataset.dates) == list(small_synth.dataset.dates)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(ValueError, match="header"):
            ingest_csv(path)

    def test_duplicate_day_is_hard_error(self, tmp_path):
        path = tmp_path / "d.csv"
        self._write(path, [self._row(), self._row()])
        with pytest.raises(ValueError, match=r"\(P000, 2021-06-28\)"):
            ingest_csv(path)

    def test_bad_rows_counted_with_reasons(self, tmp_path):
        path = tmp_path / "d.csv"
        nan_features = [0.1] * data.N_FEATURES
        nan_features[3] = "nan"
        self._write(
            path,
            [
                self._row(),
                self._row(date="2021-06-29", sex="X"),
                self._row(date="2021-06-30", label=2),
                self._row(date="2021-07-01", features=nan_features),
                self._row(date="not-a-date"),
            ],
        )
        report = ingest_csv(path)
        assert len(report.dataset) == 1
        assert report.n_rejected == 4
        joined = "\n".join(report.reasons)
        assert "sex" in joined and "label" in joined and "non-finite" in joined


class TestSegmentation:
    def test_spec_example(self):
        ds = make_dataset([1, 2, 3, 5, 6, 7, 8])
        report = segment_by_gaps(ds)
        assert len(report.segments) == 2
        assert report.n_dropped == 0
        assert [len(s.indices) for s in report.segments] == [3, 4]
        assert report.segments[0].dates == [day(1), day(2), day(3)]
        assert report.segments[1].dates == [day(5), day(6), day(7), day(8)]

    def test_short_segments_dropped(self):
        ds = make_dataset([0, 1, 5, 10, 11, 12])
        report = segment_by_gaps(ds)
        assert report.n_dropped == 2  # [0,1] and [5]
        assert len(report.segments) == 1
        assert report.segments[0].dates == [day(10), day(11), day(12)]

    def test_unsorted_input_handled(self):
        ds = make_dataset([3, 1, 2])
        report = segment_by_gaps(ds)
        assert report.segments[0].dates == [day(1), day(2), day(3)]

    def test_participants_independent(self):
        a = make_dataset([0, 1, 2], pid="P000")
        b = make_dataset([3, 4, 5], pid="P001")
        report = segment_by_gaps(Dataset.concat([a, b]))
        assert len(report.segments) == 2
        assert {s.participant_id for s in report.segments} == {"P000", "P001"}


class TestExpandLabels:
    def test_single_day_marks_seven(self):
        days = [day(i) for i in range(10)]
        labels = expand_labels(days, [day(5)])
        assert labels.tolist() == [0, 0, 1, 1, 1, 1, 1, 1, 1, 0]
        assert labels.sum() == 7

    def test_clipped_at_boundary(self):
        days = [day(i) for i in range(5)]
        labels = expand_labels(days, [day(0)])
        assert labels.tolist() == [1, 1, 1, 1, 0]

    def test_overlapping_windows_union(self):
        days = [day(i) for i in range(12)]
        labels = expand_labels(days, [day(3), day(5)])
        assert labels.tolist() == [1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0]

    def test_confirmed_outside_segment_rejected(self):
        with pytest.raises(ValueError, match="outside segment"):
            expand_labels([day(0), day(1)], [day(9)])


class TestSplits:
    def test_temporal_split_strict(self):
        ds = make_dataset([0, 1, 2, 3, 4])
        train, test = temporal_split(ds, day(3))
        assert list(train.dates) == [day(0), day(1), day(2)]
        assert list(test.dates) == [day(3), day(4)]

    def test_mc_split_sizes_and_partition(self, small_synth):
        ds = small_synth.dataset
        train, val = mc_split(ds, val_fraction=0.2, seed=5)
        assert len(val) == int(len(ds) * 0.2 + 0.5)
        assert len(train) + len(val) == len(ds)
        train_keys = set(zip(train.ids, train.dates))
        val_keys = set(zip(val.ids, val.dates))
        assert not train_keys & val_keys

    def test_mc_split_deterministic(self, small_synth):
        a = mc_split(small_synth.dataset, seed=3)
        b = mc_split(small_synth.dataset, seed=3)
        np.testing.assert_array_equal(a[1].X, b[1].X)

    def test_stratified_resample_floor_min_one(self):
        big = make_dataset(range(10), pid="P000")
        tiny = make_dataset([0], pid="P001")
        ds = Dataset.concat([big, tiny])
        out = stratified_resample(ds, fraction=0.8, seed=1)
        assert len(out.rows_of("P000")) == 8
        assert len(out.rows_of("P001")) == 1  # floor would give 0; min is 1

    def test_stratified_resample_no_replacement(self):
        ds = make_dataset(range(5))
        out = stratified_resample(ds, fraction=1.0, seed=2)
        assert len(set(out.dates)) == 5

    def test_bad_fraction(self):
        with pytest.raises(ValueError, match="fraction"):
            stratified_resample(make_dataset([0]), fraction=0.0)


class TestProfiles:
    def test_mean_standardized_rows(self):
        a = make_dataset([0, 1], pid="P000", feature=1.0)
        b = make_dataset([0, 1], pid="P001", feature=3.0)
        ds = Dataset.concat([a, b])
        std = Standardizer().fit(ds.X)
        pids, profiles = participant_profiles(ds, std)
        assert pids == ["P000", "P001"]
        np.testing.assert_allclose(profiles[0], -1.0)
        np.testing.assert_allclose(profiles[1], 1.0)


class TestSynth:
    def test_shape_and_schema(self, small_synth):
        ds = small_synth.dataset
        assert len(ds) == 12 * 30
        assert ds.n_features == data.N_FEATURES
        assert set(ds.sex) <= {"F", "M"}
        assert set(ds.y.tolist()) <= {0, 1}
        assert len(small_synth.true_clusters) == 12

    def test_clusters_round_robin(self, small_synth):
        assert small_synth.true_clusters["P000"] == 0
        assert small_synth.true_clusters["P001"] == 1
        assert small_synth.true_clusters["P003"] == 0

    def test_deterministic(self, small_synth):
        again = synth_generate(
            SynthConfig(n_participants=12, n_clusters=3, days_per_participant=30, seed=42)
        )
        np.testing.assert_array_equal(small_synth.dataset.X, again.dataset.X)
        np.testing.assert_array_equal(small_synth.dataset.y, again.dataset.y)

    def test_participant_order_invariance(self):
        # per-participant streams are keyed by id, so growing the roster
        # cannot change earlier participants' rows
        small = synth_generate(SynthConfig(n_participants=3, days_per_participant=20, seed=7))
        large = synth_generate(SynthConfig(n_participants=6, days_per_participant=20, seed=7))
        rows_small = small.dataset.rows_of("P001")
        rows_large = large.dataset.rows_of("P001")
        np.testing.assert_array_equal(
            small.dataset.X[rows_small], large.dataset.X[rows_large]
        )

    def test_episode_shift_planted(self):
        config = SynthConfig(
            n_participants=4, n_clusters=1, days_per_participant=200,
            noise=0.0, participant_offset=0.0, episode_rate=5.0, seed=3,
        )
        result = synth_generate(config)
        ds = result.dataset
        sick = ds.X[ds.y == 1]
        healthy = ds.X[ds.y == 0]
        assert sick[:, : config.symptom_width].mean() == pytest.approx(
            config.episode_shift
        )
        assert healthy[:, : config.symptom_width].mean() == pytest.approx(0.0)

    def test_hard_cluster_conflicts_with_neighbour(self):
        # noise-free: a healthy day of the last cluster equals a sick day of
        # its neighbour feature-for-feature
        config = SynthConfig(
            n_participants=4, n_clusters=2, days_per_participant=120,
            noise=0.0, participant_offset=0.0, episode_rate=5.0, seed=9,
        )
        ds = synth_generate(config).dataset
        easy = [p for p, c in synth_generate(config).true_clusters.items() if c == 0]
        hard = [p for p, c in synth_generate(config).true_clusters.items() if c == 1]
        easy_rows = np.concatenate([ds.rows_of(p) for p in easy])
        hard_rows = np.concatenate([ds.rows_of(p) for p in hard])
        easy_sick = ds.X[easy_rows][ds.y[easy_rows] == 1][0]
        hard_healthy = ds.X[hard_rows][ds.y[hard_rows] == 0][0]
        np.testing.assert_allclose(easy_sick, hard_healthy, atol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError, match="noise"):
            SynthConfig(noise=-1.0)
        with pytest.raises(ValueError, match="symptom_width"):
            SynthConfig(symptom_width=0)
