import numpy as np
import pytest

from tsadiff import pipeline as pl
from tsadiff.synthgen import LabeledSeries


def make_series(values):
    values = np.asarray(values, dtype=float)
    return LabeledSeries(values, np.zeros(values.shape[1], dtype=bool))


class TestScaler:
    def test_max_abs_divisor(self):
        s = pl.fit_scaler(make_series([[-2.0, 1.0]]), "max_abs")
        assert s.stats["max_abs"][0] == 2.0

    def test_min_max_stats(self):
        s = pl.fit_scaler(make_series([[0.0, 10.0]]), "min_max")
        assert s.stats["min"][0] == 0.0 and s.stats["max"][0] == 10.0

    def test_max_abs_apply(self):
        series = make_series([[-2.0, 1.0]])
        out = pl.apply_scaler(series, pl.fit_scaler(series, "max_abs"))
        assert np.allclose(out.values, [[-1.0, 0.5]])

    def test_min_max_clips(self):
        train = make_series([[0.0, 10.0]])
        scaler = pl.fit_scaler(train, "min_max")
        out = pl.apply_scaler(make_series([[12.0, 5.0]]), scaler)
        assert np.allclose(out.values, [[1.0, 0.5]])

    def test_train_in_unit_interval(self):
        rng = np.random.default_rng(0)
        train = make_series(rng.normal(size=(3, 100)) * 5)
        out = pl.apply_scaler(train, pl.fit_scaler(train, "min_max"))
        assert out.values.min() >= 0 and out.values.max() <= 1

    def test_constant_feature_maps_to_zero(self):
        train = make_series([[3.0, 3.0]])
        out = pl.apply_scaler(train, pl.fit_scaler(train, "min_max"))
        assert np.allclose(out.values, 0.0)

    def test_inverse_identity_max_abs(self):
        rng = np.random.default_rng(1)
        train = make_series(rng.normal(size=(2, 50)))
        scaler = pl.fit_scaler(train, "max_abs")
        scaled = pl.apply_scaler(train, scaler)
        back = scaled.values * scaler.stats["max_abs"][:, None]
        assert np.abs(back - train.values).max() < 1e-9

    def test_dim_mismatch(self):
        scaler = pl.fit_scaler(make_series([[1.0, 2.0]]), "max_abs")
        with pytest.raises(ValueError):
            pl.apply_scaler(make_series(np.ones((2, 4))), scaler)

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            pl.fit_scaler(LabeledSeries(np.zeros((1, 0)), np.zeros(0, dtype=bool)), "max_abs")


class TestWindows:
    def test_counts_and_tail(self):
        series = make_series(np.arange(250.0).reshape(1, 250))
        ws = pl.make_windows(series, 100)
        assert ws.count == 2 and ws.dropped_tail == 50

    def test_coverage(self):
        series = make_series(np.arange(200.0).reshape(1, 200))
        ws = pl.make_windows(series, 100)
        assert np.array_equal(ws.windows[0, 0], np.arange(100.0))
        assert np.array_equal(ws.windows[1, 0], np.arange(100.0, 200.0))

    def test_reassembly_identity(self):
        rng = np.random.default_rng(2)
        series = make_series(rng.normal(size=(3, 230)))
        ws = pl.make_windows(series, 50)
        rebuilt = ws.windows.transpose(1, 0, 2).reshape(3, -1)
        assert np.array_equal(rebuilt, series.values[:, :200])

    def test_too_short(self):
        with pytest.raises(ValueError, match="shorter than one window"):
            pl.make_windows(make_series(np.ones((1, 5))), 10)

    def test_label_partition(self):
        labels = np.zeros(45, dtype=bool)
        labels[[3, 17, 40]] = True
        series = LabeledSeries(np.zeros((1, 45)), labels)
        ws = pl.make_windows(series, 10)
        assert np.array_equal(ws.flat_labels, labels[:40])


class TestConcatScores:
    def test_concatenation(self):
        out = pl.concat_scores([[1, 2, 3], [4, 5, 6]])
        assert np.array_equal(out, [1, 2, 3, 4, 5, 6])

    def test_single_window_identity(self):
        assert np.array_equal(pl.concat_scores([[7, 8]]), [7.0, 8.0])

    def test_alignment_markers(self):
        series = make_series(np.zeros((1, 30)))
        ws = pl.make_windows(series, 10)
        scores = [np.full(10, i) for i in range(ws.count)]
        flat = pl.concat_scores(scores)
        for t in range(30):
            assert flat[t] == t // 10

    def test_mismatched_window_raises(self):
        with pytest.raises(ValueError):
            pl.concat_scores([[1, 2, 3], [4, 5]])


class TestCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        series = LabeledSeries(rng.normal(size=(4, 37)), rng.random(37) < 0.2)
        path = tmp_path / "data.csv"
        pl.save_series_csv(path, series)
        back = pl.load_csv(path)
        assert np.allclose(back.values, series.values, rtol=1e-8)
        assert np.array_equal(back.labels, series.labels)

    def test_small_file(self, tmp_path):
        path = tmp_path / "two.csv"
        path.write_text("t,f1,label\n0,1.5,0\n1,2.5,1\n")
        series = pl.load_csv(path)
        assert series.length == 2 and series.dims == 1
        assert series.labels.tolist() == [False, True]

    def test_bad_label(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,f1,label\n0,1.5,2\n")
        with pytest.raises(pl.CsvFormatError, match=":2:"):
            pl.load_csv(path)

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,f1,label\n0,oops,1\n")
        with pytest.raises(pl.CsvFormatError, match="non-numeric"):
            pl.load_csv(path)

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,f1\n0,1.0\n")
        with pytest.raises(pl.CsvFormatError, match="header"):
            pl.load_csv(path)

    def test_scores_roundtrip(self, tmp_path):
        scores = np.array([0.5, 1.25, 0.0])
        labels = np.array([False, True, False])
        path = tmp_path / "scores.csv"
        pl.save_scores_csv(path, scores, labels)
        s2, l2 = pl.load_scores_csv(path)
        assert np.allclose(s2, scores) and np.array_equal(l2, labels)
