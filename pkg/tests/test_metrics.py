import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gatlab import dataset as ds
from gatlab import metrics as mt
from gatlab import report, training
from gatlab.autodiff import ContractError
from gatlab.models import VariantConfig, params_from_arrays, predict


class TestTpr:
    def test_all_correct(self):
        assert mt.tpr([1, 2, 1], [1, 2, 1]) == 1.0

    def test_fraction(self):
        true = np.ones(1000, dtype=int)
        pred = np.where(np.arange(1000) < 497, 1, 2)
        assert mt.tpr(pred, true) == 0.497

    def test_none_correct(self):
        assert mt.tpr([2, 2], [1, 1]) == 0.0

    def test_empty(self):
        with pytest.raises(ContractError):
            mt.tpr([], [])

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            mt.tpr([1, 2], [1])

    def test_ties_go_to_lowest_index(self):
        rows = np.array([[0.0, 0.5, 0.5], [0.2, 0.4, 0.4]])
        assert mt.argmax_lowest(rows).tolist() == [1, 1]


class TestErrorStats:
    def test_exact(self):
        assert mt.error_stats([1.0, 2.0], [1.0, 2.0]) == mt.ErrorStats(0.0, 0.0, 0.0, 0.0)

    def test_two_errors(self):
        s = mt.error_stats([1.1, 2.3], [1.0, 2.0])
        assert s.me == pytest.approx(0.2)
        assert s.variance == pytest.approx(0.01)
        assert s.max_error == pytest.approx(0.3)

    def test_sign_handling(self):
        s = mt.error_stats([0.8], [1.0])
        assert s.me == pytest.approx(0.2)
        assert s.me_signed == pytest.approx(-0.2)

    def test_empty(self):
        with pytest.raises(ContractError):
            mt.error_stats([], [])

    @settings(max_examples=50)
    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-5, 5)), st.randoms())
    def test_permutation_invariant(self, err, rnd):
        y = np.zeros_like(err)
        perm = list(range(len(err)))
        rnd.shuffle(perm)
        a, b = mt.error_stats(err, y), mt.error_stats(err[perm], y)
        assert a.max_error == b.max_error
        assert a.me == pytest.approx(b.me, abs=1e-12)
        assert a.variance == pytest.approx(b.variance, abs=1e-12)


class TestConfidenceHistogram:
    def test_top_bin(self):
        rows = np.array([[0.0, 0.97, 0.03], [0.0, 0.04, 0.96]])
        h = mt.confidence_histogram(rows, np.array([1, 2]))
        assert h.top_bin() == 1.0
        assert h.centers[-1] == pytest.approx(0.95)

    def test_perfect_selector(self):
        rows = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        assert mt.confidence_histogram(rows, np.array([1, 2])).top_bin() == 1.0

    def test_right_closed_bins(self):
        rows = np.array([[0.0, 0.5, 0.5 - 1e-9], [0.0, 0.6, 0.4], [0.4, 0.6, 0.0]])
        h = mt.confidence_histogram(rows, np.array([1, 1, 1]))
        # 0.5 belongs to (0.4, 0.5], 0.6 to (0.5, 0.6]
        assert h.freq[4] == pytest.approx(1 / 3) and h.freq[5] == pytest.approx(2 / 3)

    def test_only_true_positives_count(self):
        rows = np.array([[0.0, 0.95, 0.05], [0.0, 0.3, 0.7]])
        h = mt.confidence_histogram(rows, np.array([1, 1]))
        assert h.count == 1 and h.top_bin() == 1.0

    def test_no_true_positives(self):
        h = mt.confidence_histogram(np.array([[0.0, 0.2, 0.8]]), np.array([1]))
        assert h.empty and h.freq.sum() == 0.0

    @settings(max_examples=50)
    @given(arrays(np.float64, (20, 3), elements=st.floats(0.01, 1.0)))
    def test_frequencies_form_distribution(self, raw):
        rows = raw / raw.sum(axis=1, keepdims=True)
        h = mt.confidence_histogram(rows, mt.argmax_lowest(rows))
        assert ((h.freq >= 0) & (h.freq <= 1)).all()
        assert h.freq.sum() == pytest.approx(1.0)

    def test_csv(self, tmp_path):
        h = mt.confidence_histogram(np.array([[0.0, 0.97, 0.03]]), np.array([1]))
        h.to_csv(tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines[0] == "bin_center,rel_freq"
        assert lines[-1] == "0.95,1" and len(lines) == 11

    def test_matches_inference_rows(self):
        spec = ds.ExperimentSpec("I", m_train=300, m_test=200, seed=4)
        cfg = VariantConfig("gat-theta-n")
        res = training.train(cfg, spec, training.TrainConfig(epochs=2))
        _, test = ds.train_test(spec)
        _, rows = predict(params_from_arrays(res.params), cfg, spec.graph(), test.x)
        again = mt.confidence_histogram(rows, test.r)
        np.testing.assert_array_equal(again.freq, res.histogram.freq)


def _fake_run(variant, seed, tpr, me, failed=False):
    res = training.RunResult(variant, seed, {}, [], failed=failed)
    if not failed:
        res.tpr = tpr
        res.stats = mt.ErrorStats(me, 0.0, 2 * me, me)
    return res


class TestSweepSummary:
    def test_median_of_two(self):
        s = mt.summarize_sweep({"v": [_fake_run("v", 0, 0.4, 0.1), _fake_run("v", 1, 1.0, 0.2)]})
        assert s.median("v") == pytest.approx(0.7)

    def test_identical_runs_have_zero_iqr(self):
        s = mt.summarize_sweep({"v": [_fake_run("v", e, 0.9, 0.1) for e in range(100)]})
        assert s.box("v").iqr == 0.0 and s.box("v", "me").iqr == 0.0

    def test_failed_runs_skipped(self):
        s = mt.summarize_sweep({"v": [_fake_run("v", 0, 0.5, 0.1), _fake_run("v", 1, 0, 0, failed=True)]})
        assert s.tpr["v"].tolist() == [0.5]

    def test_all_failed(self):
        with pytest.raises(ContractError):
            mt.summarize_sweep({"v": [_fake_run("v", 0, 0, 0, failed=True)]})

    def test_box_stats_outliers(self):
        b = mt.box_stats([1.0, 1.0, 1.0, 1.0, 0.0])
        assert (b.q1, b.median, b.q3) == (1.0, 1.0, 1.0)
        assert b.outliers == [0.0] and b.whisker_lo == 1.0

    def test_files_written(self, tmp_path):
        runs = {
            "gatv2": [_fake_run("gatv2", e, 0.5, 0.3) for e in range(3)],
            "gat-theta-n-plus": [_fake_run("gat-theta-n-plus", e, 0.99, 0.05) for e in range(3)],
        }
        mt.summarize_sweep(runs, out_dir=tmp_path)
        for name in ("sweep_gatv2.csv", "sweep_gat-theta-n-plus.csv", "robustness.svg", "boxplots.svg"):
            assert (tmp_path / name).is_file()
        header = (tmp_path / "sweep_gatv2.csv").read_text().splitlines()[0]
        assert header == "idx,me,tpr,max_error,variance"
        back = mt.load_sweep_dir(tmp_path)
        assert back.tpr["gat-theta-n-plus"].tolist() == [0.99] * 3

    def test_csv_round_trip_with_failure(self, tmp_path):
        runs = [_fake_run("v", 0, 0.25, 0.125), _fake_run("v", 1, 0, 0, failed=True)]
        mt.write_sweep_csv(runs, tmp_path / "s.csv")
        back = mt.read_sweep_csv(tmp_path / "s.csv")
        assert back["tpr"][0] == 0.25 and np.isnan(back["tpr"][1])

    def test_load_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            mt.load_sweep_dir(tmp_path)


class TestReport:
    def test_histogram_svg(self, tmp_path):
        h = mt.confidence_histogram(np.array([[0.0, 0.97, 0.03]]), np.array([1]))
        path = report.histogram_svg(h, tmp_path / "h.svg", title="x")
        assert path.read_text().lstrip().startswith("<?xml")

    def test_empty_histogram_svg(self, tmp_path):
        h = mt.confidence_histogram(np.array([[0.0, 0.2, 0.8]]), np.array([1]))
        assert report.histogram_svg(h, tmp_path / "h.svg").stat().st_size > 0

    def test_svgs_are_reproducible(self, tmp_path):
        s = mt.summarize_sweep({"v": [_fake_run("v", e, 0.1 * e, 0.01 * e) for e in range(5)]})
        a = report.boxplots_svg(s, tmp_path / "a.svg").read_bytes()
        b = report.boxplots_svg(s, tmp_path / "b.svg").read_bytes()
        assert a == b

    def test_loss_svg(self, tmp_path):
        assert report.loss_svg([1.0, 0.5, 0.25], tmp_path / "l.svg").is_file()
