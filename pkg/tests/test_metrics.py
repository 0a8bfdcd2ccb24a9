import numpy as np
import pytest
from rich.table import Table

from simple_esdf.attribution import split_by_day
from simple_esdf.events import SlotConfig
from simple_esdf.metrics import (
    EvalReport,
    aggregate_reports,
    auc,
    auc_pairwise,
    calibration,
    evaluate_model,
    gauc,
    gauc_with_counts,
    log_loss,
    log_loss_by_delay,
    read_report,
    rela_impr,
    write_report,
)
from simple_esdf.metrics.compare import check_slot_consistency, render_comparison, write_delay_histogram
from simple_esdf.metrics.loss import DelayLoss
from simple_esdf.metrics.report import render_report
from simple_esdf.model import ModelSpec, init_params
from simple_esdf.utils.errors import ConfigError, DataError, UndefinedMetricError


class TestAuc:
    def test_perfect(self):
        assert auc([0.1, 0.4, 0.35, 0.8], [0, 1, 0, 1]) == 1.0

    def test_all_tied(self):
        assert auc([0.5] * 4, [0, 1, 0, 1]) == 0.5

    def test_partial_tie(self):
        assert auc([0.2, 0.8, 0.5, 0.5], [0, 1, 1, 0]) == pytest.approx(0.875)

    @pytest.mark.parametrize("labels", [[1, 1, 1], [0, 0, 0]])
    def test_single_class(self, labels):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.2, 0.3], labels)

    def test_rank_sum_matches_pairwise(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            labels = rng.integers(0, 2, size=n)
            labels[:2] = [0, 1]
            # 粗粒度分数制造平分
            scores = np.round(rng.random(n), 1)
            assert auc(scores, labels) == pytest.approx(auc_pairwise(scores, labels), abs=1e-12)

    def test_monotone_transform_invariant(self):
        rng = np.random.default_rng(1)
        scores = rng.random(100)
        labels = rng.integers(0, 2, size=100)
        assert auc(scores, labels) == pytest.approx(auc(np.exp(3 * scores) - 2.0, labels))

    def test_complement(self):
        rng = np.random.default_rng(2)
        scores = rng.random(50)
        labels = rng.integers(0, 2, size=50)
        assert auc(scores, labels) + auc(-scores, labels) == pytest.approx(1.0)


class TestGauc:
    def test_impression_weighted(self):
        scores = [0.9, 0.1, 0.8, 0.2] + [0.5] * 6
        labels = [1, 0, 1, 0] + [1, 0, 1, 0, 1, 0]
        groups = ["a"] * 4 + ["b"] * 6
        assert gauc(scores, labels, groups) == pytest.approx(0.7)

    def test_one_group_equals_auc(self):
        rng = np.random.default_rng(3)
        scores = rng.random(30)
        labels = rng.integers(0, 2, size=30)
        labels[:2] = [0, 1]
        assert gauc(scores, labels, ["g"] * 30) == pytest.approx(auc(scores, labels))

    def test_single_class_groups_excluded(self):
        scores = [0.9, 0.1, 0.3, 0.7, 0.2]
        labels = [1, 0, 1, 1, 0]
        groups = ["a", "a", "b", "b", "c"]
        result = gauc_with_counts(scores, labels, groups)
        assert result.value == 1.0
        assert (result.used_groups, result.skipped_groups, result.total_groups) == (1, 2, 3)

    def test_no_usable_group(self):
        with pytest.raises(UndefinedMetricError):
            gauc([0.1, 0.2], [1, 0], ["a", "b"])

    def test_explicit_weights(self):
        scores = [0.9, 0.1, 0.1, 0.9]
        labels = [1, 0, 1, 0]
        groups = ["a", "a", "b", "b"]
        assert gauc(scores, labels, groups, group_weights=[3, 3, 1, 1]) == pytest.approx(0.75)


class TestRelaImpr:
    @pytest.mark.parametrize("measured,base,expected", [(0.7811, 0.7679, 4.93), (0.6181, 0.6107, 6.68)])
    def test_reported_gains(self, measured, base, expected):
        assert rela_impr(measured, base) == pytest.approx(expected, abs=0.01)

    def test_identity(self):
        assert rela_impr(0.66, 0.66) == 0.0

    def test_monotone(self):
        assert rela_impr(0.70, 0.65) < rela_impr(0.71, 0.65)

    @pytest.mark.parametrize("base", [0.5, 0.4])
    def test_base_at_floor(self, base):
        with pytest.raises(UndefinedMetricError):
            rela_impr(0.7, base)


class TestLogLoss:
    def test_hand(self):
        assert log_loss([0.5, 0.5], [1, 0]) == pytest.approx(np.log(2.0))

    def test_clamped(self):
        assert np.isfinite(log_loss([0.0, 1.0], [1, 0]))

    def test_empty(self):
        with pytest.raises(UndefinedMetricError):
            log_loss([], [])

    def test_buckets_hold_positives_only(self):
        scores = [0.8, 0.4, 0.5, 0.2, 0.3]
        labels = [1, 1, 1, 0, 0]
        slots = [0, 2, 2, -1, -1]
        result = log_loss_by_delay(scores, labels, slots, num_bins=4)
        assert result.overall == pytest.approx(log_loss(scores, labels))
        assert result.buckets[0] == pytest.approx(-np.log(0.8))
        assert result.buckets[2] == pytest.approx(-(np.log(0.4) + np.log(0.5)) / 2)
        assert result.counts == {0: 1, 2: 2}
        assert result.omitted == [1, 3]
        assert result.delayed_mean() == pytest.approx(result.buckets[2])

    def test_delayed_mean_undefined(self):
        with pytest.raises(UndefinedMetricError):
            DelayLoss(overall=0.1, buckets={0: 0.2}).delayed_mean()


class TestCalibration:
    def test_relative_error(self):
        report = calibration([0.12, 0.08], [0.1, 0.1], [1, 0])
        assert report.n == 2
        assert report.mean_observed == 0.5
        assert report.relative_error == pytest.approx(0.0)

    def test_empty(self):
        with pytest.raises(UndefinedMetricError):
            calibration([], [], [])


def make_report(objective="esdf", auc_value=0.7, gauc_value=0.65, slot=None) -> EvalReport:
    return EvalReport(
        n_eval=100,
        auc=auc_value,
        gauc=gauc_value,
        gauc_used=12,
        gauc_skipped=3,
        gauc_sparse=False,
        delay_loss=DelayLoss(overall=0.3, buckets={0: 0.2, 3: 0.9}, counts={0: 5, 3: 2}, omitted=[1, 2, 4, 5, 6, 7]),
        delay_histogram=np.array([0.5, 0.2, 0.1, 0.1, 0.05, 0.03, 0.01, 0.01]),
        objective=objective,
        slot=slot or SlotConfig().to_dict(),
    )


class TestReportFile:
    def test_roundtrip(self, tmp_path):
        report = make_report()
        path = tmp_path / "report.tsv"
        write_report(path, report, {"seed": 1})
        loaded, config = read_report(path)
        assert config == {"seed": 1}
        assert loaded.auc == report.auc
        assert loaded.gauc == report.gauc
        assert loaded.delay_loss == report.delay_loss
        np.testing.assert_array_equal(loaded.delay_histogram, report.delay_histogram)
        assert loaded.objective == "esdf"
        assert loaded.slot == report.slot

    def test_missing_gauc(self, tmp_path):
        path = tmp_path / "report.tsv"
        write_report(path, make_report(gauc_value=None), {})
        assert read_report(path)[0].gauc is None

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "report.tsv"
        path.write_text("#NOT_A_REPORT v1\n", encoding="utf-8")
        with pytest.raises(DataError):
            read_report(path)

    def test_render(self):
        table = render_report(make_report())
        assert isinstance(table, Table)
        assert table.row_count >= 5


class TestAggregate:
    def test_mean_std_and_gain(self):
        reports = [
            make_report("esmm", 0.60),
            make_report("esmm", 0.62),
            make_report("esdf", 0.63),
            make_report("esdf", 0.65),
        ]
        rows = {r.objective: r for r in aggregate_reports(reports)}
        assert rows["esmm"].auc_mean == pytest.approx(0.61)
        assert rows["esmm"].auc_std == pytest.approx(np.std([0.60, 0.62], ddof=1))
        assert rows["esmm"].rela_impr == pytest.approx(0.0)
        assert rows["esdf"].rela_impr == pytest.approx((0.14 / 0.11 - 1) * 100)
        assert rows["esdf"].n == 2

    def test_without_base(self):
        rows = aggregate_reports([make_report("dfm")])
        assert rows[0].rela_impr is None
        assert rows[0].auc_std == 0.0

    def test_slot_mismatch(self):
        other = make_report(slot={"max_delay_days": 3, "seconds_per_slot": 86400})
        with pytest.raises(DataError):
            check_slot_consistency([make_report(), other])

    def test_delay_histogram_rows(self, tmp_path):
        path = tmp_path / "delay_histogram.tsv"
        write_delay_histogram(path, [make_report()], {})
        body = [line for line in path.read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
        assert body[0] == "slot\tfraction"
        assert len(body) - 1 == SlotConfig().num_bins

    def test_render(self):
        table = render_comparison(aggregate_reports([make_report("esmm"), make_report("esdf", 0.71)]))
        assert table.row_count == 2


class TestEvaluateModel:
    @pytest.fixture(scope="class")
    def test_records(self, small_data, small_gen):
        records, _ = small_data
        return split_by_day(records, small_gen.start_ts, 7, 1, small_gen.slot)[1]

    def _params(self, slot):
        return init_params(ModelSpec(120, 4, slot.num_bins, 4, (8,)), seed=0)

    def test_cvr_mode(self, test_records, small_data, small_gen):
        _, truths = small_data
        report = evaluate_model(self._params(small_gen.slot), test_records, small_gen.slot, truths=truths)
        clicked = sum(r.y for r in test_records)
        assert report.n_eval == clicked
        assert 0.0 <= report.auc <= 1.0
        assert report.calibration.n == clicked
        assert report.delay_histogram.sum() == pytest.approx(1.0)
        assert report.gauc_sparse == (report.gauc_used < 10)

    def test_ctcvr_mode(self, test_records, small_gen):
        report = evaluate_model(self._params(small_gen.slot), test_records, small_gen.slot, score_mode="ctcvr")
        assert report.n_eval == len(test_records)
        assert report.calibration is None

    def test_slot_mismatch(self, test_records, small_gen):
        with pytest.raises(ConfigError):
            evaluate_model(self._params(SlotConfig(max_delay_days=3)), test_records, small_gen.slot)

    def test_unknown_score_mode(self, test_records, small_gen):
        with pytest.raises(ConfigError):
            evaluate_model(self._params(small_gen.slot), test_records, small_gen.slot, score_mode="ctr")
