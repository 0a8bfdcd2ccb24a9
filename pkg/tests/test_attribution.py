import numpy as np
import pytest

from simple_esdf.attribution import (
    daily_snapshots,
    delay_histogram,
    snapshot,
    split_by_day,
    train_observe_ts,
)
from simple_esdf.constants.constants import FirstDay, LabelPolicy
from simple_esdf.events import ObservedSample, SlotConfig
from simple_esdf.utils.errors import UndefinedMetricError
from tests.helpers import DAY, START_TS, make_record

LATE = make_record("late", y=1, conversion_delay=3 * DAY)
OBSERVE_DAY1 = START_TS + DAY


class TestSnapshotPolicies:
    def test_full_censored_hides_future_conversion(self, slot):
        [s] = snapshot([LATE], OBSERVE_DAY1, LabelPolicy.FULL_CENSORED, slot).samples
        assert (s.z, s.e, s.d) == (0, 1, None)

    def test_ground_truth_sees_conversion_in_window(self, slot):
        [s] = snapshot([LATE], OBSERVE_DAY1, LabelPolicy.GROUND_TRUTH, slot, window_days=7).samples
        assert (s.z, s.d, s.e) == (1, 3, slot.overflow_slot)

    def test_ground_truth_ignores_late_conversion(self, slot):
        record = make_record(y=1, conversion_delay=8 * DAY)
        [s] = snapshot([record], None, LabelPolicy.GROUND_TRUTH, slot, window_days=7).samples
        assert s.z == 0

    def test_naive_drop_removes_observed_late_conversion(self, slot):
        snap = snapshot([LATE], START_TS + 4 * DAY, LabelPolicy.NAIVE_DROP, slot)
        assert len(snap) == 0
        assert snap.dropped == 1

    def test_naive_drop_keeps_unobserved_late_conversion(self, slot):
        [s] = snapshot([LATE], OBSERVE_DAY1, LabelPolicy.NAIVE_DROP, slot).samples
        assert (s.z, s.d, s.e) == (0, None, None)

    def test_naive_drop_keeps_negative_and_day1(self, slot):
        records = [make_record("neg", y=1), make_record("fast", y=1, conversion_delay=3600)]
        snap = snapshot(records, START_TS + 2 * DAY, LabelPolicy.NAIVE_DROP, slot)
        assert [(s.record.sample_id, s.z, s.d) for s in snap] == [("neg", 0, None), ("fast", 1, 0)]
        assert snap.dropped == 0

    def test_esmm_day1_uses_first_day_only(self, slot):
        records = [
            make_record("fast", y=1, conversion_delay=3600),
            LATE,
        ]
        snap = snapshot(records, START_TS + 10 * DAY, LabelPolicy.ESMM_DAY1, slot)
        assert [(s.z, s.d, s.e) for s in snap] == [(1, 0, None), (0, None, None)]

    def test_esmm_day1_calendar_mode(self, slot):
        # 点击在 23:00，转化在次日 01:00：滚动 24 小时内，但跨自然日
        click = START_TS + 23 * 3600
        record = make_record(y=1, impression_ts=click, conversion_delay=2 * 3600)
        rolling = snapshot([record], click + 5 * DAY, LabelPolicy.ESMM_DAY1, slot, first_day=FirstDay.ROLLING)
        calendar = snapshot([record], click + 5 * DAY, LabelPolicy.ESMM_DAY1, slot, first_day=FirstDay.CALENDAR)
        assert rolling[0].z == 1
        assert calendar[0].z == 0

    def test_shift_discards_elapsed(self, slot):
        [s] = snapshot([LATE], START_TS + 4 * DAY, LabelPolicy.SHIFT, slot).samples
        assert (s.z, s.d, s.e) == (1, 3, None)

    def test_conversion_at_observe_ts_is_observed(self, slot):
        [s] = snapshot([LATE], START_TS + 3 * DAY, LabelPolicy.FULL_CENSORED, slot).samples
        assert s.z == 1

    def test_future_impressions_excluded(self, slot):
        later = make_record("later", y=0, impression_ts=START_TS + 5 * DAY)
        snap = snapshot([LATE, later], OBSERVE_DAY1, LabelPolicy.FULL_CENSORED, slot)
        assert [s.record.sample_id for s in snap] == ["late"]

    def test_observe_before_log_start_is_empty(self, slot):
        snap = snapshot([LATE], START_TS - 1, LabelPolicy.FULL_CENSORED, slot)
        assert len(snap) == 0
        assert snap.warning


class TestSnapshotProperties:
    def test_monotone_maturation(self, small_data, slot):
        records, _ = small_data
        early = snapshot(records, START_TS + 3 * DAY, LabelPolicy.FULL_CENSORED, slot)
        late = snapshot(records, START_TS + 6 * DAY, LabelPolicy.FULL_CENSORED, slot)
        converted_early = {s.record.sample_id for s in early if s.z == 1}
        converted_late = {s.record.sample_id for s in late if s.z == 1}
        assert converted_early <= converted_late

    def test_full_censored_keeps_clicks(self, small_data, slot):
        records, _ = small_data
        observe = START_TS + 4 * DAY
        snap = snapshot(records, observe, LabelPolicy.FULL_CENSORED, slot)
        for s in snap:
            assert s.y == s.record.y
            s.validate(slot)

    def test_naive_drop_at_train_end(self, small_data, slot):
        records, _ = small_data
        observe = train_observe_ts(START_TS, 7, slot)
        naive = snapshot(records, observe, LabelPolicy.NAIVE_DROP, slot)
        esmm = snapshot(records, observe, LabelPolicy.ESMM_DAY1, slot)
        late = {
            s.record.sample_id
            for s in snapshot(records, observe, LabelPolicy.FULL_CENSORED, slot)
            if s.z == 1 and s.d > 0
        }
        kept = {s.record.sample_id for s in naive}
        assert kept == {s.record.sample_id for s in esmm} - late
        assert naive.dropped == len(late) > 0
        assert sum(1 for s in naive if s.y == 1 and s.z == 0) > 0

    def test_ground_truth_invariant_to_observe_ts(self, small_data, slot):
        records, _ = small_data
        a = snapshot(records, START_TS, LabelPolicy.GROUND_TRUTH, slot)
        b = snapshot(records, START_TS + 8 * DAY, LabelPolicy.GROUND_TRUTH, slot)
        assert [(s.z, s.d) for s in a] == [(s.z, s.d) for s in b]


class TestDelayHistogram:
    def _converted(self, d):
        return ObservedSample(record=make_record(conversion_delay=d * DAY), z=1, e=7, d=d)

    def test_hand_built(self, slot):
        samples = [self._converted(d) for d in (0, 0, 1, 3)]
        np.testing.assert_allclose(delay_histogram(samples, slot), [0.5, 0.25, 0, 0.25, 0, 0, 0, 0])

    def test_all_same_day(self, slot):
        hist = delay_histogram([self._converted(0)] * 3, slot)
        assert hist.tolist() == [1.0] + [0.0] * 7

    def test_no_conversions(self, slot):
        with pytest.raises(UndefinedMetricError):
            delay_histogram([ObservedSample(record=make_record(), z=0, e=1)], slot)

    def test_generated_slot0_mass(self, small_data, slot):
        records, _ = small_data
        hist = delay_histogram(snapshot(records, None, LabelPolicy.GROUND_TRUTH, slot), slot)
        assert hist.shape == (slot.num_bins,)
        assert 0.7 <= hist[0] <= 0.9


class TestSplit:
    def test_train_observe_ts(self, slot):
        assert train_observe_ts(START_TS, 7, slot) == START_TS + 7 * DAY - 1

    def test_split_by_day(self, small_data, slot):
        records, _ = small_data
        train, test = split_by_day(records, START_TS, 7, 1, slot)
        assert len(train) + len(test) == len(records)
        assert all(r.impression_ts < START_TS + 7 * DAY for r in train)
        assert all(r.impression_ts >= START_TS + 7 * DAY for r in test)

    def test_daily_snapshots_grow(self, small_data, slot):
        records, _ = small_data
        train, _ = split_by_day(records, START_TS, 7, 1, slot)
        snaps = daily_snapshots(train, START_TS, 3, LabelPolicy.SHIFT, SlotConfig())
        assert [s.observe_ts for s in snaps] == [train_observe_ts(START_TS, k, slot) for k in (1, 2, 3)]
        assert len(snaps[0]) <= len(snaps[1]) <= len(snaps[2])
