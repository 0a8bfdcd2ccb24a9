import numpy as np
import pytest

from simple_esdf.events import SlotConfig
from simple_esdf.events.log_io import EventLog, write_event_log
from simple_esdf.synthgen import GenConfig, GroundTruth, generate, oracle_posterior, read_truth, summarize, write_truth
from simple_esdf.utils.errors import ConfigError, InputError


def _zero_config(n: int, slot: SlotConfig) -> GenConfig:
    k = slot.num_bins
    return GenConfig(
        n_impressions=n,
        feature_dim=40,
        n_fields=4,
        true_ctr_weights=np.zeros(40),
        true_cvr_weights=np.zeros(40),
        delay_logit_weights=np.zeros((40, k)),
        delay_bias=np.zeros(k),
        ctr_bias=0.0,
        cvr_bias=0.0,
        seed=5,
        slot=slot,
    )


class TestGenConfig:
    def test_dimension_mismatch(self, slot):
        with pytest.raises(ConfigError):
            GenConfig(
                n_impressions=10,
                feature_dim=40,
                n_fields=4,
                true_ctr_weights=np.zeros(39),
                true_cvr_weights=np.zeros(40),
                delay_logit_weights=np.zeros((40, slot.num_bins)),
                delay_bias=np.zeros(slot.num_bins),
            )

    def test_day1_target_range(self, slot):
        with pytest.raises(ConfigError):
            GenConfig.build(n_impressions=10, feature_dim=40, n_fields=4, day1_mass_target=1.0)

    def test_build_is_deterministic(self):
        a = GenConfig.build(n_impressions=10, feature_dim=40, n_fields=4, seed=3)
        b = GenConfig.build(n_impressions=10, feature_dim=40, n_fields=4, seed=3)
        np.testing.assert_array_equal(a.delay_logit_weights, b.delay_logit_weights)
        assert a.delay_bias[0] == b.delay_bias[0]


class TestGenerate:
    def test_zero_weights_click_rate(self, slot):
        n = 4000
        records, _ = generate(_zero_config(n, slot))
        rate = np.mean([r.y for r in records])
        assert abs(rate - 0.5) <= 3 * np.sqrt(0.25 / n)

    @pytest.mark.slow
    def test_day1_mass_matches_target(self):
        cfg = GenConfig.build(n_impressions=100000, feature_dim=120, n_fields=4, seed=2, block_size=10000)
        records, truths = generate(cfg)
        stats = summarize(records, truths, cfg.slot)
        assert 0.75 <= stats["delay_histogram"][0] <= 0.85

    def test_delay_shape_is_not_geometric(self, small_data, small_gen):
        _, truths = small_data
        tails = np.array([t.delay_dist[1 : small_gen.slot.overflow_slot] for t in truths])
        # 离散化指数分布在槽 1..T 上单调不增
        rising = np.any(np.diff(tails, axis=1) > 0, axis=1)
        assert rising.mean() > 0.5
        peaks = {int(np.argmax(row)) for row in tails}
        assert len(peaks) > 1

    def test_truth_consistent_with_log(self, small_data, small_gen):
        records, truths = small_data
        assert len(records) == len(truths) == small_gen.n_impressions
        sps = small_gen.slot.seconds_per_slot
        for r, t in zip(records, truths):
            assert r.sample_id == t.sample_id
            assert abs(t.delay_dist.sum() - 1.0) < 1e-9
            assert r.converted == bool(t.c)
            if t.c:
                slot = min((r.conversion_ts - r.click_ts) // sps, small_gen.slot.overflow_slot)
                assert slot == t.d

    def test_impressions_within_days(self, small_data, small_gen):
        records, _ = small_data
        ts = np.array([r.impression_ts for r in records])
        end = small_gen.start_ts + small_gen.n_days * small_gen.slot.seconds_per_slot
        assert ts.min() >= small_gen.start_ts
        assert ts.max() < end

    def test_requests_share_timestamp(self, small_data):
        records, _ = small_data
        by_request = {}
        for r in records:
            by_request.setdefault(r.request_id, set()).add(r.impression_ts)
        assert all(len(v) == 1 for v in by_request.values())
        assert len(by_request) < len(records)

    def test_same_seed_same_records(self, small_gen, small_data):
        records, truths = generate(small_gen)
        assert records == small_data[0]
        assert [t.d for t in truths] == [t.d for t in small_data[1]]

    def test_worker_count_does_not_change_output(self, small_gen, small_data):
        records, _ = generate(small_gen, n_workers=3)
        assert records == small_data[0]

    def test_files_byte_identical(self, tmp_path, small_gen, small_data):
        for name in ("a", "b"):
            records, truths = generate(small_gen)
            write_event_log(tmp_path / name / "events.tsv", EventLog(records, 120, 4, {"SEED": 11}))
            write_truth(tmp_path / name / "truth.tsv", truths, {"SEED": 11})
        for fname in ("events.tsv", "truth.tsv"):
            assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()

    def test_truth_file_reload(self, tmp_path, small_data):
        _, truths = small_data
        write_truth(tmp_path / "truth.tsv", truths[:50], {})
        loaded = read_truth(tmp_path / "truth.tsv")
        assert [t.sample_id for t in loaded] == [t.sample_id for t in truths[:50]]
        np.testing.assert_array_equal(loaded[7].delay_dist, truths[7].delay_dist)
        assert loaded[7].p_cvr == truths[7].p_cvr


def _truth(p_cvr: float, dist, y: int = 1) -> GroundTruth:
    return GroundTruth(sample_id="s", y=y, p_ctr=0.3, p_cvr=p_cvr, delay_dist=np.asarray(dist, float), c=0)


class TestOraclePosterior:
    def test_full_tail_returns_prior(self):
        gt = _truth(0.3, [0, 1, 0, 0, 0, 0, 0, 0])
        assert oracle_posterior(gt, 0) == pytest.approx(0.3)

    def test_empty_tail_returns_zero(self):
        gt = _truth(0.3, [0.5, 0.5, 0, 0, 0, 0, 0, 0])
        assert oracle_posterior(gt, 7) == 0.0

    def test_half_tail(self):
        gt = _truth(0.2, [0.5, 0, 0, 0, 0.5, 0, 0, 0])
        assert oracle_posterior(gt, 1) == pytest.approx(0.1 / 0.9, abs=1e-12)

    def test_unclicked_rejected(self):
        with pytest.raises(InputError):
            oracle_posterior(_truth(0.2, [1, 0, 0, 0, 0, 0, 0, 0], y=0), 0)

    @pytest.mark.parametrize("e", [0, 1, 2, 4, 6])
    def test_matches_monte_carlo(self, small_data, e):
        """
        未观测到转化 (c=0 或 d>e) 的点击样本中，c 的总数应与后验之和在 3σ 内一致.
        """
        _, truths = small_data
        unobserved = [t for t in truths if t.y == 1 and not (t.c == 1 and t.d <= e)]
        w = np.array([oracle_posterior(t, e) for t in unobserved])
        c = np.array([t.c for t in unobserved])
        sigma = np.sqrt(np.sum(w * (1.0 - w)))
        assert abs(c.sum() - w.sum()) <= 3.0 * sigma + 1e-9
