import numpy as np
import pytest

from simple_esdf.attribution import snapshot
from simple_esdf.constants.constants import DelayHead, LabelPolicy
from simple_esdf.events import IndexPartition
from simple_esdf.model import Batch, Heads, ModelSpec, check_gradient, forward_batch
from simple_esdf.objectives import (
    DfmObjective,
    EmSurrogate,
    EsdfObjective,
    EsmmObjective,
    EStepWeights,
    dfm_loss,
    e_step,
    e_step_batch,
    esdf_loss,
    esmm_loss,
    likelihood_outcome_check,
)
from simple_esdf.synthgen import oracle_posterior
from simple_esdf.utils.errors import ConfigError, NumericalError
from tests.helpers import random_heads
from tests.test_model import SPEC, random_batch, scaled_params

K = 8
LOG = np.log


def one_hot_f(slot: int) -> np.ndarray:
    f = np.zeros(K)
    f[slot] = 1.0
    return f


class TestEStep:
    def test_converted_weight_is_one(self):
        heads = Heads.from_probs([0.3], [0.4], [np.full(K, 1 / K)])
        w = e_step(heads, IndexPartition.from_flags([1], [1]), np.array([3]))
        assert w.w.tolist() == [1.0]

    def test_unclicked_weight_is_zero(self):
        heads = Heads.from_probs([0.3], [0.4], [np.full(K, 1 / K)])
        w = e_step(heads, IndexPartition.from_flags([0], [0]), np.array([7]))
        assert w.w.tolist() == [0.0]

    def test_empty_tail(self):
        heads = Heads.from_probs([0.3], [0.4], [np.full(K, 1 / K)])
        w = e_step(heads, IndexPartition.from_flags([1], [0]), np.array([7]))
        assert w.w.tolist() == [0.0]

    def test_substitution(self):
        f = np.array([0.5, 0, 0, 0, 0.5, 0, 0, 0])
        heads = Heads.from_probs([0.1], [0.2], [f])
        w = e_step(heads, IndexPartition.from_flags([1], [0]), np.array([1]))
        assert w.w[0] == pytest.approx(0.01 / 0.09, abs=1e-12)

    def test_monotone_in_elapsed(self):
        rng = np.random.default_rng(0)
        p, r, f = random_heads(rng, 50, K)
        previous = np.ones(50)
        for e in range(K):
            heads = Heads.from_probs(p, r, f)
            w = e_step(heads, IndexPartition.from_flags(np.ones(50), np.zeros(50)), np.full(50, e)).w
            assert np.all((w >= 0) & (w <= 1))
            assert np.all(w <= previous + 1e-15)
            previous = w

    def test_bad_denominator(self):
        heads = Heads(p=np.array([0.1]), r=np.array([3.0]), q=np.array([0.3]), f=np.array([one_hot_f(0)]))
        with pytest.raises(NumericalError):
            e_step(heads, IndexPartition.from_flags([1], [0]), np.array([2]))

    def test_matches_oracle_posterior(self, oracle_data, slot):
        _, (records, truths) = oracle_data
        assert len(records) == 10000
        observe = min(r.impression_ts for r in records) + 3 * slot.seconds_per_slot
        snap = snapshot(records, observe, LabelPolicy.FULL_CENSORED, slot)
        by_id = {t.sample_id: t for t in truths}
        gts = [by_id[s.record.sample_id] for s in snap]
        heads = Heads.from_probs(
            [g.p_ctr for g in gts], [g.p_cvr for g in gts], np.array([g.delay_dist for g in gts])
        )
        batch = Batch.from_samples(snap.samples, slot, n_fields=4, observe_ts=observe)
        weights = e_step_batch(heads, batch)
        i01 = np.flatnonzero((batch.y == 1) & (batch.z == 0))
        assert i01.size > 20
        expected = np.array([oracle_posterior(gts[i], int(batch.e[i])) for i in i01])
        np.testing.assert_allclose(weights.w[i01], expected, atol=1e-9)


class TestEsdfLoss:
    def test_converted(self):
        p = r = np.sqrt(0.5)
        f = np.full(K, 0.75 / 7)
        f[2] = 0.25
        heads = Heads.from_probs([p], [r], [f])
        batch = Batch.from_labels([1], [1], e=[7], d=[2])
        loss = esdf_loss(heads, EStepWeights([1.0]), batch)
        assert loss.total == pytest.approx(-(LOG(0.5) + LOG(0.25)), abs=1e-9)

    def test_unclicked(self):
        heads = Heads.from_probs([0.5], [0.3], [np.full(K, 1 / K)])
        loss = esdf_loss(heads, EStepWeights([0.0]), Batch.from_labels([0], [0], e=[7]))
        assert loss.total == pytest.approx(LOG(2.0), abs=1e-9)

    def test_unobserved_with_zero_weight(self):
        heads = Heads.from_probs([0.5], [0.5], [np.full(K, 1 / K)])
        loss = esdf_loss(heads, EStepWeights([0.0]), Batch.from_labels([1], [0], e=[7]))
        assert loss.total == pytest.approx(-LOG(0.25), abs=1e-9)

    def test_censored_term_uses_tail(self):
        f = np.full(K, 1 / K)
        heads = Heads.from_probs([0.4], [0.5], [f])
        loss = esdf_loss(heads, EStepWeights([0.3]), Batch.from_labels([1], [0], e=[3]))
        assert loss.terms["delay_censored"] == pytest.approx(-0.3 * LOG(0.5))
        assert loss.terms["conversion"] == pytest.approx(-0.3 * LOG(0.2))
        assert loss.terms["click"] == pytest.approx(-0.7 * LOG(0.2))

    def test_total_is_sum_of_terms(self):
        rng = np.random.default_rng(1)
        p, r, f = random_heads(rng, 40, K)
        heads = Heads.from_probs(p, r, f)
        batch = random_batch(40)
        loss = esdf_loss(heads, e_step_batch(heads, batch), batch)
        assert loss.total == pytest.approx(sum(loss.terms.values()), abs=1e-9)

    def test_reduces_to_esmm_plus_delay(self):
        """
        只含 I11 与 I00 时，ESDF = ESMM − I11 的点击项 − I00 的 log(1−q) 项 + 已观测延迟项.
        """
        rng = np.random.default_rng(2)
        n = 30
        p, r, f = random_heads(rng, n, K)
        y = rng.integers(0, 2, size=n)
        z = y.copy()
        d = np.where(z == 1, rng.integers(0, K, size=n), -1)
        batch = Batch.from_labels(y, z, e=np.full(n, K - 1), d=d)
        heads = Heads.from_probs(p, r, f)
        esdf = esdf_loss(heads, e_step_batch(heads, batch), batch)
        i11 = y == 1
        delay = -LOG(f[np.flatnonzero(i11), d[i11]]).sum()
        esmm_extra = -LOG(p[i11]).sum() - LOG(1 - p[~i11] * r[~i11]).sum()
        assert esdf.terms["delay_observed"] == pytest.approx(delay)
        assert esdf.terms["delay_censored"] == 0.0
        assert esdf.total - delay + esmm_extra == pytest.approx(esmm_loss(heads, batch), rel=1e-12)

    def test_non_finite_identifies_term(self):
        heads = Heads.from_probs([np.nan], [0.5], [np.full(K, 1 / K)])
        with pytest.raises(NumericalError) as info:
            esdf_loss(heads, EStepWeights([0.0]), Batch.from_labels([0], [0], e=[7]))
        assert "term" in info.value.context


class TestLikelihoodOutcomeCheck:
    def test_random_heads_normalized(self):
        rng = np.random.default_rng(3)
        p, r, f = random_heads(rng, 1000, K)
        e = rng.integers(0, K, size=1000)
        for i in range(1000):
            heads = Heads.from_probs(p[i], r[i], f[i])
            assert abs(likelihood_outcome_check(heads, int(e[i])) - 1.0) < 1e-9

    @pytest.mark.parametrize("e", [0, K - 1])
    def test_boundaries(self, e):
        heads = Heads.from_probs(0.3, 0.6, np.full(K, 1 / K))
        assert likelihood_outcome_check(heads, e) == pytest.approx(1.0, abs=1e-12)


class TestEsmmLoss:
    def test_hand_cross_entropy(self):
        heads = Heads.from_probs([0.5], [0.5])
        loss = esmm_loss(heads, Batch.from_labels([1], [1]))
        assert loss == pytest.approx(-LOG(0.5) - LOG(0.25))

    def test_perfect_predictions(self):
        y = np.array([1, 1, 0])
        z = np.array([1, 0, 0])
        heads = Heads.from_probs([1 - 1e-9, 1 - 1e-9, 1e-9], [1 - 1e-9, 1e-9, 0.5])
        assert esmm_loss(heads, Batch.from_labels(y, z)) < 1e-5

    def test_batch_order_invariant(self):
        rng = np.random.default_rng(4)
        p, r, _ = random_heads(rng, 64, K)
        batch = random_batch(64)
        perm = rng.permutation(64)
        a = esmm_loss(Heads.from_probs(p, r), batch)
        b = esmm_loss(Heads.from_probs(p[perm], r[perm]), batch.take(perm))
        assert a == pytest.approx(b, rel=1e-12)


class TestDfmLoss:
    def _heads(self, r, lam, p=0.5):
        return Heads.from_probs([p], [r], lam=[lam])

    def test_converted_immediately(self):
        batch = Batch.from_labels([1], [1], u_d=[0.0])
        result = DfmObjective()(self._heads(1.0, 1.0), batch)
        terms = result.breakdown.terms
        assert terms["conversion"] + terms["delay_observed"] == pytest.approx(0.0, abs=1e-6)

    def test_unconverted_fast_rate(self):
        batch = Batch.from_labels([1], [0], u_e=[1.0])
        terms = DfmObjective()(self._heads(0.5, 1e6), batch).breakdown.terms
        assert terms["conversion"] == pytest.approx(LOG(2.0))

    def test_unconverted_unit_rate(self):
        # −log(0.5 + 0.5·e^{−1})
        batch = Batch.from_labels([1], [0], u_e=[1.0])
        terms = DfmObjective()(self._heads(0.5, 1.0), batch).breakdown.terms
        assert terms["conversion"] == pytest.approx(0.379885, abs=1e-6)

    def test_unclicked(self):
        loss = dfm_loss(self._heads(0.5, 1.0, p=0.2), Batch.from_labels([0], [0]))
        assert loss == pytest.approx(-LOG(0.8))

    def test_requires_rate_head(self):
        with pytest.raises(ConfigError):
            dfm_loss(Heads.from_probs([0.5], [0.5]), Batch.from_labels([0], [0]))

    def test_non_positive_rate(self):
        with pytest.raises(NumericalError):
            dfm_loss(self._heads(0.5, 0.0), Batch.from_labels([1], [0], u_e=[1.0]))


class TestObjectiveGradients:
    def _esdf(self, params, batch):
        heads, _ = forward_batch(params, batch)
        return EsdfObjective(e_step_batch(heads, batch))

    @pytest.mark.parametrize("seed", [0, 1])
    def test_esdf(self, seed):
        params = scaled_params(seed=seed)
        batch = random_batch(24, seed=seed)
        report = check_gradient(params, batch, self._esdf(params, batch), n_coords=50, step=1e-6, atol=1e-7)
        assert report.passed, report.failures

    def test_esdf_small_batch(self):
        params = scaled_params()
        batch = random_batch(3, seed=5)
        report = check_gradient(params, batch, self._esdf(params, batch), n_coords=50, step=1e-6, atol=1e-7)
        assert report.passed, report.failures

    def test_esmm(self):
        params = scaled_params()
        report = check_gradient(params, random_batch(24), EsmmObjective(), step=1e-6, atol=1e-7)
        assert report.passed, report.failures

    def test_dfm(self):
        spec = ModelSpec(SPEC.feature_dim, SPEC.n_fields, SPEC.num_bins, SPEC.emb_dim, SPEC.tower_hidden, DelayHead.RATE)
        params = scaled_params(spec)
        report = check_gradient(params, random_batch(24, spec), DfmObjective(), step=1e-6, atol=1e-7)
        assert report.passed, report.failures


class TestEmSurrogate:
    F = np.array([0.5, 0.2, 0.1, 0.08, 0.05, 0.04, 0.02, 0.01])

    def test_monotone_likelihood(self):
        sur = EmSurrogate.sample(20000, p=0.2, q=0.06, f=self.F, seed=0)
        trace = sur.run(q0=0.01, n_iter=50)
        assert len(trace) == 51
        trace = np.asarray(trace)
        # 收敛后只剩末位舍入误差，按似然量级给容差
        assert np.all(np.diff(trace) >= -1e-12 * np.abs(trace[:-1]))
        assert trace[-1] > trace[0]

    def test_early_steps_strictly_increase(self):
        sur = EmSurrogate.sample(20000, p=0.2, q=0.06, f=self.F, seed=0)
        trace = np.asarray(sur.run(q0=0.01, n_iter=5))
        assert np.all(np.diff(trace) > 0)

    def test_converges_near_truth(self):
        sur = EmSurrogate.sample(20000, p=0.2, q=0.06, f=self.F, seed=1)
        q = 0.15
        for _ in range(200):
            q = sur.m_step(sur.e_step(q))
        assert q == pytest.approx(0.06, abs=0.01)

    def test_m_step_closed_form(self):
        sur = EmSurrogate(p=0.5, f=self.F, y=[1, 1, 0], z=[1, 0, 0], e=[3, 2, 7], d=[1, -1, -1])
        w = np.array([1.0, 0.25, 0.0])
        # a = 1.25, b = 0.75
        assert sur.m_step(w) == pytest.approx(0.5 * 1.25 / 2.0)
