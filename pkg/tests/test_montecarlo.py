import numpy as np
import pytest

from hwqkd.comm_protocol import ok_and_sum
from hwqkd.montecarlo import (
    AttemptBatch,
    CoinSampler,
    Sampler,
    block_uniforms,
    criterion_q_rows,
    group_uniforms,
    row_width,
    run_blocks,
    sample_fixed,
)
from hwqkd.qstate import BasisLabel
from hwqkd.sources import HONEST, ILLUSION, CoinSpec, UnsupportedConfiguration, build_group_state


def within(count, total, p, k=3.0):
    return abs(count / total - p) <= k * np.sqrt(p * (1 - p) / total)


class TestStreams:
    def test_block_repeatable(self):
        a = block_uniforms(7, "s", 3, 5)
        b = block_uniforms(7, "s", 3, 5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(block_uniforms(7, "s", 0, 2), block_uniforms(7, "t", 0, 2))
        assert not np.array_equal(block_uniforms(7, "s", 0, 2), block_uniforms(7, "s", 1, 2))

    def test_large_seed_accepted(self):
        block_uniforms(2**64 - 1, "s", 0, 1, rows=2)

    def test_prefix_stable_when_extended(self):
        a = group_uniforms(1, "s", 0, 5000, 3)
        b = group_uniforms(1, "s", 0, 9000, 3)
        np.testing.assert_array_equal(a, b[:5000])

    def test_worker_count_invariant(self):
        fn = lambda b, lo, hi: block_uniforms(5, "w", b, 2)[: hi - lo].sum()  # noqa: E731
        assert run_blocks(20000, fn, 1) == run_blocks(20000, fn, 4)


class TestCriterionQ:
    def test_rows(self):
        alice = np.array([[0, 1, 2, 3], [0, 0, 2, 3], [3, 2, 1, 0]])
        np.testing.assert_array_equal(criterion_q_rows(alice), [True, False, True])

    def test_n2(self):
        alice = np.array([[0, 0, 1, 1, 2, 2, 3, 3], [0, 1, 2, 3, 0, 1, 2, 2]])
        np.testing.assert_array_equal(criterion_q_rows(alice), [True, False])


class TestSampler:
    def test_honest_frequencies(self, half):
        sampler = Sampler(build_group_state(HONEST, half))
        batch = sample_fixed(sampler, "a", BasisLabel.Z, 200_000, 1, "test/honest")
        ok = batch.ok()
        p_ok, joint = ok_and_sum(HONEST, half, "a")
        assert within(ok.sum(), len(batch), p_ok)
        sums = batch.bob_sum()[ok]
        for s, p in joint.items():
            assert within(np.sum(sums == s), ok.sum(), p / p_ok)

    def test_product_components(self, half):
        state = build_group_state(ILLUSION, half)
        batch = sample_fixed(Sampler(state), "b", BasisLabel.X, 100_000, 2, "test/illusion")
        p_ok, joint = ok_and_sum(ILLUSION, half, "b", BasisLabel.X)
        ok = batch.ok()
        assert within(ok.sum(), len(batch), p_ok)
        assert within(np.sum(batch.bob_sum()[ok] == 0), ok.sum(), joint[0] / p_ok)

    def test_component_frequencies(self, half):
        state = build_group_state(ILLUSION, half)
        batch = sample_fixed(Sampler(state), "a", BasisLabel.Z, 100_000, 3, "test/components")
        counts = np.bincount(batch.component, minlength=10)
        for c, w in zip(counts, state.weights):
            assert within(c, len(batch), w)

    def test_intercept_needs_iid(self, half):
        with pytest.raises(UnsupportedConfiguration):
            Sampler(build_group_state(ILLUSION, half), "per_group")

    def test_take_and_concat(self, half):
        b = sample_fixed(Sampler(build_group_state(HONEST, half)), "a", "Z", 10, 0, "x")
        both = AttemptBatch.concat([b.take([0, 1]), b.take([2])])
        np.testing.assert_array_equal(both.alice, b.alice[:3])


class TestCoinSampler:
    def test_no_xx_setting(self):
        s = CoinSampler(CoinSpec(0.5))
        u = np.random.default_rng(0).random((4, row_width(4)))
        with pytest.raises(UnsupportedConfiguration):
            s.sample(np.full(4, 2), np.zeros(4, dtype=int), u)

    def test_bob_opposite_to_c2_in_setting_b(self):
        s = CoinSampler(CoinSpec(0.4))
        u = np.random.default_rng(1).random((1000, row_width(4)))
        batch = s.sample(np.ones(1000, dtype=np.int8), np.zeros(1000, dtype=np.int8), u)
        np.testing.assert_array_equal(batch.bob, 1 - (batch.alice & 1))
