from fractions import Fraction as F

import pytest

from hwqkd.tables import Cell, exact_tables, reproduce_tables, sifted_counts, table_params


@pytest.fixture(scope="module")
def exact():
    return exact_tables()


@pytest.fixture(scope="module")
def sampled():
    return reproduce_tables(seed=3, workers=2, attempts_per_bit=120_000)


class TestExact:
    def test_params(self):
        p = table_params()
        assert p.a2 == pytest.approx(0.5) and p.N == 1 and p.particle1 == "dephased"

    @pytest.mark.parametrize("name", ["t1", "t2", "t3", "t4", "t5", "t6"])
    def test_all_target_values_reproduced(self, exact, name):
        t = exact[name]
        bad = [(c.row, c.column, c.exact, str(c.target)) for c in t.cells if not c.exact_ok]
        assert bad == []

    def test_intercept_rows(self, exact):
        t = exact["t2"]
        assert t.cell("alice 0, mean", "bob 1").exact == pytest.approx(5 / 16, abs=1e-12)
        assert t.cell("alice 0, eve correct", "bob 1").exact == pytest.approx(0, abs=1e-12)

    def test_tuned_ones_note(self, exact):
        assert exact["t5"].notes

    def test_mixture_equals_normal(self, exact):
        for c in exact["t1"].cells:
            assert exact["t6"].cell(c.row, c.column).exact == pytest.approx(c.exact, abs=1e-12)


class TestCell:
    def test_certain_values_need_exact_counts(self):
        assert Cell("r", "c", F(0), 0.0, 0, 100).sampled_ok
        assert not Cell("r", "c", F(0), 0.0, 1, 100).sampled_ok

    def test_three_sigma(self):
        assert Cell("r", "c", F(1, 2), 0.5, 515, 1000).sampled_ok
        assert not Cell("r", "c", F(1, 2), 0.5, 560, 1000).sampled_ok

    def test_empty_sample_fails(self):
        assert Cell("r", "c", F(1, 2), 0.5, 0, 0).sampled_ok is False


class TestSampled:
    def test_within_three_sigma(self, sampled):
        failing = {
            name: [(c.row, c.column, c.count, c.total) for c in t.cells if c.sampled_ok is False]
            for name, t in sampled.items()
        }
        assert all(v == [] for v in failing.values()), failing

    def test_sifted_counts(self, sampled):
        counts = sifted_counts(sampled)
        assert set(counts) == {"t1", "t2", "t4", "t5", "t6"}
        assert all(n > 5000 for n in counts.values())

    def test_deterministic(self, sampled):
        again = reproduce_tables(seed=3, workers=1, attempts_per_bit=120_000)
        for name, t in sampled.items():
            assert [(c.count, c.total) for c in t.cells] == [(c.count, c.total) for c in again[name].cells]
