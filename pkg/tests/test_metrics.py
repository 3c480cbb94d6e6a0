import numpy as np
import pytest
from numpy.testing import assert_allclose

from renyi_ada.metrics import evaluate, kde_csv, kde_export, metrics_csv, scott_bandwidth


class TestEvaluate:
    def test_all_correct(self):
        r = evaluate([(0, 0), (1, 1), (2, 2), (1, 1)])
        assert (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1) == (1.0, 1.0, 1.0, 1.0)

    def test_binary_constant_prediction(self):
        r = evaluate([(0, 0), (0, 0), (1, 0), (1, 0)])
        assert r.accuracy == 0.5
        assert r.macro_recall == 0.5
        assert r.macro_precision == 0.25
        assert_allclose(r.macro_f1, (2 * 0.5 * 1 / 1.5) / 2)

    def test_permutation_invariant(self):
        pairs = [(0, 1), (1, 1), (2, 0), (2, 2), (0, 0)]
        assert evaluate(pairs) == evaluate(pairs[::-1])

    def test_confusion_contract(self):
        r = evaluate([(0, 1), (1, 1), (2, 0), (2, 2)], num_classes=4)
        assert r.confusion.sum() == 4
        assert list(r.confusion.sum(axis=1)) == [1, 1, 2, 0]
        assert r.accuracy == np.trace(r.confusion) / 4

    def test_rejects_empty_and_out_of_range(self):
        with pytest.raises(ValueError):
            evaluate([])
        with pytest.raises(ValueError):
            evaluate([(0, 3)], num_classes=2)


class TestKde:
    def test_symmetric_input(self):
        v = np.array([-2.0, -0.5, 0.5, 2.0])
        d = np.array([y for _, y in kde_export(v, grid=257)])
        assert_allclose(d, d[::-1], atol=1e-9)

    def test_standard_normal_peak(self):
        v = np.random.default_rng(0).standard_normal(10_000)
        rows = kde_export(v)
        assert abs(max(y for _, y in rows) - 0.3989) < 0.03

    def test_integrates_to_one(self):
        v = np.random.default_rng(1).gamma(2.0, size=300)
        xs, ys = map(np.array, zip(*kde_export(v)))
        area = np.sum((ys[1:] + ys[:-1]) * np.diff(xs)) / 2
        assert abs(area - 1.0) < 1e-2

    def test_explicit_bandwidth(self):
        v = [0.0, 1.0, 3.0]
        rows = kde_export(v, bandwidth=0.2, grid=11)
        assert_allclose(rows[0][0], -0.6) and assert_allclose(rows[-1][0], 3.6)
        assert scott_bandwidth(v) != 0.2

    def test_constant_input(self):
        with pytest.raises(ValueError, match="bandwidth"):
            kde_export([1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            kde_export([1.0])

    def test_csv_round_trip(self):
        rows = kde_export([0.1, 0.4, 0.2], grid=5)
        lines = kde_csv(rows).splitlines()
        assert lines[0] == "x,density" and len(lines) == 6
        assert float(lines[1].split(",")[1]) == rows[0][1]

    def test_metrics_csv(self):
        text = metrics_csv([("final", evaluate([(0, 0), (1, 0)]))])
        assert text.splitlines()[1].startswith("final,0.5,")
