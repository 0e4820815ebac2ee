import csv
import statistics

import numpy as np
import pytest

from rein.metrics import MetricReport, diversity, edge_accuracy, format_table, mse_at_steps, summarize, write_csv


def test_mse_zero_and_offset():
    truth = np.random.default_rng(0).normal(size=(6, 50, 5, 4))
    for r in mse_at_steps(truth, truth, [1, 10, 20, 50]):
        assert r.value == 0.0
    reports = mse_at_steps(truth + 0.1, truth, [1, 10, 20, 50])
    for r in reports:
        assert abs(r.value - 0.01) <= 1e-9
        assert r.n == 6
    assert [r.tag for r in reports] == ["step1", "step10", "step20", "step50"]


def test_mse_per_step_oracle():
    rng = np.random.default_rng(1)
    pred, truth = rng.normal(size=(4, 12, 3, 4)), rng.normal(size=(4, 12, 3, 4))
    (r,) = mse_at_steps(pred, truth, [7])
    per_ep = [np.mean((pred[e, 6] - truth[e, 6]) ** 2) for e in range(4)]
    assert r.value == pytest.approx(np.mean(per_ep), rel=1e-12)
    assert r.dispersion == pytest.approx(np.std(per_ep), rel=1e-12)


def test_mse_horizon_too_short():
    x = np.zeros((2, 5, 3, 4))
    with pytest.raises(ValueError):
        mse_at_steps(x, x, [1, 10])
    with pytest.raises(ValueError):
        mse_at_steps(x, x[:, :4], [1])


def test_edge_accuracy_perfect_and_label_swap():
    rng = np.random.default_rng(2)
    truth = np.zeros((20, 5, 5), dtype=int)
    iu = np.triu_indices(5, 1)
    for e in range(20):
        truth[e][iu] = rng.integers(0, 3, size=10)
        truth[e] = truth[e] + truth[e].T
    assert edge_accuracy(truth, truth, 3).value == 1.0
    # swapping the two non-"none" labels is still a perfect recovery
    swapped = np.where(truth == 1, 2, np.where(truth == 2, 1, truth))
    assert edge_accuracy(swapped, truth, 3).value == 1.0
    # type 0 is never relabelled
    flipped = np.where(truth == 0, 1, np.where(truth == 1, 0, truth))
    assert edge_accuracy(flipped, truth, 3).value < 1.0


def test_edge_accuracy_all_none_base_rate():
    rng = np.random.default_rng(3)
    iu = np.triu_indices(5, 1)
    truth = np.zeros((3000, 5, 5), dtype=int)
    truth[:, iu[0], iu[1]] = rng.integers(0, 3, size=(3000, 10))
    truth = truth + truth.transpose(0, 2, 1)
    r = edge_accuracy(np.zeros_like(truth), truth, 3)
    assert r.value == pytest.approx(1 / 3, abs=0.01)


def test_edge_accuracy_from_scores():
    truth = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    scores = np.zeros((3, 3, 2))
    scores[..., 0] = 1 - truth
    scores[..., 1] = truth
    assert edge_accuracy(scores, truth, 2).value == 1.0


def test_diversity_cases():
    a = np.random.default_rng(4).normal(size=(10, 7))
    assert diversity(a, a) == 0.0
    assert abs(diversity([[0.0, 0.0]], [[3.0, 4.0]]) - 5.0) <= 1e-6
    with pytest.raises(ValueError):
        diversity(np.zeros((2, 3)), np.zeros((3, 3)))


def test_summarize_closed_forms():
    r = summarize([4.2])
    assert r.value == 4.2 and r.dispersion == 0.0
    r = summarize([1.0, 2.0, 3.0])
    assert r.value == pytest.approx(2.0) and r.dispersion == pytest.approx((2 / 3) ** 0.5)
    with pytest.raises(ValueError):
        summarize([])


def test_summarize_matches_statistics_module():
    rng = np.random.default_rng(5)
    for _ in range(20):
        v = rng.normal(size=rng.integers(1, 30)).tolist()
        r = summarize(v)
        assert r.value == pytest.approx(statistics.fmean(v), rel=1e-12, abs=1e-12)
        assert r.dispersion == pytest.approx(statistics.pstdev(v), rel=1e-12, abs=1e-12)


def test_summarize_seed_by_episode():
    v = np.arange(12.0).reshape(3, 4)
    r = summarize(v)
    assert r.n == 3 and r.value == pytest.approx(5.5)
    assert r.episode_dispersion == pytest.approx(np.arange(12.0).std())


def test_report_validation_and_output(tmp_path):
    with pytest.raises(ValueError):
        MetricReport("x", 1.0, 0.0, 0)
    with pytest.raises(ValueError):
        MetricReport("x", 1.0, -1.0, 1)
    reports = [MetricReport("mse", 0.5, 0.1, 3, "step1"), MetricReport("acc", 0.9, 0.01, 3)]
    write_csv(tmp_path / "m.csv", reports)
    rows = list(csv.DictReader(open(tmp_path / "m.csv")))
    assert rows[0]["name"] == "mse" and float(rows[1]["value"]) == 0.9
    assert "step1" in format_table(reports)
