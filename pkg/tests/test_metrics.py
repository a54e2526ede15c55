import logging

import numpy as np
import pytest

from rconvmk.data.datasets import Dataset
from rconvmk.errors import MetricError
from rconvmk.models.resnet import build_model
from rconvmk.robustness.metrics import ce_from_errors, corruption_error


def test_model_equal_to_baseline_scores_100():
    errors = {("gaussian_noise", 1): 30.0, ("gaussian_noise", 2): 45.5, ("contrast", 1): 12.25}
    result = ce_from_errors(errors, dict(errors))
    assert result["ce"] == {"gaussian_noise": 100.0, "contrast": 100.0}
    assert result["mce"] == 100.0
    assert result["undefined"] == []


def test_half_the_baseline_error_scores_50():
    model = {("blur", 1): 10.0, ("blur", 2): 20.0}
    base = {("blur", 1): 20.0, ("blur", 2): 40.0}
    assert ce_from_errors(model, base)["ce"]["blur"] == 50.0


def test_mce_is_the_mean_over_kinds():
    model = {("a", 1): 10.0, ("b", 1): 30.0}
    base = {("a", 1): 20.0, ("b", 1): 20.0}
    assert ce_from_errors(model, base)["mce"] == pytest.approx((50.0 + 150.0) / 2)


def test_zero_baseline_cell_is_excluded(caplog):
    model = {("a", 1): 5.0, ("a", 2): 10.0, ("b", 1): 4.0}
    base = {("a", 1): 0.0, ("a", 2): 20.0, ("b", 1): 8.0}
    with caplog.at_level(logging.WARNING, logger="rconvmk.robustness.metrics"):
        result = ce_from_errors(model, base)
    assert result["undefined"] == [("a", 1)]
    assert result["ce"]["a"] == 50.0
    assert "undefined" in caplog.text


def test_kind_without_usable_cells_is_none():
    model = {("a", 1): 5.0, ("b", 1): 10.0}
    base = {("a", 1): 0.0, ("b", 1): 20.0}
    result = ce_from_errors(model, base)
    assert result["ce"]["a"] is None
    assert result["mce"] == 50.0

    all_zero = ce_from_errors({("a", 1): 5.0}, {("a", 1): 0.0})
    assert all_zero["mce"] is None


def test_metric_errors():
    with pytest.raises(MetricError):
        ce_from_errors({}, {})
    with pytest.raises(MetricError):
        ce_from_errors({("a", 1): 1.0}, {("b", 1): 1.0})


def test_corruption_error_against_itself(small_model, small_testset):
    result = corruption_error(small_model, small_model, small_testset, ["gaussian_noise", "contrast"], [1, 3],
                              batch_size=10, progress=False)
    assert len(result["cells"]) == 4
    for row in result["cells"]:
        assert row["error_percent"] == row["baseline_error_percent"]
    for kind, ce in result["ce"].items():
        assert ce is None or ce == 100.0


def test_corruption_error_ignores_duplicated_samples(small_model, small_spec, small_testset):
    baseline = build_model(small_spec, seed=9)
    doubled = Dataset(np.concatenate([small_testset.images] * 2), np.concatenate([small_testset.labels] * 2),
                      small_testset.num_classes, split="test", name=small_testset.name)
    kinds, severities = ["gaussian_noise", "brightness"], [2]
    once = corruption_error(small_model, baseline, small_testset, kinds, severities, batch_size=8, progress=False)
    twice = corruption_error(small_model, baseline, doubled, kinds, severities, batch_size=8, progress=False)
    assert once["ce"] == twice["ce"]
    assert once["mce"] == twice["mce"]


def test_corruption_error_needs_cells(small_model, small_testset):
    with pytest.raises(MetricError):
        corruption_error(small_model, small_model, small_testset, [], [1], progress=False)
