import pytest

from bicausal.bounds import load_thresholds, run_rate_experiment, run_suite
from bicausal.sequences import rate_base_measure


@pytest.mark.slow
def test_smoothed_empirical_rate():
    fit = run_rate_experiment()
    assert fit.slope <= load_thresholds()["rates"]["max_slope"]
    assert fit.predicted_slope == pytest.approx(-0.5)
    assert len(fit.values) == 7


@pytest.mark.slow
def test_rates_suite():
    result = run_suite("rates", 0)
    (report,) = result.reports
    assert report.bound_id == "rate-slope"
    assert report.passed
    assert report.notes["fast_rate_beta"] == pytest.approx(1 / 6)


def test_small_rate_experiment_is_reproducible():
    kwargs = {"ns": (8, 32), "seeds": range(3)}
    first = run_rate_experiment(rate_base_measure(), threads=1, **kwargs)
    again = run_rate_experiment(rate_base_measure(), threads=2, **kwargs)
    assert first == again
