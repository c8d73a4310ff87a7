import numpy as np
import pytest

from mpfilter.exceptions.filter_exceptions import (
    ConfigurationError,
    ContractError,
    DatasetValidationError,
    DegenerateWeightsError,
)
from mpfilter.models.catalog import build_spec
from mpfilter.schemas.model import ModelId, ThetaVector
from mpfilter.validators.theta_validator import ThetaValidator
from mpfilter.validators.weights_validator import (
    NormalizedWeightsValidator,
    WeightsValidator,
)
from tests.conftest import const_spec, make_dataset


class TestWeightsValidator:
    def test_nonnegative_weights_pass(self):
        WeightsValidator().validate(np.array([0.0, 2.0, 1.0]))

    def test_negative_weight_raises(self):
        with pytest.raises(ContractError):
            WeightsValidator().validate(np.array([0.5, -0.1, 0.6]))

    def test_nan_weight_raises(self):
        with pytest.raises(ContractError):
            WeightsValidator().validate(np.array([0.5, np.nan]))

    def test_empty_or_matrix_raises(self):
        with pytest.raises(ContractError):
            WeightsValidator().validate(np.array([]))
        with pytest.raises(ContractError):
            WeightsValidator().validate(np.ones((2, 2)))

    def test_all_zero_weights_are_degenerate(self):
        with pytest.raises(DegenerateWeightsError) as exc_info:
            WeightsValidator(unit_time=4).validate(np.zeros(3))
        assert exc_info.value.unit_time == 4
        assert "unit time 4" in exc_info.value.message


class TestNormalizedWeightsValidator:
    def test_normalized_weights_pass(self):
        NormalizedWeightsValidator().validate(np.array([0.25, 0.25, 0.5]))

    def test_unnormalized_weights_raise(self):
        with pytest.raises(ContractError) as exc_info:
            NormalizedWeightsValidator().validate(np.array([0.5, 0.6]))
        assert "sum to 1" in exc_info.value.message


class TestThetaValidator:
    def test_catalogue_specs_pass(self):
        for model_id in ModelId:
            ThetaValidator().validate(build_spec(model_id))

    def test_nonpositive_mark_variance_raises(self):
        spec = build_spec(ModelId.OU, overrides={"theta_Sigma": 0.0})
        with pytest.raises(ConfigurationError) as exc_info:
            ThetaValidator().validate(spec)
        assert "theta_Sigma" in exc_info.value.message

    def test_negative_intensity_raises(self):
        spec = build_spec(ModelId.NLDT, overrides={"theta_lambda": -1.0})
        with pytest.raises(ConfigurationError):
            ThetaValidator().validate(spec)

    def test_missing_drift_parameter_raises(self):
        spec = build_spec(ModelId.OU)
        spec = spec.with_theta(ThetaVector(theta_lambda=1.0, theta_Sigma=1.0))
        with pytest.raises(ConfigurationError):
            ThetaValidator().validate(spec)

    def test_gbm_needs_nonnegative_start(self):
        with pytest.raises(ConfigurationError):
            ThetaValidator().validate(build_spec(ModelId.GBM, x_star=-1.0))

    def test_test_model_needs_positive_level(self):
        with pytest.raises(ConfigurationError):
            ThetaValidator().validate(const_spec(c=0.0))

    def test_unknown_estimated_coordinate_raises(self):
        spec = build_spec(ModelId.OU).model_copy(update={"estimate": ("theta_x",)})
        with pytest.raises(ConfigurationError):
            ThetaValidator().validate(spec)

    def test_inverted_intensity_band_raises(self):
        spec = build_spec(ModelId.OU, intensity_band=(2.0, 1.0))
        with pytest.raises(ConfigurationError):
            ThetaValidator().validate(spec)


class TestDatasetValidators:
    def test_increasing_times_pass(self):
        dataset = make_dataset([0.1, 0.7, 2.0], [1.0, 2.0, 3.0], horizon_T=2)
        assert len(dataset) == 3

    def test_repeated_time_raises(self):
        with pytest.raises(DatasetValidationError) as exc_info:
            make_dataset([0.1, 0.5, 0.5], [1.0, 2.0, 3.0])
        assert "strictly increasing" in exc_info.value.message

    def test_time_zero_is_outside_horizon(self):
        with pytest.raises(DatasetValidationError):
            make_dataset([0.0, 0.5], [1.0, 1.0])

    def test_time_beyond_horizon_raises(self):
        with pytest.raises(DatasetValidationError):
            make_dataset([0.5, 2.5], [1.0, 1.0], horizon_T=2)

    def test_event_at_horizon_is_allowed(self):
        dataset = make_dataset([2.0], [0.0], horizon_T=2)
        assert dataset.count_up_to(2.0) == 1
