"""Trajectory fits and the scaling laws built on them."""
from ._base import DampedCosineFit, ScalingFit
from .curves import (DampedCosineRegressor, SaturationRegressor, damped_cosine,
                     find_extrema, first_maximum, fit_damped_cosine, fit_saturation,
                     is_oscillatory, period_window, saturation_curve)
from .feasibility import feasibility_coupling, feasibility_prefactor
from .scaling import (ChargingRateScalingRegressor, DampingScalingRegressor,
                      FrequencyScalingRegressor, SaturationLevelRegressor,
                      fit_charging_rate_scaling, fit_damping_scaling,
                      fit_frequency_scaling, fit_saturation_levels)

__all__ = [
    "DampedCosineFit", "ScalingFit", "DampedCosineRegressor", "SaturationRegressor",
    "damped_cosine", "saturation_curve", "find_extrema", "first_maximum", "is_oscillatory",
    "period_window", "fit_damped_cosine", "fit_saturation", "feasibility_coupling",
    "feasibility_prefactor", "FrequencyScalingRegressor", "DampingScalingRegressor",
    "ChargingRateScalingRegressor", "SaturationLevelRegressor", "fit_frequency_scaling",
    "fit_damping_scaling", "fit_charging_rate_scaling", "fit_saturation_levels",
]
