"""Multiscale inverse statistics: first passage times of financial series
across wavelet filtration levels, and a two-state correlated market model."""

from ._accel import USE_NUMBA, backend
from .experiments import ExperimentSpec, MultiscaleReport, multiscale_fpt, run_multiscale_fpt
from .fpt import AsymmetryStat, FptDistribution, WaitTimeSamples, asymmetry, empirical_distribution, fpt_samples, mode_wait_time
from .models import MarketPath, ModelParams, calibrate_mu_r, daily_sigma, reference_params, simulate, stationary_distribution
from .series import CsvSchema, LogSeries, PriceSeries, ReturnSeries, log_returns, parse_price_series, to_log
from .wavelet import MraDecomposition, WaveletFilter, bandpass_signal, highpass_residual, make_filter, modwt, mra

__version__ = "0.1.0"
