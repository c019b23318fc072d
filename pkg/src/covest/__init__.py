"""Quadratic covariation estimation from noisy asynchronous tick data.

Typical use::

    from covest import ObservationPair, TickSeries, estimate_full
    report = estimate_full(ObservationPair(TickSeries(tx, x), TickSeries(ty, y)))
"""

from .avar import (AvarInputs, AvarReport, BinPartition, HistogramIntegrals, NoiseVariances,
                   avar_multiscale, avar_one_scale, histogram_integrals, noise_variances, partition,
                   poisson_avar_closed_form, synchronous_avar_closed_form)
from .core import (CovestError, DegenerateError, InsufficientOverlapError, MeshReport,
                   ObservationPair, ParseError, TickSeries, ValidationError, read_ticks, validate)
from .estimators import (EstimateValue, WeightVector, hayashi_yoshida, msrv_univariate, multiscale,
                         one_scale, optimal_weights, realized_covolatility, tsrv_univariate)
from .sim import (McSummary, SimConfig, add_noise, rate_check, run_monte_carlo, sample_poisson_scheme,
                  simulate_pair, simulate_paths)
from .sync import (CaseLabels, StepFunction, SyncResult, TimeFunctionals, classify,
                   empirical_derivative, synchronize, time_functionals)
from .tuning import EstimateReport, TuningConfig, c_multi_opt, c_sub_opt, estimate_full, pilot_avars

__version__ = "0.1.0"
