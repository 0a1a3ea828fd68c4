"""Prediction-driven transmission reduction for wireless sensor networks.

The base station forecasts each sensor's next reading and sends the forecast
with an error tolerance; the sensor answers only with the correction when the
forecast misses. A request scheduler skips rounds entirely after runs of
accurate forecasts.
"""

from .errors import *  # noqa: F401,F403
from .forecast import (
    ForecastModel,
    ForecastReport,
    TrainConfig,
    evaluate,
    fit_ar,
    predict,
    predict_closed_loop,
    train_narx,
)
from .protocol import (
    ProbeResult,
    QuantSpec,
    ReplyPacket,
    RequestPacket,
    SensorState,
    Source,
    StoredValue,
    bs_store,
    link_probe,
    sensor_step,
)
from .rma import RmaState, fill_skips, rma_schedule, rma_update
from .sim import EnergyLedger, EnergyModel, ForecasterConfig, SimConfig, SimReport, run_experiment
from .trace import SyntheticSpec, TraceSeries, generate, load_trace, save_trace

__version__ = "0.1.0"
