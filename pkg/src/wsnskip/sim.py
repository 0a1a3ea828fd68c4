"""Round-by-round simulation of one base station and one sensor.

A run has two phases. During training the BS sends ``E=0`` every round, so
the sensor reports its full reading whenever it lies outside ``[-alpha, alpha]``.
The collected series trains the forecaster. During prediction the BS sends
forecasts, the RMA skips rounds after runs of silent replies, and skipped
rounds are filled with closed-loop forecasts.

Energy is charged per round to the sensor (scheme) and to a baseline that
transmits a fixed-width reading every round. Only the prediction phase
enters the reported ledger and reduction ratios; training-phase energy is
kept separately.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import NamedTuple, Optional, Sequence

from .errors import ConfigError, ForecastDiverged, TraceTooShort
from .forecast import (
    KINDS,
    ForecastModel,
    ForecastReport,
    Predictor,
    TrainConfig,
    evaluate,
    fit_ar,
    predict,
    train_narx,
)
from .protocol import (
    REPLY_HEADER_BITS,
    SEQ_BITS,
    QuantSpec,
    ReplyPacket,
    RequestPacket,
    SensorState,
    Source,
    StoredValue,
    bs_store,
    decode_reply,
    decode_request,
    encode_reply,
    encode_request,
    request_bit_cost,
    sensor_step,
)
from .rma import RmaState, fill_skips, rma_update
from .trace import TraceSeries

__all__ = [
    "EnergyModel",
    "EnergyLedger",
    "ForecasterConfig",
    "SimConfig",
    "RoundLog",
    "SimReport",
    "Reductions",
    "baseline_reply_bits",
    "build_forecaster",
    "run_training_phase",
    "run_prediction_phase",
    "compute_reductions",
    "run_experiment",
    "replay_ledger",
]


@dataclass(frozen=True)
class EnergyModel:
    tx_per_bit: float = 1.0
    rx_per_bit: float = 1.0
    proc_per_round: float = 8.0
    sense_per_round: float = 4.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{f.name} must be finite and >= 0")


@dataclass
class EnergyLedger:
    """Cumulative energy. ``sensor_*`` is the scheme, ``baseline_*`` send-everything."""

    sensor_tx: float = 0.0
    sensor_rx: float = 0.0
    sensor_proc: float = 0.0
    sensor_sense: float = 0.0
    baseline_tx: float = 0.0
    baseline_rx: float = 0.0
    baseline_proc: float = 0.0
    baseline_sense: float = 0.0

    def charge(self, other: "EnergyLedger") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    @property
    def sensor_processing(self) -> float:
        """Everything except transmission: receive, compute and sense."""
        return self.sensor_rx + self.sensor_proc + self.sensor_sense

    @property
    def baseline_processing(self) -> float:
        return self.baseline_rx + self.baseline_proc + self.baseline_sense


def baseline_reply_bits(q: QuantSpec) -> int:
    """Fixed-width classical report: type tag, seq, one value_bits reading."""
    return 2 + SEQ_BITS + q.value_bits


@dataclass(frozen=True)
class ForecasterConfig:
    kind: str = "narx"
    window_n: int = 2
    season_len: int = 24
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True)
class SimConfig:
    alpha: float = 1.0
    tr1: int = 3
    tr2: int = 7
    train_len: int = 250
    horizon: int = 150
    forecaster: ForecasterConfig = field(default_factory=ForecasterConfig)
    quant: QuantSpec = field(default_factory=QuantSpec)
    energy: EnergyModel = field(default_factory=EnergyModel)
    seed: int = 0

    def validate(self, trace_len: Optional[int] = None) -> None:
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ConfigError("alpha", "must be finite and >= 0")
        if round(self.alpha / self.quant.resolution) >= 2**self.quant.value_bits:
            raise ConfigError("alpha", "does not fit the request alpha field")
        if self.tr1 < 1:
            raise ConfigError("tr1", "must be >= 1")
        if self.tr1 >= self.tr2:
            raise ConfigError("tr1", f"must be < tr2 (got tr1={self.tr1}, tr2={self.tr2})")
        if self.train_len < 0:
            raise ConfigError("train_len", "must be >= 0")
        if self.horizon < 1:
            raise ConfigError("horizon", "must be >= 1")
        if self.forecaster.kind not in KINDS:
            raise ConfigError("forecaster.kind", f"unknown kind {self.forecaster.kind!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if trace_len is not None and self.train_len + self.horizon > trace_len:
            raise TraceTooShort(
                f"train_len + horizon = {self.train_len + self.horizon} exceeds trace length {trace_len}"
            )


@dataclass(frozen=True)
class RoundLog:
    """One simulated round. ``charge`` holds exactly what was added to the ledger."""

    t: int
    source: Source
    e: float
    m: float
    s: float
    bits_tx: int
    bits_rx: int
    charge: EnergyLedger

    @property
    def replied(self) -> bool:
        return self.source is Source.REPLIED


class Reductions(NamedTuple):
    tx_ratio: float
    proc_ratio: float
    tx_infinite: bool
    proc_infinite: bool


@dataclass
class SimReport:
    rounds: int
    contacts: int
    skips: int
    replies: int
    silent_accepted: int
    max_abs_error_contacted: float
    stored_series: list[StoredValue]
    energy: EnergyLedger
    tx_reduction_ratio: float
    proc_reduction_ratio: float
    tx_infinite_savings: bool
    proc_infinite_savings: bool
    forecast_report: Optional[ForecastReport]
    log: list[RoundLog] = field(default_factory=list)
    training_energy: Optional[EnergyLedger] = None

    SUMMARY_COLUMNS = (
        "rounds", "contacts", "skips", "replies", "silent_accepted",
        "max_abs_error_contacted", "tx_reduction_ratio", "proc_reduction_ratio",
        "mse", "regression_r",
    )

    def summary(self) -> dict:
        row = {k: getattr(self, k) for k in self.SUMMARY_COLUMNS[:-2]}
        fr = self.forecast_report
        row["mse"] = fr.mse if fr else None
        row["regression_r"] = fr.regression_r if fr else None
        return row

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "contacts": self.contacts,
            "skips": self.skips,
            "replies": self.replies,
            "silent_accepted": self.silent_accepted,
            "max_abs_error_contacted": self.max_abs_error_contacted,
            "tx_reduction_ratio": self.tx_reduction_ratio,
            "proc_reduction_ratio": self.proc_reduction_ratio,
            "tx_infinite_savings": self.tx_infinite_savings,
            "proc_infinite_savings": self.proc_infinite_savings,
            "energy": asdict(self.energy),
            "training_energy": asdict(self.training_energy) if self.training_energy else None,
            "forecast_report": self.forecast_report.to_dict() if self.forecast_report else None,
            "stored_series": [
                {"t": s.t, "value_s": s.value_s, "source": s.source.value} for s in self.stored_series
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def rounds_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "source", "E", "M", "S", "replied", "bits_tx", "bits_rx"])
        for r in self.log:
            w.writerow([r.t, r.source.value, repr(r.e), repr(r.m), repr(r.s),
                        int(r.replied), r.bits_tx, r.bits_rx])
        return buf.getvalue()

    def summary_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.SUMMARY_COLUMNS)
        w.writerow(_fmt(v) for v in self.summary().values())
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# Rounds
# ---------------------------------------------------------------------------

def _baseline_charge(q: QuantSpec, em: EnergyModel) -> EnergyLedger:
    return EnergyLedger(
        baseline_tx=baseline_reply_bits(q) * em.tx_per_bit,
        baseline_rx=request_bit_cost(q) * em.rx_per_bit,
        baseline_proc=em.proc_per_round,
        baseline_sense=em.sense_per_round,
    )


def _contact(
    t: int, seq: int, e: float, alpha: float, m: float,
    sensor: SensorState, q: QuantSpec, em: EnergyModel,
) -> RoundLog:
    """One request/reply exchange over the (lossless) wire."""
    req_bits = encode_request(RequestPacket(seq, e, alpha), q)
    received = decode_request(req_bits, q)
    reply = sensor_step(sensor, received, m)
    reply_bits = ""
    bs_reply: Optional[ReplyPacket] = None
    if reply is not None:
        reply_bits = encode_reply(reply, q)
        bs_reply = decode_reply(reply_bits, q)
    stored = bs_store(received.predicted_e, bs_reply, t)
    charge = _baseline_charge(q, em)
    charge.sensor_rx = len(req_bits) * em.rx_per_bit
    charge.sensor_proc = em.proc_per_round
    charge.sensor_sense = em.sense_per_round
    charge.sensor_tx = len(reply_bits) * em.tx_per_bit
    return RoundLog(t, stored.source, received.predicted_e, m, stored.value_s,
                    len(reply_bits), len(req_bits), charge)


def run_training_phase(
    trace: TraceSeries,
    train_len: int,
    quant: QuantSpec = QuantSpec(),
    energy: EnergyModel = EnergyModel(),
    alpha: float = 1.0,
) -> tuple[list[float], EnergyLedger]:
    """Classical collection with ``E=0`` for the first ``train_len`` rounds."""
    if train_len > len(trace):
        raise TraceTooShort(f"train_len={train_len} exceeds trace length {len(trace)}")
    sensor = SensorState(trace.sensor_id)
    ledger = EnergyLedger()
    collected = []
    for t in range(1, train_len + 1):
        log = _contact(t, (t - 1) % 2**SEQ_BITS, 0.0, alpha, trace.at(t), sensor, quant, energy)
        ledger.charge(log.charge)
        collected.append(log.s)
    return collected, ledger


def _check_finite(value: float, t: int) -> float:
    if not math.isfinite(value):
        raise ForecastDiverged(f"non-finite forecast at t={t}")
    return value


def run_prediction_phase(
    trace: TraceSeries,
    model: Predictor,
    cfg: SimConfig,
    collected: Sequence[float],
) -> SimReport:
    """Forecast-driven rounds ``train_len+1 .. train_len+horizon``.

    ``collected`` seeds the BS history (normally the training output). An
    empty history makes the first request ``E=0``. Forecasts outside the
    request field's range are clamped to it before transmission.
    """
    cfg.validate()
    start = len(collected) + 1
    end = len(collected) + cfg.horizon
    if end > len(trace):
        raise TraceTooShort(f"need {end} samples, trace has {len(trace)}")
    q, em = cfg.quant, cfg.energy
    sensor = SensorState(trace.sensor_id)
    history = [float(v) for v in collected]
    state = RmaState(tr1=cfg.tr1, tr2=cfg.tr2)
    ledger = EnergyLedger()
    logs: list[RoundLog] = []
    stored: list[StoredValue] = []

    t = start
    while t <= end:
        e = _check_finite(predict(model, history), t) if history else 0.0
        e = min(max(e, q.min_e), q.max_e)
        log = _contact(t, (t - 1) % 2**SEQ_BITS, e, cfg.alpha, trace.at(t), sensor, q, em)
        _check_finite(log.s, t)
        ledger.charge(log.charge)
        logs.append(log)
        stored.append(StoredValue(t, log.s, log.source))
        history.append(log.s)

        state = rma_update(state, log.replied)
        skip = min(state.q, end - t)
        for fill in fill_skips(history, model, t + 1, skip):
            _check_finite(fill.value_s, fill.t)
            charge = _baseline_charge(q, em)
            ledger.charge(charge)
            logs.append(RoundLog(fill.t, Source.SKIPPED_FILL, fill.value_s, trace.at(fill.t),
                                 fill.value_s, 0, 0, charge))
            stored.append(fill)
            history.append(fill.value_s)
        t += skip + 1

    contacted = [r for r in logs if r.source is not Source.SKIPPED_FILL]
    replies = sum(r.replied for r in contacted)
    red = compute_reductions(
        ledger,
        tx_floor=reply_floor(q, em),
        proc_floor=contact_floor(q, em),
    )
    return SimReport(
        rounds=len(logs),
        contacts=len(contacted),
        skips=len(logs) - len(contacted),
        replies=replies,
        silent_accepted=len(contacted) - replies,
        max_abs_error_contacted=max((abs(r.s - r.m) for r in contacted), default=0.0),
        stored_series=stored,
        energy=ledger,
        tx_reduction_ratio=red.tx_ratio,
        proc_reduction_ratio=red.proc_ratio,
        tx_infinite_savings=red.tx_infinite,
        proc_infinite_savings=red.proc_infinite,
        forecast_report=evaluate([r.e for r in logs], [r.m for r in logs]),
        log=logs,
    )


def replay_ledger(logs: Sequence[RoundLog]) -> EnergyLedger:
    """Rebuild ledger totals from the per-round log."""
    ledger = EnergyLedger()
    for r in logs:
        ledger.charge(r.charge)
    return ledger


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def reply_floor(q: QuantSpec = QuantSpec(), em: EnergyModel = EnergyModel()) -> float:
    """Energy of the cheapest possible reply."""
    return (REPLY_HEADER_BITS + 1) * em.tx_per_bit


def contact_floor(q: QuantSpec = QuantSpec(), em: EnergyModel = EnergyModel()) -> float:
    """Non-transmit energy of a single contacted round."""
    return request_bit_cost(q) * em.rx_per_bit + em.proc_per_round + em.sense_per_round


def _ratio(baseline: float, scheme: float, floor: float) -> tuple[float, bool]:
    if scheme > 0:
        return baseline / scheme, False
    if floor > 0:
        return baseline / floor, True
    return (1.0 if baseline == 0 else math.inf), True


def compute_reductions(
    ledger: EnergyLedger,
    tx_floor: float = reply_floor(),
    proc_floor: float = contact_floor(),
) -> Reductions:
    """Baseline/scheme energy ratios for transmission and for everything else.

    A zero scheme total is replaced by the matching floor (one reply, one
    contact) and flagged as infinite savings.
    """
    tx, tx_inf = _ratio(ledger.baseline_tx, ledger.sensor_tx, tx_floor)
    proc, proc_inf = _ratio(ledger.baseline_processing, ledger.sensor_processing, proc_floor)
    return Reductions(tx, proc, tx_inf, proc_inf)


# ---------------------------------------------------------------------------
# Experiment
# ---------------------------------------------------------------------------

def build_forecaster(fc: ForecasterConfig, collected: Sequence[float], seed: int = 0) -> ForecastModel:
    if fc.kind == "narx":
        return train_narx(collected, replace(fc.train, seed=seed))
    if fc.kind == "ar":
        return fit_ar(collected, fc.window_n)
    if fc.kind == "seasonal_naive":
        return ForecastModel("seasonal_naive", season_len=fc.season_len)
    return ForecastModel(fc.kind)


def run_experiment(
    trace: TraceSeries,
    cfg: SimConfig,
    model: Optional[Predictor] = None,
) -> SimReport:
    """Training phase, forecaster fit, prediction phase.

    ``model`` overrides the configured forecaster (used for test doubles).
    """
    cfg.validate(len(trace))
    collected, training = run_training_phase(trace, cfg.train_len, cfg.quant, cfg.energy, cfg.alpha)
    if model is None:
        model = build_forecaster(cfg.forecaster, collected, cfg.seed)
    report = run_prediction_phase(trace, model, cfg, collected)
    report.training_energy = training
    return report
