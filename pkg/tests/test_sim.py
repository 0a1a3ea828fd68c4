import math
from dataclasses import replace

import numpy as np
import pytest

from simcases import random_case
from wsnskip.errors import ConfigError, ForecastDiverged, TraceTooShort
from wsnskip.forecast import persistence, zero_model
from wsnskip.protocol import QuantSpec, Source
from wsnskip.rma import CLASSICAL_TR1
from wsnskip.sim import (
    EnergyLedger,
    EnergyModel,
    ForecasterConfig,
    SimConfig,
    compute_reductions,
    replay_ledger,
    run_experiment,
    run_prediction_phase,
    run_training_phase,
)
from wsnskip.trace import SyntheticSpec, TraceSeries, generate

RES = QuantSpec().resolution


def oracle(trace, offset=0.0):
    """Test double that knows the next true reading."""
    return lambda history: trace.at(len(history) + 1) + offset


@pytest.fixture(scope="module")
def daily_sine():
    return generate(SyntheticSpec("sine", amplitude=10, period_samples=24, offset=20, length=400))


# -- training phase -----------------------------------------------------------

def test_training_zero_trace_is_silent():
    trace = TraceSeries(0, 1.0, (0.0,) * 10)
    collected, ledger = run_training_phase(trace, 10, alpha=1.0)
    assert collected == [0.0] * 10
    assert ledger.sensor_tx == 0.0
    assert ledger.sensor_rx == 10 * 51


def test_training_full_readings():
    trace = TraceSeries(0, 1.0, (25.0, 26.0, 24.0))
    collected, ledger = run_training_phase(trace, 3, alpha=1.0)
    assert collected == [25.0, 26.0, 24.0]
    # 25*16=400 and 26*16=416 and 24*16=384 all need 9 magnitude bits
    assert ledger.sensor_tx == 3 * (24 + 9)


def test_training_too_long():
    with pytest.raises(TraceTooShort):
        run_training_phase(TraceSeries(0, 1.0, (1.0,)), 2)


# -- prediction phase ---------------------------------------------------------

def test_perfect_forecaster_hits_schedule_ceiling(daily_sine, schedule_3_7_150):
    cfg = SimConfig(alpha=1.0, tr1=3, tr2=7, train_len=250, horizon=150)
    rep = run_prediction_phase(daily_sine, oracle(daily_sine), cfg, daily_sine.values[:250])
    assert (rep.contacts, rep.skips, rep.replies) == (16, 134, 0)
    contacted = [r.t - 250 for r in rep.log if r.source is not Source.SKIPPED_FILL]
    assert contacted == schedule_3_7_150


def test_classical_persistence_constant():
    trace = TraceSeries(0, 1.0, (12.5,) * 200)
    cfg = SimConfig(tr1=CLASSICAL_TR1, tr2=CLASSICAL_TR1 + 1, train_len=50, horizon=150)
    rep = run_prediction_phase(trace, persistence(), cfg, trace.values[:50])
    assert (rep.contacts, rep.replies, rep.skips) == (150, 0, 0)


def test_always_reply_limit(daily_sine):
    cfg = SimConfig(alpha=0.0, train_len=250, horizon=150)
    rep = run_prediction_phase(daily_sine, oracle(daily_sine, 1.0), cfg, daily_sine.values[:250])
    assert rep.replies == rep.contacts == 150
    assert rep.max_abs_error_contacted <= RES


def test_empty_history_starts_with_zero_prediction():
    trace = TraceSeries(0, 1.0, (5.0, 5.0, 5.0))
    cfg = SimConfig(alpha=1.0, train_len=0, horizon=3)
    rep = run_prediction_phase(trace, persistence(), cfg, [])
    assert rep.log[0].e == 0.0 and rep.log[0].replied
    assert [s.value_s for s in rep.stored_series] == [5.0, 5.0, 5.0]


def test_out_of_range_forecast_is_clamped():
    trace = TraceSeries(0, 1.0, (3.0,) * 10)
    cfg = SimConfig(alpha=1.0, train_len=5, horizon=5)
    rep = run_prediction_phase(trace, lambda h: 1e9, cfg, trace.values[:5])
    assert all(r.e == QuantSpec().max_e for r in rep.log)
    assert rep.max_abs_error_contacted <= RES


def test_diverged_forecast_aborts():
    trace = TraceSeries(0, 1.0, (3.0,) * 10)
    cfg = SimConfig(train_len=5, horizon=5)
    with pytest.raises(ForecastDiverged):
        run_prediction_phase(trace, lambda h: math.nan, cfg, trace.values[:5])


def test_trace_too_short():
    trace = TraceSeries(0, 1.0, (3.0,) * 10)
    with pytest.raises(TraceTooShort):
        run_experiment(trace, SimConfig(train_len=5, horizon=6, forecaster=ForecasterConfig("persistence")))


@pytest.mark.parametrize(
    "cfg, field",
    [
        (SimConfig(horizon=0), "horizon"),
        (SimConfig(tr1=7, tr2=7), "tr1"),
        (SimConfig(alpha=-1.0), "alpha"),
        (SimConfig(forecaster=ForecasterConfig(kind="markov")), "forecaster.kind"),
    ],
)
def test_config_validation(cfg, field):
    with pytest.raises(ConfigError) as err:
        cfg.validate()
    assert err.value.field == field


# -- full experiment ----------------------------------------------------------

def test_daily_sine_regime(daily_sine):
    rep = run_experiment(daily_sine, SimConfig())
    assert rep.skips >= 120
    assert rep.skips == 134  # regression pin from the first run
    assert rep.max_abs_error_contacted <= 1.0 + RES
    assert rep.contacts + rep.skips == rep.rounds == 150
    assert rep.forecast_report.regression_r > 0.999


def test_experiment_deterministic(daily_sine):
    cfg = SimConfig(horizon=60, forecaster=ForecasterConfig(train=replace(ForecasterConfig().train, epochs=100)))
    a, b = run_experiment(daily_sine, cfg), run_experiment(daily_sine, cfg)
    assert a.to_json() == b.to_json()
    assert a.rounds_csv() == b.rounds_csv()
    assert a.summary_csv() == b.summary_csv()


def test_report_serialization(daily_sine):
    cfg = SimConfig(train_len=50, horizon=30, forecaster=ForecasterConfig("persistence"))
    rep = run_experiment(daily_sine, cfg)
    lines = rep.rounds_csv().splitlines()
    assert lines[0] == "t,source,E,M,S,replied,bits_tx,bits_rx"
    assert len(lines) == 31
    assert rep.summary_csv().splitlines()[0].startswith("rounds,contacts,skips")
    assert '"stored_series"' in rep.to_json()


# -- ledger -------------------------------------------------------------------

def test_reduction_arithmetic():
    r = compute_reductions(EnergyLedger(sensor_tx=10, baseline_tx=100, sensor_rx=5, baseline_rx=5))
    assert r.tx_ratio == 10.0 and not r.tx_infinite
    assert r.proc_ratio == 1.0


def test_reduction_zero_scheme_uses_floor():
    r = compute_reductions(EnergyLedger(baseline_tx=100), tx_floor=25.0)
    assert r.tx_infinite and r.tx_ratio == 4.0


def test_reduction_equal_totals():
    r = compute_reductions(EnergyLedger(sensor_tx=7, baseline_tx=7, sensor_proc=3, baseline_proc=3))
    assert r.tx_ratio == 1.0 and r.proc_ratio == 1.0


def test_skipped_rounds_cost_the_sensor_nothing(daily_sine):
    rep = run_experiment(daily_sine, SimConfig(forecaster=ForecasterConfig("seasonal_naive", season_len=24)))
    for r in rep.log:
        if r.source is Source.SKIPPED_FILL:
            c = r.charge
            assert c.sensor_tx == c.sensor_rx == c.sensor_proc == c.sensor_sense == 0.0
            assert c.baseline_tx > 0


def test_energy_model_validation():
    with pytest.raises(ValueError):
        EnergyModel(tx_per_bit=-1)


@pytest.mark.parametrize("seed", range(40))
def test_random_runs_invariants(seed):
    trace, cfg = random_case(np.random.default_rng(seed))
    rep = run_experiment(trace, cfg)
    assert rep.contacts + rep.skips == cfg.horizon
    assert rep.replies + rep.silent_accepted == rep.contacts
    for r in rep.log:
        if r.source is not Source.SKIPPED_FILL:
            assert abs(r.s - r.m) <= cfg.alpha + RES
    assert replay_ledger(rep.log) == rep.energy
    e = rep.energy
    assert e.sensor_tx <= e.baseline_tx
    assert e.sensor_rx + e.sensor_proc <= e.baseline_rx + e.baseline_proc
