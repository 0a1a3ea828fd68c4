"""Exit criteria for the package; each test reports one pass/fail line."""

import random
import time

import numpy as np
import pytest

from simcases import random_case
from test_forecast import central_differences, normal_equations_ar, random_ar_series
from wsnskip.cli import main
from wsnskip.forecast import fit_ar, narx_loss_and_grad, zero_model
from wsnskip.protocol import (
    ProbeResult,
    QuantSpec,
    ReplyPacket,
    RequestPacket,
    SensorState,
    Source,
    decode_reply,
    decode_request,
    encode_reply,
    encode_request,
    link_probe,
    sensor_step,
)
from wsnskip.rma import CLASSICAL_TR1
from wsnskip.sim import SimConfig, replay_ledger, run_experiment
from wsnskip.trace import SyntheticSpec, TraceSeries, generate

Q = QuantSpec()
RES = Q.resolution


@pytest.fixture
def report(record_property):
    def _report(criterion, detail=""):
        record_property("criterion", criterion)
        record_property("detail", detail)
    return _report


@pytest.fixture(scope="module")
def daily_run():
    trace = generate(SyntheticSpec("sine", amplitude=10, period_samples=24, offset=20, length=400))
    cfg = SimConfig(alpha=1.0, tr1=3, tr2=7, train_len=250, horizon=150)
    start = time.perf_counter()
    rep = run_experiment(trace, cfg)
    return rep, time.perf_counter() - start


@pytest.fixture(scope="module")
def random_suite():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    runs = []
    for _ in range(1000):
        trace, cfg = random_case(rng)
        runs.append((cfg, run_experiment(trace, cfg)))
    return runs, time.perf_counter() - start


def test_c01_schedule_oracle(report, capsys, schedule_3_7_150):
    report("C1 RMA schedule oracle (tr1=3, tr2=7, 150 rounds)")
    start = time.perf_counter()
    assert main(["schedule", "3", "7", "150"]) == 0
    elapsed = time.perf_counter() - start
    contacts = [int(x) for x in capsys.readouterr().out.split()]
    report("C1 RMA schedule oracle (tr1=3, tr2=7, 150 rounds)",
           f"{len(contacts)} contacts, {150 - len(contacts)} skips, {elapsed * 1e3:.2f} ms")
    assert contacts == schedule_3_7_150 == [1, 2, 3, 5, 8, 13, 22, 32, 43, 55, 68, 82, 97, 113, 130, 148]
    assert elapsed < 0.010


def test_c02_daily_sine_regime(report, daily_run):
    rep, elapsed = daily_run
    report("C2 daily sine regime (train 250, horizon 150, NARX)",
           f"skips={rep.skips} replies={rep.replies} max_err={rep.max_abs_error_contacted:.4f} {elapsed:.2f}s")
    assert rep.skips >= 120
    assert rep.replies <= 10
    assert rep.max_abs_error_contacted <= 1 + 2**-4
    assert elapsed < 60


def test_c03_accuracy_invariant(report, random_suite):
    runs, elapsed = random_suite
    violations = 0
    for cfg, rep in runs:
        for r in rep.log:
            if r.source is not Source.SKIPPED_FILL and abs(r.s - r.m) > cfg.alpha + RES:
                violations += 1
    report("C3 accuracy invariant over 1000 random runs", f"{violations} violations, {elapsed:.2f}s")
    assert len(runs) == 1000
    assert {c.forecaster.kind for c, _ in runs} == {"persistence", "ar"}
    assert all(0.1 <= c.alpha <= 5 for c, _ in runs)
    assert violations == 0
    assert elapsed < 30


def test_c04_classical_equivalence(report):
    rng = random.Random(4)
    values = [rng.uniform(-500, 500) for _ in range(300)] + [0.0, 1e-3, -1e-3]
    trace = TraceSeries(0, 1.0, tuple(values))
    cfg = SimConfig(alpha=0.0, tr1=CLASSICAL_TR1, tr2=CLASSICAL_TR1 + 1, train_len=3, horizon=len(values) - 3)
    start = time.perf_counter()
    rep = run_experiment(trace, cfg, model=zero_model())
    elapsed = time.perf_counter() - start
    err = max(abs(s.value_s - trace.at(s.t)) for s in rep.stored_series)
    report("C4 classical-mode equivalence", f"contacts={rep.contacts}/{cfg.horizon} max_err={err:.2e}")
    assert rep.contacts == cfg.horizon and rep.skips == 0
    assert err <= 2**-5
    assert elapsed < 1


def test_c05_codec_round_trip(report):
    rng = random.Random(5)
    start = time.perf_counter()
    failures = 0
    for _ in range(10_000):
        req = RequestPacket(rng.randrange(2**16), rng.uniform(Q.min_e, Q.max_e),
                            rng.uniform(0, (2**16 - 1) * RES), rng.random() < 0.5)
        bits = encode_request(req, Q)
        got = decode_request(bits, Q)
        want = RequestPacket(req.seq, round(req.predicted_e / RES) * RES, round(req.alpha / RES) * RES,
                             req.probe_flag)
        failures += got != want or encode_request(got, Q) != bits
    for _ in range(10_000):
        mag = 2 ** rng.uniform(-4, 24) * RES
        rep = ReplyPacket(rng.randrange(2**16), mag if rng.random() < 0.5 else -mag)
        if round(abs(rep.variance_v) / RES) >= 2**24:
            rep = ReplyPacket(rep.seq, (2**24 - 1) * RES)
        bits = encode_reply(rep, Q)
        got = decode_reply(bits, Q)
        want_mag = round(abs(rep.variance_v) / RES) * RES
        failures += abs(got.variance_v) != want_mag or got.seq != rep.seq or encode_reply(got, Q) != bits
        failures += want_mag != 0 and (got.variance_v < 0) != (rep.variance_v < 0)
    elapsed = time.perf_counter() - start
    report("C5 codec round trip, 10^4 requests + 10^4 replies", f"{failures} failures, {elapsed:.2f}s")
    assert failures == 0
    assert elapsed < 1


def test_c06_narx_gradient(report):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        taps, hidden, n = 3, 4, 10
        X, y = rng.normal(size=(n, taps)), rng.normal(size=n)
        theta = rng.normal(scale=0.5, size=hidden * taps + 2 * hidden + 1)
        _, analytic = narx_loss_and_grad(theta, X, y, hidden, 1e-3)
        numeric = central_differences(lambda th: narx_loss_and_grad(th, X, y, hidden, 1e-3)[0], theta, 1e-5)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    elapsed = time.perf_counter() - start
    report("C6 NARX gradient vs central differences, 5 seeds", f"max rel err {worst:.2e}")
    assert worst < 1e-4
    assert elapsed < 5


def test_c07_ar_oracle(report):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(200 + seed)
        n = int(rng.integers(1, 6))
        x = random_ar_series(rng, n, int(rng.integers(2 * n + 12, 51)))
        diff = np.abs(np.array(fit_ar(x, n).parameters) - normal_equations_ar(list(x), n))
        worst = max(worst, float(diff.max()))
    elapsed = time.perf_counter() - start
    report("C7 AR fit vs normal equations, 10 instances", f"max abs diff {worst:.2e}")
    assert worst < 1e-8
    assert elapsed < 1


def test_c08_energy_dominance_conservation(report, random_suite):
    runs, _ = random_suite
    bad_dominance = bad_conservation = 0
    for _, rep in runs:
        e = rep.energy
        bad_dominance += not (
            e.sensor_tx <= e.baseline_tx and e.sensor_rx <= e.baseline_rx
            and e.sensor_proc <= e.baseline_proc and e.sensor_sense <= e.baseline_sense
        )
        bad_conservation += replay_ledger(rep.log) != e
    report("C8 energy dominance and conservation", f"{bad_dominance} dominance / {bad_conservation} "
           "conservation failures over 1000 runs")
    assert bad_dominance == 0
    assert bad_conservation == 0


def test_c09_reduction_ratios(report, daily_run):
    rep, _ = daily_run
    report("C9 reduction ratios under the daily sine regime",
           f"tx={rep.tx_reduction_ratio:.1f}x proc={rep.proc_reduction_ratio:.2f}x")
    assert rep.tx_reduction_ratio >= 5
    assert rep.proc_reduction_ratio >= 5


def test_c10_link_probe(report):
    def sensor(m):
        return lambda req: sensor_step(SensorState(), req, m)

    start = time.perf_counter()
    results = [link_probe(sensor(25.0)), link_probe(sensor(0.0)), link_probe(lambda req: None)]
    elapsed = time.perf_counter() - start
    report("C10 link probe", ", ".join(r.value for r in results))
    assert results == [ProbeResult.ALIVE_NONZERO, ProbeResult.ALIVE_ZERO, ProbeResult.DEAD]
    assert elapsed < 1
