"""Base-station forecasters.

Every forecaster maps the stored history ``S_1..S_{t-1}`` to a prediction of
the next reading. Models are immutable values; :func:`predict` dispatches on
``model.kind``:

* ``persistence`` - last stored value.
* ``seasonal_naive`` - value ``season_len`` steps back.
* ``ar`` - least-squares autoregression of order ``window_n`` with intercept.
* ``narx`` - one-hidden-layer tanh network over ``delay_taps`` lagged values,
  trained open-loop and run closed-loop.
* ``zero`` - always 0; used to reproduce the send-everything classical scheme.

Any model asked to predict from a history shorter than its depth falls back
to persistence.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DivergedTraining, EmptyHistory, InsufficientData, LengthMismatch

__all__ = [
    "KINDS",
    "TrainConfig",
    "ForecastModel",
    "ForecastReport",
    "persistence",
    "seasonal_naive",
    "zero_model",
    "predict",
    "predict_closed_loop",
    "fit_ar",
    "train_narx",
    "narx_loss_and_grad",
    "evaluate",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

KINDS = ("persistence", "seasonal_naive", "ar", "narx", "zero")

AR_RIDGE = 1e-8
HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class TrainConfig:
    hidden_units: int = 50
    delay_taps: int = 24
    epochs: int = 1000
    learning_rate: float = 0.1
    l2_lambda: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1 or self.delay_taps < 1 or self.epochs < 1:
            raise ValueError("hidden_units, delay_taps and epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not self.l2_lambda >= 0:
            raise ValueError("l2_lambda must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class ForecastModel:
    """A fitted forecaster.

    For ``narx`` the parameter vector is laid out as
    ``[W1 (hidden x taps, row-major), b1, w2, b2, mean, std]`` where the last
    two entries are the standardization constants of the training targets.
    For ``ar`` it is ``[a_1..a_n, intercept]`` with ``a_1`` weighting the most
    recent value.
    """

    kind: str
    window_n: int = 1
    parameters: tuple[float, ...] = ()
    season_len: int = 1
    config: Optional[TrainConfig] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown forecaster kind {self.kind!r}")
        if self.window_n < 1 or self.season_len < 1:
            raise ValueError("window_n and season_len must be >= 1")
        params = tuple(float(p) for p in self.parameters)
        if not all(math.isfinite(p) for p in params):
            raise ValueError("parameters must be finite")
        if self.kind == "ar" and len(params) != self.window_n + 1:
            raise ValueError("ar model needs window_n + 1 parameters")
        if self.kind == "narx":
            if self.config is None:
                raise ValueError("narx model needs a TrainConfig")
            if len(params) != _narx_size(self.config.delay_taps, self.config.hidden_units) + 2:
                raise ValueError("narx parameter vector has the wrong length")
        object.__setattr__(self, "parameters", params)

    @property
    def depth(self) -> int:
        """History length needed before the model stops falling back to persistence."""
        if self.kind == "seasonal_naive":
            return self.season_len
        if self.kind == "narx":
            return self.config.delay_taps
        if self.kind == "ar":
            return self.window_n
        return 1

    def __call__(self, history: Sequence[float]) -> float:
        return predict(self, history)


def persistence() -> ForecastModel:
    return ForecastModel("persistence")


def seasonal_naive(season_len: int) -> ForecastModel:
    return ForecastModel("seasonal_naive", season_len=season_len)


def zero_model() -> ForecastModel:
    return ForecastModel("zero")


# A predictor is anything that maps history -> next value. ForecastModel is one;
# tests and the simulator also accept plain callables.
Predictor = Union[ForecastModel, Callable[[Sequence[float]], float]]


def predict(model: Predictor, history: Sequence[float]) -> float:
    """Predict the next value from ``history`` (oldest first)."""
    if len(history) == 0:
        raise EmptyHistory("cannot predict from an empty history")
    if not isinstance(model, ForecastModel):
        return float(model(history))
    if model.kind == "zero":
        return 0.0
    if len(history) < model.depth or model.kind == "persistence":
        return float(history[-1])
    if model.kind == "seasonal_naive":
        return float(history[-model.season_len])
    if model.kind == "ar":
        n = model.window_n
        lags = np.asarray(history[-n:], dtype=float)[::-1]
        coef = np.asarray(model.parameters[:n])
        return float(lags @ coef + model.parameters[n])
    return _narx_predict(model, history)


def predict_closed_loop(model: Predictor, history: Sequence[float], horizon: int) -> list[float]:
    """Run ``horizon`` steps feeding each prediction back into the history."""
    if len(history) == 0:
        raise EmptyHistory("cannot predict from an empty history")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    work = [float(v) for v in history]
    out = []
    for _ in range(horizon):
        value = predict(model, work)
        out.append(value)
        work.append(value)
    return out


# ---------------------------------------------------------------------------
# Autoregression
# ---------------------------------------------------------------------------

def _lag_matrix(x: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``[x_{t-1}, ..., x_{t-n}, 1]`` and targets ``x_t`` for t = n..N-1."""
    rows = len(x) - n
    X = np.empty((rows, n + 1))
    for k in range(1, n + 1):
        X[:, k - 1] = x[n - k:len(x) - k]
    X[:, n] = 1.0
    return X, x[n:]


def fit_ar(history: Sequence[float], window_n: int) -> ForecastModel:
    """Least-squares AR(``window_n``) fit with intercept.

    Rank-deficient designs (e.g. a constant series) are solved with a
    1e-8 ridge on the normal-equation diagonal instead.
    """
    if window_n < 1:
        raise ValueError("window_n must be >= 1")
    x = np.asarray(history, dtype=float)
    if len(x) < 2 * window_n + 2:
        raise InsufficientData(
            f"AR({window_n}) needs at least {2 * window_n + 2} samples, got {len(x)}"
        )
    X, y = _lag_matrix(x, window_n)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        A = X.T @ X + AR_RIDGE * np.eye(X.shape[1])
        coef = np.linalg.solve(A, X.T @ y)
    else:
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return ForecastModel("ar", window_n=window_n, parameters=tuple(coef.tolist()))


# ---------------------------------------------------------------------------
# NARX network
# ---------------------------------------------------------------------------

def _narx_size(taps: int, hidden: int) -> int:
    return hidden * taps + hidden + hidden + 1


def _unpack(theta: np.ndarray, taps: int, hidden: int):
    i = hidden * taps
    W1 = theta[:i].reshape(hidden, taps)
    b1 = theta[i:i + hidden]
    w2 = theta[i + hidden:i + 2 * hidden]
    b2 = theta[i + 2 * hidden]
    return W1, b1, w2, b2


def narx_loss_and_grad(
    theta: np.ndarray, X: np.ndarray, y: np.ndarray, hidden: int, l2_lambda: float
) -> tuple[float, np.ndarray]:
    """Loss ``0.5*mean(err^2) + 0.5*l2*||weights||^2`` and its gradient.

    Biases are not penalized. ``X`` has one row of lagged inputs per target.
    """
    taps = X.shape[1]
    W1, b1, w2, b2 = _unpack(theta, taps, hidden)
    h = np.tanh(X @ W1.T + b1)
    err = h @ w2 + b2 - y
    n = len(y)
    loss = 0.5 * np.mean(err**2) + 0.5 * l2_lambda * (np.sum(W1**2) + np.sum(w2**2))

    g_out = err / n
    g_w2 = h.T @ g_out + l2_lambda * w2
    g_b2 = g_out.sum()
    g_pre = np.outer(g_out, w2) * (1.0 - h**2)
    g_W1 = g_pre.T @ X + l2_lambda * W1
    g_b1 = g_pre.sum(axis=0)
    grad = np.concatenate([g_W1.ravel(), g_b1, g_w2, [g_b2]])
    return float(loss), grad


def _init_weights(taps: int, hidden: int, rng: np.random.Generator) -> np.ndarray:
    lim1 = 1.0 / math.sqrt(taps)
    lim2 = 1.0 / math.sqrt(hidden)
    return np.concatenate([
        rng.uniform(-lim1, lim1, hidden * taps),
        rng.uniform(-lim1, lim1, hidden),
        rng.uniform(-lim2, lim2, hidden),
        rng.uniform(-lim2, lim2, 1),
    ])


def _delay_matrix(z: np.ndarray, taps: int) -> tuple[np.ndarray, np.ndarray]:
    # column 0 is the most recent lag, matching _narx_predict
    X = np.stack([z[i:i + taps][::-1] for i in range(len(z) - taps)])
    return X, z[taps:]


def train_narx(targets: Sequence[float], config: TrainConfig = TrainConfig()) -> ForecastModel:
    """Train the delay-line network open-loop by full-batch gradient descent.

    Targets are standardized with their own mean and standard deviation
    before training; the constants travel with the model.
    """
    y_raw = np.asarray(targets, dtype=float)
    taps, hidden = config.delay_taps, config.hidden_units
    if len(y_raw) < taps + 2:
        raise InsufficientData(f"need at least {taps + 2} targets, got {len(y_raw)}")
    mean = float(y_raw.mean())
    std = float(y_raw.std())
    if std == 0.0:
        std = 1.0
    X, y = _delay_matrix((y_raw - mean) / std, taps)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    theta = _init_weights(taps, hidden, rng)
    for _ in range(config.epochs):
        _, grad = narx_loss_and_grad(theta, X, y, hidden, config.l2_lambda)
        theta -= config.learning_rate * grad
        if not np.all(np.isfinite(theta)):
            raise DivergedTraining("non-finite weight during NARX training")
    params = tuple(theta.tolist()) + (mean, std)
    return ForecastModel("narx", window_n=taps, parameters=params, config=config)


def _narx_predict(model: ForecastModel, history: Sequence[float]) -> float:
    taps, hidden = model.config.delay_taps, model.config.hidden_units
    theta = np.asarray(model.parameters[:-2])
    mean, std = model.parameters[-2:]
    W1, b1, w2, b2 = _unpack(theta, taps, hidden)
    lags = (np.asarray(history[-taps:], dtype=float)[::-1] - mean) / std
    z = np.tanh(W1 @ lags + b1) @ w2 + b2
    return float(mean + std * z)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForecastReport:
    """Forecast quality summary.

    ``regression_r`` is ``None`` when either input has zero variance and the
    correlation is undefined.
    """

    mse: float
    regression_r: Optional[float]
    bin_edges: tuple[float, ...] = field(default=())
    counts: tuple[int, ...] = field(default=())

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(predictions: Sequence[float], actuals: Sequence[float]) -> ForecastReport:
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if len(p) != len(a) or len(p) == 0:
        raise LengthMismatch(f"{len(p)} predictions vs {len(a)} actuals")
    err = p - a
    mse = float(np.mean(err**2))
    pc, ac = p - p.mean(), a - a.mean()
    denom = math.sqrt(float(pc @ pc) * float(ac @ ac))
    r = None if denom == 0.0 else float(np.clip((pc @ ac) / denom, -1.0, 1.0))
    counts, edges = np.histogram(err, bins=HISTOGRAM_BINS)
    return ForecastReport(mse, r, tuple(edges.tolist()), tuple(int(c) for c in counts))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def model_to_dict(model: ForecastModel) -> dict:
    return {
        "kind": model.kind,
        "window_n": model.window_n,
        "season_len": model.season_len,
        "config": asdict(model.config) if model.config is not None else None,
        "parameters": list(model.parameters),
    }


def model_from_dict(doc: dict) -> ForecastModel:
    config = TrainConfig(**doc["config"]) if doc.get("config") else None
    return ForecastModel(
        kind=doc["kind"],
        window_n=int(doc.get("window_n", 1)),
        parameters=tuple(float(p) for p in doc.get("parameters", ())),
        season_len=int(doc.get("season_len", 1)),
        config=config,
    )


def save_model(model: ForecastModel, path: str | Path) -> None:
    # json writes floats with repr(), which round-trips exactly (17 sig. digits max)
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ForecastModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
