"""Two-state correlated market model.

In the regular state every stock follows its own geometric Brownian motion.
In the distressed state all stocks share one innovation and a negative drift.
A two-state Markov chain, checked once at the start of each day, switches
between them. ``p_dr = 1`` gives one-day distress episodes (the asymmetric
synchronous market model); ``n_stocks = 1`` is a single stock.
"""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, replace
from enum import IntEnum

import numpy as np

from . import _accel
from ._accel import njit

DJIA_MEAN_DAILY_RETURN = 2.58e-4
_CHUNK = 1 << 16


class ModelError(ValueError):
    pass


class Regime(IntEnum):
    REGULAR = 0
    DISTRESSED = 1


@dataclass(frozen=True)
class ModelParams:
    n_stocks: int = 30
    dt: float = 1 / 250
    xi: float = 0.3
    mu_r: float = 0.0
    mu_d: float = -0.15
    p_rd: float = 1 / 200
    p_dr: float = 1 / 25
    s0: float = 100.0

    def __post_init__(self):
        if int(self.n_stocks) != self.n_stocks or self.n_stocks < 1:
            raise ModelError(f"n_stocks must be a positive integer, got {self.n_stocks}")
        if not 0 < self.p_rd <= 1:
            raise ModelError(f"p_rd must lie in (0, 1], got {self.p_rd}")
        if not 0 < self.p_dr <= 1:
            raise ModelError(f"p_dr must lie in (0, 1], got {self.p_dr}")
        if not self.dt > 0:
            raise ModelError("dt must be positive")
        if not self.xi > 0:
            raise ModelError("xi must be positive")
        if not self.mu_d < 0:
            raise ModelError("mu_d must be negative")
        if not self.s0 > 0:
            raise ModelError("s0 must be positive")
        if not math.isfinite(self.mu_r):
            raise ModelError("mu_r must be finite")
        object.__setattr__(self, "n_stocks", int(self.n_stocks))

    def to_dict(self) -> dict:
        return asdict(self)


def reference_params(n_stocks: int = 30, **overrides) -> ModelParams:
    """Reference parameter set (30 stocks by default) with ``mu_r`` calibrated to the DJIA mean daily return."""
    base = ModelParams(n_stocks=n_stocks, **overrides)
    if "mu_r" in overrides:
        return base
    return replace(base, mu_r=calibrate_mu_r(base))


def stationary_distribution(p_rd: float, p_dr: float) -> tuple[float, float]:
    """Long-run (regular, distressed) occupation fractions of the regime chain."""
    if not (0 < p_rd <= 1 and 0 < p_dr <= 1):
        raise ModelError(f"transition probabilities must lie in (0, 1], got p_rd={p_rd}, p_dr={p_dr}")
    pi_d = p_rd / (p_rd + p_dr)
    return 1.0 - pi_d, pi_d


def calibrate_mu_r(params: ModelParams, target: float = DJIA_MEAN_DAILY_RETURN) -> float:
    """Regular-state drift giving mean simple index return ``target`` per step.

    Under the stationary regime mix each stock's expected one-step simple
    return is ``pi_r (e^(mu_r dt) - 1) + pi_d (e^(mu_d dt) - 1)``; the index
    inherits it because every stock has the same expected growth.
    """
    pi_r, pi_d = stationary_distribution(params.p_rd, params.p_dr)
    arg = 1.0 + (target - pi_d * math.expm1(params.mu_d * params.dt)) / pi_r
    if not arg > 0:
        raise ModelError(f"target mean return {target} is infeasible for these parameters")
    return math.log(arg) / params.dt


def step_regime(state: Regime, p_rd: float, p_dr: float, u: float) -> Regime:
    if state == Regime.REGULAR:
        return Regime.DISTRESSED if u < p_rd else Regime.REGULAR
    return Regime.REGULAR if u < p_dr else Regime.DISTRESSED


def step_prices(prices, regime: Regime, params: ModelParams, z) -> np.ndarray:
    """Advance all stocks one step. Regular days take one draw per stock, distressed days exactly one."""
    prices = np.asarray(prices, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if len(prices) != params.n_stocks:
        raise ModelError(f"expected {params.n_stocks} prices, got {len(prices)}")
    if regime == Regime.REGULAR:
        if len(z) != params.n_stocks:
            raise ModelError(f"regular step needs {params.n_stocks} draws, got {len(z)}")
        mu = params.mu_r
    else:
        if len(z) != 1:
            raise ModelError(f"distressed step needs exactly 1 draw, got {len(z)}")
        mu = params.mu_d
    drift = (mu - 0.5 * params.xi**2) * params.dt
    return prices * np.exp(drift + params.xi * math.sqrt(params.dt) * z)


@dataclass(frozen=True)
class MarketPath:
    index: np.ndarray
    regimes: np.ndarray
    seed: int
    params: ModelParams
    stocks: np.ndarray | None = None
    path_id: int = 0
    index_kind: str = "price"

    @property
    def t_steps(self) -> int:
        return len(self.regimes)

    def log_index(self) -> np.ndarray:
        return np.log(self.index)

    def to_csv(self, include_stocks: bool = False) -> str:
        out = io.StringIO()
        cols = ["t", "index", "regime"]
        if include_stocks:
            if self.stocks is None:
                raise ModelError("path was simulated without per-stock prices")
            cols += [f"s{i + 1}" for i in range(self.stocks.shape[0])]
        out.write(",".join(cols) + "\n")
        names = ("", "regular", "distressed")
        for t in range(len(self.index)):
            row = [str(t), repr(float(self.index[t])), names[int(self.regimes[t - 1]) + 1] if t else ""]
            if include_stocks:
                row += [repr(float(v)) for v in self.stocks[:, t]]
            out.write(",".join(row) + "\n")
        return out.getvalue()


# -- kernels -----------------------------------------------------------------


@njit
def _regimes_nb(u, p_rd, p_dr):
    out = np.empty(u.shape[0], dtype=np.int8)
    state = 0
    for t in range(u.shape[0]):
        if state == 0:
            if u[t] < p_rd:
                state = 1
        elif u[t] < p_dr:
            state = 0
        out[t] = state
    return out


def _regimes_np(u, p_rd, p_dr):
    # Each day maps the previous state through one of: const 0, const 1,
    # identity or swap. The state is the last constant, flipped once per swap
    # since then (the chain starts regular, an implicit const 0 before day 0).
    to_d = u < p_rd  # image of regular
    stay_d = ~(u < p_dr)  # image of distressed
    const = to_d == stay_d
    swap = to_d & ~stay_d
    n = len(u)
    last = np.where(const, np.arange(n), -1)
    last = np.maximum.accumulate(last)
    swaps = np.cumsum(swap)
    base_val = np.where(last >= 0, to_d[np.maximum(last, 0)], False)
    swaps_before = np.where(last >= 0, swaps[np.maximum(last, 0)], 0)
    return ((base_val.astype(np.int64) + swaps - swaps_before) % 2).astype(np.int8)


@njit
def _prices_nb(regimes, z, n_stocks, log_s0, drift_r, drift_d, vol, keep_stocks, rebalanced):
    T = regimes.shape[0]
    index = np.empty(T + 1)
    stocks = np.empty((n_stocks, T + 1 if keep_stocks else 1))
    logs = np.full(n_stocks, log_s0)
    for i in range(n_stocks):
        stocks[i, 0] = math.exp(log_s0)
    index[0] = math.exp(log_s0)
    k = 0
    for t in range(T):
        inc = 0.0
        if regimes[t] == 0:
            for i in range(n_stocks):
                logs[i] += drift_r + vol * z[k]
                k += 1
        else:
            inc = drift_d + vol * z[k]
            k += 1
            for i in range(n_stocks):
                logs[i] += inc
        acc = 0.0
        growth = 0.0
        for i in range(n_stocks):
            s = math.exp(logs[i])
            acc += s
            if keep_stocks:
                stocks[i, t + 1] = s
        if rebalanced:
            if regimes[t] == 0:
                for i in range(n_stocks):
                    growth += math.exp(drift_r + vol * z[k - n_stocks + i])
                index[t + 1] = index[t] * (growth / n_stocks)
            else:
                index[t + 1] = index[t] * math.exp(inc)
        else:
            index[t + 1] = acc / n_stocks
    return index, stocks


def _prices_np(regimes, z, n_stocks, log_s0, drift_r, drift_d, vol, keep_stocks, rebalanced):
    T = len(regimes)
    per_day = np.where(regimes == 0, n_stocks, 1)
    offsets = np.concatenate([[0], np.cumsum(per_day)[:-1]])
    index = np.empty(T + 1)
    index[0] = math.exp(log_s0)
    stocks = np.empty((n_stocks, T + 1 if keep_stocks else 1))
    stocks[:, 0] = math.exp(log_s0)
    logs = np.full(n_stocks, log_s0)
    cols = np.arange(n_stocks)
    for a in range(0, T, _CHUNK):
        b = min(T, a + _CHUNK)
        reg = regimes[a:b] == 0
        idx = offsets[a:b, None] + np.where(reg[:, None], cols[None, :], 0)
        inc = np.where(reg[:, None], drift_r, drift_d) + vol * z[idx]
        path = logs[None, :] + np.cumsum(inc, axis=0)
        logs = path[-1].copy()
        s = np.exp(path)
        if rebalanced:
            acc = np.zeros(b - a)
            for i in range(n_stocks):
                acc += np.exp(inc[:, i])
            index[a + 1 : b + 1] = index[a] * np.cumprod(acc / n_stocks)
        else:
            acc = np.zeros(b - a)
            for i in range(n_stocks):
                acc += s[:, i]
            index[a + 1 : b + 1] = acc / n_stocks
        if keep_stocks:
            stocks[:, a + 1 : b + 1] = s.T
    return index, stocks


def _streams(seed: int, path_id: int):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_id),))
    regime_ss, innov_ss = ss.spawn(2)
    return np.random.default_rng(regime_ss), np.random.default_rng(innov_ss)


INDEX_KINDS = ("price", "rebalanced")


def simulate(
    params: ModelParams,
    t_steps: int,
    seed: int,
    path_id: int = 0,
    keep_stocks: bool = True,
    index: str = "price",
) -> MarketPath:
    """Simulate ``t_steps`` days starting in the regular state.

    Regime uniforms and price innovations come from two independent streams
    derived from ``(seed, path_id)``; innovations are consumed in day order,
    n_stocks on a regular day and one on a distressed day.

    ``index="price"`` is the plain average of stock prices. Over long runs the
    largest stock comes to dominate it. ``index="rebalanced"`` instead
    compounds the average daily gross return of the stocks (an equal-weight
    index rebalanced every day), which keeps N effective constituents.
    """
    if index not in INDEX_KINDS:
        raise ModelError(f"unknown index kind {index!r}; expected one of {INDEX_KINDS}")
    if int(t_steps) != t_steps or t_steps < 1:
        raise ModelError(f"t_steps must be a positive integer, got {t_steps}")
    if seed is None:
        raise ModelError("an explicit seed is required")
    t_steps = int(t_steps)
    regime_rng, innov_rng = _streams(seed, path_id)
    u = regime_rng.random(t_steps)
    if _accel.USE_NUMBA:
        regimes = _regimes_nb(u, params.p_rd, params.p_dr)
    else:
        regimes = _regimes_np(u, params.p_rd, params.p_dr)
    n_regular = int(np.count_nonzero(regimes == 0))
    z = innov_rng.standard_normal(n_regular * params.n_stocks + (t_steps - n_regular))
    half_var = 0.5 * params.xi**2
    args = (
        regimes,
        z,
        params.n_stocks,
        math.log(params.s0),
        (params.mu_r - half_var) * params.dt,
        (params.mu_d - half_var) * params.dt,
        params.xi * math.sqrt(params.dt),
        keep_stocks,
        index == "rebalanced",
    )
    values, stocks = _prices_nb(*args) if _accel.USE_NUMBA else _prices_np(*args)
    # exp(log(s0)) can miss s0 by an ulp
    values[0] = params.s0
    stocks[:, 0] = params.s0
    return MarketPath(
        index=values,
        regimes=regimes,
        seed=int(seed),
        params=params,
        stocks=stocks if keep_stocks else None,
        path_id=int(path_id),
        index_kind=index,
    )


def daily_sigma(index_path) -> float:
    """Sample standard deviation (n-1) of one-step log returns of a positive path."""
    if isinstance(index_path, MarketPath):
        index_path = index_path.index
    values = np.asarray(index_path, dtype=float)
    if len(values) < 3:
        raise ModelError("path too short: need at least 3 points")
    return float(np.std(np.diff(np.log(values)), ddof=1))


def daily_sigma_of_log(log_values) -> float:
    """Same as ``daily_sigma`` for a series that is already in logs."""
    values = np.asarray(log_values, dtype=float)
    if len(values) < 3:
        raise ModelError("series too short: need at least 3 points")
    return float(np.std(np.diff(values), ddof=1))


_PARAM_KEYS = ("n_stocks", "dt", "xi", "mu_r", "mu_d", "p_rd", "p_dr", "s0")


def params_from_mapping(d: dict) -> ModelParams:
    """Build parameters from a config mapping.

    Missing keys take the reference values; ``mu_r`` may be a number or
    ``"calibrate"`` (the default), which solves for the drift that matches
    ``target_mean_return`` (default 2.58e-4 per step).
    """
    from .config import ConfigError, as_number

    kwargs = {}
    for key in _PARAM_KEYS:
        if key in d and key != "mu_r":
            kwargs[key] = as_number(d[key], key)
    if "n_stocks" in kwargs:
        if kwargs["n_stocks"] != int(kwargs["n_stocks"]):
            raise ConfigError(f"n_stocks must be an integer, got {d['n_stocks']!r}")
        kwargs["n_stocks"] = int(kwargs["n_stocks"])
    mu_r = d.get("mu_r", "calibrate")
    base = ModelParams(**kwargs)
    if isinstance(mu_r, str) and mu_r.strip().lower() == "calibrate":
        target = as_number(d.get("target_mean_return", DJIA_MEAN_DAILY_RETURN), "target_mean_return")
        return replace(base, mu_r=calibrate_mu_r(base, target))
    return replace(base, mu_r=as_number(mu_r, "mu_r"))
