"""First passage times of a real series and the gain/loss asymmetry built from them.

For a start index n the wait is the smallest m >= 1 with
``x[n+m] - x[n] >= rho`` (rho > 0) or ``x[n+m] - x[n] <= rho`` (rho < 0).
Every start 0..N-2 is scanned; starts that never cross are censored. A level
counts as reached when the difference is within ``crossing_tolerance(x)`` of
it, so exact hits such as a 0.01-step ramp against 0.05 survive rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit

MIN_RELIABLE_SAMPLES = 100
DEFAULT_BINS_PER_DECADE = 10


class FptError(ValueError):
    pass


@dataclass(frozen=True)
class WaitTimeSamples:
    """Uncensored waits (sorted) plus the per-start view they came from.

    ``per_start[n]`` is the wait from start n, or 0 when censored.
    """

    waits: np.ndarray
    n_starts: int
    n_censored: int
    rho: float
    per_start: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class FptDistribution:
    """Probability mass over waits or wait bins.

    ``bin_days`` counts the integer waits each support point covers (all ones
    for raw binning); ``density`` divides it out to give mass per day.
    """

    support: np.ndarray
    probabilities: np.ndarray
    rho: float
    binning: str
    n_samples: int = 0
    n_starts: int = 0
    n_censored: int = 0
    label: str = ""
    bin_days: np.ndarray | None = None

    def __post_init__(self):
        if self.bin_days is None:
            object.__setattr__(self, "bin_days", np.ones(len(self.support), dtype=np.int64))

    @property
    def density(self) -> np.ndarray:
        return self.probabilities / self.bin_days

    def to_csv(self) -> str:
        rows = ["support,probability"]
        rows += [f"{s!r},{p!r}" for s, p in zip(self.support.tolist(), self.probabilities.tolist())]
        return "\n".join(rows) + "\n"

    def to_dict(self, smoothing: int | None = None) -> dict:
        return {
            "support": self.support.tolist(),
            "probability": self.probabilities.tolist(),
            "rho": self.rho,
            "binning": self.binning,
            "smoothing": default_smoothing(self.binning) if smoothing is None else smoothing,
            "n_samples": self.n_samples,
            "n_starts": self.n_starts,
            "n_censored": self.n_censored,
            "label": self.label,
            "bin_days": self.bin_days.tolist(),
        }

    def to_json(self, smoothing: int | None = None) -> str:
        return json.dumps(self.to_dict(smoothing))

    @classmethod
    def from_dict(cls, d: dict) -> "FptDistribution":
        return cls(
            support=np.array(d["support"], dtype=float),
            probabilities=np.array(d["probability"], dtype=float),
            rho=d["rho"],
            binning=d["binning"],
            n_samples=d.get("n_samples", 0),
            n_starts=d.get("n_starts", 0),
            n_censored=d.get("n_censored", 0),
            label=d.get("label", ""),
            bin_days=np.array(d["bin_days"], dtype=np.int64) if "bin_days" in d else None,
        )


@dataclass(frozen=True)
class AsymmetryStat:
    mode_gain: float
    mode_loss: float
    delta: float
    log_ratio: float
    rho: float
    binning: str
    smoothing: int
    n_gain: int
    n_loss: int

    @property
    def reliable(self) -> bool:
        return min(self.n_gain, self.n_loss) >= MIN_RELIABLE_SAMPLES

    def to_dict(self) -> dict:
        return {
            "mode_gain": self.mode_gain,
            "mode_loss": self.mode_loss,
            "delta": self.delta,
            "log_ratio": self.log_ratio,
            "rho": self.rho,
            "binning": self.binning,
            "smoothing": self.smoothing,
            "n_gain": self.n_gain,
            "n_loss": self.n_loss,
            "reliable": self.reliable,
        }


# -- kernels -----------------------------------------------------------------
# Both kernels look for the first index m > n with x[m] - x[n] >= rho. The
# difference is monotone in x[m], so the first hit is always a running record
# of x[n+1:]; that is what makes the stack search and the block skipping exact.


@njit
def _first_gain_nb(x, rho):
    n = x.shape[0]
    out = np.zeros(n - 1, dtype=np.int64)
    # records of x[start+1:], stack[top-1] nearest and lowest
    stack = np.empty(n, dtype=np.int64)
    top = 0
    for start in range(n - 2, -1, -1):
        nxt = start + 1
        while top > 0 and x[stack[top - 1]] <= x[nxt]:
            top -= 1
        stack[top] = nxt
        top += 1
        base = x[start]
        if x[stack[0]] - base < rho:
            continue
        # largest k with x[stack[k]] - base >= rho
        lo, hi = 0, top - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if x[stack[mid]] - base >= rho:
                lo = mid
            else:
                hi = mid - 1
        out[start] = stack[lo] - start
    return out


def _first_gain_np(x, rho):
    n = len(x)
    starts = np.arange(n - 1)
    base = x[:-1]
    levels = max(1, int(math.ceil(math.log2(n))) + 1)
    # table[k][i] = max(x[i : i + 2**k]), clipped at the end of the record
    table = [x]
    for k in range(1, levels):
        prev, half = table[-1], 2 ** (k - 1)
        cur = prev.copy()
        cur[: n - half] = np.maximum(prev[: n - half], prev[half:])
        table.append(cur)
    pos = starts + 1
    for k in range(levels - 1, -1, -1):
        inside = pos < n
        block = np.full(len(pos), -np.inf)
        block[inside] = table[k][pos[inside]]
        miss = ~((block - base) >= rho)
        pos = np.where(miss, pos + 2**k, pos)
    out = np.zeros(n - 1, dtype=np.int64)
    hit = pos < n
    out[hit] = pos[hit] - starts[hit]
    return out


def _first_gain(x, rho):
    if _accel.USE_NUMBA:
        return _first_gain_nb(x, rho)
    return _first_gain_np(x, rho)


# -- estimators --------------------------------------------------------------


def _values(x) -> np.ndarray:
    values = np.asarray(getattr(x, "values", x), dtype=float)
    if values.ndim != 1:
        raise FptError("series must be one-dimensional")
    if len(values) < 2:
        raise FptError("series too short: need length >= 2")
    if not np.all(np.isfinite(values)):
        raise FptError("series contains non-finite values")
    return values


def crossing_tolerance(values: np.ndarray) -> float:
    return 2.0**-40 * max(1.0, float(np.max(np.abs(values))))


def fpt_samples(x, rho: float) -> WaitTimeSamples:
    """Scan every start and collect the first passage waits for level ``rho``."""
    values = _values(x)
    rho = float(rho)
    if rho == 0 or not math.isfinite(rho):
        raise FptError("rho must be a finite non-zero level")
    tol = crossing_tolerance(values)
    if rho > 0:
        per_start = _first_gain(values, rho - tol)
    else:
        # x[m] - x[n] <= rho  <=>  (-x[m]) - (-x[n]) >= -rho, exactly in floating point
        per_start = _first_gain(-values, -rho - tol)
    waits = np.sort(per_start[per_start > 0])
    n_starts = len(per_start)
    return WaitTimeSamples(waits, n_starts, n_starts - len(waits), rho, per_start)


def parse_binning(binning: str) -> int | None:
    """Return bins per decade for ``"log"``/``"log:K"``, ``None`` for ``"raw"``."""
    b = str(binning).strip().lower()
    if b == "raw":
        return None
    if b == "log":
        return DEFAULT_BINS_PER_DECADE
    if b.startswith("log:"):
        try:
            k = int(b[4:])
        except ValueError:
            k = 0
        if k >= 1:
            return k
    raise FptError(f"unknown binning {binning!r}; use 'raw', 'log' or 'log:K'")


def canonical_binning(binning: str) -> str:
    bpd = parse_binning(binning)
    return "raw" if bpd is None else f"log:{bpd}"


def default_smoothing(binning: str) -> int:
    return 1 if parse_binning(binning) is None else 3


def _log_bin(w, bpd):
    return np.floor(bpd * np.log10(w) + 1e-9).astype(np.int64)


def _first_integer_in_bin(k, bpd):
    """Smallest integer wait assigned to bin ``k`` or any later bin."""
    w = np.maximum(np.ceil(10.0 ** (k / bpd)).astype(np.int64) - 1, 1)
    while True:
        late = _log_bin(w, bpd) < k
        if not late.any():
            break
        w = np.where(late, w + 1, w)
    return w


def empirical_distribution(s: WaitTimeSamples, binning: str = "log", label: str = "") -> FptDistribution:
    """Probability mass over raw integer waits or over log-spaced bins.

    Log bins are [10**(k/K), 10**((k+1)/K)) with K bins per decade. Bins that
    cannot hold an integer wait are skipped; other empty bins between the
    first and last occupied one keep zero mass. Centers are geometric
    midpoints and mass is count/total in both modes.
    """
    waits = np.asarray(s.waits)
    if len(waits) == 0:
        raise FptError(f"no first passage samples for rho={s.rho}")
    bpd = parse_binning(binning)
    total = len(waits)
    if bpd is None:
        support, counts = np.unique(waits, return_counts=True)
        support = support.astype(float)
        days = np.ones(len(support), dtype=np.int64)
    else:
        idx = _log_bin(waits, bpd)
        lo = int(idx.min())
        counts = np.bincount(idx - lo)
        ks = np.arange(lo, lo + len(counts) + 1)
        days = np.diff(_first_integer_in_bin(ks, bpd))
        keep = days > 0
        counts, days = counts[keep], days[keep]
        support = 10.0 ** ((ks[:-1][keep] + 0.5) / bpd)
    return FptDistribution(
        support=support,
        probabilities=counts / total,
        rho=s.rho,
        binning=canonical_binning(binning),
        n_samples=total,
        n_starts=s.n_starts,
        n_censored=s.n_censored,
        label=label,
        bin_days=days,
    )


def smooth_probabilities(p: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; the window shrinks at the ends."""
    if window <= 1:
        return np.asarray(p, dtype=float)
    if window % 2 == 0:
        raise FptError("smoothing window must be odd")
    half = window // 2
    c = np.concatenate([[0.0], np.cumsum(p)])
    i = np.arange(len(p))
    lo, hi = np.maximum(i - half, 0), np.minimum(i + half + 1, len(p))
    return (c[hi] - c[lo]) / (hi - lo)


def mode_wait_time(d: FptDistribution, smoothing: int | None = None) -> float:
    """Most likely wait: argmax of the (optionally smoothed) mass per day.

    On log bins the per-day density is used rather than the bin mass, since
    bin mass grows with bin width and would pick the peak of t*p(t) instead
    of p(t). Smoothing is a centered moving average over bins, i.e. in log
    time. Ties go to the smaller wait.
    """
    if len(d.probabilities) == 0:
        raise FptError("empty distribution")
    window = default_smoothing(d.binning) if smoothing is None else int(smoothing)
    sm = smooth_probabilities(d.density, window)
    return float(d.support[int(np.argmax(sm))])


def asymmetry(x, rho_abs: float, binning: str = "log", smoothing: int | None = None) -> AsymmetryStat:
    """Compare the most likely wait for a gain of ``rho_abs`` with that for an equal loss.

    ``delta = mode_gain - mode_loss``; positive means losses come faster.
    """
    rho_abs = float(rho_abs)
    if not rho_abs > 0:
        raise FptError("rho_abs must be positive")
    gain, loss = fpt_distributions(x, rho_abs, binning)
    return asymmetry_from(gain, loss, smoothing)


def fpt_distributions(x, rho_abs: float, binning: str = "log", label: str = ""):
    values = _values(x)
    out = []
    for rho, direction in ((rho_abs, "gain"), (-rho_abs, "loss")):
        s = fpt_samples(values, rho)
        if len(s.waits) == 0:
            raise FptError(f"empty {direction}-direction sample set for rho={rho}")
        out.append(empirical_distribution(s, binning, label))
    return tuple(out)


def asymmetry_from(gain: FptDistribution, loss: FptDistribution, smoothing: int | None = None) -> AsymmetryStat:
    window = default_smoothing(gain.binning) if smoothing is None else int(smoothing)
    mg = mode_wait_time(gain, window)
    ml = mode_wait_time(loss, window)
    return AsymmetryStat(
        mode_gain=mg,
        mode_loss=ml,
        delta=mg - ml,
        log_ratio=math.log(mg / ml),
        rho=gain.rho,
        binning=gain.binning,
        smoothing=window,
        n_gain=gain.n_samples,
        n_loss=loss.n_samples,
    )
