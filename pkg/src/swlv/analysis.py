"""Population-series analysis: Lotka-Volterra model, fits, lags, cycles.

Convention: ``p`` is the prey count, ``q`` the predator count, one simulation
step is one time unit, and the predator death rate is called ``gamma_lv`` to
keep it apart from the RL discount factor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import DegenerateFitError, DivergenceError, DomainError, NoCycleError


@dataclass(frozen=True)
class PopulationRecord:
    t: int
    n_predators: int
    n_prey_group: int
    n_prey_solo: int
    group_proportion: float

    @property
    def n_prey(self):
        return self.n_prey_group + self.n_prey_solo


@dataclass(frozen=True)
class LVParams:
    alpha: float
    beta: float
    delta: float
    gamma_lv: float

    @property
    def equilibrium(self):
        """(p*, q*) = (gamma_lv / delta, alpha / beta)."""
        return self.gamma_lv / self.delta, self.alpha / self.beta

    @property
    def linear_period(self):
        """Period of small oscillations about the equilibrium."""
        return 2 * math.pi / math.sqrt(self.alpha * self.gamma_lv)

    def is_oscillatory(self):
        return min(self.alpha, self.beta, self.delta, self.gamma_lv) > 0


def lv_derivatives(params, p, q):
    if np.any(np.asarray(p) <= 0) or np.any(np.asarray(q) <= 0):
        raise DomainError("populations must be positive")
    return p * (params.alpha - params.beta * q), q * (params.delta * p - params.gamma_lv)


def integrate_lv(params, p0, q0, dt, n_steps):
    """Classical RK4; returns arrays ``(t, p, q)`` of length ``n_steps + 1``."""
    if p0 <= 0 or q0 <= 0:
        raise DomainError("initial populations must be positive")
    if not dt > 0:
        raise DomainError("dt must be positive")
    a, b, d, g = params.alpha, params.beta, params.delta, params.gamma_lv
    n_steps = int(n_steps)
    ps = np.empty(n_steps + 1)
    qs = np.empty(n_steps + 1)
    p, q = float(p0), float(q0)
    ps[0], qs[0] = p, q
    h2 = dt / 2
    for i in range(1, n_steps + 1):
        k1p = p * (a - b * q)
        k1q = q * (d * p - g)
        p2, q2 = p + h2 * k1p, q + h2 * k1q
        k2p = p2 * (a - b * q2)
        k2q = q2 * (d * p2 - g)
        p3, q3 = p + h2 * k2p, q + h2 * k2q
        k3p = p3 * (a - b * q3)
        k3q = q3 * (d * p3 - g)
        p4, q4 = p + dt * k3p, q + dt * k3q
        k4p = p4 * (a - b * q4)
        k4q = q4 * (d * p4 - g)
        p += dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        q += dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        if not (math.isfinite(p) and math.isfinite(q)):
            raise DivergenceError(i)
        ps[i], qs[i] = p, q
    return np.arange(n_steps + 1) * dt, ps, qs


def lv_invariant(params, p, q):
    """V = -delta p + gamma_lv ln p - beta q + alpha ln q (constant on orbits)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p <= 0) or np.any(q <= 0):
        raise DomainError("V is defined for positive populations only")
    return -params.delta * p + params.gamma_lv * np.log(p) - params.beta * q + params.alpha * np.log(q)


def moving_average(x, window):
    """Centred boxcar average, ``valid`` mode (output shorter by window - 1)."""
    window = int(window)
    if window <= 1:
        return np.asarray(x, dtype=float)
    return np.convolve(np.asarray(x, dtype=float), np.ones(window) / window, mode="valid")


def _acf(x):
    """Unbiased autocorrelation normalised to acf[0] = 1."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    raw = fftconvolve(x, x[::-1], mode="full")[n - 1:]
    raw /= np.arange(n, 0, -1)
    if raw[0] <= 0:
        return np.zeros(n)
    return raw / raw[0]


def _parabolic(y, k):
    if 0 < k < len(y) - 1:
        den = y[k - 1] - 2 * y[k] + y[k + 1]
        if den < 0:
            return k + 0.5 * (y[k - 1] - y[k + 1]) / den
    return float(k)


def dominant_period(x):
    """Period (in samples) from the first autocorrelation peak after the
    first negative lobe. Raises NoCycleError for aperiodic input."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    if len(x) < 8 or not np.any(x):
        raise NoCycleError("series too short or constant")
    acf = _acf(x)
    half = len(acf) // 2 + 1
    acf = acf[:half]
    neg = np.flatnonzero(acf < 0)
    if len(neg) == 0:
        raise NoCycleError("autocorrelation never turns negative")
    z1 = neg[0]
    pos = np.flatnonzero(acf[z1:] > 0)
    if len(pos) == 0:
        raise NoCycleError("no autocorrelation peak after the first trough")
    z2 = z1 + pos[0]
    neg2 = np.flatnonzero(acf[z2:] < 0)
    z3 = z2 + neg2[0] if len(neg2) else len(acf)
    k = z2 + int(np.argmax(acf[z2:z3]))
    if acf[k] <= 0:
        raise NoCycleError("autocorrelation peak is not positive")
    return _parabolic(acf, k)


def phase_lag(p_series, q_series):
    """Fraction of the dominant period by which ``q`` trails ``p``, in [0, 1)."""
    p = np.asarray(p_series, dtype=float)
    q = np.asarray(q_series, dtype=float)
    if p.shape != q.shape:
        raise DomainError("series must have equal length")
    p = p - p.mean()
    q = q - q.mean()
    period = dominant_period(p)
    n = len(p)
    kmax = min(int(math.ceil(period)) + 1, n - 1)
    # c[k] = mean_t p[t] q[t + k]
    full = fftconvolve(q, p[::-1], mode="full")[n - 1:n - 1 + kmax + 1]
    c = full / np.arange(n, n - kmax - 1, -1)
    # wrap so the search covers exactly one period and still allows
    # parabolic refinement at the boundary
    k = int(np.argmax(c[:int(math.floor(period)) + 1]))
    lag = _parabolic(c, k)
    return float((lag / period) % 1.0)


def detect_cycles(series, prominence=0.5, window=None):
    """Count completed oscillations.

    After boxcar smoothing (``window`` samples, default ~1% of the length,
    at least 1), a peak is the maximum of each excursion above
    ``mean + prominence * std``; an excursion ends only when the smoothed
    series drops back below the mean, so noise around the threshold does not
    split one crest into several. Returns ``(cycles, peak_indices)`` with
    ``cycles = max(peaks - 1, 0)``.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 3:
        raise DomainError("need at least 3 samples")
    if window is None:
        window = max(1, len(x) // 100)
    window = max(1, min(int(window), len(x)))
    s = moving_average(x, window)
    offset = (window - 1) // 2
    mean, std = s.mean(), s.std()
    if std == 0:
        return 0, np.empty(0, dtype=np.int64)
    hi = mean + prominence * std
    peaks = []
    inside = False
    best = start = 0
    for i, v in enumerate(s):
        if not inside and v > hi:
            inside, start, best = True, i, i
        elif inside:
            if v > s[best]:
                best = i
            if v < mean:
                peaks.append(best)
                inside = False
    if inside:
        peaks.append(best)
    peaks = np.asarray(peaks, dtype=np.int64) + offset
    return max(len(peaks) - 1, 0), peaks


@dataclass(frozen=True)
class LVFit:
    params: LVParams
    r2_p: float
    r2_q: float
    window: int
    n_samples: int


def _series_arrays(series):
    if isinstance(series, tuple) and len(series) == 3:
        t, p, q = (np.asarray(a, dtype=float) for a in series)
        return t, p, q
    recs = list(series)
    t = np.array([r.t for r in recs], dtype=float)
    p = np.array([r.n_prey for r in recs], dtype=float)
    q = np.array([r.n_predators for r in recs], dtype=float)
    return t, p, q


def _ols(x, y):
    if np.ptp(x) == 0 or np.std(x) <= 1e-12 * max(1.0, np.abs(x).max()):
        raise DegenerateFitError("regressor has zero variance")
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise DegenerateFitError("response has zero variance")
    return coef, 1.0 - float(np.sum(resid ** 2)) / ss_tot


def default_window(p, dt=1.0):
    """5% of the dominant period in samples, at least 11, forced odd."""
    try:
        w = int(round(0.05 * dominant_period(p)))
    except NoCycleError:
        w = 11
    w = max(w, 11)
    return w if w % 2 else w + 1


def fit_lv(series, smoothing_window=None):
    """Fit LV rates by smoothed log-derivative least squares.

    ``series`` is a list of PopulationRecord (prey = both species) or a tuple
    ``(t, p, q)``. Both log-series and raw series are smoothed with the same
    centred boxcar so that ``d/dt S[ln p] = alpha - beta S[q]`` holds exactly
    for the smoothed quantities; centred differences give the derivatives and
    two ordinary least-squares regressions give the rates.
    """
    t, p, q = _series_arrays(series)
    bad = np.flatnonzero((p <= 0) | (q <= 0))
    if len(bad):
        i = int(bad[0])
        raise DomainError(f"non-positive population at row {i + 1} (t={t[i]:g}): "
                          f"prey={p[i]:g} predators={q[i]:g}")
    if len(t) < 3:
        raise DomainError("need at least 3 samples")
    steps = np.diff(t)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, steps.max()):
        raise DomainError("samples must be evenly spaced in t")
    dt = float(steps[0])
    w = default_window(p) if smoothing_window is None else int(smoothing_window)
    w = max(w, 1)
    if len(t) < 3 * w:
        raise DomainError(f"series of {len(t)} samples is shorter than 3 x window ({w})")
    lp = moving_average(np.log(p), w)
    lq = moving_average(np.log(q), w)
    ps = moving_average(p, w)
    qs = moving_average(q, w)
    dlp = (lp[2:] - lp[:-2]) / (2 * dt)
    dlq = (lq[2:] - lq[:-2]) / (2 * dt)
    ps, qs = ps[1:-1], qs[1:-1]
    (a, slope_p), r2_p = _ols(qs, dlp)
    (c, slope_q), r2_q = _ols(ps, dlq)
    params = LVParams(alpha=float(a), beta=float(-slope_p), delta=float(slope_q), gamma_lv=float(-c))
    return LVFit(params, r2_p, r2_q, w, len(dlp))


def group_proportion(world):
    n = world.n_predators
    if n == 0:
        return 0.0
    return float(np.count_nonzero(world.predators.group >= 0)) / n


# -- files -----------------------------------------------------------------------

def read_population_csv(path):
    expected = ["t", "n_predators", "n_prey_group", "n_prey_solo", "group_proportion"]
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != expected:
        raise DomainError(f"{path}: expected columns {','.join(expected)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            out.append(PopulationRecord(int(row[0]), int(row[1]), int(row[2]), int(row[3]), float(row[4])))
        except (ValueError, IndexError):
            raise DomainError(f"{path}: malformed row {lineno}") from None
    return out


FIT_KEYS = ("alpha", "beta", "delta", "gamma_lv", "r2_p", "r2_q", "p_star", "q_star", "phase_lag", "cycles")


def fit_report(fit, lag, cycles):
    pr = fit.params
    p_star, q_star = pr.equilibrium if pr.delta != 0 and pr.beta != 0 else (float("nan"), float("nan"))
    values = {"alpha": pr.alpha, "beta": pr.beta, "delta": pr.delta, "gamma_lv": pr.gamma_lv,
              "r2_p": fit.r2_p, "r2_q": fit.r2_q, "p_star": p_star, "q_star": q_star,
              "phase_lag": lag, "cycles": cycles}
    return values


def write_fit_report(path, values):
    lines = []
    for k in FIT_KEYS:
        v = values[k]
        lines.append(f"{k}={v}" if isinstance(v, int) else f"{k}={float(v):.10g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_fit_report(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        k, v = line.split("=", 1)
        out[k] = int(v) if k == "cycles" else float(v)
    return out
