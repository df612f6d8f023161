"""Scaling functions: towers, log*, iterated maps, the density ODE, schedules, power-law fits."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "TowerOverflow",
    "tow",
    "log_star",
    "f_star",
    "DivergenceError",
    "ode_density",
    "fit_power_law",
    "ScheduleKind",
    "ScheduleSpec",
    "make_schedule",
]

_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class TowerOverflow:
    """Stands in for Tow(n, x) when it exceeds the float range.

    ``log_value`` is ln Tow(n, x) = Tow(n - 1, x) when that is still finite, else ``None``.
    """

    n: int
    x: float
    log_value: float | None = None

    def __gt__(self, other):
        return True

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return False


def tow(n: int, x: float):
    """Iterated exponential: Tow(0, x) = x, Tow(n, x) = exp(Tow(n - 1, x))."""
    if int(n) != n or n < 0:
        raise ValueError("n must be a nonnegative integer")
    v = float(x)
    for i in range(1, int(n) + 1):
        if v > _LOG_MAX:
            return TowerOverflow(int(n), float(x), v if i == n else None)
        v = math.exp(v)
    return v


def log_star(n) -> int:
    """log* n = min{m >= 1 : Tow(m, 1) >= n}, without forming huge towers.

    Accepts floats, arbitrarily large Python ints and the TowerOverflow returned by ``tow``.
    """
    if not isinstance(n, TowerOverflow) and n < 1:
        raise ValueError("log_star needs n >= 1")
    m = 1
    while True:
        t = tow(m, 1.0)
        if isinstance(t, TowerOverflow):
            break
        if t >= n:
            return m
        m += 1
    # Tow(m, 1) overflows: compare iterated logs instead. ln^j Tow(m,1) = Tow(m-j,1).
    v, j = n, 0
    if isinstance(n, TowerOverflow):
        # ln^j Tow(h, x) = Tow(h - j, x): peel levels until the value is small again
        while True:
            j += 1
            v = tow(n.n - j, n.x)
            if not isinstance(v, TowerOverflow) and v <= _LOG_MAX:
                break
    while not (j and v <= _LOG_MAX):
        v = math.log(v) if isinstance(v, int) else math.log(float(v))
        j += 1
    # the first j - 1 logs stayed above _LOG_MAX, so the answer is at least j
    k = max(m, j)
    while True:
        t = tow(k - j, 1.0)
        if not isinstance(t, TowerOverflow) and t >= v:
            return k
        k += 1


class DivergenceError(RuntimeError):
    """Iterated map did not reach 1 within the iteration cap."""


def f_star(f: Callable[[float], float], n: float, max_iter: int = 10 ** 6) -> int:
    """Number of iterations of ``f`` needed to bring ``n`` to <= 1.

    Raises :class:`DivergenceError` if an iterate does not decrease (while above 1) or the cap
    is reached.
    """
    x = float(n)
    if x <= 1:
        return 1 if f(x) <= 1 else _iterate(f, x, max_iter)
    return _iterate(f, x, max_iter)


def _iterate(f, x, max_iter):
    for m in range(1, max_iter + 1):
        y = float(f(x))
        if y <= 1:
            return m
        if y >= x:
            raise DivergenceError(f"map is not contracting at x={x!r} (f(x)={y!r})")
        x = y
    raise DivergenceError(f"no convergence in {max_iter} iterations")


def ode_density(t: float, rho0: float) -> float:
    """Solution of rho' = -rho^2 / 2 with rho(0) = rho0: 2 / (t + 2/rho0)."""
    if not rho0 > 0:
        raise ValueError("rho0 must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return 2.0 / (t + 2.0 / rho0)


def fit_power_law(points: Sequence[tuple[float, float]],
                  min_span: float = 10.0) -> tuple[float, float, float]:
    """Least squares of log y on log x; returns (exponent, prefactor, r_squared).

    Needs at least 3 points with max(x) / min(x) >= ``min_span`` (a decade by default).
    Regressions over a fixed short range, such as m in {8, 12, 16}, pass a smaller span
    explicitly.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least 3 (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive x and y")
    if x.max() < min_span * x.min() * (1 - 1e-12):
        raise ValueError(f"x must span a factor of at least {min_span:g}")
    lx, ly = np.log(x), np.log(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(math.exp(icpt)), float(r2)


# --- schedules -------------------------------------------------------------


class ScheduleKind(str, enum.Enum):
    INDUCTION = "induction"
    LONG_TIME = "long_time"


@dataclass(frozen=True)
class ScheduleSpec:
    """Stage times (and radii for the long-time schedule) indexed k = 1..K.

    For the induction schedule ``log_t[k-1]`` holds ln t_k, since most t_k underflow;
    ``effectively_zero[k-1]`` flags t_k < 1e-300.
    """

    kind: ScheduleKind
    m: int
    K: int
    t: np.ndarray
    log_t: np.ndarray
    R: np.ndarray | None = None
    gamma: float | None = None
    effectively_zero: np.ndarray | None = None


def make_schedule(kind, m: int, gamma: float = 1.0,
                  ball_volume: Callable[[int], int] | None = None) -> ScheduleSpec:
    """Long-time: K = floor(ln ln m), t_k = e^(k-K) m^2, R_k = gamma (m + sqrt(t_k (K+1-k))).

    Induction: t_k = Tow(m-k, V_m^2)^(-3) for k = 1..m with V_m = ball_volume(m).
    """
    kind = ScheduleKind(kind)
    if kind is ScheduleKind.LONG_TIME:
        if m < 2 or math.log(math.log(m)) < 1:
            raise ValueError(f"m={m} too small: need floor(ln ln m) >= 1 (m >= 16)")
        K = int(math.floor(math.log(math.log(m))))
        k = np.arange(1, K + 1)
        log_t = (k - K) + 2 * math.log(m)
        t = np.exp(log_t)
        R = gamma * (m + np.sqrt(t * (K + 1 - k)))
        return ScheduleSpec(kind, m, K, t, log_t, R, gamma)
    if m < 2:
        raise ValueError("induction schedule needs m >= 2")
    if ball_volume is None:
        raise ValueError("induction schedule needs a ball_volume function")
    v2 = float(ball_volume(m)) ** 2
    log_t = np.empty(m)
    for k in range(1, m + 1):
        # ln t_k = -3 ln Tow(m-k, V^2) = -3 Tow(m-k-1, V^2) for m-k >= 1
        if m - k == 0:
            log_t[k - 1] = -3.0 * math.log(v2)
        else:
            inner = tow(m - k - 1, v2)
            log_t[k - 1] = -math.inf if isinstance(inner, TowerOverflow) else -3.0 * inner
    with np.errstate(under="ignore"):
        t = np.exp(log_t)
    zero = log_t < math.log(1e-300)
    return ScheduleSpec(kind, m, m, t, log_t, None, None, zero)
