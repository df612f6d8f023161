"""Driving measures of Lambda-coalescents and the merger rates derived from them.

A :class:`LambdaMeasure` is a finite measure on [0, 1) made of an atom at 0 (Kingman part)
plus an optional density. The rate at which a given k-tuple among b blocks merges is

    lambda_{b,k} = atom0 * 1{k = 2} + int_0^1 x^(k-2) (1-x)^(b-k) g(x) dx,

and the total event rate with b blocks is lambda_b = sum_k C(b,k) lambda_{b,k}.

Beta and Bolthausen-Sznitman measures use closed forms through log-gamma. Total rates are
tabulated with the telescoping identity ``lambda_{b+1} - lambda_b = b * lambda_{b+1,2}``,
which needs one log-gamma evaluation per b. General densities go through adaptive quadrature.
"""

from __future__ import annotations

import enum
import math
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from coalsim import _kernels

__all__ = [
    "MeasureKind",
    "LambdaMeasure",
    "RateTable",
    "NumericError",
    "merger_rate",
    "merger_rate_quad",
    "total_event_rate",
    "total_event_rate_quad",
    "sample_merger_size",
    "fit_rate_exponent",
    "parse_mechanism",
    "load_density_file",
]

QUAD_RTOL = 1e-10
QUAD_LIMIT = 400


class NumericError(RuntimeError):
    """Quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved abs error estimate {achieved:.3g})")
        self.achieved = achieved


class MeasureKind(str, enum.Enum):
    KINGMAN = "kingman"
    BETA = "beta"
    UNIFORM = "uniform"
    DENSITY = "density"


@dataclass(frozen=True, eq=False)
class LambdaMeasure:
    """Finite measure Lambda on [0, 1) driving the coalescent.

    Use the factories :meth:`kingman`, :meth:`beta`, :meth:`uniform` and :meth:`from_density`
    rather than the raw constructor.

    For ``DENSITY`` measures the density is ``x**a * (1-x)**c * h(x)`` where ``h`` is the
    ``density`` callable and ``(a, c)`` are the optional ``singular_exponents``; declaring the
    endpoint behaviour lets the quadrature use an algebraic weight.
    """

    kind: MeasureKind
    atom0_mass: float = 0.0
    alpha: float | None = None
    density: Callable[[np.ndarray], np.ndarray] | None = None
    scale: float = 1.0
    singular_exponents: tuple[float, float] | None = None
    table_bmax: int = 100
    atom1_mass: float = 0.0
    total_mass_hint: float | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False,
                                  compare=False)

    def __post_init__(self):
        if self.atom1_mass != 0.0:
            raise ValueError("Lambda({1}) > 0 is not supported; the measure must not charge 1")
        if self.atom0_mass < 0 or self.scale < 0:
            raise ValueError("masses must be nonnegative")
        kind = MeasureKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is MeasureKind.BETA:
            if self.alpha is None or not 0.0 < self.alpha < 2.0:
                raise ValueError(f"Beta measure needs alpha in (0, 2), got {self.alpha!r}")
        elif kind is MeasureKind.UNIFORM:
            object.__setattr__(self, "alpha", 1.0)
        elif self.alpha is not None:
            raise ValueError("alpha is only meaningful for Beta measures")
        if kind is MeasureKind.DENSITY and self.density is None:
            raise ValueError("density measure needs a density callable")
        if kind is not MeasureKind.DENSITY and self.density is not None:
            raise ValueError("density given for a closed-form measure")
        if self.total_mass <= 0:
            raise ValueError("Lambda must have positive total mass")
        if self.total_mass_hint is not None:
            if abs(self.total_mass - self.total_mass_hint) > 1e-10 * self.total_mass_hint:
                raise ValueError(
                    f"declared total mass {self.total_mass_hint} != computed {self.total_mass}")

    # --- factories --------------------------------------------------------

    @classmethod
    def kingman(cls, mass: float = 1.0) -> "LambdaMeasure":
        return cls(MeasureKind.KINGMAN, atom0_mass=mass, scale=0.0)

    @classmethod
    def beta(cls, alpha: float, mass: float = 1.0, atom0: float = 0.0) -> "LambdaMeasure":
        """Beta(2 - alpha, alpha) probability law times ``mass``."""
        return cls(MeasureKind.BETA, atom0_mass=atom0, alpha=float(alpha), scale=mass)

    @classmethod
    def uniform(cls, mass: float = 1.0) -> "LambdaMeasure":
        """Lebesgue measure on [0, 1]: the Bolthausen-Sznitman coalescent."""
        return cls(MeasureKind.UNIFORM, scale=mass)

    @classmethod
    def from_density(cls, density, *, atom0: float = 0.0, singular_exponents=None,
                     table_bmax: int = 100) -> "LambdaMeasure":
        return cls(MeasureKind.DENSITY, atom0_mass=atom0, density=density,
                   singular_exponents=singular_exponents, table_bmax=table_bmax)

    def scaled(self, factor: float) -> "LambdaMeasure":
        """The measure ``factor * Lambda``."""
        if self.kind is MeasureKind.DENSITY:
            h = self.density
            return LambdaMeasure(self.kind, atom0_mass=self.atom0_mass * factor,
                                 density=lambda x: factor * h(x),
                                 singular_exponents=self.singular_exponents,
                                 table_bmax=self.table_bmax)
        return LambdaMeasure(self.kind, atom0_mass=self.atom0_mass * factor,
                             alpha=self.alpha if self.kind is MeasureKind.BETA else None,
                             scale=self.scale * factor)

    # --- descriptive ------------------------------------------------------

    @property
    def has_density(self) -> bool:
        return self.kind is not MeasureKind.KINGMAN and (
            self.kind is MeasureKind.DENSITY or self.scale > 0)

    @property
    def total_mass(self) -> float:
        if self.kind is MeasureKind.DENSITY:
            return self.atom0_mass + self._density_mass()
        if self.kind is MeasureKind.KINGMAN:
            return self.atom0_mass
        return self.atom0_mass + self.scale

    @property
    def comes_down_from_infinity(self) -> bool:
        if self.atom0_mass > 0:
            return True
        if self.kind in (MeasureKind.BETA, MeasureKind.UNIFORM):
            return 1.0 < self.alpha < 2.0
        return False  # undecided for general densities

    @property
    def is_bolthausen_sznitman(self) -> bool:
        return (self.kind in (MeasureKind.BETA, MeasureKind.UNIFORM) and self.alpha == 1.0
                and self.atom0_mass == 0.0)

    def __repr__(self):
        if self.kind is MeasureKind.KINGMAN:
            return f"LambdaMeasure.kingman(mass={self.atom0_mass:g})"
        if self.kind is MeasureKind.BETA:
            return f"LambdaMeasure.beta(alpha={self.alpha:g}, mass={self.scale:g})"
        if self.kind is MeasureKind.UNIFORM:
            return f"LambdaMeasure.uniform(mass={self.scale:g})"
        return f"LambdaMeasure.from_density(atom0={self.atom0_mass:g})"

    # --- density part ----------------------------------------------------

    def density_parts(self):
        """``(h, (a, c))`` with density ``x**a (1-x)**c h(x)``, or ``None`` without density."""
        if not self.has_density:
            return None
        if self.kind is MeasureKind.DENSITY:
            return self.density, self.singular_exponents
        a = self.alpha
        const = self.scale * math.exp(-special.betaln(2.0 - a, a))
        return _Constant(const), (1.0 - a, a - 1.0)

    def _density_mass(self) -> float:
        return _quad(lambda x: 1.0, self)

    # --- rate tables ------------------------------------------------------

    def _cont_pair_rate(self, j: np.ndarray) -> np.ndarray:
        """Continuous part of lambda_{j,2} for integer array ``j >= 2``."""
        j = np.asarray(j, dtype=float)
        if not self.has_density:
            return np.zeros_like(j)
        if self.kind is MeasureKind.DENSITY:
            return np.array([_quad(lambda x, jj=jj: (1.0 - x) ** (jj - 2), self) for jj in j])
        a = self.alpha
        logv = (special.gammaln(2.0 - a) + special.gammaln(j - 2.0 + a) - special.gammaln(j)
                - special.betaln(2.0 - a, a))
        return self.scale * np.exp(logv)

    def rate_tables(self, bmax: int) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(lam, lamc)`` of total and continuous-part event rates for b = 0..bmax."""
        bmax = max(int(bmax), 2)
        with self._lock:
            cached = self._cache.get("tables")
            if cached is not None and len(cached[0]) > bmax:
                return cached
            size = max(bmax, 2 * (len(cached[0]) - 1) if cached else 0)
            if self.kind is MeasureKind.DENSITY:
                size = bmax
            b = np.arange(size + 1, dtype=float)
            lamc = np.zeros(size + 1)
            if self.has_density:
                j = np.arange(2, size + 1)
                inc = (j - 1.0) * self._cont_pair_rate(j)
                lamc[2:] = np.cumsum(inc)
            lam = lamc + self.atom0_mass * b * (b - 1.0) / 2.0
            lam[:2] = 0.0
            lam.setflags(write=False)
            lamc.setflags(write=False)
            self._cache["tables"] = (lam, lamc)
            return lam, lamc

    def _merger_cdf_table(self, cap: int):
        with self._lock:
            cached = self._cache.get("cdf")
            if cached is not None and cached[0] >= cap:
                return cached[1], cached[2]
        off = np.zeros(cap + 2, dtype=np.int64)
        rows = []
        pos = 0
        for b in range(0, cap + 1):
            off[b] = pos
            if b < 2:
                continue
            w = np.array([math.comb(b, k) * _cont_rate_quad(self, b, k) for k in range(2, b + 1)])
            c = np.cumsum(w)
            rows.append(c / c[-1])
            pos += b - 1
        off[cap + 1] = pos
        cdf = np.concatenate(rows) if rows else np.zeros(0)
        with self._lock:
            self._cache["cdf"] = (cap, cdf, off)
        return cdf, off

    def kernel(self, bmax: int):
        """Tuple consumed by the numba kernels (see :mod:`coalsim._kernels`)."""
        lam, lamc = self.rate_tables(bmax)
        empty_f = np.zeros(1)
        empty_i = np.zeros(2, dtype=np.int64)
        if not self.has_density:
            return (float(self.atom0_mass), _kernels.MK_NONE, 0.0, 0.0, lam, lamc, empty_f,
                    empty_i)
        if self.kind is MeasureKind.DENSITY:
            if bmax > self.table_bmax:
                raise ValueError(
                    f"density measure tabulated up to b={self.table_bmax}; need b={bmax} "
                    "(raise table_bmax)")
            cdf, off = self._merger_cdf_table(self.table_bmax)
            return (float(self.atom0_mass), _kernels.MK_TABLE, 0.0, 0.0, lam, lamc, cdf, off)
        a = float(self.alpha)
        lognorm = math.log(self.scale) - float(special.betaln(2.0 - a, a))
        return (float(self.atom0_mass), _kernels.MK_BETA, a, lognorm, lam, lamc, empty_f,
                empty_i)


# --- quadrature helpers ------------------------------------------------------


class _Constant:
    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, x):
        return self.value * np.ones_like(np.asarray(x, dtype=float))


def _quad(f: Callable[[float], float], measure: LambdaMeasure, points=None) -> float:
    """Adaptive quadrature of ``f`` against the density part of ``measure``."""
    parts = measure.density_parts()
    if parts is None:
        return 0.0
    h, expo = parts
    if isinstance(h, _Constant):
        g, scale = f, h.value
    else:
        g, scale = (lambda x: f(x) * float(h(x))), 1.0
    if expo is not None:
        val, _, _ = _checked_quad(g, 0.0, 1.0, weight="alg", wvar=tuple(expo))
    else:
        val, _, _ = _checked_quad(g, 0.0, 1.0, points=points)
    return scale * val


def _checked_quad(func, a, b, **kw):
    out = integrate.quad(func, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=QUAD_LIMIT,
                         full_output=1, **kw)
    val, err, info = out[0], out[1], out[2]
    if len(out) > 3 and out[3]:
        # ier != 0; accept only if the error estimate still meets the tolerance
        if not (err <= 10 * QUAD_RTOL * abs(val) or err == 0.0):
            raise NumericError("quadrature did not converge", err)
    return val, err, info


def _cont_rate_quad(measure: LambdaMeasure, b: int, k: int) -> float:
    mode = (k - 2) / max(b - 2, 1)
    points = None if measure.density_parts()[1] is not None else [mode] if 0 < mode < 1 else None
    return _quad(lambda x: x ** (k - 2) * (1.0 - x) ** (b - k), measure, points=points)


def _check_bk(b: int, k: int | None = None):
    if int(b) != b or b < 2:
        raise ValueError(f"need an integer b >= 2, got {b!r}")
    if k is not None and (int(k) != k or k < 2 or k > b):
        raise ValueError(f"need 2 <= k <= b, got b={b}, k={k}")


# --- public operations -------------------------------------------------------


def merger_rate(measure: LambdaMeasure, b: int, k: int) -> float:
    """Rate lambda_{b,k} at which one given k-tuple among b blocks merges."""
    _check_bk(b, k)
    atom = measure.atom0_mass if k == 2 else 0.0
    if not measure.has_density:
        return atom
    if measure.kind is MeasureKind.DENSITY:
        return atom + _cont_rate_quad(measure, b, k)
    a = measure.alpha
    logv = special.betaln(k - a, b - k + a) - special.betaln(2.0 - a, a)
    return atom + measure.scale * math.exp(logv)


def merger_rate_quad(measure: LambdaMeasure, b: int, k: int) -> float:
    """lambda_{b,k} by adaptive quadrature of the defining integral, for any measure kind."""
    _check_bk(b, k)
    atom = measure.atom0_mass if k == 2 else 0.0
    return atom + _cont_rate_quad(measure, b, k)


def log_merger_rate(measure: LambdaMeasure, b: int, k: int) -> float:
    """log lambda_{b,k}; ``-inf`` when the rate vanishes."""
    _check_bk(b, k)
    terms = []
    if k == 2 and measure.atom0_mass > 0:
        terms.append(math.log(measure.atom0_mass))
    if measure.has_density:
        if measure.kind is MeasureKind.DENSITY:
            v = _cont_rate_quad(measure, b, k)
            if v > 0:
                terms.append(math.log(v))
        else:
            a = measure.alpha
            terms.append(math.log(measure.scale) + special.betaln(k - a, b - k + a)
                         - special.betaln(2.0 - a, a))
    if not terms:
        return -math.inf
    return float(special.logsumexp(terms))


def total_event_rate(measure: LambdaMeasure, b: int) -> float:
    """Total event rate lambda_b with b blocks present."""
    _check_bk(b)
    if measure.kind is MeasureKind.DENSITY:
        with measure._lock:
            cache = measure._cache.setdefault("total", {})
            if b in cache:
                return cache[b]
        val = total_event_rate_quad(measure, b)
        with measure._lock:
            cache[b] = val
        return val
    lam, _ = measure.rate_tables(b)
    return float(lam[b])


def total_event_rate_quad(measure: LambdaMeasure, b: int) -> float:
    """lambda_b = atom*C(b,2) + int P(Bin(b,x) >= 2) x^-2 Lambda(dx), by quadrature."""
    _check_bk(b)
    pairs = b * (b - 1) / 2.0
    cont = _quad(lambda x: float(special.betainc(2.0, b - 1.0, x)) / (x * x) if x > 0 else pairs,
                 measure)
    return measure.atom0_mass * pairs + cont


def sample_merger_size(measure: LambdaMeasure, b: int, rng: np.random.Generator) -> int:
    """Draw K in [2, b] with P(K = k) proportional to C(b,k) lambda_{b,k}."""
    _check_bk(b)
    if b == 2:
        return 2
    if measure.kind is MeasureKind.DENSITY and b > measure.table_bmax:
        return _sample_density_sequential(measure, b, rng)
    return int(_kernels.sample_k(measure.kernel(b), b, rng))


def _sample_density_sequential(measure, b, rng):
    lam_total = total_event_rate(measure, b)
    pairs = b * (b - 1) / 2.0
    if measure.atom0_mass > 0 and rng.random() * lam_total < measure.atom0_mass * pairs:
        return 2
    lamc = lam_total - measure.atom0_mass * pairs
    v = rng.random()
    cum = 0.0
    for k in range(2, b + 1):
        cum += math.comb(b, k) * _cont_rate_quad(measure, b, k) / lamc
        if v < cum:
            return k
    return b


def fit_rate_exponent(measure: LambdaMeasure, bs: Sequence[int]) -> tuple[float, float]:
    """Least-squares fit of ``log lambda_b = log c + alpha_hat * log b``; returns (c, alpha_hat)."""
    bs = np.asarray(sorted(set(int(b) for b in bs)), dtype=float)
    if len(bs) < 3 or bs[-1] < 10 * bs[0]:
        raise ValueError("need at least 3 distinct b values spanning a decade")
    lam = np.array([total_event_rate(measure, int(b)) for b in bs])
    slope, intercept = np.polyfit(np.log(bs), np.log(lam), 1)
    return float(math.exp(intercept)), float(slope)


@dataclass(frozen=True)
class RateTable:
    """Log-space table of lambda_{b,k} for 2 <= k <= b <= b_max.

    ``log_rates[b][k - 2]`` holds log lambda_{b,k}; ``a0`` is the largest constant with
    lambda_b >= a0 * b over the table.
    """

    b_max: int
    log_rates: tuple[np.ndarray, ...]
    a0: float

    @classmethod
    def build(cls, measure: LambdaMeasure, b_max: int = 200) -> "RateTable":
        if b_max < 2:
            raise ValueError("b_max must be >= 2")
        rows = [np.zeros(0), np.zeros(0)]
        for b in range(2, b_max + 1):
            if measure.kind is MeasureKind.DENSITY:
                row = np.array([log_merger_rate(measure, b, k) for k in range(2, b + 1)])
            else:
                k = np.arange(2, b + 1, dtype=float)
                row = np.full(len(k), -np.inf)
                if measure.has_density:
                    a = measure.alpha
                    row = (math.log(measure.scale) + special.betaln(k - a, b - k + a)
                           - special.betaln(2.0 - a, a))
                if measure.atom0_mass > 0:
                    row = row.copy()
                    row[0] = np.logaddexp(row[0], math.log(measure.atom0_mass))
            rows.append(row)
        lam = np.array([total_event_rate(measure, b) for b in range(2, b_max + 1)])
        a0 = float(np.min(lam / np.arange(2, b_max + 1)))
        return cls(b_max, tuple(rows), a0)

    def rate(self, b: int, k: int) -> float:
        _check_bk(b, k)
        return float(np.exp(self.log_rates[b][k - 2]))

    def recursion_defect(self) -> float:
        """Max relative violation of lambda_{b,k} = lambda_{b+1,k} + lambda_{b+1,k+1}."""
        worst = 0.0
        for b in range(2, self.b_max):
            lhs = self.log_rates[b]
            nxt = self.log_rates[b + 1]
            rhs = np.logaddexp(nxt[:-1], nxt[1:])
            finite = np.isfinite(lhs) | np.isfinite(rhs)
            if finite.any():
                worst = max(worst, float(np.max(np.abs(np.expm1(rhs[finite] - lhs[finite])))))
        return worst


# --- configs -----------------------------------------------------------------

_MECH_RE = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")


def _parse_kwargs(text: str | None) -> dict[str, str]:
    if not text or not text.strip():
        return {}
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part.strip()!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_mechanism(text: str, base_dir: str | Path | None = None) -> LambdaMeasure:
    """Parse ``kingman | beta(alpha=1.5) | uniform | density(file=...)``."""
    m = _MECH_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse mechanism {text!r}")
    name, kw = m.group(1).lower(), _parse_kwargs(m.group(2))
    if name == "kingman":
        return LambdaMeasure.kingman(float(kw.pop("mass", 1.0)))
    if name == "beta":
        if "alpha" not in kw:
            raise ValueError("beta mechanism needs alpha=...")
        return LambdaMeasure.beta(float(kw["alpha"]), float(kw.get("mass", 1.0)))
    if name in ("uniform", "bolthausen_sznitman", "bs"):
        return LambdaMeasure.uniform(float(kw.get("mass", 1.0)))
    if name == "density":
        if "file" not in kw:
            raise ValueError("density mechanism needs file=...")
        path = Path(kw["file"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_density_file(path, table_bmax=int(kw.get("table_bmax", 100)))
    raise ValueError(f"unknown mechanism {name!r}")


def load_density_file(path: str | Path, table_bmax: int = 100) -> LambdaMeasure:
    """Two-column text table ``x g(x)`` on a strictly increasing grid inside (0, 1)."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2 or len(data) < 2:
        raise ValueError(f"{path}: expected two columns and at least two rows")
    xs, gs = data[:, 0], data[:, 1]
    if np.any(np.diff(xs) <= 0) or xs[0] <= 0 or xs[-1] >= 1:
        raise ValueError(f"{path}: x grid must be strictly increasing inside (0, 1)")
    if np.any(gs < 0):
        raise ValueError(f"{path}: density must be nonnegative")
    xs, gs = xs.copy(), gs.copy()
    return LambdaMeasure.from_density(lambda x: np.interp(x, xs, gs), table_bmax=table_bmax)
