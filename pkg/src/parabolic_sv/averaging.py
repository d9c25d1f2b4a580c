"""Fast-factor averaging: effective volatility and the correlation coefficient V.

The fast factor Y has invariant law N(m, nu^2) with density p.  For a vol
function f(y, z) the module computes

* ``sigma_bar(z)``   -- effective volatility, by default the root mean square
  ``sqrt(E_p[f^2])`` (the centering condition of the Poisson equation below
  forces the mean-square convention; the plain mean ``E_p[f]`` is available
  behind ``definition="mean"`` for comparison),
* ``phi'(y)``        -- derivative of the solution of the Poisson equation
  ``(m - y) phi' + nu^2 phi'' = f^2 - sigma_bar^2`` via the integrating-factor
  form ``phi'(y) = (1 / (nu^2 p(y))) * integral_{-inf}^{y} (f^2 - sigma_bar^2) p du``,
* ``V``              -- ``(nu * rho_xy / sqrt(2)) * E_p[f * phi']``, the
  coefficient of the first-order price correction.

Expectations over smooth built-in kinds use Gauss-Hermite quadrature with node
doubling; the phi'/V pipeline runs on a dense grid over [m - 8 nu, m + 8 nu]
with trapezoid cumulative integration and Richardson-accelerated doubling.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import (
    CenteringFailureError,
    InputDomainError,
    QuadratureFailureError,
)
from .params import ModelParams

__all__ = [
    "VolFunction",
    "EffectiveParams",
    "AveragingCache",
    "sigma_bar",
    "solve_phi_derivative",
    "PhiSolution",
    "effective_v",
    "effective_params",
    "phi_residual_check",
]

#: Half-width of the dense grid in units of nu.
GRID_WIDTH = 8.0
#: Relative stability target of the node-doubling refinements.
REFINE_TOL = 1e-10
#: Absolute ceiling on the centering integral of the Poisson source.
CENTERING_TOL = 1e-8

_GH_NODE_COUNTS = (16, 32, 64, 128, 256, 512)
_gh_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gh_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _gh_cache:
        nodes, weights = np.polynomial.hermite.hermgauss(n)
        _gh_cache[n] = (nodes, weights / math.sqrt(math.pi))
    return _gh_cache[n]


@dataclass(frozen=True)
class VolFunction:
    """Positive volatility function f(y, z) of the two factors.

    Kinds:
        ``y_constant``     f(y, z) = z
        ``separable_exp``  f(y, z) = z * exp(y)
        ``tabulated``      two-column table (y, f) at fixed z, linear
                           interpolation, clamped to the end values outside
                           the table range; the z argument is ignored.
    """

    kind: str
    y_nodes: tuple[float, ...] | None = None
    f_values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("y_constant", "separable_exp", "tabulated"):
            raise InputDomainError(f"unknown vol function kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.y_nodes is None or self.f_values is None:
                raise InputDomainError("tabulated vol function needs y_nodes and f_values")
            y = np.asarray(self.y_nodes, dtype=float)
            f = np.asarray(self.f_values, dtype=float)
            if y.size != f.size or y.size < 2:
                raise InputDomainError("table needs >= 2 matching (y, f) rows")
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f))):
                raise InputDomainError("table contains non-finite entries")
            if np.any(np.diff(y) <= 0):
                raise InputDomainError("table y nodes must be strictly increasing")
            if np.any(f <= 0):
                raise InputDomainError("table f values must be positive")

    # -- constructors -------------------------------------------------------
    @classmethod
    def y_constant(cls) -> "VolFunction":
        return cls(kind="y_constant")

    @classmethod
    def separable_exp(cls) -> "VolFunction":
        return cls(kind="separable_exp")

    @classmethod
    def tabulated(cls, y_nodes, f_values) -> "VolFunction":
        return cls(
            kind="tabulated",
            y_nodes=tuple(float(v) for v in y_nodes),
            f_values=tuple(float(v) for v in f_values),
        )

    @classmethod
    def from_table_file(cls, path) -> "VolFunction":
        """Read a two-column text table; '#' starts a comment, blank lines skipped."""
        ys, fs = [], []
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise InputDomainError(f"{path}: line {lineno}: expected two columns, got {raw!r}")
            try:
                ys.append(float(parts[0]))
                fs.append(float(parts[1]))
            except ValueError as exc:
                raise InputDomainError(f"{path}: line {lineno}: {exc}") from None
        if not ys:
            raise InputDomainError(f"{path}: empty table")
        return cls.tabulated(ys, fs)

    # -- evaluation ---------------------------------------------------------
    def __call__(self, y, z):
        y = np.asarray(y, dtype=float)
        if self.kind == "y_constant":
            out = np.broadcast_to(np.asarray(z, dtype=float), np.broadcast_shapes(y.shape, np.shape(z)))
            return out.copy() if out.shape else float(out)
        if self.kind == "separable_exp":
            out = z * np.exp(y)
            return out if out.shape else float(out)
        out = np.interp(y, np.asarray(self.y_nodes), np.asarray(self.f_values))
        return out if out.shape else float(out)

    def cache_key(self) -> tuple:
        if self.kind == "tabulated":
            return (self.kind, self.y_nodes, self.f_values)
        return (self.kind,)


# ---------------------------------------------------------------------------
# sigma_bar
# ---------------------------------------------------------------------------


def _check_state(z: float, m: float, nu: float) -> None:
    for name, val in (("z", z), ("m", m), ("nu", nu)):
        if not math.isfinite(val):
            raise InputDomainError(f"{name} = {val!r} is not finite")
    if z <= 0.0:
        raise InputDomainError(f"z = {z:g} must be > 0")
    if nu <= 0.0:
        raise InputDomainError(f"nu = {nu:g} must be > 0")


def _gh_expect(g: Callable[[np.ndarray], np.ndarray], m: float, nu: float) -> tuple[float, int, float]:
    """E[g(Y)], Y ~ N(m, nu^2), Gauss-Hermite with node doubling to stability."""
    prev = None
    for n in _GH_NODE_COUNTS:
        nodes, weights = _gh_rule(n)
        val = float(weights @ g(m + math.sqrt(2.0) * nu * nodes))
        if prev is not None:
            delta = abs(val - prev) / max(abs(val), 1e-300)
            if delta <= REFINE_TOL:
                return val, n, delta
        prev = val
    raise QuadratureFailureError(
        f"Gauss-Hermite expectation did not stabilise to {REFINE_TOL:g} by {_GH_NODE_COUNTS[-1]} nodes"
    )


def _gauss_partial_moments(alpha: np.ndarray, beta: np.ndarray, m: float, nu: float):
    """(M0, M1, M2): integrals of (1, y, y^2) * p(y) over [alpha, beta]."""
    from scipy.special import ndtr

    sa, sb = (alpha - m) / nu, (beta - m) / nu
    pdf_a = np.exp(-0.5 * sa * sa) / (nu * math.sqrt(2 * math.pi))
    pdf_b = np.exp(-0.5 * sb * sb) / (nu * math.sqrt(2 * math.pi))
    m0 = ndtr(sb) - ndtr(sa)
    m1 = m * m0 - nu * nu * (pdf_b - pdf_a)
    # integral of (y - m)^2 p over the slab, then shift
    central2 = nu * nu * m0 - nu * nu * ((beta - m) * pdf_b - (alpha - m) * pdf_a)
    m2 = central2 + 2.0 * m * m1 - m * m * m0
    return m0, m1, m2


def _tabulated_expect(vol: VolFunction, power: int, m: float, nu: float) -> float:
    """Exact E[f^power] for the piecewise-linear interpolant (power 1 or 2).

    Within each table piece f is linear, so f^2 is quadratic and the Gaussian
    partial moments integrate it in closed form; outside the table f clamps
    to the end values.
    """
    y = np.asarray(vol.y_nodes)
    f = np.asarray(vol.f_values)
    lo, hi = m - GRID_WIDTH * nu, m + GRID_WIDTH * nu
    # interior pieces
    a = np.maximum(y[:-1], lo)
    b = np.minimum(y[1:], hi)
    keep = b > a
    slope = (f[1:] - f[:-1]) / (y[1:] - y[:-1])
    icept = f[:-1] - slope * y[:-1]
    slope, icept = slope[keep], icept[keep]
    m0, m1, m2 = _gauss_partial_moments(a[keep], b[keep], m, nu)
    if power == 1:
        total = float(np.sum(icept * m0 + slope * m1))
    else:
        total = float(np.sum(icept * icept * m0 + 2 * slope * icept * m1 + slope * slope * m2))
    # clamped tails within the integration window
    tails = []
    if y[0] > lo:
        tails.append((lo, min(y[0], hi), f[0]))
    if y[-1] < hi:
        tails.append((max(y[-1], lo), hi, f[-1]))
    for ta, tb, fv in tails:
        if tb > ta:
            t0, _, _ = _gauss_partial_moments(np.array([ta]), np.array([tb]), m, nu)
            total += float(fv**power * t0[0])
    return total


def _sigma_bar_meta(
    vol: VolFunction, z: float, m: float, nu: float, definition: str = "rms"
) -> tuple[float, int, float]:
    _check_state(z, m, nu)
    if definition not in ("rms", "mean"):
        raise InputDomainError(f"unknown sigma_bar definition {definition!r}")
    if vol.kind == "y_constant":
        return z, 1, 0.0
    if vol.kind == "tabulated":
        if definition == "mean":
            return _tabulated_expect(vol, 1, m, nu), len(vol.y_nodes), 0.0
        return math.sqrt(_tabulated_expect(vol, 2, m, nu)), len(vol.y_nodes), 0.0
    if definition == "mean":
        val, n, delta = _gh_expect(lambda y: vol(y, z), m, nu)
        return val, n, delta
    val, n, delta = _gh_expect(lambda y: vol(y, z) ** 2, m, nu)
    return math.sqrt(val), n, delta


def sigma_bar(vol: VolFunction, z: float, m: float, nu: float, *, definition: str = "rms") -> float:
    """Effective volatility at slow-factor level ``z``.

    ``definition="rms"`` (default) returns ``sqrt(E[f^2])``; ``"mean"``
    returns ``E[f]``.
    """
    return _sigma_bar_meta(vol, z, m, nu, definition)[0]


# ---------------------------------------------------------------------------
# phi' and V
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhiSolution:
    """phi' sampled on the dense quadrature grid."""

    y: np.ndarray
    phi_prime: np.ndarray
    rhs: np.ndarray
    centering_residual: float
    n_points: int


def _grid(vol: VolFunction, m: float, nu: float, n_points: int) -> np.ndarray:
    y = np.linspace(m - GRID_WIDTH * nu, m + GRID_WIDTH * nu, n_points)
    if vol.kind == "tabulated":
        knots = np.asarray(vol.y_nodes)
        knots = knots[(knots > y[0]) & (knots < y[-1])]
        if knots.size:
            y = np.unique(np.concatenate([y, knots]))
    return y


def _density(y: np.ndarray, m: float, nu: float) -> np.ndarray:
    s = (y - m) / nu
    return np.exp(-0.5 * s * s) / (nu * math.sqrt(2.0 * math.pi))


def solve_phi_derivative(
    vol: VolFunction,
    z: float,
    m: float,
    nu: float,
    *,
    sigma_bar_sq: float | None = None,
    n_points: int = 8193,
) -> PhiSolution:
    """Integrating-factor solution of the Poisson equation on the dense grid.

    The source f^2 - sigma_bar^2 must integrate to zero against the invariant
    density (mean-square centering); ``sigma_bar_sq`` defaults to the
    internally computed E[f^2] and is validated either way.

    Raises:
        CenteringFailureError: if the source fails to center to CENTERING_TOL,
            signalling an inconsistent sigma_bar.
    """
    _check_state(z, m, nu)
    if sigma_bar_sq is None:
        sigma_bar_sq = _sigma_bar_meta(vol, z, m, nu, "rms")[0] ** 2
    y = _grid(vol, m, nu, n_points)
    p = _density(y, m, nu)
    f = np.asarray(vol(y, z), dtype=float)
    rhs = f * f - sigma_bar_sq
    mass = float(np.trapezoid(rhs * p, y))
    if abs(mass) > CENTERING_TOL:
        raise CenteringFailureError(
            f"source integrates to {mass:.3e} against the density (tol {CENTERING_TOL:g}); "
            "sigma_bar inconsistent with (f, z, m, nu)"
        )
    # remove the sub-tolerance remainder so the antiderivative decays cleanly
    source = (rhs - mass / float(np.trapezoid(p, y))) * p
    cum = cumulative_trapezoid(source, y, initial=0.0)
    phi_prime = cum / (nu * nu * p)
    return PhiSolution(y=y, phi_prime=phi_prime, rhs=rhs, centering_residual=mass, n_points=y.size)


def _v_raw(vol: VolFunction, z: float, m: float, nu: float, sigma_bar_sq: float, n_points: int) -> float:
    sol = solve_phi_derivative(vol, z, m, nu, sigma_bar_sq=sigma_bar_sq, n_points=n_points)
    p = _density(sol.y, m, nu)
    f = np.asarray(vol(sol.y, z), dtype=float)
    return float(np.trapezoid(f * sol.phi_prime * p, sol.y) / np.trapezoid(p, sol.y))


def _e_f_phi_prime(vol: VolFunction, z: float, m: float, nu: float) -> tuple[float, int, float]:
    """E[f * phi'] by grid doubling with Richardson acceleration."""
    sigma_sq = _sigma_bar_meta(vol, z, m, nu, "rms")[0] ** 2
    n = 8193
    raw_prev = _v_raw(vol, z, m, nu, sigma_sq, n)
    rich_prev = None
    while n <= (1 << 21):
        n = 2 * n - 1
        raw = _v_raw(vol, z, m, nu, sigma_sq, n)
        rich = raw + (raw - raw_prev) / 3.0  # trapezoid error is O(h^2)
        if rich_prev is not None:
            delta = abs(rich - rich_prev) / max(abs(rich), 1e-300)
            if delta <= REFINE_TOL:
                return rich, n, delta
        raw_prev, rich_prev = raw, rich
    raise QuadratureFailureError(
        f"E[f*phi'] did not stabilise to {REFINE_TOL:g} within {n} grid points"
    )


def effective_v(vol: VolFunction, z: float, m: float, nu: float, rho_xy: float) -> float:
    """Correlation coefficient ``V = (nu * rho_xy / sqrt(2)) * E[f * phi']``.

    Exactly zero when rho_xy = 0 or f does not depend on y (phi' vanishes).
    """
    _check_state(z, m, nu)
    if rho_xy == 0.0 or vol.kind == "y_constant":
        return 0.0
    e_f_phi, _, _ = _e_f_phi_prime(vol, z, m, nu)
    return nu * rho_xy / math.sqrt(2.0) * e_f_phi


@dataclass(frozen=True)
class EffectiveParams:
    """Averaged quantities at one slow-factor level, with refinement metadata."""

    sigma_bar: float
    v: float
    z: float
    n_nodes: int
    refine_delta: float


class AveragingCache:
    """Memo table for averaged quantities, keyed by (f, z, m, nu, definition).

    Reads and writes are serialized by a lock, so concurrent pricing threads
    can share one instance.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict[tuple, EffectiveParams] = {}

    def get_or_compute(self, key: tuple, fn: Callable[[], EffectiveParams]) -> EffectiveParams:
        with self._lock:
            hit = self._data.get(key)
        if hit is not None:
            return hit
        val = fn()
        with self._lock:
            self._data[key] = val
        return val


def effective_params(
    vol: VolFunction,
    z: float,
    model: ModelParams,
    *,
    definition: str = "rms",
    cache: AveragingCache | None = None,
) -> EffectiveParams:
    """Assemble sigma_bar and V for the pricer at slow-factor level ``z``."""

    def compute() -> EffectiveParams:
        sb, n_sb, d_sb = _sigma_bar_meta(vol, z, model.m, model.nu, definition)
        if model.rho_xy == 0.0 or vol.kind == "y_constant":
            return EffectiveParams(sigma_bar=sb, v=0.0, z=z, n_nodes=n_sb, refine_delta=d_sb)
        e_f_phi, n_v, d_v = _e_f_phi_prime(vol, z, model.m, model.nu)
        v = model.nu * model.rho_xy / math.sqrt(2.0) * e_f_phi
        return EffectiveParams(
            sigma_bar=sb, v=v, z=z, n_nodes=max(n_sb, n_v), refine_delta=max(d_sb, d_v)
        )

    if cache is None:
        return compute()
    key = (vol.cache_key(), z, model.m, model.nu, model.rho_xy, definition)
    return cache.get_or_compute(key, compute)


def phi_residual_check(
    vol: VolFunction,
    z: float,
    m: float,
    nu: float,
    *,
    n_points: int = 32769,
    interior_width: float = 6.0,
) -> float:
    """Sup-norm relative residual of the Poisson equation on the grid.

    Applies the generator ``(m - y) d/dy + nu^2 d^2/dy^2`` to the computed
    solution, approximating the second derivative by central differences of
    phi' (numerics independent of the construction), and returns
    ``max |L0 phi - rhs| / max |rhs|`` over the window ``|y - m| <=
    interior_width * nu``.  Exactly zero for y-constant f.
    """
    if vol.kind == "y_constant":
        return 0.0
    sol = solve_phi_derivative(vol, z, m, nu, n_points=n_points)
    y, pp = sol.y, sol.phi_prime
    phi_dd = np.empty_like(pp)
    phi_dd[1:-1] = (pp[2:] - pp[:-2]) / (y[2:] - y[:-2])
    phi_dd[0], phi_dd[-1] = phi_dd[1], phi_dd[-2]
    residual = (m - y) * pp + nu * nu * phi_dd - sol.rhs
    window = np.abs(y - m) <= interior_width * nu
    window[:2] = window[-2:] = False
    scale = float(np.max(np.abs(sol.rhs[window])))
    return float(np.max(np.abs(residual[window])) / max(scale, 1e-300))
