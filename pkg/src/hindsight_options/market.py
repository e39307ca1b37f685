"""Market parameters and exact-lognormal correlated GBM path generation.

Prices follow dS_i/S_i = mu_i dt + sigma_i dW_i with Corr(dW_i, dW_j) = rho_ij
and a risk-free bond growing at the continuously-compounded rate.  Paths are
stepped with the exact lognormal transition, so the marginal distribution at
every grid time is free of discretization bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

# Cholesky pivots below this fraction of the largest diagonal entry are
# treated as a positive-definiteness failure (deterministic, scale-aware).
_PD_PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class MarketSpec:
    """Constant-coefficient market: drifts, volatilities, correlation, rate.

    Attributes
    ----------
    n : int
        Number of risky assets.
    mu : np.ndarray, shape (n,)
        Drift of each asset, per year.
    sigma : np.ndarray, shape (n,)
        Volatility of each asset, per sqrt(year); each > 0.
    corr : np.ndarray, shape (n, n)
        Correlation matrix of the driving Brownian motions.  Must be
        symmetric, unit-diagonal, and positive definite.
    rate : float
        Continuously-compounded risk-free rate, per year.
    s0 : np.ndarray, shape (n,)
        Initial prices; each > 0.
    """

    n: int
    mu: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray
    rate: float
    s0: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        object.__setattr__(self, "sigma", np.atleast_1d(np.asarray(self.sigma, dtype=float)))
        object.__setattr__(self, "corr", np.atleast_2d(np.asarray(self.corr, dtype=float)))
        object.__setattr__(self, "s0", np.atleast_1d(np.asarray(self.s0, dtype=float)))
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def single(cls, mu: float, sigma: float, rate: float, s0: float = 1.0) -> "MarketSpec":
        """One-asset market."""
        return cls(n=1, mu=[mu], sigma=[sigma], corr=[[1.0]], rate=rate, s0=[s0])

    @classmethod
    def pair(cls, mu: Sequence[float], sigma: Sequence[float], rho: float,
             rate: float, s0: Sequence[float] = (1.0, 1.0)) -> "MarketSpec":
        """Two-asset market with a single correlation coefficient."""
        return cls(n=2, mu=mu, sigma=sigma, corr=[[1.0, rho], [rho, 1.0]],
                   rate=rate, s0=s0)


@dataclass(frozen=True)
class PricePath:
    """A simulated price history on a strictly increasing grid starting at 0.

    ``prices`` has shape (len(times), n) and is aligned row-for-row with
    ``times``; ``prices[0]`` equals the spec's initial prices.
    """

    times: np.ndarray
    prices: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim == 1:
            prices = prices[:, None]
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "prices", prices)
        if times.ndim != 1 or times.shape[0] != prices.shape[0]:
            raise ValidationError("times and prices must align row-for-row")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValidationError("time grid must start at 0 and strictly increase")
        if np.any(prices <= 0) or not np.all(np.isfinite(prices)):
            raise ValidationError("prices must be strictly positive and finite")


def cholesky_with_tolerance(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``a`` with a deterministic pivot test.

    Fails when any pivot drops below ``1e-12 * max(diag(a))``, which flags
    rank-deficient or indefinite matrices the same way on every platform.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    tol = _PD_PIVOT_TOL * float(np.max(np.diag(a)))
    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot < tol:
            raise ValidationError(
                f"matrix is not positive definite (pivot {pivot:.3e} at index {j})"
            )
        lower[j, j] = math.sqrt(pivot)
        for i in range(j + 1, n):
            lower[i, j] = (a[i, j] - lower[i, :j] @ lower[j, :j]) / lower[j, j]
    return lower


def validate_market(spec: MarketSpec) -> MarketSpec:
    """Check every MarketSpec invariant; return the spec unchanged if valid."""
    n = spec.n
    if n < 1:
        raise ValidationError("asset count must be >= 1")
    for name, vec in (("mu", spec.mu), ("sigma", spec.sigma), ("s0", spec.s0)):
        if vec.shape != (n,):
            raise ValidationError(f"{name} must have length {n}, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValidationError(f"{name} must be finite")
    if not math.isfinite(spec.rate):
        raise ValidationError("rate must be finite")
    if np.any(spec.sigma <= 0):
        raise ValidationError("volatilities must be strictly positive")
    if np.any(spec.s0 <= 0):
        raise ValidationError("initial prices must be strictly positive")
    corr = spec.corr
    if corr.shape != (n, n):
        raise ValidationError(f"correlation matrix must be {n}x{n}, got {corr.shape}")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise ValidationError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise ValidationError("correlation matrix must have a unit diagonal")
    if np.any(np.abs(corr) > 1.0 + 1e-12):
        raise ValidationError("correlation entries must lie in [-1, 1]")
    cholesky_with_tolerance(corr)  # positive definiteness
    return spec


def covariance(spec: MarketSpec) -> np.ndarray:
    """Covariance of instantaneous returns per unit time: diag(sigma) @ corr @ diag(sigma)."""
    m = np.diag(spec.sigma)
    return m @ spec.corr @ m


def correlated_normals(corr: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` i.i.d. rows of unit normals with correlation ``corr``.

    Deterministic for a given seed.  Raises when the matrix fails the
    tolerance-based Cholesky factorization.
    """
    corr = np.atleast_2d(np.asarray(corr, dtype=float))
    lower = cholesky_with_tolerance(corr)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    z = rng.standard_normal((int(count), corr.shape[0]))
    return z @ lower.T


def simulate_paths(spec: MarketSpec, horizon: float, steps: int, n_paths: int,
                   measure: str = "physical", seed: int = 0) -> list[PricePath]:
    """Generate exact-lognormal GBM paths on a uniform grid over [0, horizon].

    Parameters
    ----------
    measure : {"physical", "risk_neutral"}
        Physical paths drift at ``mu``; risk-neutral paths drift at ``rate``.
    seed : int
        Each path's stream is derived from (seed, path_index), so path i is
        reproducible independently of ``n_paths`` and of evaluation order.

    Returns
    -------
    list[PricePath]
        ``n_paths`` paths, each with ``steps + 1`` grid points.
    """
    validate_market(spec)
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    if measure not in ("physical", "risk_neutral"):
        raise ValidationError(f"unknown measure {measure!r}")

    times = np.linspace(0.0, horizon, steps + 1)
    dt = horizon / steps
    growth = spec.mu if measure == "physical" else np.full(spec.n, spec.rate)
    drift = (growth - 0.5 * spec.sigma**2) * dt
    vol = spec.sigma * math.sqrt(dt)
    lower = cholesky_with_tolerance(spec.corr)
    log_s0 = np.log(spec.s0)

    paths = []
    for i in range(n_paths):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), i)))
        eps = rng.standard_normal((steps, spec.n)) @ lower.T
        log_prices = log_s0 + np.cumsum(drift + vol * eps, axis=0)
        prices = np.empty((steps + 1, spec.n))
        prices[0] = spec.s0
        prices[1:] = np.exp(log_prices)
        paths.append(PricePath(times=times, prices=prices))
    return paths


def save_market_spec(spec: MarketSpec, path: str) -> None:
    """Write a spec as a plain key-value file; matrix rows repeat the key."""
    lines = [f"n = {spec.n}",
             "mu = " + " ".join(repr(float(x)) for x in spec.mu),
             "sigma = " + " ".join(repr(float(x)) for x in spec.sigma)]
    for row in spec.corr:
        lines.append("corr = " + " ".join(repr(float(x)) for x in row))
    lines.append(f"rate = {spec.rate!r}")
    lines.append("s0 = " + " ".join(repr(float(x)) for x in spec.s0))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_market_spec(path: str) -> MarketSpec:
    """Parse the key-value spec format written by :func:`save_market_spec`."""
    values: dict[str, list[list[float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = values'")
            key, _, rhs = line.partition("=")
            key = key.strip().lower()
            try:
                row = [float(tok) for tok in rhs.split()]
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if not row:
                raise ValidationError(f"{path}:{lineno}: no values for key {key!r}")
            values.setdefault(key, []).append(row)

    missing = {"n", "mu", "sigma", "corr", "rate", "s0"} - set(values)
    if missing:
        raise ValidationError(f"{path}: missing keys: {sorted(missing)}")

    def scalar_row(key: str) -> list[float]:
        rows = values[key]
        if len(rows) != 1:
            raise ValidationError(f"{path}: key {key!r} given {len(rows)} times")
        return rows[0]

    n = int(scalar_row("n")[0])
    corr_rows = values["corr"]
    if len(corr_rows) != n:
        raise ValidationError(f"{path}: expected {n} corr rows, got {len(corr_rows)}")
    spec = MarketSpec(n=n, mu=scalar_row("mu"), sigma=scalar_row("sigma"),
                      corr=corr_rows, rate=scalar_row("rate")[0], s0=scalar_row("s0"))
    return validate_market(spec)
