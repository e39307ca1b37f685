"""Binomial-lattice pricing and replication of the hindsight allocation option.

The market is the standard recombining lattice: each period the stock moves
by u or d with 0 < d < R < u, where R = 1 + r_per is the per-period gross
rate, and q = (R - d)/(u - d) is the risk-neutral up probability.  After j
ups out of N periods a fixed-fraction rule b holds wealth

    V_N(b) = R^N [1 + b(u/R - 1)]^j [1 + b(d/R - 1)]^{N-j},

whose hindsight maximizer is b(j, N) = R (j - Nq) / (N (u - d) q (1 - q)).
The levered payoff V_N(b(j, N)) collapses to (R/N)^N (j/q)^j ((N-j)/(1-q))^{N-j}
with the 0^0 := 1 convention; the unlevered payoff clamps b(j, N) to [0, 1],
which selects R^N below j = Nq and u^j d^{N-j} above j = Nq + N(u-d)q(1-q)/R.

Prices are expected discounted payoffs under q.  Two independent routes are
shipped: closed sums over terminal outcomes (log-space, log-gamma binomials,
log-sum-exp accumulation, so N = 300 runs do not overflow) and exact backward
induction, the reference for every interior state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .errors import ValidationError


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice parameters: up/down factors, per-period simple rate, total steps."""

    u: float
    d: float
    r_per: float
    n_steps: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "r_per", float(self.r_per))
        object.__setattr__(self, "n_steps", int(self.n_steps))
        if self.n_steps < 1:
            raise ValidationError("n_steps must be >= 1")
        if not 0.0 < self.d < self.gross_rate < self.u:
            raise ValidationError("need 0 < d < 1 + r_per < u")

    @property
    def gross_rate(self) -> float:
        return 1.0 + self.r_per

    @property
    def q(self) -> float:
        """Risk-neutral up probability, (R - d) / (u - d); always in (0, 1)."""
        return (self.gross_rate - self.d) / (self.u - self.d)

    @classmethod
    def crr(cls, sigma: float, rate: float, horizon: float, n_steps: int) -> "LatticeSpec":
        """Standard calibration u = e^{sigma sqrt(h)}, d = 1/u, R = e^{r h}."""
        h = horizon / n_steps
        u = math.exp(sigma * math.sqrt(h))
        return cls(u=u, d=1.0 / u, r_per=math.expm1(rate * h), n_steps=n_steps)


SHANNON = dict(u=2.0, d=0.5, r_per=0.0)


def shannon_spec(n_steps: int) -> LatticeSpec:
    """The classic double-or-half, zero-rate market (q = 1/3)."""
    return LatticeSpec(n_steps=n_steps, **SHANNON)


@dataclass(frozen=True)
class LatticeState:
    """Position on the lattice: k upticks seen in the first n steps."""

    k: int
    n: int

    def __post_init__(self) -> None:
        if not 0 <= self.k <= self.n:
            raise ValidationError("need 0 <= k <= n")


def _check_terminal(spec: LatticeSpec, j) -> np.ndarray:
    j = np.atleast_1d(np.asarray(j))
    if np.any(j < 0) or np.any(j > spec.n_steps):
        raise ValidationError(f"uptick count must lie in [0, {spec.n_steps}]")
    return j.astype(float)


def lattice_best_rule(spec: LatticeSpec, j: int) -> float:
    """Hindsight-optimal fraction after j ups in n_steps plays.

    b(j, N) = R / (N (u - d)) * (j/q - (N - j)/(1 - q)); zero when j = Nq.
    """
    jf = float(_check_terminal(spec, j)[0])
    n, q = spec.n_steps, spec.q
    return spec.gross_rate / (n * (spec.u - spec.d)) * (jf / q - (n - jf) / (1.0 - q))


def lattice_log_payoff(spec: LatticeSpec, j, mode: str = "levered") -> np.ndarray:
    """log of the terminal payoff after j ups; vectorized over j.

    Ties at the unlevered clamp boundaries evaluate every admissible branch
    and keep the maximum, which is always correct for a payoff defined as a
    max over b.
    """
    jf = _check_terminal(spec, j)
    n, q, gross = spec.n_steps, spec.q, spec.gross_rate
    levered = (n * math.log(gross / n) + xlogy(jf, jf / q)
               + xlogy(n - jf, (n - jf) / (1.0 - q)))
    if mode == "levered":
        return levered
    if mode != "unlevered":
        raise ValidationError(f"unknown mode {mode!r}")
    b = gross / (n * (spec.u - spec.d)) * (jf / q - (n - jf) / (1.0 - q))
    cash = np.full_like(jf, n * math.log(gross))
    hold = jf * math.log(spec.u) + (n - jf) * math.log(spec.d)
    # Non-strict masks overlap exactly at clamp boundaries, where the max of
    # the competing branch formulas is taken (they agree there analytically).
    out = np.full_like(jf, -np.inf)
    for mask, value in ((b <= 0.0, cash),
                        ((b >= 0.0) & (b <= 1.0), levered),
                        (b >= 1.0, hold)):
        out[mask] = np.maximum(out[mask], value[mask])
    return out


def lattice_payoff(spec: LatticeSpec, j: int, mode: str = "levered") -> float:
    """Terminal payoff of the option after j ups out of n_steps."""
    return float(np.exp(lattice_log_payoff(spec, j, mode)[0]))


def lattice_log_price(spec: LatticeSpec, state: LatticeState, mode: str = "levered") -> float:
    """log price in state (k, n): expected discounted payoff under q.

    Closed sum over the remaining N - n periods,

        C(k, n) = R^{-(N-n)} sum_j binom(N-n, j) q^j (1-q)^{N-n-j} payoff(k + j),

    accumulated by log-sum-exp.  Interest accrual matters here: the factored
    form C(k, n) = R^n q^{-k} (1-q)^{k-n} sum_j binom(...) ((j+k)/N)^{j+k} ...
    carries an R^n that vanishes only in zero-rate markets.
    """
    n_total = spec.n_steps
    if state.n > n_total:
        raise ValidationError(f"state is beyond the {n_total}-step lattice")
    remaining = n_total - state.n
    if remaining == 0:
        return float(lattice_log_payoff(spec, state.k, mode)[0])
    q = spec.q
    j = np.arange(remaining + 1, dtype=float)
    log_binom = (gammaln(remaining + 1) - gammaln(j + 1) - gammaln(remaining - j + 1))
    log_terms = (log_binom + j * math.log(q) + (remaining - j) * math.log(1.0 - q)
                 + lattice_log_payoff(spec, state.k + j.astype(int), mode)
                 - remaining * math.log(spec.gross_rate))
    return float(logsumexp(log_terms))


def lattice_price(spec: LatticeSpec, state: LatticeState, mode: str = "levered") -> float:
    """Price in state (k, n); at n = N this is the payoff itself."""
    return math.exp(lattice_log_price(spec, state, mode))


def induction_price_table(spec: LatticeSpec, mode: str = "levered") -> list[np.ndarray]:
    """Exact backward-induction prices at every node.

    Returns ``table`` with ``table[n][k]`` the price after n steps and k ups;
    ``table[N]`` is the payoff row.  This is the reference pricer: the
    discounted price process is a q-martingale by construction,
    C(k, n) = [q C(k+1, n+1) + (1-q) C(k, n+1)] / R.

    Works in plain floats, so the payoff row must be representable; for very
    deep levered lattices use :func:`lattice_log_price` instead.
    """
    n_total, q, gross = spec.n_steps, spec.q, spec.gross_rate
    table: list[np.ndarray] = [np.empty(0)] * (n_total + 1)
    table[n_total] = np.exp(lattice_log_payoff(spec, np.arange(n_total + 1), mode))
    for n in range(n_total - 1, -1, -1):
        nxt = table[n + 1]
        table[n] = (q * nxt[1:n + 2] + (1.0 - q) * nxt[:n + 1]) / gross
    return table


def lattice_delta(spec: LatticeSpec, state: LatticeState, s: float,
                  mode: str = "levered") -> float:
    """Replicating share count at (k, n) with current stock price s.

    delta = [C(k+1, n+1) - C(k, n+1)] / (s (u - d)).
    """
    if state.n >= spec.n_steps:
        raise ValidationError("no rebalance after the final step")
    if s <= 0:
        raise ValidationError("stock price must be positive")
    c_up = lattice_price(spec, LatticeState(state.k + 1, state.n + 1), mode)
    c_dn = lattice_price(spec, LatticeState(state.k, state.n + 1), mode)
    return (c_up - c_dn) / (s * (spec.u - spec.d))


def time0_unlevered_price(spec: LatticeSpec) -> float:
    """Time-0 unlevered price as a three-term sum, one term per clamp regime.

        C0 = Prob{j <= Nq}
           + sum_{mid} binom(N, j) (j/N)^j (1 - j/N)^{N-j}
           + R^{-N} sum_{hi} binom(N, j) (qu)^j ((1-q) d)^{N-j}

    where ``hi`` starts at Nq + N(u-d)q(1-q)/R, the point where the hindsight
    rule reaches b = 1, and boundary terms are assigned by the clamp value
    (either neighboring formula agrees exactly at a boundary).
    """
    n, q, gross = spec.n_steps, spec.q, spec.gross_rate
    j = np.arange(n + 1, dtype=float)
    b = gross / (n * (spec.u - spec.d)) * (j / q - (n - j) / (1.0 - q))
    log_binom = gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
    lo = b <= 0.0
    hi = (b >= 1.0) & ~lo
    mid = ~lo & ~hi
    total = 0.0
    if lo.any():
        total += float(np.exp(logsumexp(
            log_binom[lo] + j[lo] * math.log(q) + (n - j[lo]) * math.log(1.0 - q))))
    if mid.any():
        total += float(np.exp(logsumexp(
            log_binom[mid] + xlogy(j[mid], j[mid] / n) + xlogy(n - j[mid], 1.0 - j[mid] / n))))
    if hi.any():
        total += float(np.exp(logsumexp(
            log_binom[hi] + j[hi] * math.log(q * spec.u)
            + (n - j[hi]) * math.log((1.0 - q) * spec.d) - n * math.log(gross))))
    return total


def hedge_lattice_path(spec: LatticeSpec, moves: np.ndarray, mode: str = "levered",
                       s0: float = 1.0, table: list[np.ndarray] | None = None) -> np.ndarray:
    """Self-financing delta-hedge wealth along one path of up (1) / down (0) moves.

    Starts with wealth C(0, 0); exact replication makes the wealth equal the
    node price C(k, n) at every step, ending at the payoff.  Deltas come from
    the closed sums unless a precomputed ``induction_price_table`` is given.
    """
    moves = np.asarray(moves, dtype=int)
    if moves.shape != (spec.n_steps,) or np.any((moves != 0) & (moves != 1)):
        raise ValidationError(f"moves must be {spec.n_steps} entries of 0 or 1")
    wealth = np.empty(spec.n_steps + 1)
    if table is None:
        wealth[0] = lattice_price(spec, LatticeState(0, 0), mode)
    else:
        wealth[0] = table[0][0]
    s = s0
    k = 0
    for n, up in enumerate(moves):
        if table is None:
            delta = lattice_delta(spec, LatticeState(k, n), s, mode)
        else:
            delta = (table[n + 1][k + 1] - table[n + 1][k]) / (s * (spec.u - spec.d))
        cash = wealth[n] - delta * s
        s = s * (spec.u if up else spec.d)
        k += int(up)
        wealth[n + 1] = delta * s + cash * spec.gross_rate
    return wealth


@dataclass(frozen=True)
class DemonLedger:
    """One simulated double-or-half run: stock vs. replication wealth per step."""

    steps: np.ndarray
    upticks: np.ndarray
    stock: np.ndarray
    wealth: np.ndarray

    def rows(self):
        return zip(self.steps, self.upticks, self.stock, self.wealth)


def demon_simulation(n_steps: int, p: float, seed: int) -> DemonLedger:
    """Replicate the option through one coin-flip run of the double-or-half market.

    The coin comes up heads (stock doubles) with physical probability p; the
    stock sits at 2^{2k - n} after k upticks in n steps, and the replicating
    account holds C(k, n) / C(0, 0) per initial dollar.
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError("p must lie in [0, 1]")
    spec = shannon_spec(n_steps)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    ups = (rng.random(n_steps) < p).astype(int)
    k = np.concatenate([[0], np.cumsum(ups)])
    n = np.arange(n_steps + 1)
    log_c = np.array([lattice_log_price(spec, LatticeState(int(ki), int(ni)))
                      for ki, ni in zip(k, n)])
    return DemonLedger(steps=n, upticks=k,
                       stock=np.exp2((2 * k - n).astype(float)),
                       wealth=np.exp(log_c - log_c[0]))


def write_demon_csv(ledger: DemonLedger, path: str) -> None:
    """Emit the demon ledger as CSV with columns step, upticks, stock, wealth."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,upticks,stock,wealth\n")
        for step, ups, stock, wealth in ledger.rows():
            fh.write(f"{int(step)},{int(ups)},{float(stock)!r},{float(wealth)!r}\n")
