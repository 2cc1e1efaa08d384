"""Discrete-time Monte Carlo evolution of the coupled market system.

One iteration advances three coupled pieces, in a fixed order:

1. refresh the frozen market state (mean propensity Y, mean price S, trend);
2. pair up the chartists at random and let disjoint pairs interact with
   probability rho_C * dt (constant-kernel sampling, one permutation per
   step, O(N) cost);
3. optionally let agents switch strategy with probability
   min(1, dt * mu * rho_other * B(payoff difference)), evaluated against the
   pre-update population;
4. update every price sample independently with fresh bounded noise.

Per-iteration statistics are recorded after step 4.  Sequential mode
(n_streams = 1) is the determinism reference: a fixed seed reproduces the
trajectory bit for bit.  With n_streams > 1 the noise draws for interactions
and price updates come from per-worker substreams executed by a thread pool;
results are still deterministic for a fixed (seed, n_streams) pair but differ
from sequential mode at the sample level while leaving the sampled
distributions unchanged.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .model import (
    ConfigurationError,
    InvariantViolation,
    ModelParams,
    ValueFunctionSpec,
    chartist_profit,
    diffusion,
    fundamentalist_profit,
    herding,
    price_noise_halfwidth,
    max_price_noise_variance,
    validate_opinion_noise,
    value_function,
)

__all__ = [
    "AgentEnsemble",
    "PriceEnsemble",
    "MarketState",
    "SimConfig",
    "Trajectory",
    "binary_interact",
    "step_chartists",
    "step_price",
    "step_strategy_exchange",
    "run",
]

# exp(60) ~ 1e26: any switch rate beyond this saturates min(1, .) for every
# admissible population fraction, so capping the exponent only avoids overflow
_MAX_SWITCH_EXPONENT = 60.0

ChartistInit = Union[str, Callable[[np.random.Generator, int], np.ndarray]]


@dataclass
class AgentEnsemble:
    """Agent states: a strategy flag and a propensity (meaningful for chartists)."""

    y: np.ndarray
    is_chartist: np.ndarray

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.is_chartist = np.asarray(self.is_chartist, dtype=bool)
        if self.y.shape != self.is_chartist.shape or self.y.ndim != 1:
            raise ConfigurationError("y and is_chartist must be 1-d arrays of equal length")

    @property
    def N(self) -> int:
        return self.y.size

    @property
    def n_chartists(self) -> int:
        return int(np.count_nonzero(self.is_chartist))

    @property
    def rho_C(self) -> float:
        return self.n_chartists / self.N

    @property
    def rho_F(self) -> float:
        return 1.0 - self.rho_C

    def mean_propensity(self) -> float:
        """Mean y over the chartist subpopulation; 0 when there are none."""
        mask = self.is_chartist
        if not mask.any():
            return 0.0
        return float(self.y[mask].mean())

    @classmethod
    def initialize(cls, N: int, rho_C0: float, init: ChartistInit,
                   rng: np.random.Generator) -> "AgentEnsemble":
        n_c = int(round(rho_C0 * N))
        y = np.zeros(N)
        is_chartist = np.zeros(N, dtype=bool)
        is_chartist[:n_c] = True
        y[:n_c] = _initial_propensities(n_c, init, rng)
        return cls(y=y, is_chartist=is_chartist)


def _initial_propensities(n: int, init: ChartistInit,
                          rng: np.random.Generator) -> np.ndarray:
    if callable(init):
        y = np.asarray(init(rng, n), dtype=float)
        if y.shape != (n,):
            raise ConfigurationError("chartist_init callable must return one value per agent")
        if np.any(np.abs(y) > 1.0):
            raise ConfigurationError("initial propensities must lie in [-1, 1]")
        return y
    if init == "symmetric_uniform":
        # exactly mirrored pairs: the initial mean is zero in exact arithmetic
        half = n // 2
        u = rng.random(half)
        parts = [u, -u] + ([np.zeros(1)] if n % 2 else [])
        return np.concatenate(parts) if n else np.zeros(0)
    if init == "uniform":
        return rng.uniform(-1.0, 1.0, n)
    if init == "zero":
        return np.zeros(n)
    if isinstance(init, str) and init.startswith("constant:"):
        v = float(init.split(":", 1)[1])
        if abs(v) > 1.0:
            raise ConfigurationError("constant initial propensity must lie in [-1, 1]")
        return np.full(n, v)
    raise ConfigurationError(f"unknown chartist_init {init!r}")


@dataclass
class PriceEnsemble:
    """Price sample set with the running ensemble mean and trend estimate."""

    samples: np.ndarray
    S_prev: float
    S_curr: float
    trend: float  # (S_curr - S_prev) / (dt * S_curr); 0 before the first update

    @classmethod
    def initialize(cls, N_s: int, S0: float) -> "PriceEnsemble":
        samples = np.full(N_s, float(S0))
        return cls(samples=samples, S_prev=float(S0), S_curr=float(S0), trend=0.0)

    @property
    def second_moment(self) -> float:
        return float(np.mean(self.samples * self.samples))


@dataclass(frozen=True)
class MarketState:
    """Market quantities frozen at the top of an iteration."""

    S: float
    trend: float
    phi: float


@dataclass
class SimConfig:
    """Complete, validated configuration of one Monte Carlo run."""

    params: ModelParams
    value_spec: ValueFunctionSpec
    N: int = 50000
    N_s: int = 50000
    dt: float = 1.0
    n_iters: int = 1500
    seed: int = 0
    enable_switching: bool = False
    S0: float = 10.0
    rho_C0: float = 1.0
    chartist_init: ChartistInit = "symmetric_uniform"
    pin_mean: bool = False
    phi_override: float | None = None
    n_streams: int = 1

    def __post_init__(self) -> None:
        if self.N < 1 or self.N_s < 1:
            raise ConfigurationError("ensemble sizes must be positive")
        if self.dt <= 0.0:
            raise ConfigurationError("dt must be positive")
        if self.dt > 1.0:
            raise ConfigurationError(
                "dt must not exceed 1: the pair-interaction probability rho_C*dt "
                "has to stay <= 1"
            )
        if self.n_iters < 0:
            raise ConfigurationError("n_iters must be nonnegative")
        if not (0.0 <= self.rho_C0 <= 1.0):
            raise ConfigurationError("rho_C0 must lie in [0, 1]")
        if self.S0 <= 0.0:
            raise ConfigurationError("initial price S0 must be positive")
        if self.n_streams < 1:
            raise ConfigurationError("n_streams must be at least 1")
        if self.phi_override is not None and abs(self.phi_override) > 1.0:
            raise ConfigurationError("phi_override must lie in [-1, 1]")
        if isinstance(self.chartist_init, str):
            known = ("symmetric_uniform", "uniform", "zero")
            if self.chartist_init not in known \
                    and not self.chartist_init.startswith("constant:"):
                raise ConfigurationError(
                    f"unknown chartist_init {self.chartist_init!r}"
                )


@dataclass
class Trajectory:
    """Per-iteration statistics plus terminal snapshots of both sample sets."""

    t: np.ndarray
    S: np.ndarray
    Y: np.ndarray
    rho_C: np.ndarray
    rho_F: np.ndarray
    E: np.ndarray
    n_chartists: np.ndarray
    max_abs_y: np.ndarray
    min_price: np.ndarray
    N: int
    dt: float
    y_final: np.ndarray
    s_final: np.ndarray
    n_rejected: int = 0
    n_switches_cf: int = 0
    n_switches_fc: int = 0

    def __len__(self) -> int:
        return self.S.size

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,t,S,Y,rho_C,rho_F,E\n")
            for i in range(self.S.size):
                fh.write(
                    f"{i},{self.t[i]:.17g},{self.S[i]:.17g},{self.Y[i]:.17g},"
                    f"{self.rho_C[i]:.17g},{self.rho_F[i]:.17g},{self.E[i]:.17g}\n"
                )

    def write_samples(self, y_path, s_path) -> None:
        np.savetxt(y_path, self.y_final, fmt="%.17g")
        np.savetxt(s_path, self.s_final, fmt="%.17g")


def binary_interact(y, y_star, phi_val: float, eta, eta_star,
                    params: ModelParams):
    """Apply one symmetric binary opinion interaction; scalars or arrays.

    Returns (y', y_star', rejected).  Where either proposed output leaves
    [-1, 1] the interaction is void and both partners keep their states;
    the rejected flag reports those cases (a defined outcome, not an error).
    """
    ya = np.asarray(y, dtype=float)
    ysa = np.asarray(y_star, dtype=float)
    scalar = ya.ndim == 0 and ysa.ndim == 0
    a1, a2 = params.alpha1, params.alpha2
    hy = herding(params, ya)
    hs = herding(params, ysa)
    y_new = (1.0 - a1 * hy - a2) * ya + a1 * hy * ysa + a2 * phi_val \
        + diffusion(params, ya) * eta
    ys_new = (1.0 - a1 * hs - a2) * ysa + a1 * hs * ya + a2 * phi_val \
        + diffusion(params, ysa) * eta_star
    rejected = (np.abs(y_new) > 1.0) | (np.abs(ys_new) > 1.0)
    y_out = np.where(rejected, ya, y_new)
    ys_out = np.where(rejected, ysa, ys_new)
    if scalar:
        return float(y_out), float(ys_out), bool(rejected)
    return y_out, ys_out, rejected


def step_chartists(ensemble: AgentEnsemble, market: MarketState,
                   params: ModelParams, dt: float, rng,
                   pool: "_StreamPool | None" = None) -> int:
    """Pair-interaction step over the chartist subpopulation.

    Partitions the chartists into floor(N_C/2) disjoint uniformly random
    pairs; each pair interacts with probability rho_C * dt (a leftover odd
    agent is untouched).  Returns the number of rejected interactions.
    """
    idx = np.flatnonzero(ensemble.is_chartist)
    n_c = idx.size
    rho_C = n_c / ensemble.N
    if dt * rho_C > 1.0:
        raise ConfigurationError(
            f"interaction probability rho_C*dt = {rho_C * dt} exceeds 1"
        )
    if n_c < 2:
        return 0
    perm = rng.permutation(n_c)
    m = n_c // 2
    first = idx[perm[:m]]
    second = idx[perm[m:2 * m]]
    hit = rng.random(m) < rho_C * dt
    first = first[hit]
    second = second[hit]
    if first.size == 0:
        return 0
    c = math.sqrt(3.0 * params.sigma2_opinion)
    if pool is None:
        noise = rng.uniform(-c, c, 2 * first.size)
    else:
        noise = pool.uniform(-c, c, 2 * first.size)
    eta, eta_star = noise[:first.size], noise[first.size:]
    y1, y2, rejected = binary_interact(
        ensemble.y[first], ensemble.y[second], market.phi, eta, eta_star, params
    )
    ensemble.y[first] = y1
    ensemble.y[second] = y2
    return int(np.count_nonzero(rejected))


def step_price(prices: PriceEnsemble, Y: float, rho_C: float, rho_F: float,
               params: ModelParams, dt: float, rng,
               pool: "_StreamPool | None" = None) -> PriceEnsemble:
    """Update every price sample independently and refresh the trend estimate.

    The drift is scaled by dt and the noise variance by dt; the noise support
    is validated against the nonnegativity bound for the current population
    split before any sample is touched.
    """
    d = price_noise_halfwidth(params, rho_C, rho_F, dt)
    c = math.sqrt(3.0 * params.zeta2_price * dt)
    if c > d:
        raise ConfigurationError(
            f"price-noise variance {params.zeta2_price} inadmissible at "
            f"rho_C={rho_C}, rho_F={rho_F}: maximum admissible variance is "
            f"{max_price_noise_variance(params, rho_C, rho_F, dt)}"
        )
    s = prices.samples
    if pool is None:
        eta = rng.uniform(-c, c, s.size)
        new = s + dt * params.beta * (rho_C * params.t_C * Y * s
                                      + rho_F * params.gamma_f * (params.S_F - s)) \
            + eta * s
    else:
        new = pool.price_update(s, Y, rho_C, rho_F, params, dt, c)
    if np.any(new < 0.0):
        worst = int(np.argmin(new))
        raise InvariantViolation(
            f"price sample {worst} became negative ({new[worst]}) despite an "
            f"admissible noise support; rho_C={rho_C}, rho_F={rho_F}, dt={dt}"
        )
    prices.samples = new
    prices.S_prev = prices.S_curr
    prices.S_curr = float(new.mean())
    if prices.S_curr > 0.0:
        prices.trend = (prices.S_curr - prices.S_prev) / (dt * prices.S_curr)
    else:
        prices.trend = 0.0
    return prices


def _switch_probabilities(params: ModelParams, dt: float, rho_other: float,
                          payoff_gain) -> np.ndarray:
    """min(1, dt * mu * rho_other * exp(sigma * payoff_gain)), overflow-safe."""
    expo = np.minimum(params.sigma_switch * np.asarray(payoff_gain, dtype=float),
                      _MAX_SWITCH_EXPONENT)
    return np.minimum(1.0, dt * params.mu_freq * rho_other * np.exp(expo))


def step_strategy_exchange(ensemble: AgentEnsemble, market: MarketState,
                           params: ModelParams, dt: float,
                           rng: np.random.Generator) -> tuple[int, int]:
    """Stochastic strategy switching, evaluated against the pre-update population.

    A chartist with propensity y turns fundamentalist with probability
    min(1, dt mu rho_F B(X_F - X_C(y))); a fundamentalist turns chartist with
    probability min(1, dt mu rho_C B(X_C(ybar) - X_F)) where ybar is its own
    draw from the current chartist propensity pool (the profit of the chartist
    strategy is sign-valued in y, so the mean propensity is not a sufficient
    statistic).  A switching fundamentalist adopts the ybar it evaluated.
    Returns (chartist->fundamentalist, fundamentalist->chartist) counts.
    """
    if market.S <= 0.0:
        raise ValueError(f"price must be positive for strategy exchange, got {market.S}")
    c_idx = np.flatnonzero(ensemble.is_chartist)
    f_idx = np.flatnonzero(~ensemble.is_chartist)
    rho_C = c_idx.size / ensemble.N
    rho_F = 1.0 - rho_C
    x_f = fundamentalist_profit(params, market.S)
    s_dot = market.trend * market.S

    to_fund = np.zeros(0, dtype=np.intp)
    if c_idx.size and rho_F > 0.0:
        x_c = chartist_profit(params, ensemble.y[c_idx], market.S, s_dot)
        p_cf = _switch_probabilities(params, dt, rho_F, x_f - x_c)
        to_fund = c_idx[rng.random(c_idx.size) < p_cf]

    to_chart = np.zeros(0, dtype=np.intp)
    adopted = np.zeros(0)
    if f_idx.size and c_idx.size:
        ybar = rng.choice(ensemble.y[c_idx], size=f_idx.size, replace=True)
        x_c_bar = chartist_profit(params, ybar, market.S, s_dot)
        p_fc = _switch_probabilities(params, dt, rho_C, x_c_bar - x_f)
        hit = rng.random(f_idx.size) < p_fc
        to_chart = f_idx[hit]
        adopted = ybar[hit]

    ensemble.is_chartist[to_fund] = False
    ensemble.is_chartist[to_chart] = True
    ensemble.y[to_chart] = adopted
    return int(to_fund.size), int(to_chart.size)


class _StreamPool:
    """Per-worker RNG substreams plus a thread pool for the two inner loops.

    Stream j handles a fixed contiguous chunk of each draw, so results are
    deterministic for a fixed (seed, n_streams) pair, but the stream
    assignment differs from sequential mode: sample-level values change,
    sampled distributions do not.
    """

    def __init__(self, seed: int, n_streams: int):
        seqs = np.random.SeedSequence(seed).spawn(n_streams)
        self.rngs = [np.random.default_rng(s) for s in seqs]
        self.executor = ThreadPoolExecutor(max_workers=n_streams)

    def close(self) -> None:
        self.executor.shutdown()

    def _bounds(self, n: int) -> list[tuple[int, int]]:
        cuts = np.linspace(0, n, len(self.rngs) + 1).astype(int)
        return [(int(a), int(b)) for a, b in zip(cuts[:-1], cuts[1:])]

    def uniform(self, lo: float, hi: float, n: int) -> np.ndarray:
        out = np.empty(n)

        def fill(j, a, b):
            out[a:b] = self.rngs[j].uniform(lo, hi, b - a)

        futures = [self.executor.submit(fill, j, a, b)
                   for j, (a, b) in enumerate(self._bounds(n))]
        for f in futures:
            f.result()
        return out

    def price_update(self, s: np.ndarray, Y: float, rho_C: float, rho_F: float,
                     params: ModelParams, dt: float, c: float) -> np.ndarray:
        out = np.empty_like(s)
        coeff = dt * params.beta

        def work(j, a, b):
            chunk = s[a:b]
            eta = self.rngs[j].uniform(-c, c, b - a)
            out[a:b] = chunk + coeff * (rho_C * params.t_C * Y * chunk
                                        + rho_F * params.gamma_f * (params.S_F - chunk)) \
                + eta * chunk

        futures = [self.executor.submit(work, j, a, b)
                   for j, (a, b) in enumerate(self._bounds(s.size))]
        for f in futures:
            f.result()
        return out


def _recenter(ensemble: AgentEnsemble) -> None:
    # subtract the empirical chartist mean, then clamp back into [-1, 1]
    mask = ensemble.is_chartist
    if mask.any():
        yc = ensemble.y[mask]
        ensemble.y[mask] = np.clip(yc - yc.mean(), -1.0, 1.0)


def run(config: SimConfig) -> Trajectory:
    """Run the full coupled simulation and return its recorded trajectory.

    Deterministic for a fixed seed in sequential mode.  Each iteration
    executes: (1) refresh of the frozen market state, (2) chartist pair
    interactions (followed by mean re-centering when ``pin_mean`` is set),
    (3) strategy exchange when enabled, (4) price-sample updates.  Statistics
    are recorded after step 4; the trajectory has n_iters + 1 records.
    """
    params = config.params
    validate_opinion_noise(params)
    rng = np.random.default_rng(config.seed)
    pool = _StreamPool(config.seed, config.n_streams) if config.n_streams > 1 else None

    ensemble = AgentEnsemble.initialize(config.N, config.rho_C0,
                                        config.chartist_init, rng)
    prices = PriceEnsemble.initialize(config.N_s, config.S0)

    n_rec = config.n_iters + 1
    t = np.empty(n_rec)
    S = np.empty(n_rec)
    Y = np.empty(n_rec)
    rho_C = np.empty(n_rec)
    rho_F = np.empty(n_rec)
    E = np.empty(n_rec)
    n_chart = np.empty(n_rec, dtype=np.int64)
    max_abs_y = np.empty(n_rec)
    min_price = np.empty(n_rec)

    def record(i: int) -> None:
        t[i] = i * config.dt
        S[i] = prices.S_curr
        Y[i] = ensemble.mean_propensity()
        rc = ensemble.rho_C
        rho_C[i] = rc
        rho_F[i] = 1.0 - rc
        E[i] = prices.second_moment
        n_chart[i] = ensemble.n_chartists
        mask = ensemble.is_chartist
        max_abs_y[i] = float(np.abs(ensemble.y[mask]).max()) if mask.any() else 0.0
        min_price[i] = float(prices.samples.min())

    record(0)
    n_rejected = 0
    n_cf = 0
    n_fc = 0
    try:
        for i in range(1, n_rec):
            y_mean = ensemble.mean_propensity()
            rc = ensemble.rho_C
            rf = 1.0 - rc
            if config.phi_override is None:
                phi = value_function(config.value_spec, prices.trend)
            else:
                phi = config.phi_override
            market = MarketState(S=prices.S_curr, trend=prices.trend, phi=phi)
            n_rejected += step_chartists(ensemble, market, params, config.dt,
                                         rng, pool)
            if config.pin_mean:
                _recenter(ensemble)
            if config.enable_switching:
                cf, fc = step_strategy_exchange(ensemble, market, params,
                                                config.dt, rng)
                n_cf += cf
                n_fc += fc
            step_price(prices, y_mean, rc, rf, params, config.dt, rng, pool)
            record(i)
    finally:
        if pool is not None:
            pool.close()

    return Trajectory(
        t=t, S=S, Y=Y, rho_C=rho_C, rho_F=rho_F, E=E, n_chartists=n_chart,
        max_abs_y=max_abs_y, min_price=min_price,
        N=config.N, dt=config.dt,
        y_final=ensemble.y[ensemble.is_chartist].copy(),
        s_final=prices.samples.copy(),
        n_rejected=n_rejected, n_switches_cf=n_cf, n_switches_fc=n_fc,
    )
