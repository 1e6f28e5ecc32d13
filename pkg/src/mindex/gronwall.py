"""Simulators and envelope verifiers for noisy one-dimensional recurrences.

Three families, matching the coupling lemmas used to carry the gradient-flow
picture over to online SGD:

  linear      X_{t+1} = X_t + alpha X_t + xi_{t+1} + Z_{t+1}
              envelope: X_t in (1 +- 0.5) (1+alpha)^t x0 for all t <= T,
              conditions: Xi <= x0/(4T), sigma_Z^2 <= delta_P alpha x0^2 / 16.
  zero_drift  X_{t+1} = X_t + xi_{t+1} + Z_{t+1}
              envelope: |X_t - x0| <= T Xi + sqrt(T sigma_Z^2 / delta_P),
              no smallness conditions.
  polynomial  X_{t+1} = X_t + alpha X_t^p + xi_{t+1} + Z_{t+1}  (p > 1)
              lower envelope: X_t >= xhat_t where xhat_{t+1} = xhat_t +
              alpha xhat_t^p starts from x0/2,
              conditions: Xi <= x0/(4T), sigma_Z^2 <= x0^2 delta_P / (16 T).

Each envelope holds with probability at least 1 - T delta_xi - delta_P.

Noise: xi is bounded uniform (delta_xi = 0), Z is Gaussian or symmetric
Weibull-tailed. In the state-coupled mode the scales grow like (1+alpha)^t
(the linear lemma's hypotheses); the lemmas only constrain the noise while
the path is inside its envelope, so after the first exit the growing scales
are frozen at their exit value. Envelope exits use first-violation
(stopping-time) semantics: a trial either stays inside for every t <= T or
counts as an exit, no partial credit.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, log, sqrt

import numpy as np

from . import rng

_BLOWUP = 1e12

KINDS = ("linear", "zero_drift", "polynomial")


@dataclass(frozen=True)
class GronwallSpec:
    kind: str
    x0: float
    T: int
    alpha: float = 0.0
    p: float = 2.0
    Xi: float = 0.0
    delta_xi: float = 0.0
    sigma_Z: float = 0.0
    z_dist: str = "gaussian"      # "gaussian" | "weibull" | "none"
    weibull_c: float = 0.5
    state_coupled: bool = False
    delta_P: float = 0.1
    noise_amplification: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.x0 <= 0 or self.T < 1:
            raise ValueError("x0 > 0 and T >= 1 required")
        if self.kind == "linear" and self.alpha <= 0:
            raise ValueError("linear kind requires alpha > 0")
        if self.kind == "polynomial" and (self.alpha <= 0 or self.p <= 1):
            raise ValueError("polynomial kind requires alpha > 0 and p > 1")
        if not 0 < self.delta_P < 1:
            raise ValueError("delta_P must be in (0, 1)")
        if self.sigma_Z < 0 or self.Xi < 0:
            raise ValueError("noise scales must be nonnegative")


@dataclass(frozen=True)
class ConditionReport:
    ok: bool
    margins: dict


@dataclass(frozen=True)
class SimPath:
    X: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    exit_step: int | None
    blow_up_step: int | None


@dataclass(frozen=True)
class EnvelopeReport:
    trials: int
    stay_fraction: float
    stderr: float
    theoretical_floor: float
    condition_satisfied: bool
    passed: bool


def check_conditions(spec: GronwallSpec) -> ConditionReport:
    """Evaluate the kind-appropriate smallness conditions with their slack."""
    margins = {}
    if spec.kind == "linear":
        margins["Xi"] = (spec.Xi, spec.x0 / (4 * spec.T))
        margins["sigma_Z2"] = (spec.sigma_Z**2, spec.delta_P * spec.alpha * spec.x0**2 / 16)
    elif spec.kind == "polynomial":
        margins["Xi"] = (spec.Xi, spec.x0 / (4 * spec.T))
        margins["sigma_Z2"] = (spec.sigma_Z**2, spec.x0**2 * spec.delta_P / (16 * spec.T))
    else:  # zero_drift: the lemma has no smallness conditions
        margins["envelope_halfwidth"] = (
            spec.T * spec.Xi + sqrt(spec.T * spec.sigma_Z**2 / spec.delta_P),
            np.inf,
        )
    ok = all(value <= bound * (1 + 1e-12) for value, bound in margins.values())
    return ConditionReport(ok=ok, margins=margins)


def deterministic_path(spec: GronwallSpec) -> np.ndarray:
    """The noise-free reference path (for polynomial: from x0, not x0/2)."""
    x = np.empty(spec.T + 1)
    x[0] = spec.x0
    for t in range(spec.T):
        if spec.kind == "linear":
            x[t + 1] = x[t] + spec.alpha * x[t]
        elif spec.kind == "polynomial":
            x[t + 1] = x[t] + spec.alpha * x[t] ** spec.p
        else:
            x[t + 1] = x[t]
    return x


def envelope_bounds(spec: GronwallSpec) -> tuple[np.ndarray, np.ndarray]:
    """(lower, upper) envelope arrays over t = 0..T."""
    t = np.arange(spec.T + 1)
    if spec.kind == "linear":
        ref = spec.x0 * (1.0 + spec.alpha) ** t
        return 0.5 * ref, 1.5 * ref
    if spec.kind == "zero_drift":
        half = spec.T * spec.Xi + sqrt(spec.T * spec.sigma_Z**2 / spec.delta_P)
        return np.full_like(t, spec.x0 - half, dtype=float), np.full_like(
            t, spec.x0 + half, dtype=float
        )
    # polynomial: lower envelope from x0/2, no upper constraint; past its
    # finite-time blow-up the envelope is +inf and every path counts as out
    xhat = np.empty(spec.T + 1)
    xhat[0] = spec.x0 / 2.0
    with np.errstate(over="ignore"):
        for k in range(spec.T):
            xhat[k + 1] = xhat[k] + spec.alpha * xhat[k] ** spec.p
    return xhat, np.full_like(xhat, np.inf)


def _weibull_norm(c: float) -> float:
    """sqrt(E W^2) for |W| ~ Weibull(shape c, scale 1)."""
    return sqrt(gamma(1.0 + 2.0 / c))


def _raw_noise(spec: GronwallSpec, seed: int, trial: int):
    """Per-trial unit-scale noise streams (xi in [-1,1], Z with E Z^2 = 1)."""
    gen = rng.substream(seed, rng.GRONWALL, trial)
    xi = gen.uniform(-1.0, 1.0, size=spec.T) if spec.Xi > 0 else np.zeros(spec.T)
    if spec.sigma_Z == 0 or spec.z_dist == "none":
        z = np.zeros(spec.T)
    elif spec.z_dist == "gaussian":
        z = gen.standard_normal(spec.T)
    elif spec.z_dist == "weibull":
        mag = gen.weibull(spec.weibull_c, size=spec.T)
        sign = gen.integers(0, 2, size=spec.T) * 2.0 - 1.0
        z = sign * mag / _weibull_norm(spec.weibull_c)
    else:
        raise ValueError(f"unknown z_dist {spec.z_dist!r}")
    return xi, z


def _simulate_batch(spec: GronwallSpec, seed: int, trials: int):
    """Vectorized paths (trials, T+1) plus per-trial first exit step (-1: none)."""
    lower, upper = envelope_bounds(spec)
    xi_raw = np.empty((trials, spec.T))
    z_raw = np.empty((trials, spec.T))
    for i in range(trials):
        xi_raw[i], z_raw[i] = _raw_noise(spec, seed, i)

    X = np.empty((trials, spec.T + 1))
    X[:, 0] = spec.x0
    exit_step = np.full(trials, -1, dtype=np.int64)
    growth = np.ones(trials)  # (1+alpha)^min(t, exit), frozen at envelope exit
    amp = spec.noise_amplification
    for t in range(spec.T):
        x = X[:, t]
        if spec.kind == "linear":
            drift = spec.alpha * x
        elif spec.kind == "polynomial":
            drift = spec.alpha * np.sign(x) * np.abs(x) ** spec.p
        else:
            drift = 0.0
        if spec.state_coupled:
            xi_scale = spec.Xi * growth
            z_scale = spec.sigma_Z * np.sqrt(growth)
        else:
            xi_scale = spec.Xi
            z_scale = spec.sigma_Z
        nxt = x + drift + amp * (xi_scale * xi_raw[:, t] + z_scale * z_raw[:, t])
        np.clip(nxt, -_BLOWUP, _BLOWUP, out=nxt)
        X[:, t + 1] = nxt
        out = (nxt < lower[t + 1]) | (nxt > upper[t + 1])
        newly = out & (exit_step < 0)
        exit_step[newly] = t + 1
        inside = exit_step < 0
        growth[inside] *= 1.0 + spec.alpha
    return X, exit_step


def simulate(spec: GronwallSpec, seed: int, trial: int = 0) -> SimPath:
    """One path with its envelope and exit/blow-up bookkeeping."""
    X, exit_step = _simulate_batch(spec, seed, trial + 1)
    lower, upper = envelope_bounds(spec)
    x = X[trial]
    blow = np.nonzero(np.abs(x) >= _BLOWUP)[0]
    return SimPath(
        X=x,
        lower=lower,
        upper=upper,
        exit_step=None if exit_step[trial] < 0 else int(exit_step[trial]),
        blow_up_step=None if blow.size == 0 else int(blow[0]),
    )


def verify_envelope(spec: GronwallSpec, trials: int, seed: int) -> EnvelopeReport:
    """Fraction of trials whose whole path stays inside the envelope."""
    _, exit_step = _simulate_batch(spec, seed, trials)
    stay = float(np.mean(exit_step < 0))
    se = sqrt(max(stay * (1 - stay), 1e-12) / trials)
    floor = 1.0 - spec.T * spec.delta_xi - spec.delta_P
    return EnvelopeReport(
        trials=trials,
        stay_fraction=stay,
        stderr=se,
        theoretical_floor=floor,
        condition_satisfied=check_conditions(spec).ok,
        passed=stay >= floor - 2 * se,
    )


def poly_hitting_time(x0: float, alpha: float, p: float, target: float = 0.9) -> int:
    """Steps of x <- x + alpha x^p until x >= target."""
    if not 0 < x0:
        raise ValueError(f"x0 must be positive, got {x0}")
    x, steps = x0, 0
    while x < target:
        x = x + alpha * x**p
        steps += 1
        if steps > 10**9:
            raise RuntimeError("hitting time exceeds 1e9 steps")
    return steps


def default_specs() -> dict:
    """One conditions-satisfying spec per family, noise at the boundary."""
    x0, T, alpha, delta_P = 0.01, 400, 0.01, 0.1
    linear = GronwallSpec(
        kind="linear", x0=x0, T=T, alpha=alpha,
        Xi=x0 / (4 * T), sigma_Z=sqrt(delta_P * alpha * x0**2 / 16),
        state_coupled=True, delta_P=delta_P,
    )
    zero_drift = GronwallSpec(
        kind="zero_drift", x0=1.0, T=300, Xi=1e-4, sigma_Z=5e-3, delta_P=delta_P,
    )
    px0, pT, palpha = 0.05, 500, 2e-4
    polynomial = GronwallSpec(
        kind="polynomial", x0=px0, T=pT, alpha=palpha, p=2.0,
        Xi=px0 / (4 * pT), sigma_Z=sqrt(px0**2 * delta_P / (16 * pT)),
        delta_P=delta_P,
    )
    return {"linear": linear, "zero_drift": zero_drift, "polynomial": polynomial}


@dataclass(frozen=True)
class FreedmanReport:
    quantile: float
    bound: float
    passed: bool


def freedman_sum_check(
    a: float,
    b: float,
    c: float,
    T: int,
    delta_P: float,
    trials: int,
    seed: int = 0,
    dist: str = "weibull",
    C_c: float = 1.0,
) -> FreedmanReport:
    """Empirical (1 - delta_P)-quantile of |sum Z_t| against the Freedman-type
    bound C_c sqrt(T (sigma^2 + b^{-2/c} + log^{1/c}(aT/(b sigma delta))/b^{1/c})
    log(1/delta)). The generator realizes the tail a exp(-b s^c):
    dist="weibull" draws |Z| ~ Weibull(c, b^{-1/c}); dist="rademacher" is the
    bounded +-1 sub-case."""
    if not (a >= 1 and 0 < b <= 1 and 0 < c <= 1):
        raise ValueError("need a >= 1, b in (0,1], c in (0,1]")
    sums = np.empty(trials)
    if dist == "weibull":
        scale = b ** (-1.0 / c)
        sigma2 = scale**2 * gamma(1.0 + 2.0 / c)
    elif dist == "rademacher":
        sigma2 = 1.0
    else:
        raise ValueError(f"unknown dist {dist!r}")
    for i in range(trials):
        gen = rng.substream(seed, rng.GRONWALL, 1_000_000 + i)
        if dist == "weibull":
            mag = scale * gen.weibull(c, size=T)
            sign = gen.integers(0, 2, size=T) * 2.0 - 1.0
            z = sign * mag
        else:
            z = gen.integers(0, 2, size=T) * 2.0 - 1.0
        sums[i] = abs(z.sum())
    quantile = float(np.quantile(sums, 1.0 - delta_P))
    sigma = sqrt(sigma2)
    inner = sigma2 + b ** (-2.0 / c) + log(a * T / (b * sigma * delta_P)) ** (1.0 / c) / b ** (
        1.0 / c
    )
    bound = C_c * sqrt(T * inner * log(1.0 / delta_P))
    return FreedmanReport(quantile=quantile, bound=bound, passed=quantile <= bound)
