"""Monte Carlo checks of the typical structure of spherical initialization.

Uniform sphere vectors are sampled as normalized Gaussians (the identity
v = Z / ||Z|| behind all three checks):

  * largest coordinate: max_i |v_i| <= 4 sqrt(2 K log d)/sqrt(d) fails with
    probability at most 4/d^K;
  * gap existence: with enough neurons, every direction p <= P has a neuron
    whose p-th coordinate beats every other relevant coordinate by 3/2
    (coordinate ratios are normalization-free, so only P Gaussians per
    neuron matter);
  * norm ratio: ||v_<=P|| / ||v|| lies in [sqrt(P)/(3 sqrt(d)),
    3 sqrt(P)/sqrt(d)] with high probability for moderate P.

The closed-form width requirement m = 400 c P^{8c^2} sqrt(log P)
log(P v 1/delta) explodes at desk scale (P=3, c=1 already needs ~4e6
neurons); gap-existence reports carry it for reference while the tests
exercise the qualitative version (coverage frequency is nondecreasing in m
and crosses 1 - delta at a calibrated width).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log, sqrt

import numpy as np

from . import rng

_BLOCK = 1000


@dataclass(frozen=True)
class MCReport:
    name: str
    trials: int
    frequency: float
    stderr: float
    bound: float
    extra: dict = field(default_factory=dict)


def _binom_se(freq: float, trials: int) -> float:
    return sqrt(max(freq * (1 - freq), 1e-12) / trials)


def sphere_sample(d: int, n: int, gen: np.random.Generator) -> np.ndarray:
    z = gen.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def max_coordinate_threshold(d: int, K: float) -> float:
    return 4.0 * sqrt(2.0 * K * log(d)) / sqrt(d)


def mc_max_coordinate(d: int, K: float, trials: int, seed: int = 0) -> MCReport:
    """Frequency of max_i |v_i| exceeding the largest-coordinate threshold."""
    if K < 1 or d < 8:
        raise ValueError("need K >= 1 and d >= 8")
    gen = rng.substream(seed, rng.MC, 100)
    threshold = max_coordinate_threshold(d, K)
    violations = 0
    done = 0
    while done < trials:
        n = min(_BLOCK, trials - done)
        v = sphere_sample(d, n, gen)
        violations += int(np.sum(np.max(np.abs(v), axis=1) > threshold))
        done += n
    freq = violations / trials
    return MCReport(
        name="max_coordinate",
        trials=trials,
        frequency=freq,
        stderr=_binom_se(freq, trials),
        bound=4.0 / d**K,
        extra={"threshold": threshold, "d": d, "K": K},
    )


def lemma_width(P: int, delta_P: float, c: float = 1.0) -> float:
    """The paper-scale width requirement (reference only at desk scale)."""
    return 400.0 * c * P ** (8 * c * c) * sqrt(log(max(P, 2))) * log(max(P, 1.0 / delta_P))


def mc_gap_existence(
    d: int, P: int, m: int, trials: int, seed: int = 0, ratio: float = 1.5
) -> MCReport:
    """Frequency that every direction p has a neuron whose |v_p| beats all
    other relevant coordinates by `ratio`. Coordinate ratios do not change
    under normalization, so only the P relevant Gaussians are sampled."""
    if m < P:
        raise ValueError("need m >= P")
    if P > d:
        raise ValueError("need P <= d")
    gen = rng.substream(seed, rng.MC, 101)
    if P == 1:
        freq = 1.0  # max over an empty set: the ratio is +inf
    else:
        hits = 0
        done = 0
        while done < trials:
            n = min(_BLOCK, trials - done)
            z = np.abs(gen.standard_normal((n, m, P)))
            order = np.argsort(z, axis=2)
            top = order[:, :, -1]
            zmax = np.take_along_axis(z, order[:, :, -1:], axis=2)[:, :, 0]
            second = np.take_along_axis(z, order[:, :, -2:-1], axis=2)[:, :, 0]
            good = zmax >= ratio * second
            covered = np.zeros((n, P), dtype=bool)
            for p in range(P):
                covered[:, p] = np.any(good & (top == p), axis=1)
            hits += int(np.sum(covered.all(axis=1)))
            done += n
        freq = hits / trials
    return MCReport(
        name="gap_existence",
        trials=trials,
        frequency=freq,
        stderr=_binom_se(freq, trials),
        bound=1.0,
        extra={"m": m, "P": P, "ratio": ratio, "lemma_width_c1": lemma_width(P, 0.2)},
    )


def gap_coverage_by_width(
    P: int, widths: list, trials: int, seed: int = 0, ratio: float = 1.5
) -> list:
    """Coverage frequency at each width, with the neuron pools nested so the
    sequence is monotone by construction."""
    m_max = max(widths)
    gen = rng.substream(seed, rng.MC, 102)
    freqs = {m: 0 for m in widths}
    done = 0
    while done < trials:
        n = min(_BLOCK, trials - done)
        z = np.abs(gen.standard_normal((n, m_max, P)))
        order = np.argsort(z, axis=2)
        top = order[:, :, -1]
        zmax = np.take_along_axis(z, order[:, :, -1:], axis=2)[:, :, 0]
        second = np.take_along_axis(z, order[:, :, -2:-1], axis=2)[:, :, 0]
        good = zmax >= ratio * second
        for m in widths:
            covered = np.ones(n, dtype=bool)
            for p in range(P):
                covered &= np.any(good[:, :m] & (top[:, :m] == p), axis=1)
            freqs[m] += int(covered.sum())
        done += n
    return [(m, freqs[m] / trials) for m in widths]


def mc_norm_ratio(d: int, P: int, trials: int, seed: int = 0) -> MCReport:
    """Frequency that ||v_<=P||/||v|| lies inside [sqrt(P)/(3 sqrt(d)),
    3 sqrt(P)/sqrt(d)], plus the mean relevant mass for reference."""
    if not 8 <= P <= d:
        raise ValueError("need 8 <= P <= d")
    gen = rng.substream(seed, rng.MC, 103)
    lo = sqrt(P) / (3.0 * sqrt(d))
    hi = 3.0 * sqrt(P) / sqrt(d)
    inside = 0
    mass_sum = 0.0
    mass_sumsq = 0.0
    done = 0
    while done < trials:
        n = min(_BLOCK, trials - done)
        v = sphere_sample(d, n, gen)
        r = np.linalg.norm(v[:, :P], axis=1)
        inside += int(np.sum((r >= lo) & (r <= hi)))
        mass_sum += float(np.sum(r * r))
        mass_sumsq += float(np.sum(r**4))
        done += n
    freq = inside / trials
    mean_mass = mass_sum / trials
    mass_se = sqrt(max(mass_sumsq / trials - mean_mass**2, 0.0) / trials)
    return MCReport(
        name="norm_ratio",
        trials=trials,
        frequency=freq,
        stderr=_binom_se(freq, trials),
        bound=1.0,
        extra={
            "interval": (lo, hi),
            "mean_relevant_mass": mean_mass,
            "mean_relevant_mass_se": mass_se,
            "expected_mass": P / d,
        },
    )


def run_all(trials: int = 10_000, seed: int = 0) -> dict:
    """The report bundle behind the init-stats CLI subcommand."""
    return {
        "max_coordinate_K1": mc_max_coordinate(256, 1, trials, seed),
        "max_coordinate_K2": mc_max_coordinate(256, 2, trials, seed),
        "gap_existence": mc_gap_existence(64, 3, 40, trials, seed),
        "norm_ratio": mc_norm_ratio(1024, 64, trials, seed),
    }
