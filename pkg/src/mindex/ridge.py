"""Stage 2: ridge regression on the frozen first layer.

The objective (1/2N) sum_n (y_n - Phi_n a)^2 + lambda ||a||^2 has normal
equations

    (Phi^T Phi / N + 2 lambda I) a = Phi^T y / N,

note the factor 2 in front of lambda: it comes from the 1/(2N) scaling of the
data term and is fixed here once for the whole package. lambda is selected on
a validation split; the final fit is evaluated by Monte Carlo on fresh test
samples (plain squared error, no 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from . import rng
from .hermite import LinkSpec, link_eval
from .model import LearnerModel, TargetModel, learner_eval, target_eval

_RESIDUAL_TOL = 1e-8
_EVAL_BLOCK = 100_000


@dataclass(frozen=True)
class RidgeConfig:
    N: int = 4000
    lambda_grid: tuple = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    N_val: int = 2000
    N_test: int = 100_000
    target_eps: float = 0.05

    def __post_init__(self):
        if not self.lambda_grid:
            raise ValueError("lambda_grid must be nonempty")
        if any(l < 0 for l in self.lambda_grid):
            raise ValueError("lambda values must be nonnegative")
        if list(self.lambda_grid) != sorted(self.lambda_grid):
            raise ValueError("lambda_grid must be sorted ascending")


@dataclass(frozen=True)
class TestError:
    mse: float
    mse_se: float
    l1: float
    l1_se: float


class RankDeficientError(np.linalg.LinAlgError):
    """The unregularized normal equations are (numerically) singular."""


def design_matrix(V: np.ndarray, link: LinkSpec, samples: np.ndarray) -> np.ndarray:
    """Phi with Phi[n, j] = phi(v_j . x_n); V rows are neurons."""
    if samples.shape[1] != V.shape[1]:
        raise ValueError(
            f"samples have dimension {samples.shape[1]}, neurons {V.shape[1]}"
        )
    return link_eval(link, samples @ V.T)


def ridge_fit(Phi: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Solve (Phi^T Phi/N + 2 lam I) a = Phi^T y/N, verifying the residual."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    N, m = Phi.shape
    G = Phi.T @ Phi / N + 2.0 * lam * np.eye(m)
    b = Phi.T @ y / N
    try:
        a = np.linalg.solve(G, b)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError(f"normal equations singular at lambda={lam}") from exc
    resid = np.linalg.norm(G @ a - b)
    if resid > _RESIDUAL_TOL * max(np.linalg.norm(b), 1e-300):
        raise RankDeficientError(
            f"normal-equation residual {resid:.3e} at lambda={lam}; rank-deficient design"
        )
    return a


def select_lambda(
    V: np.ndarray,
    link: LinkSpec,
    target: TargetModel,
    cfg: RidgeConfig,
    seed: int = 0,
) -> tuple[np.ndarray, float, float]:
    """Fit on N fresh samples per lambda, pick the validation-MSE minimizer."""
    gen_fit = rng.substream(seed, rng.RIDGE_FIT)
    gen_val = rng.substream(seed, rng.RIDGE_VAL)
    x_fit = gen_fit.standard_normal((cfg.N, target.d))
    y_fit = target_eval(target, x_fit)
    x_val = gen_val.standard_normal((cfg.N_val, target.d))
    y_val = target_eval(target, x_val)

    Phi_fit = design_matrix(V, link, x_fit)
    Phi_val = design_matrix(V, link, x_val)

    best = None
    for lam in cfg.lambda_grid:
        a = ridge_fit(Phi_fit, y_fit, lam)
        val_mse = float(np.mean((y_val - Phi_val @ a) ** 2))
        if best is None or val_mse < best[2]:
            best = (a, lam, val_mse)
    return best


def eval_test_error(
    learner: LearnerModel,
    target: TargetModel,
    N_test: int,
    gen: np.random.Generator,
) -> TestError:
    """Monte Carlo E(f - f*)^2 and E|f - f*| with standard errors."""
    sq_sum = sq_sumsq = ab_sum = ab_sumsq = 0.0
    done = 0
    while done < N_test:
        n = min(_EVAL_BLOCK, N_test - done)
        x = gen.standard_normal((n, target.d))
        diff = learner_eval(learner, target.link, x) - target_eval(target, x)
        sq = diff * diff
        ab = np.abs(diff)
        sq_sum += float(sq.sum())
        sq_sumsq += float((sq * sq).sum())
        ab_sum += float(ab.sum())
        ab_sumsq += float((ab * ab).sum())
        done += n
    mse = sq_sum / N_test
    l1 = ab_sum / N_test
    mse_var = max(sq_sumsq / N_test - mse * mse, 0.0)
    l1_var = max(ab_sumsq / N_test - l1 * l1, 0.0)
    return TestError(
        mse=mse,
        mse_se=sqrt(mse_var / N_test),
        l1=l1,
        l1_se=sqrt(l1_var / N_test),
    )


def indicator_weights(V: np.ndarray, P: int) -> np.ndarray:
    """a* of the stage-2 construction: for each direction p, one unit weight
    on the neuron best aligned with it (teacher frame = first P coords)."""
    a = np.zeros(V.shape[0])
    for p in range(P):
        a[int(np.argmax(V[:, p] ** 2))] = 1.0
    return a
