"""Closed-form population loss and gradients of the half-MSE objective.

With l(x) = (1/2)(f*(x) - f(x))^2 and rho-correlated projections reduced via
E[phi(z) phi(z')] = sum_l phihat_l^2 rho^l =: M(rho), the population loss
splits into

    total = const_term - cross_term + self_term,

    const_term = (1/2) sum_{k1,k2} M(<v*_k1, v*_k2>)
    cross_term = sum_j a_j sum_k M(<v*_k, v_j>)
    self_term  = (1/2) sum_{j1,j2} a_j1 a_j2 M(<v_j1, v_j2>)

The gradient in v_i is exact, including the learner-learner interaction; the
teacher-only expression plus a ball of radius 2 L m a0^2 (for |a_j| <= a0,
phi = h2 + h_2L) is recovered as a testable bound rather than baked in.

The *_raw functions accept plain arrays without the unit-norm constraint, so
finite-difference probes can step off the sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hermite import LinkSpec, link_deriv
from .model import LearnerModel, TargetModel, learner_eval, target_eval

_PROJ_TOL = 1e-9


@dataclass(frozen=True)
class PopulationLossReport:
    total: float
    const_term: float
    cross_term: float
    self_term: float


def _moment(link: LinkSpec, rho: np.ndarray) -> np.ndarray:
    """Elementwise M(rho) = sum_l phihat_l^2 rho^l."""
    out = np.zeros_like(rho)
    for l, c in link.coeffs.items():
        out += (c * c) * rho**l
    return out


def _moment_deriv(link: LinkSpec, rho: np.ndarray) -> np.ndarray:
    """Elementwise M'(rho) = sum_l l phihat_l^2 rho^(l-1)."""
    out = np.zeros_like(rho)
    for l, c in link.coeffs.items():
        if l >= 1:
            out += (l * c * c) * rho ** (l - 1)
    return out


def population_loss_raw(
    a: np.ndarray, V: np.ndarray, link: LinkSpec, directions: np.ndarray
) -> PopulationLossReport:
    """Loss terms for arbitrary (a, V); V rows need not be unit-norm."""
    cross_corr = directions.T @ V.T            # P x m
    teacher_gram = directions.T @ directions   # P x P
    learner_gram = V @ V.T                     # m x m
    const_term = 0.5 * float(np.sum(_moment(link, teacher_gram)))
    cross_term = float(a @ _moment(link, cross_corr).sum(axis=0))
    self_term = 0.5 * float(a @ _moment(link, learner_gram) @ a)
    return PopulationLossReport(
        total=const_term - cross_term + self_term,
        const_term=const_term,
        cross_term=cross_term,
        self_term=self_term,
    )


def population_loss(learner: LearnerModel, target: TargetModel) -> PopulationLossReport:
    if learner.d != target.d:
        raise ValueError(f"learner dimension {learner.d} != target dimension {target.d}")
    return population_loss_raw(learner.a, learner.V, target.link, target.directions)


def population_grad_v_raw(
    a: np.ndarray, V: np.ndarray, link: LinkSpec, directions: np.ndarray, i: int
) -> np.ndarray:
    teacher_corr = directions.T @ V[i]
    teacher_part = directions @ _moment_deriv(link, teacher_corr)
    # the j = i term of the plain sum coincides with the self-pair diagonal
    weights = a * _moment_deriv(link, V @ V[i])
    return a[i] * (weights @ V - teacher_part)


def population_grad_v(learner: LearnerModel, target: TargetModel, i: int) -> np.ndarray:
    """Exact gradient of the population loss with respect to v_i."""
    if not 0 <= i < learner.m:
        raise ValueError(f"neuron index {i} out of range for width {learner.m}")
    return population_grad_v_raw(learner.a, learner.V, target.link, target.directions, i)


def teacher_only_grad_v(learner: LearnerModel, target: TargetModel, i: int) -> np.ndarray:
    """Decoupled approximation: teacher terms of the gradient only."""
    teacher_corr = target.directions.T @ learner.V[i]
    part = target.directions @ _moment_deriv(target.link, teacher_corr)
    return -learner.a[i] * part


def per_sample_loss(learner: LearnerModel, target: TargetModel, x: np.ndarray) -> float:
    resid = target_eval(target, x) - learner_eval(learner, target.link, x)
    return 0.5 * float(resid**2)


def per_sample_grad_v(
    learner: LearnerModel, target: TargetModel, x: np.ndarray, i: int
) -> np.ndarray:
    """Exact gradient of l(x) in v_i: -a_i (f*(x) - f(x)) phi'(v_i . x) x."""
    if not 0 <= i < learner.m:
        raise ValueError(f"neuron index {i} out of range for width {learner.m}")
    resid = target_eval(target, x) - learner_eval(learner, target.link, x)
    slope = link_deriv(target.link, float(learner.V[i] @ x))
    return -learner.a[i] * resid * slope * x


def spherical_project(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """(I - v v^T) g for unit-norm v."""
    nv = np.linalg.norm(v)
    if abs(nv - 1.0) > _PROJ_TOL:
        raise ValueError(f"v must be unit-norm, got ||v|| = {nv}")
    return g - (g @ v) * v
