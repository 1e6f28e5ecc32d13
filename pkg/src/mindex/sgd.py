"""Stage 1: online spherical SGD over the first layer.

All neurons update from the same fresh sample each step, with step size
eta/a0 applied to the spherically projected per-sample gradient, followed by
renormalization. Training tracks, per neuron, the teacher-frame correlation
profile (for canonical teachers these are just the first P coordinates; for
rotated teachers the entries of V*^T v), and per teacher direction p the
maximum squared correlation over neurons plus its per-step EMA. The run stops
early once every direction's EMA reaches theta_rec.

The recorded rho = 2 ||v_<=P||^2 + 2 L ||v_<=P||_{2L}^{2L} is the
normalization-drift term of the coordinate dynamics; for the non-pair links
it is reported with the L = 2 convention (monitoring only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, rng
from .gradients import per_sample_grad_v, spherical_project
from .model import LearnerModel, TargetModel

_DEGENERATE_NORM = 1e-12


class DegenerateStepError(RuntimeError):
    """A neuron collapsed to (near) zero norm before renormalization."""


@dataclass(frozen=True)
class TrainConfig:
    """Stage-1 hyperparameters. Exactly one of eta, eta_c must be set;
    eta_c means eta = eta_c / d."""

    T_max: int
    a0: float
    eta: float | None = None
    eta_c: float | None = None
    theta_rec: float = 0.95
    ema_decay: float = 0.99
    diag_stride: int = 50
    seed: int = 0

    def __post_init__(self):
        if (self.eta is None) == (self.eta_c is None):
            raise ValueError("set exactly one of eta, eta_c")
        if not 0 <= self.theta_rec < 1:
            raise ValueError(f"theta_rec must be in [0, 1), got {self.theta_rec}")
        if not 0 < self.ema_decay < 1:
            raise ValueError(f"ema_decay must be in (0, 1), got {self.ema_decay}")
        if self.T_max < 0 or self.diag_stride < 1 or self.a0 <= 0:
            raise ValueError("T_max >= 0, diag_stride >= 1 and a0 > 0 required")

    def step_size(self, d: int) -> float:
        return self.eta if self.eta is not None else self.eta_c / d


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Snapshot at step t (arrays: norm_ratio/rho per neuron, rest per p)."""

    t: int
    norm_ratio: np.ndarray
    rho: np.ndarray
    max_corr: np.ndarray
    ema_corr: np.ndarray
    share: np.ndarray
    gap_ratios: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Trajectory:
    """Diagnostics records stacked along axis 0."""

    t: np.ndarray
    norm_ratio: np.ndarray
    rho: np.ndarray
    max_corr: np.ndarray
    ema_corr: np.ndarray
    share: np.ndarray

    def __len__(self) -> int:
        return self.t.shape[0]

    def record(self, k: int) -> DiagnosticsRecord:
        return DiagnosticsRecord(
            t=int(self.t[k]),
            norm_ratio=self.norm_ratio[k],
            rho=self.rho[k],
            max_corr=self.max_corr[k],
            ema_corr=self.ema_corr[k],
            share=self.share[k],
        )


def _teacher_frame(learner: LearnerModel, target: TargetModel):
    if target.is_canonical:
        return learner.V[:, : target.P]
    return learner.V @ target.directions


def compute_diagnostics(
    learner: LearnerModel,
    target_P: int,
    L: int,
    directions: np.ndarray | None = None,
    tracked_pairs: list | None = None,
    t: int = 0,
) -> DiagnosticsRecord:
    """Diagnostics of the current learner. `directions` rotates into the
    teacher frame (columns = teacher directions); canonical if omitted.
    tracked_pairs are (neuron i, coord p, coord q) triples for gap ratios."""
    C = learner.V[:, :target_P] if directions is None else learner.V @ directions
    C2 = C * C
    rel = C2.sum(axis=1)
    resid = 1.0 - rel
    norm_ratio = np.where(resid > 0.0, rel / np.maximum(resid, 1e-300), np.inf)
    rho = 2.0 * rel + 2.0 * L * np.sum(C2**L, axis=1)
    max_corr = np.max(C2, axis=0)
    gaps = {}
    for (i, p, q) in tracked_pairs or []:
        gaps[(i, p, q)] = float(C2[i, p] / C2[i, q])
    return DiagnosticsRecord(
        t=t,
        norm_ratio=norm_ratio,
        rho=rho,
        max_corr=max_corr,
        ema_corr=max_corr.copy(),
        share=np.max(C2 / np.maximum(rel, 1e-300)[:, None], axis=0),
        gap_ratios=gaps,
    )


def sgd_step(
    learner: LearnerModel, target: TargetModel, x: np.ndarray, cfg: TrainConfig
) -> LearnerModel:
    """One online step: all neurons update from the shared sample x."""
    scale = cfg.step_size(learner.d) / cfg.a0
    if scale == 0.0:
        return learner.copy()
    V = learner.V.copy()
    for i in range(learner.m):
        g = spherical_project(learner.V[i], per_sample_grad_v(learner, target, x, i))
        vhat = learner.V[i] - scale * g
        norm = float(np.linalg.norm(vhat))
        if norm < _DEGENERATE_NORM:
            raise DegenerateStepError(f"neuron {i} collapsed (norm {norm:.3e})")
        V[i] = vhat / norm
    return LearnerModel(a=learner.a.copy(), V=V)


def train_stage1(
    learner: LearnerModel,
    target: TargetModel,
    cfg: TrainConfig,
    backend: str | None = None,
) -> tuple[LearnerModel, Trajectory, int | None]:
    """Run stage 1. Returns (trained learner, trajectory, stop step or None).

    Fresh i.i.d. samples come from the (seed, SAMPLES) substream; identical
    (seed, config) always reproduce the same trajectory.
    """
    if learner.d != target.d:
        raise ValueError(f"learner dimension {learner.d} != target dimension {target.d}")
    _, kernel = _kernels.select_backend(backend)
    m, d, P = learner.m, learner.d, target.P
    link = target.link
    kind = _kernels.LINK_KIND_CODES[link.kind]
    L = link.L if link.kind == "h2_h2L" else 2

    max_records = cfg.T_max // cfg.diag_stride + 2
    rec_t = np.zeros(max_records, dtype=np.int64)
    rec_norm_ratio = np.zeros((max_records, m))
    rec_rho = np.zeros((max_records, m))
    rec_maxcorr = np.zeros((max_records, P))
    rec_ema = np.zeros((max_records, P))
    rec_share = np.zeros((max_records, P))

    V = np.ascontiguousarray(learner.V, dtype=np.float64).copy()
    a = np.ascontiguousarray(learner.a, dtype=np.float64)
    vstar = None if target.is_canonical else np.ascontiguousarray(target.directions.T)
    gen = rng.substream(cfg.seed, rng.SAMPLES)

    stop_step, nrec, status = kernel.run_stage1(
        V,
        a,
        vstar,
        P,
        kind,
        L,
        cfg.step_size(d),
        cfg.a0,
        cfg.theta_rec,
        cfg.ema_decay,
        cfg.diag_stride,
        cfg.T_max,
        gen,
        rec_t,
        rec_norm_ratio,
        rec_rho,
        rec_maxcorr,
        rec_ema,
        rec_share,
    )
    if status == _kernels.STATUS_DEGENERATE:
        raise DegenerateStepError(f"neuron collapsed at step {stop_step}")
    trajectory = Trajectory(
        t=rec_t[:nrec].copy(),
        norm_ratio=rec_norm_ratio[:nrec].copy(),
        rho=rec_rho[:nrec].copy(),
        max_corr=rec_maxcorr[:nrec].copy(),
        ema_corr=rec_ema[:nrec].copy(),
        share=rec_share[:nrec].copy(),
    )
    trained = LearnerModel(a=a.copy(), V=V)
    return trained, trajectory, (stop_step if stop_step >= 0 else None)
