"""Teacher and student models over standard Gaussian inputs.

The teacher is f*(x) = sum_k phi(v*_k . x) with column-orthonormal directions
V* (d x P). The student is a width-m two-layer network f(x) = sum_j a_j
phi(v_j . x) whose first-layer neurons live on the unit sphere. Neurons are
stored as rows of V (m x d) so the training kernels can walk them
contiguously.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import rng
from .hermite import LinkSpec, link_eval, link_from_config, link_to_config

_ORTHO_TOL = 1e-12
_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class TargetModel:
    """Teacher: directions is d x P with orthonormal columns."""

    d: int
    P: int
    link: LinkSpec
    directions: np.ndarray

    def __post_init__(self):
        if not 1 <= self.P <= self.d:
            raise ValueError(f"need 1 <= P <= d, got P={self.P}, d={self.d}")
        if self.directions.shape != (self.d, self.P):
            raise ValueError(
                f"directions must be {self.d}x{self.P}, got {self.directions.shape}"
            )
        gram = self.directions.T @ self.directions
        if not np.allclose(gram, np.eye(self.P), atol=1e-10):
            raise ValueError("teacher directions are not orthonormal")

    @property
    def is_canonical(self) -> bool:
        expected = np.eye(self.d, self.P)
        return bool(np.array_equal(self.directions, expected))


@dataclass
class LearnerModel:
    """Student: a has length m, V is m x d with unit-norm rows."""

    a: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        if self.a.ndim != 1 or self.V.ndim != 2 or self.a.shape[0] != self.V.shape[0]:
            raise ValueError("a must be (m,) and V must be (m, d)")
        norms = np.linalg.norm(self.V, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("first-layer neurons must be unit-norm")

    @property
    def m(self) -> int:
        return self.V.shape[0]

    @property
    def d(self) -> int:
        return self.V.shape[1]

    def copy(self) -> "LearnerModel":
        return LearnerModel(a=self.a.copy(), V=self.V.copy())


@dataclass(frozen=True)
class InitConfig:
    a0: float
    seed: int

    def __post_init__(self):
        if self.a0 <= 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")


def make_directions(d: int, P: int, mode: str, seed: int = 0) -> np.ndarray:
    """Teacher directions: canonical basis or the Q-factor of a Gaussian matrix.

    The QR sign is fixed (diag(R) > 0) so a given seed always yields the same
    factor.
    """
    if not 1 <= P <= d:
        raise ValueError(f"need 1 <= P <= d, got P={P}, d={d}")
    if mode == "canonical":
        return np.eye(d, P)
    if mode == "random_orthonormal":
        gen = rng.substream(seed, rng.DIRECTIONS)
        g = gen.standard_normal((d, P))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))
        return q
    raise ValueError(f"unknown mode {mode!r}")


def sample_input(d: int, gen: np.random.Generator) -> np.ndarray:
    return gen.standard_normal(d)


def target_eval(target: TargetModel, x: np.ndarray) -> float:
    if x.shape[-1] != target.d:
        raise ValueError(f"input has dimension {x.shape[-1]}, expected {target.d}")
    proj = x @ target.directions
    return link_eval(target.link, proj).sum(axis=-1)


def learner_eval(learner: LearnerModel, link: LinkSpec, x: np.ndarray) -> float:
    if x.shape[-1] != learner.d:
        raise ValueError(f"input has dimension {x.shape[-1]}, expected {learner.d}")
    proj = x @ learner.V.T
    return (link_eval(link, proj) * learner.a).sum(axis=-1)


def init_network(d: int, m: int, cfg: InitConfig) -> LearnerModel:
    """a_i = a0, v_i uniform on the sphere, one RNG substream per neuron."""
    if m < 1:
        raise ValueError(f"width must be >= 1, got {m}")
    V = np.empty((m, d))
    for i in range(m):
        g = rng.substream(cfg.seed, rng.INIT, i).standard_normal(d)
        V[i] = g / np.linalg.norm(g)
    return LearnerModel(a=np.full(m, cfg.a0, dtype=np.float64), V=V)


def save_learner(learner: LearnerModel, target: TargetModel, path_prefix: str) -> None:
    """Write <prefix>.json (header) and <prefix>.bin (a then V, row-major f64)."""
    header = {
        "d": learner.d,
        "P": target.P,
        "m": learner.m,
        "link": link_to_config(target.link),
    }
    with open(path_prefix + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(path_prefix + ".bin", "wb") as fh:
        fh.write(learner.a.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(learner.V, dtype="<f8").tobytes())


def load_learner(path_prefix: str) -> tuple[LearnerModel, dict]:
    with open(path_prefix + ".json") as fh:
        header = json.load(fh)
    m, d = header["m"], header["d"]
    raw = np.fromfile(path_prefix + ".bin", dtype="<f8")
    if raw.size != m + m * d:
        raise ValueError(f"snapshot {path_prefix}.bin has {raw.size} values, expected {m + m * d}")
    a = raw[:m].copy()
    V = raw[m:].reshape(m, d).copy()
    header = dict(header, link=link_from_config(header["link"]))
    return LearnerModel(a=a, V=V), header
