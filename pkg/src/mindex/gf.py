"""Deterministic reference dynamics for the squared coordinates of a neuron.

On the a0^-1 time scale the squared coordinates w_k = v_k^2 of a single
neuron follow

    dw_k/dtau = 4 1{k <= P} (1 + L w_k^{L-1}) w_k
              - 4 (S1 + L SL) w_k,      S1 = sum_{k<=P} w_k, SL = sum_{k<=P} w_k^L,

whose right-hand side sums to zero on the simplex sum_k w_k = 1. With the
L-terms dropped (pure second-order link) the flow leaves every ratio
w_p / w_q with p, q <= P invariant, which is exactly why second-order terms
alone cannot identify directions.

Integration is fixed-step RK4 with per-step renormalization of sum w to 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FlowState:
    w: np.ndarray
    tau: float


@dataclass(frozen=True)
class FlowTrajectory:
    tau: np.ndarray          # (n,)
    w: np.ndarray            # (n, d)
    P: int

    def __len__(self) -> int:
        return self.tau.shape[0]

    def state(self, k: int) -> FlowState:
        return FlowState(w=self.w[k], tau=float(self.tau[k]))

    def norm_ratio(self) -> np.ndarray:
        rel = self.w[:, : self.P].sum(axis=1)
        resid = 1.0 - rel
        return np.where(resid > 0.0, rel / np.maximum(resid, 1e-300), np.inf)

    def first_crossing(self, level: float) -> float | None:
        """First tau where the norm ratio reaches `level` (linear interp)."""
        r = self.norm_ratio()
        above = r >= level
        if not above.any():
            return None
        k = int(np.argmax(above))
        if k == 0:
            return float(self.tau[0])
        t0, t1, r0, r1 = self.tau[k - 1], self.tau[k], r[k - 1], r[k]
        return float(t0 + (level - r0) / (r1 - r0) * (t1 - t0))


def gf_rhs(w: np.ndarray, P: int, L: int, include_higher_order: bool = True) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    ind = np.zeros_like(w)
    ind[:P] = 1.0
    s1 = float(w[:P].sum())
    if include_higher_order:
        sL = float(np.sum(w[:P] ** L))
        gain = 4.0 * ind * (1.0 + L * w ** (L - 1)) * w
        drag = 4.0 * (s1 + L * sL) * w
    else:
        gain = 4.0 * ind * w
        drag = 4.0 * s1 * w
    return gain - drag


def integrate(
    w0: np.ndarray,
    P: int,
    L: int,
    tau_max: float,
    dt: float,
    include_higher_order: bool = True,
    record_stride: int = 1,
) -> FlowTrajectory:
    """RK4 trajectory from w0, sampled every record_stride steps."""
    w = np.asarray(w0, dtype=np.float64).copy()
    if np.any(w < 0):
        raise ValueError("squared coordinates must be nonnegative")
    w /= w.sum()
    n_steps = int(round(tau_max / dt))
    taus = [0.0]
    states = [w.copy()]
    for step in range(1, n_steps + 1):
        k1 = gf_rhs(w, P, L, include_higher_order)
        k2 = gf_rhs(w + 0.5 * dt * k1, P, L, include_higher_order)
        k3 = gf_rhs(w + 0.5 * dt * k2, P, L, include_higher_order)
        k4 = gf_rhs(w + dt * k3, P, L, include_higher_order)
        w = w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.any(w < -1e-10):
            raise RuntimeError(f"integrator failure: negative mass at step {step}")
        np.clip(w, 0.0, None, out=w)
        w /= w.sum()
        if step % record_stride == 0 or step == n_steps:
            taus.append(step * dt)
            states.append(w.copy())
    return FlowTrajectory(tau=np.array(taus), w=np.array(states), P=P)


def stage2_escape_time(
    w1_0: float, L: int, c_gap: float = 1.0, target: float = 0.75
) -> float:
    """Hitting time of `target` for the 1-D lower-bound flow dw = c L w^L dtau."""
    if w1_0 <= 0:
        raise ValueError(f"initial value must be positive, got {w1_0}")
    if w1_0 >= target:
        return 0.0

    def rhs(y: float) -> float:
        return c_gap * L * y**L

    # closed-form estimate sets the step; RK4 + linear crossing refinement
    est = (w1_0 ** (1 - L) - target ** (1 - L)) / ((L - 1) * c_gap * L)
    dt = est / 4000.0
    w, tau = w1_0, 0.0
    while True:
        k1 = rhs(w)
        k2 = rhs(w + 0.5 * dt * k1)
        k3 = rhs(w + 0.5 * dt * k2)
        k4 = rhs(w + dt * k3)
        w_next = w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if w_next >= target:
            return tau + dt * (target - w) / (w_next - w)
        w, tau = w_next, tau + dt
        if tau > 100 * est:
            raise RuntimeError("escape-time integration did not reach the target")
