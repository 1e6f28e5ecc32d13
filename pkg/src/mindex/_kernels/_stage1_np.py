"""NumPy implementation of the stage-1 training loop.

Semantics shared with the compiled twin (_stage1_cy):

  * one fresh sample x_t per step, shared by all neurons;
  * per neuron k: vhat = v_k + (eta/a0) a_k r phi'(v_k.x) (x - (v_k.x) v_k),
    i.e. minus the spherically projected per-sample gradient, then
    renormalize (r is the residual f*(x) - f(x) from the pre-update V);
  * teacher-frame correlations C = V Vstar^T are tracked incrementally every
    step (they drive the per-step EMA of max_p correlations and early
    stopping) and re-synchronized from V at every diagnostics record;
  * diagnostics are recorded at step 0, every diag_stride steps, and at the
    stopping step.

Both kernels draw x_t with the ziggurat standard-normal fill of the supplied
Generator, so for a fixed seed they consume identical streams.
"""

from __future__ import annotations

import numpy as np

STATUS_OK = 0
STATUS_DEGENERATE = 1

_DEGENERATE_NORM = 1e-12


def _phi_dphi(kind: int, L: int, z: np.ndarray):
    """phi(z), phi'(z) for kind 0=h2_h2L, 1=h2_only, 2=abs."""
    if kind == 2:
        return np.abs(z), np.sign(z)
    sqrt2 = np.sqrt(2.0)
    h2 = (z * z - 1.0) / sqrt2
    d2 = sqrt2 * z
    if kind == 1:
        return h2, d2
    # probabilists' recurrence up to degree 2L, normalized at the end
    fact = 1.0
    prev = np.ones_like(z)
    cur = z.copy()
    for n in range(1, 2 * L):
        prev, cur = cur, z * cur - n * prev
        fact *= n + 1
    # cur = He_{2L}, prev = He_{2L-1}, fact = (2L)!
    inv = 1.0 / np.sqrt(fact)
    return h2 + cur * inv, d2 + (2 * L) * prev * inv


def run_stage1(
    V: np.ndarray,
    a: np.ndarray,
    vstar: np.ndarray | None,
    P: int,
    link_kind: int,
    L: int,
    eta: float,
    a0: float,
    theta_rec: float,
    ema_decay: float,
    diag_stride: int,
    t_max: int,
    gen: np.random.Generator,
    rec_t: np.ndarray,
    rec_norm_ratio: np.ndarray,
    rec_rho: np.ndarray,
    rec_maxcorr: np.ndarray,
    rec_ema: np.ndarray,
    rec_share: np.ndarray,
) -> tuple[int, int, int]:
    """Run the loop in place on V. Returns (stop_step, n_records, status)."""
    m, d = V.shape
    scale = eta / a0
    canonical = vstar is None

    C = V[:, :P].copy() if canonical else V @ vstar.T
    ema = np.max(C * C, axis=0)
    diag_L = L if link_kind == 0 else 2

    nrec = 0
    t = 0
    while True:
        stop = bool(np.min(ema) >= theta_rec)
        if stop or t == t_max or t % diag_stride == 0:
            C = V[:, :P].copy() if canonical else V @ vstar.T
            C2 = C * C
            rel = C2.sum(axis=1)
            resid = 1.0 - rel
            rec_t[nrec] = t
            with np.errstate(divide="ignore"):
                rec_norm_ratio[nrec] = np.where(resid > 0.0, rel / np.maximum(resid, 1e-300), np.inf)
            rec_rho[nrec] = 2.0 * rel + 2.0 * diag_L * np.sum(C2**diag_L, axis=1)
            rec_maxcorr[nrec] = np.max(C2, axis=0)
            rec_ema[nrec] = ema
            rec_share[nrec] = np.max(C2 / np.maximum(rel, 1e-300)[:, None], axis=0)
            nrec += 1
        if stop:
            return t, nrec, STATUS_OK
        if t == t_max:
            return -1, nrec, STATUS_OK

        x = gen.standard_normal(d)
        if scale != 0.0:
            s = V @ x
            phi_s, dphi_s = _phi_dphi(link_kind, L, s)
            u = x[:P] if canonical else vstar @ x
            phi_u, _ = _phi_dphi(link_kind, L, u)
            r = float(phi_u.sum() - a @ phi_s)
            g = scale * a * r * dphi_s

            V += g[:, None] * (x[None, :] - s[:, None] * V)
            C += g[:, None] * (u[None, :] - s[:, None] * C)
            norms = np.linalg.norm(V, axis=1)
            if float(np.min(norms)) < _DEGENERATE_NORM:
                return t, nrec, STATUS_DEGENERATE
            V /= norms[:, None]
            C /= norms[:, None]

        ema = ema_decay * ema + (1.0 - ema_decay) * np.max(C * C, axis=0)
        t += 1
