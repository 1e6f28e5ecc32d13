"""Normalized probabilists' Hermite polynomials and link functions.

Conventions used throughout the package:

    He_{l+1}(z) = z He_l(z) - l He_{l-1}(z),   He_0 = 1, He_1 = z,
    h_l = He_l / sqrt(l!),

so that E[h_k(z) h_j(z)] = 1{k=j} for z ~ N(0,1), and for rho-correlated
standard Gaussians (z, z'),

    E[h_k(z) h_j(z')] = 1{k=j} rho^k.

A link function phi is represented by its kind plus the map l -> phihat_l of
Hermite coefficients phihat_l = E[phi(z) h_l(z)]. Three kinds are supported:

    h2_h2L : phi = h_2 + h_{2L}            (exact coefficients {2: 1, 2L: 1})
    h2_only: phi = h_2                     (exact coefficient  {2: 1})
    abs    : phi = |z|                     (even, coefficients decay in l)

The key identity consumed by the loss/gradient modules is

    E[phi(z) phi(z')] = sum_l phihat_l^2 rho^l        (rho-correlated z, z').
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial, sqrt

import numpy as np

# Beyond this degree the |z| coefficients are below every tolerance used by
# the tests, and numpy's Gauss node computations start to lose stability.
DEGREE_CAP = 32

_SQRT2 = sqrt(2.0)


def hermite_eval(l: int, z):
    """Evaluate the normalized Hermite polynomial h_l at z (scalar or array)."""
    if l < 0:
        raise ValueError(f"degree must be >= 0, got {l}")
    z = np.asarray(z, dtype=np.float64)
    if l == 0:
        out = np.ones_like(z)
        return out if out.ndim else float(out)
    prev = np.ones_like(z)
    cur = z.copy()
    for n in range(1, l):
        prev, cur = cur, z * cur - n * prev
    out = cur / sqrt(factorial(l))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LinkSpec:
    """A scalar link function with cached Hermite coefficients.

    Immutable; safe to share across threads. Build instances with
    hermite_pair(), h2_only() or abs_value(), not directly.
    """

    kind: str                      # "h2_h2L" | "h2_only" | "abs"
    L: int | None = None           # only for h2_h2L
    coeffs: dict = field(default_factory=dict, repr=False)

    @property
    def max_cached_degree(self) -> int:
        return max(self.coeffs)

    def coefficient(self, l: int) -> float:
        return self.coeffs.get(l, 0.0)


def hermite_pair(L: int) -> LinkSpec:
    """phi = h_2 + h_{2L} with L >= 2."""
    if L < 2:
        raise ValueError(f"hermite_pair requires L >= 2, got {L}")
    return LinkSpec(kind="h2_h2L", L=L, coeffs={2: 1.0, 2 * L: 1.0})


def h2_only() -> LinkSpec:
    """phi = h_2 (pure second-order model)."""
    return LinkSpec(kind="h2_only", coeffs={2: 1.0})


def abs_value(max_degree: int = DEGREE_CAP) -> LinkSpec:
    """phi = |z|, coefficients computed by quadrature up to max_degree."""
    coeffs = hermite_coeffs(LinkSpec(kind="abs"), max_degree)
    return LinkSpec(kind="abs", coeffs=coeffs)


def link_eval(link: LinkSpec, z):
    """phi(z); z may be a scalar or an array."""
    z = np.asarray(z, dtype=np.float64)
    if link.kind == "abs":
        out = np.abs(z)
    elif link.kind == "h2_only":
        out = (z * z - 1.0) / _SQRT2
    elif link.kind == "h2_h2L":
        out = (z * z - 1.0) / _SQRT2 + hermite_eval(2 * link.L, z)
    else:
        raise ValueError(f"unknown link kind {link.kind!r}")
    return out if np.ndim(out) else float(out)


def link_deriv(link: LinkSpec, z):
    """phi'(z); for |z| the derivative at 0 is defined as 0."""
    z = np.asarray(z, dtype=np.float64)
    if link.kind == "abs":
        out = np.sign(z)
    elif link.kind == "h2_only":
        out = _SQRT2 * z
    elif link.kind == "h2_h2L":
        # h_l' = sqrt(l) h_{l-1}
        out = _SQRT2 * z + sqrt(2 * link.L) * hermite_eval(2 * link.L - 1, z)
    else:
        raise ValueError(f"unknown link kind {link.kind!r}")
    return out if np.ndim(out) else float(out)


def gauss_hermite(n: int):
    """Nodes and weights (w summing to 1) for E_{z~N(0,1)}[f(z)] = sum w f(x)."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / np.sqrt(2.0 * np.pi)


def _coeff_quadrature_smooth(link: LinkSpec, l: int, n: int) -> float:
    x, w = gauss_hermite(n)
    return float(np.sum(w * link_eval(link, x) * hermite_eval(l, x)))


def _coeff_quadrature_abs(l: int, n: int) -> float:
    # E[|z| h_l(z)] = 2/sqrt(2 pi) * int_0^inf z h_l(z) exp(-z^2/2) dz.
    # Substituting u = z^2/2 gives int_0^inf h_l(sqrt(2u)) exp(-u) du, a
    # polynomial integrand for even l, so Gauss-Laguerre is exact once
    # n > l/2. (Plain Gauss-Hermite stalls near 1e-3 on the |z| kink.)
    if l % 2 == 1:
        return 0.0
    u, w = np.polynomial.laguerre.laggauss(n)
    z = np.sqrt(2.0 * u)
    return float(2.0 / np.sqrt(2.0 * np.pi) * np.sum(w * hermite_eval(l, z)))


def hermite_coeffs(link: LinkSpec, max_degree: int, cap: int = DEGREE_CAP) -> dict:
    """Quadrature estimates of phihat_l for l = 0..max_degree.

    Node counts are doubled until the residual |phihat_l(n) - phihat_l(2n)|
    drops below 1e-10 for polynomial links and 1e-8 for |z|.
    """
    if max_degree < 0:
        raise ValueError(f"max_degree must be >= 0, got {max_degree}")
    if max_degree > cap:
        raise ValueError(f"max_degree {max_degree} exceeds cap {cap}")
    polynomial = link.kind in ("h2_h2L", "h2_only")
    tol = 1e-10 if polynomial else 1e-8
    out = {}
    for l in range(max_degree + 1):
        n = 32
        est = _coeff_quadrature_smooth(link, l, n) if polynomial else _coeff_quadrature_abs(l, n)
        while True:
            refined = (
                _coeff_quadrature_smooth(link, l, 2 * n)
                if polynomial
                else _coeff_quadrature_abs(l, 2 * n)
            )
            if abs(refined - est) < tol:
                break
            if 2 * n > 128:
                raise RuntimeError(f"quadrature for phihat_{l} did not converge")
            est, n = refined, 2 * n
        out[l] = refined
    return out


def correlated_moment(link: LinkSpec, rho: float) -> float:
    """E[phi(z) phi(z')] for rho-correlated standard Gaussians z, z'."""
    if abs(rho) > 1.0 + 1e-12:
        raise ValueError(f"|rho| must be <= 1, got {rho}")
    rho = min(1.0, max(-1.0, rho))
    return _moment_series(link.coeffs, rho)


def _moment_series(coeffs: dict, rho: float) -> float:
    return float(sum(c * c * rho**l for l, c in coeffs.items()))


def link_to_config(link: LinkSpec) -> dict:
    cfg = {"kind": link.kind}
    if link.kind == "h2_h2L":
        cfg["L"] = link.L
    return cfg


def link_from_config(cfg: dict) -> LinkSpec:
    kind = cfg["kind"]
    if kind == "h2_h2L":
        return hermite_pair(int(cfg["L"]))
    if kind == "h2_only":
        return h2_only()
    if kind == "abs":
        return abs_value()
    raise ValueError(f"unknown link kind {kind!r}")
