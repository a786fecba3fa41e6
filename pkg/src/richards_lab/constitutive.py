"""Van Genuchten--Mualem water content and hydraulic conductivity.

All functions are vectorized over the pressure head ``psi`` and return
arrays of the same shape (0-d arrays for scalar input are converted back
to Python floats).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar


@dataclass(frozen=True)
class VanGenuchtenParams:
    """Soil parameters of the van Genuchten--Mualem model.

    Units follow the benchmarks: meters and days, so ``alpha`` is in 1/m
    and ``K_S`` in m/day.
    """

    theta_R: float
    theta_S: float
    alpha: float
    n: float
    K_S: float

    def __post_init__(self):
        if not 0.0 <= self.theta_R < self.theta_S <= 1.0:
            raise ValueError(
                f"need 0 <= theta_R < theta_S <= 1, got {self.theta_R}, {self.theta_S}"
            )
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.n <= 1.0:
            raise ValueError("n must exceed 1")
        if self.K_S <= 0.0:
            raise ValueError("K_S must be positive")

    @property
    def m(self) -> float:
        return (self.n - 1.0) / self.n

    # Medium protocol used by the assembly and the schemes.
    def theta(self, psi):
        return water_content(self, psi)

    def dtheta(self, psi):
        return dtheta_dpsi(self, psi)

    def K(self, psi):
        return conductivity(self, psi)

    def dK(self, psi):
        return dK_dpsi(self, psi)


@dataclass(frozen=True)
class ConstantKMedium:
    """Van Genuchten water content paired with a constant conductivity.

    Used for the constant-K statements of the convergence theory, where
    Newton and modified Picard coincide and the L-scheme has no time step
    restriction.
    """

    soil: VanGenuchtenParams
    K_value: float = 1.0

    def theta(self, psi):
        return water_content(self.soil, psi)

    def dtheta(self, psi):
        return dtheta_dpsi(self.soil, psi)

    def K(self, psi):
        return np.full_like(np.asarray(psi, dtype=float), self.K_value)

    def dK(self, psi):
        return np.zeros_like(np.asarray(psi, dtype=float))


@dataclass(frozen=True)
class LinearMedium:
    """theta(psi) = theta0 + c * psi with constant conductivity."""

    c: float
    K_value: float = 1.0
    theta0: float = 0.0

    def theta(self, psi):
        return self.theta0 + self.c * np.asarray(psi, dtype=float)

    def dtheta(self, psi):
        return np.full_like(np.asarray(psi, dtype=float), self.c)

    def K(self, psi):
        return np.full_like(np.asarray(psi, dtype=float), self.K_value)

    def dK(self, psi):
        return np.zeros_like(np.asarray(psi, dtype=float))


@dataclass(frozen=True)
class LipschitzInfo:
    L_theta: float
    L_K_estimate: float
    K_m: float
    K_M: float
    K_lipschitz: bool  # False when n <= 2: K' is unbounded as psi -> 0-
    psi_at_L_theta: float


def _unpack(x):
    return float(x) if np.ndim(x) == 0 else x


def _suction(p: VanGenuchtenParams, psi):
    """Return (psi array, unsaturated mask, u = -alpha*psi clipped at 0, w = u**n)."""
    psi = np.asarray(psi, dtype=float)
    unsat = psi < 0.0
    u = np.where(unsat, -p.alpha * psi, 0.0)
    w = u**p.n
    return psi, unsat, u, w


def effective_saturation(p: VanGenuchtenParams, psi):
    psi, unsat, _, w = _suction(p, psi)
    return _unpack(np.where(unsat, (1.0 + w) ** (-p.m), 1.0))


def water_content(p: VanGenuchtenParams, psi):
    """Volumetric water content; theta_S for psi >= 0."""
    se = np.asarray(effective_saturation(p, psi))
    return _unpack(p.theta_R + (p.theta_S - p.theta_R) * se)


def dtheta_dpsi(p: VanGenuchtenParams, psi):
    psi, unsat, u, w = _suction(p, psi)
    m, n = p.m, p.n
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (p.theta_S - p.theta_R) * p.alpha * m * n * u ** (n - 1.0) * (1.0 + w) ** (-m - 1.0)
    return _unpack(np.where(unsat, d, 0.0))


def conductivity(p: VanGenuchtenParams, psi):
    """Mualem conductivity written in terms of the effective saturation.

    With s = S_e**(1/m) = 1/(1+w) the bracket becomes
    ``1 - (w/(1+w))**m``, which avoids cancellation near saturation.
    """
    psi, unsat, _, w = _suction(p, psi)
    m = p.m
    se = (1.0 + w) ** (-m)
    bracket = 1.0 - (w / (1.0 + w)) ** m
    k = p.K_S * np.sqrt(se) * bracket**2
    return _unpack(np.where(unsat, k, p.K_S))


def dK_dpsi(p: VanGenuchtenParams, psi):
    """Analytic derivative of :func:`conductivity`; zero for psi >= 0.

    For n < 2 the derivative blows up like u**(n-2) as psi -> 0-.
    """
    psi, unsat, u, w = _suction(p, psi)
    m, n, a = p.m, p.n, p.alpha
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        se = (1.0 + w) ** (-m)
        bracket = 1.0 - (w / (1.0 + w)) ** m
        common = a * m * n * (1.0 + w) ** (-m - 1.0)
        dse = common * u ** (n - 1.0)
        dbracket = common * u ** (n - 2.0)
        d = p.K_S * (0.5 * bracket**2 * dse / np.sqrt(se) + 2.0 * np.sqrt(se) * bracket * dbracket)
    return _unpack(np.where(unsat, d, 0.0))


def lipschitz_info(
    p: VanGenuchtenParams,
    psi_range: tuple[float, float] = (-50.0, 0.0),
    n_grid: int = 10_000,
) -> LipschitzInfo:
    """Estimate the Lipschitz constants of theta and K.

    ``L_theta`` is the global maximum of theta' located by a grid scan of
    [-50, 0] and refined by a golden-section search.  The K
    quantities are restricted to ``psi_range``.
    """
    lo, hi = psi_range
    if not lo < hi:
        raise ValueError("psi_range must be a non-empty interval")

    grid = np.linspace(-50.0, 0.0, n_grid)
    d = dtheta_dpsi(p, grid)
    k = int(np.clip(np.argmax(d), 1, n_grid - 2))
    res = minimize_scalar(
        lambda s: -dtheta_dpsi(p, min(s, 0.0)),
        bracket=(grid[k - 1], grid[k], grid[k + 1]),
        method="golden",
        tol=1e-12,
    )
    L_theta, psi_star = float(-res.fun), float(res.x)
    if L_theta < d.max():
        L_theta, psi_star = float(d.max()), float(grid[np.argmax(d)])

    rng = np.linspace(lo, hi, n_grid)
    K = conductivity(p, rng)
    dK = np.abs(dK_dpsi(p, rng))
    L_K = float(np.max(dK[np.isfinite(dK)])) if np.any(np.isfinite(dK)) else np.inf
    return LipschitzInfo(
        L_theta=L_theta,
        L_K_estimate=L_K,
        K_m=float(np.min(K)),
        K_M=float(np.max(K)),
        K_lipschitz=p.n >= 2.0,
        psi_at_L_theta=psi_star,
    )
