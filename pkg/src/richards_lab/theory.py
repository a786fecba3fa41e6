"""Convergence theory of the L-scheme and its empirical check.

The L-scheme contracts the L2 error of the iterates with the rate
sqrt(L / (L + K_m tau / C^2)) provided

    2/L_theta - 1/L - tau (M+1)^2 L_K^2 / K_m >= 0,

where C is a Poincare constant of the domain and M bounds |grad psi| of the
discrete solution.  With constant K the condition is just L >= L_theta/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constitutive import ConstantKMedium, VanGenuchtenParams, lipschitz_info
from .mesh import DirichletFixed, build_structured, interpolate_nodal, tag_boundary
from .schemes import LSCHEME, Problem, linear_system, step_context, _solve_system


@dataclass(frozen=True)
class TheoryInputs:
    L: float
    L_theta: float
    L_K: float
    K_m: float
    M: float
    tau: float
    C_omega: float
    d: int = 2

    def __post_init__(self):
        if min(self.L, self.L_theta, self.K_m, self.tau, self.C_omega) <= 0:
            raise ValueError("L, L_theta, K_m, tau and C_omega must be positive")
        if self.L_K < 0 or self.M < 0:
            raise ValueError("L_K and M must be nonnegative")


def theoretical_rate(inp: TheoryInputs) -> float:
    return math.sqrt(inp.L / (inp.L + inp.K_m * inp.tau / inp.C_omega**2))


def lscheme_condition(inp: TheoryInputs, constant_K: bool = False) -> tuple[bool, float]:
    """Return (condition holds, slack) for the L-scheme convergence condition.

    ``constant_K`` drops the conductivity term, leaving L >= L_theta/2.
    """
    slack = 2.0 / inp.L_theta - 1.0 / inp.L
    if not constant_K:
        slack -= inp.tau * (inp.M + 1.0) ** 2 * inp.L_K**2 / inp.K_m
    # relative rounding guard so the optimal pair lands exactly on the boundary
    if abs(slack) <= 1e-12 * (2.0 / inp.L_theta):
        slack = 0.0
    return slack >= 0.0, slack


def optimal_parameters(L_theta: float, L_K: float, K_m: float, M: float) -> tuple[float, float]:
    """L = L_theta and the largest admissible time step for that L."""
    if L_K == 0:
        return L_theta, math.inf
    return L_theta, K_m / (L_theta * (M + 1.0) ** 2 * L_K**2)


def newton_step_bound(C: float, eps: float, h: float, d: int = 2) -> float:
    """tau <= C eps^3 h^d, reported for information only (C is not known)."""
    return C * eps**3 * h**d


def poincare_constant(domain) -> float:
    """diam(domain) / pi, an upper bound of the Poincare constant of a convex domain."""
    (x0, x1), (z0, z1) = domain
    if not (x1 > x0 and z1 > z0):
        raise ValueError("degenerate rectangle")
    return math.hypot(x1 - x0, z1 - z0) / math.pi


# -- empirical contraction ----------------------------------------------


def homogeneous_dirichlet_problem(
    n: int,
    soil: VanGenuchtenParams,
    K_value: float = 1.0,
    amplitude: float = 2.0,
    source=None,
    domain=((0.0, 1.0), (0.0, 1.0)),
) -> Problem:
    """Constant-K test problem with psi = 0 on the whole boundary.

    The initial state is ``-amplitude * sin(pi x) sin(pi z)`` (scaled to the
    domain), which sweeps psi across the steep part of theta.
    """
    mesh = tag_boundary(build_structured(domain, n, n), lambda x, z: DirichletFixed(0.0))
    (x0, x1), (z0, z1) = domain

    def g(x, z):
        return -amplitude * np.sin(np.pi * (x - x0) / (x1 - x0)) * np.sin(np.pi * (z - z0) / (z1 - z0))

    return Problem(mesh=mesh, medium=ConstantKMedium(soil, K_value),
                   psi0=interpolate_nodal(mesh, g), source=source)


@dataclass
class ContractionMeasurement:
    ratios: list
    errors: list
    reference: np.ndarray
    reference_iterations: int
    grad_bound: float
    inputs: Optional[TheoryInputs] = None
    notes: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else math.nan


class ReferenceNotConverged(RuntimeError):
    pass


def _l_iterations(problem, ctx, psi, L):
    n_nodes = problem.mesh.n_nodes
    while True:
        new, _ = _solve_system(linear_system(problem, ctx, psi, LSCHEME, L), n_nodes)
        yield new
        psi = new


def measure_contraction(
    problem: Problem,
    L: float,
    tau: float,
    tight_tol: float = 1e-12,
    max_reference_iter: int = 20_000,
    max_iter: int = 200,
    start=None,
    floor: float = 1e-8,
) -> ContractionMeasurement:
    """Measured L2-error contraction ratios of the L-scheme for one step.

    A reference solution is computed first by iterating the same scheme to
    ``||update|| <= tight_tol``.  The iteration is then restarted from
    ``start`` (default: psi^{n-1} with Dirichlet data) and the ratios
    ||e^j|| / ||e^{j-1}|| are recorded in the mass-matrix norm while
    ||e^{j-1}|| stays above ``floor`` times the initial error.
    """
    ctx = step_context(problem, problem.psi0, tau, tau)
    nodes, vals = ctx.dirichlet
    psi0 = np.array(problem.psi0 if start is None else start, dtype=float)
    psi0[nodes] = vals

    ref = None
    it = 0
    prev = psi0
    for it, new in enumerate(_l_iterations(problem, ctx, psi0, L), start=1):
        if not np.all(np.isfinite(new)):
            break
        if np.linalg.norm(new - prev) <= tight_tol:
            ref = new
            break
        if it >= max_reference_iter:
            break
        prev = new
    if ref is None:
        raise ReferenceNotConverged(f"reference L-scheme did not reach {tight_tol:g} in {it} iterations")

    M_mat = problem.space.weighted_mass(1.0)

    def l2(v):
        return math.sqrt(max(float(v @ (M_mat @ v)), 0.0))

    e0 = l2(psi0 - ref)
    errors = [e0]
    ratios = []
    if e0 > 0.0:
        for j, new in enumerate(_l_iterations(problem, ctx, psi0, L), start=1):
            e = l2(new - ref)
            if errors[-1] <= floor * e0 or errors[-1] <= 1e3 * tight_tol:
                break
            ratios.append(e / errors[-1])
            errors.append(e)
            if j >= max_iter:
                break
    grad = problem.mesh.gradient(ref)
    return ContractionMeasurement(
        ratios=ratios,
        errors=errors,
        reference=ref,
        reference_iterations=it,
        grad_bound=float(np.max(np.hypot(grad[:, 0], grad[:, 1]))),
    )


def theory_inputs_for(problem: Problem, L: float, tau: float, grad_bound: float = 0.0) -> TheoryInputs:
    med = problem.medium
    soil = med.soil if isinstance(med, ConstantKMedium) else med
    info = lipschitz_info(soil)
    if isinstance(med, ConstantKMedium):
        K_m, L_K = med.K_value, 0.0
    else:
        K_m, L_K = info.K_m, info.L_K_estimate
    return TheoryInputs(L=L, L_theta=info.L_theta, L_K=L_K, K_m=K_m, M=grad_bound, tau=tau,
                        C_omega=poincare_constant(problem.mesh.domain))


THEORY_COLUMNS = ["L", "tau", "h", "K_m", "C_omega", "theoretical_rate", "max_measured_ratio",
                  "condition_slack", "condition_holds"]


def contraction_sweep(
    soil: VanGenuchtenParams,
    L_factors=(0.5, 1.0, 2.0),
    taus=(0.01, 0.1, 1.0),
    meshes=(10, 20),
    K_value: float = 1.0,
) -> list[dict]:
    """Measure contraction over a grid of (L, tau, h) for the constant-K
    homogeneous-Dirichlet problem; one row per configuration."""
    L_theta = lipschitz_info(soil).L_theta
    rows = []
    for n in meshes:
        problem = homogeneous_dirichlet_problem(n, soil, K_value)
        for fac in L_factors:
            L = fac * L_theta
            for tau in taus:
                meas = measure_contraction(problem, L, tau)
                inp = theory_inputs_for(problem, L, tau, meas.grad_bound)
                ok, slack = lscheme_condition(inp, constant_K=True)
                meas.inputs = inp
                rows.append({
                    "L": L, "tau": tau, "h": 1.0 / n, "K_m": inp.K_m, "C_omega": inp.C_omega,
                    "theoretical_rate": theoretical_rate(inp),
                    "max_measured_ratio": meas.max_ratio,
                    "condition_slack": slack, "condition_holds": ok,
                    "ratios": meas.ratios,
                })
    return rows
