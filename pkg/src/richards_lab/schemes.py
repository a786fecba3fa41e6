"""Linearization schemes for one backward-Euler step of Richards' equation.

Each scheme solves, for the iterate psi^j given psi^{j-1},

    B psi^j = tau F + Theta(psi^{n-1}) - Theta(psi^{j-1}) + B0 psi^{j-1} - tau G(K)

with B = B0 + tau A(K(psi^{j-1})) and

    L-scheme         B0 = L M
    modified Picard  B0 = M(theta'(psi^{j-1}))
    Newton           B0 = M(theta'(psi^{j-1})) + tau N(K'(psi^{j-1}), psi^{j-1})

where N is the (nonsymmetric) derivative of the conductivity term.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import linalg
from .fem import AssembledSystem, SingularSystemError, apply_dirichlet, dirichlet_data, p1_space
from .mesh import Mesh

log = logging.getLogger(__name__)

LSCHEME, PICARD, NEWTON, MIXED = "lscheme", "picard", "newton", "mixed"
DIVERGENCE_BOUND = 1e8


@dataclass(frozen=True)
class StoppingRule:
    eps_a: float = 1e-5
    eps_r: float = 1e-5
    max_iter: int = 50

    def __post_init__(self):
        if self.eps_a <= 0 or self.eps_r < 0 or (self.eps_r == 0 and self.eps_a == 0):
            raise ValueError("stopping tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def satisfied(self, update_norm: float, iterate_norm: float) -> bool:
        return update_norm <= self.eps_a + self.eps_r * iterate_norm


@dataclass(frozen=True)
class SwitchRule:
    """When a mixed scheme hands over to Newton.

    Either the update-norm test ``||d|| <= delta_a + delta_r ||psi||`` or,
    if ``fixed_iterations`` is set, after that many iterations of the first
    scheme.
    """

    delta_a: float = 0.0
    delta_r: float = 0.0
    fixed_iterations: Optional[int] = None

    def __post_init__(self):
        if self.fixed_iterations is not None:
            if self.fixed_iterations < 1:
                raise ValueError("fixed_iterations must be >= 1")
        elif self.delta_a < 0 or self.delta_r < 0 or (self.delta_a == 0 and self.delta_r == 0):
            raise ValueError("switch tolerances must be nonnegative and not both zero")

    def satisfied(self, iterations_done: int, update_norm: float, iterate_norm: float) -> bool:
        if self.fixed_iterations is not None:
            return iterations_done >= self.fixed_iterations
        return update_norm <= self.delta_a + self.delta_r * iterate_norm


@dataclass(frozen=True)
class SchemeSpec:
    """Which linearization to run.

    ``kind`` is one of "lscheme", "picard", "newton", "mixed".  A mixed
    scheme runs ``first`` ("lscheme" or "picard") until ``switch`` fires,
    then Newton for the rest of the time step.  ``L`` is needed whenever an
    L-scheme is involved.  ``retry_more_l_iterations`` enables the optional
    fallback for fixed-count mixed schemes: on failure the step is redone
    with two more first-scheme iterations, up to ``max_first_iterations``.
    """

    kind: str
    L: Optional[float] = None
    first: Optional[str] = None
    switch: Optional[SwitchRule] = None
    stopping: StoppingRule = field(default_factory=StoppingRule)
    name: Optional[str] = None
    retry_more_l_iterations: bool = False
    max_first_iterations: int = 10

    def __post_init__(self):
        if self.kind not in (LSCHEME, PICARD, NEWTON, MIXED):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.kind == MIXED:
            if self.first not in (LSCHEME, PICARD):
                raise ValueError("mixed scheme needs first in {'lscheme', 'picard'}")
            if self.switch is None:
                raise ValueError("mixed scheme needs a switch rule")
        uses_l = self.kind == LSCHEME or (self.kind == MIXED and self.first == LSCHEME)
        if uses_l and (self.L is None or not self.L > 0):
            raise ValueError("L-scheme needs L > 0")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == LSCHEME:
            return f"L-scheme(L={self.L:g})"
        if self.kind == PICARD:
            return "Picard"
        if self.kind == NEWTON:
            return "Newton"
        first = f"L-scheme(L={self.L:g})" if self.first == LSCHEME else "Picard"
        return f"{first}/Newton"


@dataclass
class IterationTrace:
    update_norms: list = field(default_factory=list)
    iterate_norms: list = field(default_factory=list)
    schemes: list = field(default_factory=list)
    condition_estimates: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    iterates: list = field(default_factory=list)  # filled only when requested
    converged: bool = False
    failure_reason: Optional[str] = None

    @property
    def iterations(self) -> int:
        return len(self.update_norms)

    def count(self, kind: str) -> int:
        return sum(1 for s in self.schemes if s == kind)


@dataclass
class Problem:
    """Everything needed to advance the discrete problem in time.

    ``medium`` provides vectorized ``theta``, ``dtheta``, ``K`` and ``dK``;
    ``source`` is ``f(x, z, t)`` or None; ``profiles`` resolves the names of
    transient Dirichlet tags to ``g(x, z, t)``.
    """

    mesh: Mesh
    medium: object
    psi0: np.ndarray
    source: Optional[Callable] = None
    profiles: dict = field(default_factory=dict)

    @property
    def space(self):
        return p1_space(self.mesh)

    def dirichlet(self, t: float):
        return dirichlet_data(self.mesh, t, self.profiles)


@dataclass
class StepContext:
    """Quantities that stay fixed over the iterations of one time step."""

    t: float
    tau: float
    dirichlet: tuple
    old_theta: np.ndarray  # Theta(psi^{n-1}) load vector
    forcing: np.ndarray  # tau * F^n


def step_context(problem: Problem, state_prev, t: float, tau: float) -> StepContext:
    sp_ = problem.space
    return StepContext(
        t=t,
        tau=tau,
        dirichlet=problem.dirichlet(t),
        old_theta=sp_.theta_load(problem.medium.theta, state_prev),
        forcing=tau * sp_.source(problem.source, t),
    )


def linear_system(problem: Problem, ctx: StepContext, iterate, kind: str,
                  L: Optional[float] = None) -> AssembledSystem:
    """Assemble the Dirichlet-reduced linear system of one iteration."""
    sp_ = problem.space
    med = problem.medium
    psi_q = sp_.at_quadrature(iterate)
    K_q = med.K(psi_q)
    tau = ctx.tau

    if kind == LSCHEME:
        if L is None:
            raise ValueError("L-scheme needs L")
        B0 = sp_.weighted_mass(L)
    elif kind in (PICARD, NEWTON):
        B0 = sp_.weighted_mass(med.dtheta(psi_q))
        if kind == NEWTON:
            B0 = B0 + tau * sp_.newton_advection(med.dK(psi_q), iterate)
    else:
        raise ValueError(f"unknown linearization {kind!r}")

    matrix = B0 + tau * sp_.weighted_stiffness(K_q)
    rhs = (
        ctx.forcing
        + ctx.old_theta
        - sp_.load(med.theta(psi_q))
        + B0 @ iterate
        - tau * sp_.gravity(K_q)
    )
    return apply_dirichlet(matrix, rhs, problem.mesh, dirichlet=ctx.dirichlet)


def _solve_system(system: AssembledSystem, n_nodes: int):
    F = linalg.factorize(system.matrix)
    x = linalg.solve(F, system.rhs)
    return system.expand(x, n_nodes), F


def _single_step(problem, state_prev, iterate, tau, t, kind, L=None):
    ctx = step_context(problem, state_prev, t, tau)
    system = linear_system(problem, ctx, np.asarray(iterate, dtype=float), kind, L)
    return _solve_system(system, problem.mesh.n_nodes)[0]


def step_l_scheme(problem: Problem, state_prev, iterate, L: float, tau: float, t: float = None):
    """One L-scheme iteration; ``t`` defaults to ``tau`` (first time step)."""
    if not L > 0:
        raise ValueError("L must be positive")
    return _single_step(problem, state_prev, iterate, tau, tau if t is None else t, LSCHEME, L)


def step_modified_picard(problem: Problem, state_prev, iterate, tau: float, t: float = None):
    return _single_step(problem, state_prev, iterate, tau, tau if t is None else t, PICARD)


def step_newton(problem: Problem, state_prev, iterate, tau: float, t: float = None):
    return _single_step(problem, state_prev, iterate, tau, tau if t is None else t, NEWTON)


def initial_iterate(problem: Problem, state_prev, dirichlet) -> np.ndarray:
    psi = np.array(state_prev, dtype=float, copy=True)
    nodes, vals = dirichlet
    psi[nodes] = vals
    return psi


def _solve_time_step_once(problem: Problem, state_prev, t: float, tau: float, spec: SchemeSpec,
                          estimate_condition: bool, iterate=None, first_limit=None,
                          keep_iterates=False):
    ctx = step_context(problem, state_prev, t, tau)
    psi = initial_iterate(problem, state_prev if iterate is None else iterate, ctx.dirichlet)
    trace = IterationTrace()
    stop = spec.stopping
    n_nodes = problem.mesh.n_nodes

    if spec.kind == MIXED:
        active = spec.first
    else:
        active = spec.kind
    switch = spec.switch
    if first_limit is not None:
        switch = SwitchRule(fixed_iterations=first_limit)
    first_done = 0

    for _ in range(stop.max_iter):
        t0 = time.perf_counter()
        try:
            system = linear_system(problem, ctx, psi, active, spec.L)
            new, F = _solve_system(system, n_nodes)
        except (linalg.SingularMatrixError, SingularSystemError) as exc:
            trace.failure_reason = f"linear solve failed: {exc}"
            return psi, trace
        # condition estimation is instrumentation and stays out of the timing
        elapsed = time.perf_counter() - t0
        cond = linalg.condest_1norm(F, system.matrix) if estimate_condition else float("nan")

        upd = float(np.linalg.norm(new - psi))
        nrm = float(np.linalg.norm(new))
        trace.update_norms.append(upd)
        trace.iterate_norms.append(nrm)
        trace.schemes.append(active)
        trace.condition_estimates.append(cond)
        trace.wall_times.append(elapsed)
        if keep_iterates:
            trace.iterates.append(new)

        if not (np.all(np.isfinite(new)) and math.isfinite(upd)):
            trace.failure_reason = "non-finite iterate"
            return psi, trace
        if upd > DIVERGENCE_BOUND:
            trace.failure_reason = f"diverged (update norm {upd:.3e})"
            return psi, trace
        psi = new
        if stop.satisfied(upd, nrm):
            trace.converged = True
            return psi, trace
        if spec.kind == MIXED and active != NEWTON:
            first_done += 1
            if switch.satisfied(first_done, upd, nrm):
                active = NEWTON

    trace.failure_reason = f"no convergence within {stop.max_iter} iterations"
    return psi, trace


def solve_time_step(problem: Problem, state_prev, t: float, tau: float, spec: SchemeSpec,
                    estimate_condition: bool = True, iterate=None, keep_iterates: bool = False):
    """Advance one backward-Euler step from ``state_prev`` to time ``t``.

    The first iterate is ``state_prev`` (or ``iterate`` when given) with the
    Dirichlet data of time ``t`` imposed.  Returns the final iterate and its
    :class:`IterationTrace`; failures are recorded in the trace, never
    raised.
    """
    psi, trace = _solve_time_step_once(problem, state_prev, t, tau, spec, estimate_condition, iterate,
                                       keep_iterates=keep_iterates)
    if (trace.converged or not spec.retry_more_l_iterations or spec.kind != MIXED
            or spec.switch.fixed_iterations is None):
        return psi, trace
    limit = spec.switch.fixed_iterations
    while not trace.converged and limit + 2 <= spec.max_first_iterations:
        limit += 2
        log.info("%s failed at t=%g, retrying with %d first-scheme iterations", spec.label, t, limit)
        psi, trace = _solve_time_step_once(problem, state_prev, t, tau, spec, estimate_condition,
                                           iterate, first_limit=limit, keep_iterates=keep_iterates)
    return psi, trace


@dataclass
class SimulationResult:
    spec: SchemeSpec
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)  # fields[0] is the initial state
    traces: list = field(default_factory=list)
    step_wall_times: list = field(default_factory=list)
    converged: bool = True
    failure_reason: Optional[str] = None

    @property
    def total_iterations(self) -> int:
        return sum(tr.iterations for tr in self.traces)

    @property
    def iterations_before_switch(self) -> int:
        first = self.spec.first if self.spec.kind == MIXED else self.spec.kind
        return sum(tr.count(first) for tr in self.traces)

    @property
    def iterations_after_switch(self) -> int:
        if self.spec.kind != MIXED:
            return 0
        return sum(tr.count(NEWTON) for tr in self.traces)

    @property
    def wall_time(self) -> float:
        return float(sum(self.step_wall_times))

    def condition_estimates(self, kind: Optional[str] = None) -> list:
        out = []
        for tr in self.traces:
            for s, c in zip(tr.schemes, tr.condition_estimates):
                if (kind is None or s == kind) and math.isfinite(c):
                    out.append(c)
        return out

    def average_condition(self, kind: Optional[str] = None) -> float:
        vals = self.condition_estimates(kind)
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def final_field(self) -> np.ndarray:
        return self.fields[-1]


def run_simulation(problem: Problem, tau: float, N: int, spec: SchemeSpec,
                   estimate_condition: bool = True) -> SimulationResult:
    """Run N backward-Euler steps of size tau; stop at the first failed step."""
    if N < 1:
        raise ValueError("N must be >= 1")
    result = SimulationResult(spec=spec, times=[0.0], fields=[np.asarray(problem.psi0, dtype=float)])
    state = result.fields[0]
    for n in range(1, N + 1):
        t = n * tau
        state, trace = solve_time_step(problem, state, t, tau, spec, estimate_condition)
        result.step_wall_times.append(float(sum(trace.wall_times)))
        result.traces.append(trace)
        if not trace.converged:
            result.converged = False
            result.failure_reason = f"step {n}: {trace.failure_reason}"
            log.info("%s failed at step %d: %s", spec.label, n, trace.failure_reason)
            break
        result.times.append(t)
        result.fields.append(state)
    return result


def with_stopping(spec: SchemeSpec, **kwargs) -> SchemeSpec:
    return replace(spec, stopping=replace(spec.stopping, **kwargs))
