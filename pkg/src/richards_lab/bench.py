"""The two benchmark problems and their comparison reports.

Example 1: injection/extraction in a vadose zone above groundwater on
(0,1) x (-1,0), one step with tau = 1, six mesh sizes.
Example 2: recharge of a groundwater reservoir from a drainage trench on
(0,2) x (0,3), silt loam or Beit Netofa clay, nine steps.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .constitutive import VanGenuchtenParams, lipschitz_info
from .io import write_csv, write_vtk
from .mesh import (
    DirichletFixed,
    DirichletTransient,
    NeumannNoFlow,
    build_structured,
    interpolate_nodal,
    tag_boundary,
)
from .schemes import (
    LSCHEME,
    MIXED,
    NEWTON,
    PICARD,
    Problem,
    SchemeSpec,
    SimulationResult,
    StoppingRule,
    SwitchRule,
    run_simulation,
)

log = logging.getLogger(__name__)

EX1_SOIL = VanGenuchtenParams(theta_R=0.026, theta_S=0.42, alpha=0.95, n=2.9, K_S=0.12)
EX1_MESHES = (10, 20, 30, 40, 50, 60)  # h = 1/k
EX1_INTERFACE = -0.75

SOILS = {
    "silt": VanGenuchtenParams(theta_R=0.131, theta_S=0.396, alpha=0.423, n=2.06, K_S=4.96e-2),
    "clay": VanGenuchtenParams(theta_R=0.0, theta_S=0.446, alpha=0.152, n=1.17, K_S=8.2e-4),
}
# (Delta t_D, tau, T, L-scheme 1, L-scheme 2)
EX2_TIME = {
    "silt": (1.0 / 16.0, 1.0 / 48.0, 3.0 / 16.0, 4.501e-2, 3.5e-2),
    "clay": (1.0, 1.0 / 3.0, 3.0, 7.4546e-3, 6.5e-3),
}
EX2_STEPS = 9

CSV_COLUMNS = [
    "example", "soil_or_psivad", "scheme", "L", "h", "converged", "total_iterations",
    "iterations_before_switch", "iterations_after_switch", "wall_time_s", "avg_condest",
    "failure_reason",
]


@dataclass
class ProblemDefinition:
    name: str
    variant: str
    domain: tuple
    resolutions: tuple  # (nx, nz) pairs
    soil: VanGenuchtenParams
    boundary_rule: Callable
    initial: Callable
    source: Optional[Callable]
    tau: float
    N: int
    schemes: tuple
    profiles: dict = field(default_factory=dict)

    def build(self, nx: int, nz: int) -> Problem:
        mesh = tag_boundary(build_structured(self.domain, nx, nz), self.boundary_rule)
        return Problem(
            mesh=mesh,
            medium=self.soil,
            psi0=interpolate_nodal(mesh, self.initial),
            source=self.source,
            profiles=dict(self.profiles),
        )


@dataclass
class BenchmarkRow:
    example: str
    variant: str
    scheme: str
    L: Optional[float]
    h: float
    converged: bool
    total_iterations: int
    iterations_before_switch: int
    iterations_after_switch: int
    wall_time_s: float
    avg_condest: float
    failure_reason: str = ""
    avg_condest_first: float = math.nan
    avg_condest_newton: float = math.nan

    def as_csv(self) -> dict:
        return {
            "example": self.example,
            "soil_or_psivad": self.variant,
            "scheme": self.scheme,
            "L": "" if self.L is None else f"{self.L:.10g}",
            "h": f"{self.h:.10g}",
            "converged": str(self.converged).lower(),
            "total_iterations": self.total_iterations,
            "iterations_before_switch": self.iterations_before_switch,
            "iterations_after_switch": self.iterations_after_switch,
            "wall_time_s": f"{self.wall_time_s:.6f}",
            "avg_condest": "" if math.isnan(self.avg_condest) else f"{self.avg_condest:.6e}",
            "failure_reason": self.failure_reason or "",
        }


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)
    fields: dict = field(default_factory=dict)  # (scheme, h) -> (mesh, final field)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (r.example, r.variant, r.scheme, r.h))

    def row(self, scheme: str, h: Optional[float] = None) -> BenchmarkRow:
        for r in self.rows:
            if r.scheme == scheme and (h is None or math.isclose(r.h, h)):
                return r
        raise KeyError((scheme, h))

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.rows)


# -- scheme lists --------------------------------------------------------


def _stop() -> StoppingRule:
    return StoppingRule(eps_a=1e-5, eps_r=1e-5, max_iter=50)


def example1_schemes(delta_a: float = 2.0) -> tuple:
    switch = SwitchRule(delta_a=delta_a, delta_r=0.0)
    return (
        SchemeSpec(LSCHEME, L=0.25, stopping=_stop(), name="L-scheme L=0.25"),
        SchemeSpec(LSCHEME, L=0.15, stopping=_stop(), name="L-scheme L=0.15"),
        SchemeSpec(PICARD, stopping=_stop(), name="Picard"),
        SchemeSpec(NEWTON, stopping=_stop(), name="Newton"),
        SchemeSpec(MIXED, first=PICARD, switch=switch, stopping=_stop(), name="Picard/Newton"),
        SchemeSpec(MIXED, L=0.15, first=LSCHEME, switch=switch, stopping=_stop(),
                   name="L-scheme L=0.15/Newton"),
    )


def example2_schemes(soil: str, delta_a: float = 0.2) -> tuple:
    _, _, _, L1, L2 = EX2_TIME[soil]
    switch = SwitchRule(delta_a=delta_a, delta_r=0.0)
    return (
        SchemeSpec(LSCHEME, L=L1, stopping=_stop(), name="L-scheme 1"),
        SchemeSpec(LSCHEME, L=L2, stopping=_stop(), name="L-scheme 2"),
        SchemeSpec(PICARD, stopping=_stop(), name="Picard"),
        SchemeSpec(NEWTON, stopping=_stop(), name="Newton"),
        SchemeSpec(MIXED, L=L1, first=LSCHEME, switch=switch, stopping=_stop(),
                   name="L-scheme 1/Newton"),
        SchemeSpec(MIXED, L=L2, first=LSCHEME, switch=switch, stopping=_stop(),
                   name="L-scheme 2/Newton"),
        SchemeSpec(MIXED, first=PICARD, switch=switch, stopping=_stop(), name="Picard/Newton"),
    )


# -- problem definitions -------------------------------------------------


def _on(a, b, tol=1e-12):
    return abs(a - b) <= tol


def example1_boundary(x, z):
    return DirichletFixed(-3.0) if _on(z, 0.0) else NeumannNoFlow()


def example1_initial(psi_vad: float):
    def g(x, z):
        return np.where(z > EX1_INTERFACE, psi_vad, -z - 0.75)

    return g


def example1_source(x, z, t=None):
    return np.where(
        z > EX1_INTERFACE, 0.006 * np.cos(4.0 / 3.0 * np.pi * z) * np.sin(2.0 * np.pi * x), 0.0
    )


def trench_profile(dt_D: float):
    def g(x, z, t):
        v = -2.0 + 2.2 * t / dt_D if t <= dt_D else 0.2
        return np.full_like(np.asarray(x, dtype=float), v)

    return g


def example2_boundary(x, z):
    if _on(z, 3.0) and x <= 1.0:
        return DirichletTransient("example2_trench")
    if _on(x, 2.0) and z <= 1.0:
        return DirichletFixed(lambda xx, zz: 1.0 - zz)
    return NeumannNoFlow()


def example2_initial(x, z):
    return 1.0 - z


def example1_definition(psi_vad: float, meshes=EX1_MESHES, schemes=None) -> ProblemDefinition:
    if psi_vad not in (-2.0, -3.0):
        log.warning("psi_vad=%g is outside the published set {-2, -3}", psi_vad)
    return ProblemDefinition(
        name="example1",
        variant=f"{psi_vad:g}",
        domain=((0.0, 1.0), (-1.0, 0.0)),
        resolutions=tuple((k, k) for k in meshes),
        soil=EX1_SOIL,
        boundary_rule=example1_boundary,
        initial=example1_initial(psi_vad),
        source=example1_source,
        tau=1.0,
        N=1,
        schemes=tuple(schemes) if schemes is not None else example1_schemes(),
    )


def example2_definition(soil: str, schemes=None) -> ProblemDefinition:
    if soil not in SOILS:
        raise ValueError(f"soil must be one of {sorted(SOILS)}, got {soil!r}")
    dt_D, tau, T, _, _ = EX2_TIME[soil]
    return ProblemDefinition(
        name="example2",
        variant=soil,
        domain=((0.0, 2.0), (0.0, 3.0)),
        resolutions=((20, 30),),
        soil=SOILS[soil],
        boundary_rule=example2_boundary,
        initial=example2_initial,
        source=None,
        tau=tau,
        N=EX2_STEPS,
        schemes=tuple(schemes) if schemes is not None else example2_schemes(soil),
        profiles={"example2_trench": trench_profile(dt_D)},
    )


# -- running -------------------------------------------------------------


def _row(defn: ProblemDefinition, spec: SchemeSpec, h: float, res: SimulationResult) -> BenchmarkRow:
    first = spec.first if spec.kind == MIXED else spec.kind
    return BenchmarkRow(
        example=defn.name,
        variant=defn.variant,
        scheme=spec.label,
        L=spec.L,
        h=h,
        converged=res.converged,
        total_iterations=res.total_iterations,
        iterations_before_switch=res.iterations_before_switch,
        iterations_after_switch=res.iterations_after_switch,
        wall_time_s=res.wall_time,
        avg_condest=res.average_condition(),
        failure_reason=res.failure_reason or "",
        avg_condest_first=res.average_condition(first),
        avg_condest_newton=res.average_condition(NEWTON),
    )


def run_case(defn: ProblemDefinition, spec: SchemeSpec, nx: int, nz: int,
             estimate_condition: bool = True):
    problem = defn.build(nx, nz)
    h = problem.mesh.h[0]
    log.info("%s %s: %s on h=%.4g", defn.name, defn.variant, spec.label, h)
    res = run_simulation(problem, defn.tau, defn.N, spec, estimate_condition)
    return _row(defn, spec, h, res), problem.mesh, res.final_field


def _run_case_job(args):
    kind, variant, spec_index, nx, nz, estimate_condition = args
    defn = example1_definition(float(variant)) if kind == "example1" else example2_definition(variant)
    return run_case(defn, defn.schemes[spec_index], nx, nz, estimate_condition)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("RICHARDS_THREADS", "1")))
    except ValueError:
        return 1


def run_definition(defn: ProblemDefinition, estimate_condition: bool = True,
                   workers: Optional[int] = None, _job_key=None) -> BenchmarkReport:
    """Run every (scheme, mesh) pair of ``defn``.

    With ``workers > 1`` and a picklable job key (the built-in examples),
    runs are dispatched to a process pool; results are merged in a fixed
    order either way.
    """
    workers = default_workers() if workers is None else workers
    cases = [(i, nx, nz) for (nx, nz) in defn.resolutions for i in range(len(defn.schemes))]
    report = BenchmarkReport()
    if workers > 1 and _job_key is not None:
        jobs = [(*_job_key, i, nx, nz, estimate_condition) for i, nx, nz in cases]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_case_job, jobs))
    else:
        outputs = [run_case(defn, defn.schemes[i], nx, nz, estimate_condition) for i, nx, nz in cases]
    for row, mesh, final in outputs:
        report.rows.append(row)
        report.fields[(row.scheme, row.h)] = (mesh, final)
    return report


def example1(psi_vad: float = -2.0, mesh_set=EX1_MESHES, schemes=None,
             estimate_condition: bool = True, workers: Optional[int] = None) -> BenchmarkReport:
    defn = example1_definition(psi_vad, mesh_set, schemes)
    key = ("example1", f"{psi_vad:g}") if schemes is None and tuple(mesh_set) == EX1_MESHES else None
    return run_definition(defn, estimate_condition, workers, key)


def example2(soil: str = "silt", schemes=None, estimate_condition: bool = True,
             workers: Optional[int] = None) -> BenchmarkReport:
    defn = example2_definition(soil, schemes)
    key = ("example2", soil) if schemes is None else None
    return run_definition(defn, estimate_condition, workers, key)


def write_report(report: BenchmarkReport, directory, basename: str = "report") -> list:
    """Write ``<basename>.csv`` (rows sorted by scheme then h) into ``directory``."""
    directory = Path(directory)
    rows = [r.as_csv() for r in report.sorted_rows()]
    return [write_csv(directory / f"{basename}.csv", CSV_COLUMNS, rows)]


def write_field_vtk(mesh, field_values, path, name: str = "pressure_head"):
    return write_vtk(path, mesh, {name: field_values}, title=f"{name} field")


def lipschitz_table() -> dict:
    return {
        "example1": lipschitz_info(EX1_SOIL).L_theta,
        **{k: lipschitz_info(v).L_theta for k, v in SOILS.items()},
    }
