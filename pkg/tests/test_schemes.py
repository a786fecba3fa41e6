from dataclasses import dataclass

import numpy as np
import pytest

from richards_lab.bench import EX1_SOIL, EX2_TIME, example1_definition, example2_definition
from richards_lab.constitutive import ConstantKMedium, LinearMedium
from richards_lab.schemes import (
    LSCHEME,
    MIXED,
    NEWTON,
    PICARD,
    Problem,
    SchemeSpec,
    StoppingRule,
    SwitchRule,
    initial_iterate,
    linear_system,
    run_simulation,
    solve_time_step,
    step_context,
    step_l_scheme,
    step_modified_picard,
    step_newton,
    with_stopping,
)
from richards_lab.theory import homogeneous_dirichlet_problem


@dataclass(frozen=True)
class FrozenSlope:
    """Medium whose theta' is replaced by a constant."""

    base: object
    slope: float

    def theta(self, psi):
        return self.base.theta(psi)

    def dtheta(self, psi):
        return np.full_like(np.asarray(psi, dtype=float), self.slope)

    def K(self, psi):
        return self.base.K(psi)

    def dK(self, psi):
        return self.base.dK(psi)


def rel_diff(a, b):
    scale = max(abs(b).max(), 1e-300)
    return abs(a - b).max() / scale


@pytest.fixture(scope="module")
def ex1_problem():
    return example1_definition(-2.0).build(10, 10)


def test_spec_validation():
    with pytest.raises(ValueError):
        SchemeSpec("bogus")
    with pytest.raises(ValueError):
        SchemeSpec(LSCHEME)
    with pytest.raises(ValueError):
        SchemeSpec(MIXED, first=NEWTON, switch=SwitchRule(1.0))
    with pytest.raises(ValueError):
        SchemeSpec(MIXED, first=PICARD)
    with pytest.raises(ValueError):
        SwitchRule()
    with pytest.raises(ValueError):
        StoppingRule(max_iter=0)
    assert SchemeSpec(MIXED, L=0.1, first=LSCHEME, switch=SwitchRule(1.0)).label == "L-scheme(L=0.1)/Newton"


def test_stopping_rule():
    rule = StoppingRule(eps_a=1e-5, eps_r=1e-5)
    assert rule.satisfied(1.9e-5, 1.0)
    assert not rule.satisfied(2.1e-5, 1.0)


def test_constant_K_newton_equals_picard():
    problem = homogeneous_dirichlet_problem(10, EX1_SOIL, K_value=0.7)
    ctx = step_context(problem, problem.psi0, 0.1, 0.1)
    it = problem.psi0 * 0.9
    a = linear_system(problem, ctx, it, PICARD)
    b = linear_system(problem, ctx, it, NEWTON)
    assert rel_diff(b.matrix.toarray(), a.matrix.toarray()) <= 1e-13
    assert rel_diff(b.rhs, a.rhs) <= 1e-13


def test_frozen_slope_picard_equals_lscheme(ex1_problem):
    L = 0.2
    frozen = Problem(ex1_problem.mesh, FrozenSlope(EX1_SOIL, L), ex1_problem.psi0, ex1_problem.source)
    it = ex1_problem.psi0 + 0.05 * ex1_problem.mesh.x
    ctx = step_context(frozen, frozen.psi0, 1.0, 1.0)
    a = linear_system(frozen, ctx, it, PICARD)
    b = linear_system(ex1_problem, step_context(ex1_problem, ex1_problem.psi0, 1.0, 1.0), it, LSCHEME, L)
    assert rel_diff(a.matrix.toarray(), b.matrix.toarray()) <= 1e-13
    assert rel_diff(a.rhs, b.rhs) <= 1e-13


def test_linear_medium_lscheme_is_exact_in_one_step():
    base = homogeneous_dirichlet_problem(8, EX1_SOIL)
    c = 0.3
    problem = Problem(base.mesh, LinearMedium(c, K_value=0.5), base.psi0, lambda x, z, t: 1.0 + 0 * x)
    tau = 0.2
    psi1 = step_l_scheme(problem, problem.psi0, problem.psi0, c, tau)
    psi2 = step_l_scheme(problem, problem.psi0, psi1, c, tau)
    assert np.abs(psi2 - psi1).max() <= 1e-12 * max(1.0, np.abs(psi1).max())
    # Picard and Newton see the same linear problem
    np.testing.assert_allclose(step_modified_picard(problem, problem.psi0, problem.psi0, tau), psi1, atol=1e-12)
    np.testing.assert_allclose(step_newton(problem, problem.psi0, problem.psi0, tau), psi1, atol=1e-12)


def test_converged_solution_is_a_fixed_point_of_every_scheme(ex1_problem):
    tight = SchemeSpec(LSCHEME, L=0.25, stopping=StoppingRule(eps_a=1e-13, eps_r=0.0, max_iter=500))
    psi, trace = solve_time_step(ex1_problem, ex1_problem.psi0, 1.0, 1.0, tight, estimate_condition=False)
    assert trace.converged
    p0 = ex1_problem.psi0
    for nxt in (
        step_l_scheme(ex1_problem, p0, psi, 0.15, 1.0),
        step_modified_picard(ex1_problem, p0, psi, 1.0),
        step_newton(ex1_problem, p0, psi, 1.0),
    ):
        assert np.linalg.norm(nxt - psi) < 1e-10


def test_newton_equals_picard_for_hydrostatic_iterate():
    problem = example2_definition("silt").build(20, 30)
    ctx = step_context(problem, problem.psi0, 1 / 48, 1 / 48)
    a = linear_system(problem, ctx, problem.psi0, PICARD)
    b = linear_system(problem, ctx, problem.psi0, NEWTON)
    assert rel_diff(b.matrix.toarray(), a.matrix.toarray()) <= 1e-13


def test_newton_converges_quadratically():
    problem = example2_definition("silt").build(20, 30)
    spec = SchemeSpec(NEWTON, stopping=StoppingRule(eps_a=1e-12, eps_r=0.0))
    tau = EX2_TIME["silt"][1]
    _, trace = solve_time_step(problem, problem.psi0, tau, tau, spec, estimate_condition=False)
    assert trace.converged
    d = trace.update_norms
    assert len(d) >= 3
    # e_{j+1} <= C e_j^2 with a modest C once in the asymptotic regime
    assert d[2] / d[1] ** 2 < 1.0
    assert d[2] / d[1] < 0.01


def test_mixed_iterates_after_switch_match_newton(ex1_problem):
    spec = SchemeSpec(MIXED, L=0.15, first=LSCHEME, switch=SwitchRule(delta_a=2.0), name="mix")
    _, trace = solve_time_step(ex1_problem, ex1_problem.psi0, 1.0, 1.0, spec,
                               estimate_condition=False, keep_iterates=True)
    assert trace.converged
    k = trace.schemes.index(NEWTON)
    assert k >= 1
    assert all(s == LSCHEME for s in trace.schemes[:k])
    assert all(s == NEWTON for s in trace.schemes[k:])
    for j in range(k, trace.iterations):
        expected = step_newton(ex1_problem, ex1_problem.psi0, trace.iterates[j - 1], 1.0, t=1.0)
        np.testing.assert_array_equal(trace.iterates[j], expected)
    # the solver starts from psi^{n-1} with the new Dirichlet data imposed
    start = initial_iterate(ex1_problem, ex1_problem.psi0, ex1_problem.dirichlet(1.0))
    first = step_l_scheme(ex1_problem, ex1_problem.psi0, start, 0.15, 1.0)
    np.testing.assert_array_equal(trace.iterates[0], first)


def test_fixed_count_switch():
    problem = example2_definition("silt").build(20, 30)
    tau = EX2_TIME["silt"][1]
    spec = SchemeSpec(MIXED, L=0.04501, first=LSCHEME, switch=SwitchRule(fixed_iterations=3))
    res = run_simulation(problem, tau, 2, spec, estimate_condition=False)
    assert res.converged
    for tr in res.traces:  # switch state resets every time step
        assert tr.schemes[:3] == [LSCHEME] * 3
        assert set(tr.schemes[3:]) <= {NEWTON}


def test_lscheme_update_norms_decrease(ex1_problem):
    spec = SchemeSpec(LSCHEME, L=0.25)
    _, trace = solve_time_step(ex1_problem, ex1_problem.psi0, 1.0, 1.0, spec, estimate_condition=False)
    assert trace.converged
    d = np.array(trace.update_norms)
    assert np.all(d[1:] <= d[:-1] * (1 + 1e-12))


def test_failure_is_recorded_not_raised():
    problem = example1_definition(-3.0).build(20, 20)
    res = run_simulation(problem, 1.0, 1, SchemeSpec(NEWTON), estimate_condition=False)
    assert not res.converged
    assert res.failure_reason.startswith("step 1:")
    assert len(res.fields) == 1


def test_iteration_cap_reported():
    problem = example1_definition(-2.0).build(10, 10)
    spec = with_stopping(SchemeSpec(LSCHEME, L=0.25), max_iter=2)
    _, trace = solve_time_step(problem, problem.psi0, 1.0, 1.0, spec, estimate_condition=False)
    assert not trace.converged
    assert trace.iterations == 2
    assert "2 iterations" in trace.failure_reason


def test_simulation_bookkeeping():
    problem = example2_definition("silt").build(20, 30)
    spec = SchemeSpec(MIXED, first=PICARD, switch=SwitchRule(0.2))
    res = run_simulation(problem, EX2_TIME["silt"][1], 3, spec, estimate_condition=True)
    assert res.converged
    assert len(res.fields) == 4 and len(res.traces) == 3
    assert res.iterations_before_switch + res.iterations_after_switch == res.total_iterations
    assert len(res.condition_estimates()) == res.total_iterations
    assert all(c >= 1.0 for c in res.condition_estimates())
    assert res.wall_time == pytest.approx(sum(res.step_wall_times))
    with pytest.raises(ValueError):
        run_simulation(problem, 0.1, 0, spec)


def test_constant_K_medium_with_lscheme_matches_picard_limit():
    # L-scheme and Picard share the fixed point
    problem = homogeneous_dirichlet_problem(10, EX1_SOIL, K_value=1.0)
    spec_l = SchemeSpec(LSCHEME, L=0.2, stopping=StoppingRule(1e-12, 0.0, 500))
    spec_p = SchemeSpec(PICARD, stopping=StoppingRule(1e-12, 0.0, 500))
    a, ta = solve_time_step(problem, problem.psi0, 0.1, 0.1, spec_l, estimate_condition=False)
    b, tb = solve_time_step(problem, problem.psi0, 0.1, 0.1, spec_p, estimate_condition=False)
    assert ta.converged and tb.converged
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert isinstance(problem.medium, ConstantKMedium)
