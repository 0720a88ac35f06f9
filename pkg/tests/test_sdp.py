import math
from types import SimpleNamespace

import cvxpy as cp
import numpy as np
import pytest

import numerics as nx
from exceptions import BudgetExceededError, InvalidParameterError, NotRecoverableError, SolverError
from recovery import apply_map
from sdp import (
    BlockSpec, LinearConstraint, SdpOptions, SdpProblem, _run, additivity_check, approx_recoverability,
    check_overhead_feasibility, combine_feasible, hermitian_equality, kron_identity_operator, realify,
    sampling_overhead, solve, tensor_states, unrealify,
)
from states import depolarize, ghz_state, haar_unitary, make_rng, random_qmc, w_state


def test_realify_round_trip_and_spectrum():
    rng = make_rng(0)
    G = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    H = G + G.conj().T
    Y = realify(H)
    np.testing.assert_allclose(Y, Y.T)
    np.testing.assert_allclose(unrealify(Y), H, atol=1e-15)
    doubled = np.sort(np.repeat(np.linalg.eigvalsh(H), 2))
    np.testing.assert_allclose(np.linalg.eigvalsh(Y), doubled, atol=1e-12)


def test_kron_identity_operator():
    rng = make_rng(1)
    M = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    L = kron_identity_operator(2, 3)
    np.testing.assert_allclose(nx.unvec(L @ nx.vec(M), 6, 6), np.kron(M, np.eye(3)))


def test_generic_sdp_minimum_eigenvalue():
    rng = make_rng(2)
    U = haar_unitary(3, rng)
    C = U @ np.diag([3.0, 1.0, 2.0]) @ U.conj().T
    problem = SdpProblem(
        blocks=[BlockSpec("X", 3)],
        objective={"X": C},
        constraints=[LinearConstraint({"X": np.eye(3)}, 1.0)],
    )
    solution = solve(problem)
    assert solution.status == "optimal"
    assert solution.primal_value == pytest.approx(1.0, abs=1e-6)
    assert solution.dual_value == pytest.approx(1.0, abs=1e-6)
    assert solution.rel_gap <= 1e-6
    X = solution.blocks["X"]
    np.testing.assert_allclose(X, X.conj().T, atol=1e-8)
    assert np.trace(X).real == pytest.approx(1.0, abs=1e-6)


def test_generic_sdp_entry_constraint():
    E00 = np.zeros((2, 2))
    E00[0, 0] = 1.0
    problem = SdpProblem([BlockSpec("X", 2)], {"X": np.eye(2)}, [LinearConstraint({"X": E00}, 1.0)])
    solution = solve(problem)
    assert solution.status == "optimal"
    assert solution.primal_value == pytest.approx(1.0, abs=1e-6)


def test_generic_sdp_infeasible():
    problem = SdpProblem([BlockSpec("X", 2)], {"X": np.eye(2)},
                         [LinearConstraint({"X": np.eye(2)}, -1.0)])
    assert solve(problem).status == "infeasible"


def test_sdp_problem_validation():
    with pytest.raises(InvalidParameterError):
        BlockSpec("X", 2, cone="soc")
    with pytest.raises(Exception):
        SdpProblem([BlockSpec("X", 2)], {"Y": np.eye(2)}, [])


def test_options_from_config():
    from config_manager import ConfigManager
    manager = ConfigManager(None)
    manager.set("sdp.solver", "scs")
    options = SdpOptions.from_config(manager)
    assert options.solver == "SCS"
    assert options.solver_kwargs("SCS")["max_iters"] == options.max_iter
    assert options.solver_kwargs("CLARABEL")["tol_gap_rel"] == options.solver_tol


class ScriptedProblem:
    """按求解器名返回预设状态的替身问题"""

    def __init__(self, outcomes):
        self.outcomes = outcomes
        self.calls = []
        self.status = None
        self.solver_stats = None

    def solve(self, solver, verbose=False, **kwargs):
        self.calls.append(solver)
        outcome = self.outcomes[solver]
        if isinstance(outcome, Exception):
            raise outcome
        self.status = outcome
        self.solver_stats = SimpleNamespace(num_iters=len(self.calls))


def test_inaccurate_primary_falls_back():
    problem = ScriptedProblem({"CLARABEL": cp.OPTIMAL_INACCURATE, "SCS": cp.OPTIMAL})
    status, _, solver = _run(problem, SdpOptions())
    assert (status, solver) == ("optimal", "SCS")
    assert problem.calls == ["CLARABEL", "SCS"]


def test_all_inaccurate_restores_first_solution():
    problem = ScriptedProblem({"CLARABEL": cp.OPTIMAL_INACCURATE, "SCS": cp.USER_LIMIT})
    status, _, solver = _run(problem, SdpOptions())
    assert (status, solver) == ("optimal", "CLARABEL")
    assert problem.calls == ["CLARABEL", "SCS", "CLARABEL"]

    problem = ScriptedProblem({"CLARABEL": cp.INFEASIBLE_INACCURATE,
                               "SCS": cp.error.SolverError("scs failed")})
    status, _, solver = _run(problem, SdpOptions())
    assert (status, solver) == ("infeasible", "CLARABEL")

    problem = ScriptedProblem({"CLARABEL": cp.OPTIMAL_INACCURATE})
    status, _, _ = _run(problem, SdpOptions(fallback_solver=None))
    assert status == "optimal"
    assert problem.calls == ["CLARABEL"]


def test_all_solvers_failing_raises():
    problem = ScriptedProblem({"CLARABEL": cp.error.SolverError("a"), "SCS": cp.error.SolverError("b")})
    with pytest.raises(SolverError) as excinfo:
        _run(problem, SdpOptions())
    assert excinfo.value.status == "max_iter"


def test_hermitian_equality_rows():
    X = cp.Variable((3, 3), hermitian=True)
    constraints = hermitian_equality(X, np.eye(3))
    assert sum(c.size for c in constraints) == 9

    rng = make_rng(5)
    G = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    H = G + G.conj().T
    problem = cp.Problem(cp.Minimize(cp.real(cp.trace(X))), hermitian_equality(X, H))
    problem.solve(solver="CLARABEL")
    np.testing.assert_allclose(X.value, H, atol=1e-7)


def test_uncertified_overhead_raises():
    capped = SdpOptions(max_iter=2, fallback_solver=None)
    with pytest.raises(SolverError) as excinfo:
        sampling_overhead(w_state(), capped)
    assert excinfo.value.status == "max_iter"
    assert "rel_gap" in excinfo.value.details

    with pytest.raises(SolverError):
        approx_recoverability(ghz_state(), "hptp", capped)


def test_w_overhead_is_three(w_overhead):
    assert w_overhead.gamma == pytest.approx(3.0, abs=1e-3)
    assert w_overhead.nu == pytest.approx(math.log2(3), abs=1e-3)
    assert w_overhead.status == "optimal"
    assert w_overhead.rel_gap <= 1e-6
    assert w_overhead.c1 - w_overhead.c2 == pytest.approx(1.0, abs=1e-6)


def test_w_overhead_certificates(w_overhead):
    assert w_overhead.recovery_residual <= 1e-6
    report = check_overhead_feasibility(w_state(), w_overhead.c1, w_overhead.c2,
                                        w_overhead.J1, w_overhead.J2, feas_tol=1e-6)
    assert report.feasible
    certificate = w_overhead.dual_certificate
    assert certificate is not None
    assert np.trace(certificate.M).real <= 1 + 1e-6
    assert np.trace(certificate.N).real <= 1 + 1e-6


def test_w_overhead_map_reproduces_state(w_overhead):
    state = w_state()
    recovered = apply_map(w_overhead.recovery_map(), state.rho_AB)
    assert nx.trace_norm(recovered - state.rho) <= 1e-6


def assert_certified(result, gap=1e-6):
    assert result.status == "optimal"
    assert result.rel_gap <= gap


@pytest.mark.parametrize("p", [0.0, 0.3, 0.6, 0.7])
def test_depolarized_w_overhead_plateau(p, sdp_options):
    result = sampling_overhead(depolarize(w_state(), p), sdp_options)
    assert_certified(result)
    assert result.gamma == pytest.approx(3.0, abs=1e-3)


def test_fully_depolarized_overhead_is_one(sdp_options):
    result = sampling_overhead(depolarize(w_state(), 1.0), sdp_options)
    assert_certified(result)
    assert result.gamma == pytest.approx(1.0, abs=1e-5)
    assert result.gamma >= 1 - sdp_options.feas_tol


@pytest.mark.parametrize("seed", range(10))
def test_qmc_overhead_is_one(seed, sdp_options):
    state = random_qmc([(1, 2, 0.5), (2, 1, 0.5)], d_A=2, d_C=2, seed=seed)
    result = sampling_overhead(state, sdp_options)
    assert_certified(result)
    assert result.gamma >= 1 - sdp_options.feas_tol
    assert result.gamma == pytest.approx(1.0, abs=1e-5)
    assert result.nu == pytest.approx(0.0, abs=1e-5)


def test_ghz_overhead_is_infeasible(sdp_options):
    with pytest.raises(NotRecoverableError) as excinfo:
        sampling_overhead(ghz_state(), sdp_options)
    assert excinfo.value.solver_status == "skipped"
    assert "not a VQMC" in excinfo.value.message

    no_precheck = SdpOptions(precheck=False)
    with pytest.raises(NotRecoverableError) as excinfo:
        sampling_overhead(ghz_state(), no_precheck)
    assert excinfo.value.solver_status == "infeasible"


def test_ghz_hptp_deviation_is_one_half(sdp_options):
    result = approx_recoverability(ghz_state(), "hptp", sdp_options)
    assert result.sdp_value == pytest.approx(0.5, abs=1e-6)
    assert result.eps_report == pytest.approx(1.0, abs=2e-6)
    assert result.rel_gap <= 1e-6
    assert result.J.flags.trace_preserving


def test_ghz_depolarized_deviation_grid(sdp_options):
    values = []
    for p in np.linspace(0.0, 1.0, 11):
        state = depolarize(ghz_state(), p)
        hptp = approx_recoverability(state, "hptp", sdp_options)
        cptp = approx_recoverability(state, "cptp", sdp_options)
        assert_certified(hptp)
        assert_certified(cptp)
        assert hptp.eps_report <= cptp.eps_report + 1e-6
        assert hptp.eps_report == pytest.approx(1 - p, abs=1e-5)
        values.append((hptp.eps_report, cptp.eps_report))
    assert values[0][0] > 0
    assert values[-1][0] == pytest.approx(0.0, abs=1e-6)
    assert values[-1][1] == pytest.approx(0.0, abs=1e-6)


def test_vqmc_has_zero_hptp_deviation(sdp_options):
    result = approx_recoverability(w_state(), "hptp", sdp_options)
    assert result.sdp_value == pytest.approx(0.0, abs=1e-6)
    cptp = approx_recoverability(w_state(), "cptp", sdp_options)
    assert cptp.sdp_value > 1e-3


def test_approx_rejects_unknown_mode(sdp_options):
    with pytest.raises(InvalidParameterError):
        approx_recoverability(w_state(), "lptp", sdp_options)


def test_tensor_states_merges_subsystems(small_qmc):
    w = w_state()
    joint = tensor_states(w, small_qmc)
    assert joint.dim_list == [4, 4, 2]
    np.testing.assert_allclose(joint.marginal("A"), np.kron(w.marginal("A"), small_qmc.marginal("A")),
                               atol=1e-14)
    np.testing.assert_allclose(joint.rho_B, np.kron(w.rho_B, small_qmc.rho_B), atol=1e-14)


def test_combined_decomposition_is_feasible(w_overhead, small_qmc, sdp_options):
    qmc_result = sampling_overhead(small_qmc, sdp_options)
    combined = combine_feasible(w_overhead, qmc_result)
    assert combined.c1 + combined.c2 == pytest.approx(w_overhead.gamma * qmc_result.gamma, rel=1e-9)
    report = check_overhead_feasibility(tensor_states(w_state(), small_qmc), combined.c1,
                                        combined.c2, combined.J1, combined.J2, feas_tol=1e-6)
    assert report.feasible, report


def test_additivity_with_qmc(small_qmc, sdp_options):
    result = additivity_check(w_state(), small_qmc, sdp_options)
    assert result.nu2 == pytest.approx(0.0, abs=1e-5)
    assert result.nu_joint == pytest.approx(math.log2(3), abs=1e-3)
    assert result.defect <= 1e-3
    assert result.feasible_point.recovery_residual <= 1e-5
    assert result.feasible_point.min_eigenvalue >= -1e-6


def test_additivity_budget(sdp_options):
    small = SdpOptions(max_joint_dim=16)
    with pytest.raises(BudgetExceededError):
        additivity_check(w_state(), w_state(), small)


@pytest.mark.slow
def test_w_tensor_w_overhead_is_nine(sdp_options):
    result = additivity_check(w_state(), w_state(), sdp_options)
    assert result.gamma_joint == pytest.approx(9.0, abs=1e-2)
    assert result.defect <= 1e-3
