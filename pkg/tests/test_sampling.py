import csv
import dataclasses
import math

import numpy as np
import pytest

from exceptions import DimensionError, InvalidParameterError, SamplingError
from sampling import (
    SamplingOptions, batch_sizes, born_probabilities, exact_expectation, hoeffding_shots, make_plan,
    parse_observable, pauli_observable, run, save_records_csv,
)
from states import ghz_state, w_state


def test_hoeffding_shot_counts():
    assert hoeffding_shots(1.0, 1.0, 0.1, 0.05) == 738
    shots = hoeffding_shots(3.0, 1.0, 0.1, 0.05)
    assert 9 * 737 < shots <= 9 * 738
    # ε 减半，次数约为四倍
    assert hoeffding_shots(1.0, 1.0, 0.05, 0.05) == 2952
    assert hoeffding_shots(0.0, 1.0, 0.1, 0.05) == 1


def test_pauli_observables():
    zzz = pauli_observable("zzz")
    assert zzz.shape == (8, 8)
    np.testing.assert_allclose(np.diag(zzz).real, [1, -1, -1, 1, -1, 1, 1, -1])
    np.testing.assert_allclose(pauli_observable("XI"), np.kron([[0, 1], [1, 0]], np.eye(2)))
    with pytest.raises(InvalidParameterError):
        pauli_observable("ZQZ")
    with pytest.raises(InvalidParameterError):
        pauli_observable("")


def test_observable_from_file(tmp_path):
    path = tmp_path / "obs.json"
    path.write_text('{"re": [[1, 0], [0, -1]], "im": [[0, 0], [0, 0]]}', encoding="utf-8")
    np.testing.assert_allclose(parse_observable(str(path)), np.diag([1.0, -1.0]))
    np.testing.assert_allclose(parse_observable("Z"), np.diag([1.0, -1.0]))


def test_exact_expectation():
    zzz = pauli_observable("ZZZ")
    assert exact_expectation(w_state(), zzz) == pytest.approx(-1.0)
    assert exact_expectation(ghz_state(), zzz) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DimensionError):
        exact_expectation(w_state(), pauli_observable("ZZ"))


def test_plan_for_w_state(w_overhead):
    plan = make_plan(w_overhead, pauli_observable("ZZZ"), eps=0.1, delta=0.05, seed=1)
    assert len(plan.channels) == 2
    assert plan.probs.sum() == pytest.approx(1.0)
    assert plan.gamma == pytest.approx(3.0, abs=1e-3)
    np.testing.assert_array_equal(plan.signs, [1.0, -1.0])
    assert plan.observable_norm == pytest.approx(1.0)
    assert plan.shots == hoeffding_shots(plan.gamma, 1.0, 0.1, 0.05)
    for channel in plan.channels:
        assert channel.flags.completely_positive and channel.flags.trace_preserving


def test_plan_rejects_bad_inputs(w_overhead):
    with pytest.raises(InvalidParameterError):
        make_plan(w_overhead, pauli_observable("ZZZ"), eps=0.0)
    with pytest.raises(InvalidParameterError):
        make_plan(w_overhead, pauli_observable("ZZZ"), delta=1.0)
    with pytest.raises(DimensionError):
        make_plan(w_overhead, pauli_observable("ZZ"))


def test_qmc_plan_is_degenerate(small_qmc, sdp_options):
    from sdp import sampling_overhead
    result = sampling_overhead(small_qmc, sdp_options)
    plan = make_plan(result, np.eye(4), eps=0.1, delta=0.05)
    assert len(plan.channels) == 1
    assert plan.gamma == pytest.approx(1.0, abs=1e-5)
    outcome = run(plan, small_qmc.rho_AB)
    assert outcome.estimate == pytest.approx(1.0, abs=1e-4)


def test_batches_are_split_evenly():
    assert batch_sizes(10, 3) == [4, 3, 3]
    assert sum(batch_sizes(6640, 7)) == 6640


def test_run_is_deterministic_across_workers(w_overhead):
    plan = make_plan(w_overhead, pauli_observable("ZZZ"), eps=0.1, delta=0.05, seed=42)
    state = w_state()
    single = run(plan, state.rho_AB, record=True, batches=4, workers=1)
    pooled = run(plan, state.rho_AB, record=True, batches=4, workers=3)
    assert single.estimate == pooled.estimate
    np.testing.assert_array_equal(single.records.signed_contribution, pooled.records.signed_contribution)
    assert len(single.records) == plan.shots


def test_run_rejects_bad_batches(w_overhead):
    plan = make_plan(w_overhead, pauli_observable("ZZZ"), eps=0.1, delta=0.05)
    with pytest.raises(InvalidParameterError):
        run(plan, w_state().rho_AB, batches=-1)


def test_estimator_is_unbiased(w_overhead):
    plan = make_plan(w_overhead, pauli_observable("ZZZ"), eps=0.1, delta=0.05, seed=7)
    plan = dataclasses.replace(plan, shots=100_000)
    outcome = run(plan, w_state().rho_AB, batches=8, workers=4)
    assert abs(outcome.estimate - (-1.0)) <= 5 * outcome.stderr
    assert outcome.shots == 100_000


@pytest.mark.slow
def test_hoeffding_failure_rate(w_overhead):
    eps, delta = 0.1, 0.05
    state = w_state()
    failures = 0
    for seed in range(200):
        plan = make_plan(w_overhead, pauli_observable("ZZZ"), eps=eps, delta=delta, seed=seed)
        if abs(run(plan, state.rho_AB).estimate + 1.0) > eps:
            failures += 1
    assert failures / 200 <= delta + 0.03


def test_born_probabilities():
    eigenvectors = np.eye(2)
    np.testing.assert_allclose(born_probabilities(np.diag([0.25, 0.75]), eigenvectors, 1e-8), [0.25, 0.75])
    clipped = born_probabilities(np.diag([-1e-10, 1.0 + 1e-10]), eigenvectors, 1e-8)
    assert clipped.min() >= 0 and clipped.sum() == pytest.approx(1.0)
    with pytest.raises(SamplingError):
        born_probabilities(np.diag([-0.2, 1.2]), eigenvectors, 1e-8)


def test_options_from_config():
    from config_manager import ConfigManager
    manager = ConfigManager(None)
    manager.set("sampling.eps", 0.2)
    manager.set("sampling.seed", None)
    options = SamplingOptions.from_config(manager)
    assert options.eps == 0.2
    assert options.seed is None


def test_records_csv(w_overhead, tmp_path):
    plan = make_plan(w_overhead, pauli_observable("ZZZ"), eps=0.5, delta=0.1, seed=3)
    outcome = run(plan, w_state().rho_AB, record=True)
    path = tmp_path / "records.csv"
    save_records_csv(outcome.records, str(path))
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["shot_index", "channel", "eigenvalue", "signed_contribution"]
    assert len(rows) == plan.shots + 1
    for row in rows[1:]:
        assert row[1] in ("1", "2")
        assert float(row[2]) in (-1.0, 1.0)
        assert math.isclose(abs(float(row[3])), plan.gamma, rel_tol=1e-12)
