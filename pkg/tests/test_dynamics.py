import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from helpers import SM, SP, SX, SY, SZ, evolve, model_superop, rand_herm, rand_state, ref_superop
from qdsctl import (
    DimensionError,
    FeedbackDesign,
    GridMismatch,
    LindbladModel,
    SpaceDecomposition,
    StateInvariantViolation,
    TrajectoryRecord,
    build_fme,
    energy_ladder,
    ensemble_mean,
    integrate_master,
    lyapunov_trace,
    simulate_ensemble,
    simulate_sme,
    subspace_population,
    superoperator,
)
from qdsctl.dynamics import sme_drift_superoperator, trajectory_rng

seeds = st.integers(0, 2**32 - 1)
EXCITED = np.diag([1.0, 0.0]).astype(complex)


def decay(gamma=1.0, omega=1.0):
    return LindbladModel(omega * SZ, ((gamma, SM),))


def random_design(rng, d, eta=1.0):
    M = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return FeedbackDesign(M, rand_herm(rng, d), rand_herm(rng, d), rand_herm(rng, d), eta)


def qubit_design(eta=1.0):
    # measurement sx/2 with feedback -sy/2: closed-loop channel s_+
    return FeedbackDesign(SX / 2, -SY / 2, np.zeros((2, 2)), None, eta)


# ------------------------------------------------------------------ master equation


def test_decay_population_follows_exponential():
    rec = integrate_master(decay(), EXCITED, 5.0, 1e-2)
    pe = rec.states[:, 0, 0].real
    assert np.max(np.abs(pe - np.exp(-rec.times))) < 1e-7
    assert rec.times[-1] == pytest.approx(5.0)
    assert rec.states.shape == (501, 2, 2)


def test_zero_generator_keeps_state(rng):
    rho = rand_state(rng, 3)
    rec = integrate_master(LindbladModel(np.zeros((3, 3))), rho, 1.0, 0.1)
    assert np.allclose(rec.states, rho[None], atol=1e-15)


def test_rk4_matches_matrix_exponential(rng):
    m = LindbladModel(rand_herm(rng, 3), ((0.7, rng.normal(size=(3, 3))), (0.3, rng.normal(size=(3, 3)))))
    rho0 = rand_state(rng, 3)
    rec = integrate_master(m, rho0, 5.0, 1e-3)
    ref = evolve(m, rho0, rec.times[::500])
    assert np.max(np.abs(rec.states[::500] - ref)) < 1e-8


@given(seeds, st.integers(2, 4))
@settings(max_examples=15)
def test_trace_and_positivity_preserved(seed, d):
    rng = np.random.default_rng(seed)
    m = LindbladModel(rand_herm(rng, d), ((1.0, rng.normal(size=(d, d))),))
    rec = integrate_master(m, rand_state(rng, d), 2.0, 1e-2)
    assert rec.trace_drift() < 1e-6
    assert rec.min_eigenvalue() > -1e-6
    rec.validate()


def test_unstable_step_aborts():
    with pytest.raises(StateInvariantViolation) as exc:
        integrate_master(decay(gamma=100.0), EXCITED, 5.0, 0.1)
    assert exc.value.time is not None


def test_bad_inputs():
    with pytest.raises(DimensionError):
        integrate_master(decay(), np.eye(3) / 3, 1.0, 0.1)
    with pytest.raises(ValueError):
        integrate_master(decay(), EXCITED, 1.0, -0.1)


def test_csv_layout(tmp_path):
    rec = integrate_master(decay(), EXCITED, 0.2, 0.1)
    rec.to_csv(tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "time,b0,b1,b2,b3"
    assert len(lines) == 4
    cur = TrajectoryRecord(rec.times, rec.states, np.array([0.1, 0.2]))
    cur.to_csv(tmp_path / "b.csv")
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows[0].endswith(",dY") and rows[1].endswith(",") and rows[2].endswith("0.1")


# ------------------------------------------------------------------ feedback master equation


def test_fme_of_qubit_design():
    m = build_fme(qubit_design())
    assert np.allclose(m.H, 0)  # (FM + M^dag F)/2 vanishes
    assert len(m.channels) == 1
    assert np.allclose(m.operators[0], SP)


def test_fme_without_feedback_is_measurement_channel(rng):
    M = rng.normal(size=(3, 3))
    H = rand_herm(rng, 3)
    m = build_fme(FeedbackDesign(M, np.zeros((3, 3)), H))
    assert np.allclose(m.H, H) and np.allclose(m.operators[0], M)


def test_inefficient_detection_adds_feedback_dephasing(rng):
    des = random_design(rng, 3)
    eta = 0.6
    F = des.F
    extra = ref_superop(lambda r: F @ r @ F - 0.5 * (F @ F @ r + r @ F @ F), 3)
    diff = superoperator(build_fme(des.with_eta(eta))) - superoperator(build_fme(des))
    assert np.allclose(diff, (1 - eta) / eta * extra, atol=1e-10)


@given(seeds, st.integers(2, 4), st.sampled_from([1.0, 0.8, 0.3]))
def test_sme_drift_equals_fme(seed, d, eta):
    rng = np.random.default_rng(seed)
    des = random_design(rng, d, eta)
    S = sme_drift_superoperator(des)
    fme = superoperator(build_fme(des))
    assert np.max(np.abs(S - fme)) <= 1e-10 * max(1.0, np.max(np.abs(fme)))


def test_drift_reference_formula(rng):
    des = random_design(rng, 3, 0.7)
    M, F, H = des.M, des.F, des.H + des.H_c
    c = lambda X, r: -1j * (X @ r - r @ X)

    def drift(r):
        Md = M.conj().T
        return (c(H, r) + M @ r @ Md - 0.5 * (Md @ M @ r + r @ Md @ M)
                + c(F, M @ r + r @ Md) + c(F, c(F, r)) / (2 * des.eta))

    assert np.allclose(sme_drift_superoperator(des), ref_superop(drift, 3), atol=1e-12)
    assert np.allclose(superoperator(build_fme(des)), model_superop(build_fme(des)), atol=1e-12)


def test_design_validation():
    with pytest.raises(DimensionError):
        FeedbackDesign(SX, SP, SZ)
    with pytest.raises(ValueError):
        FeedbackDesign(SX, SY, SZ, None, 0.0)


# ------------------------------------------------------------------ stochastic trajectories


def test_trajectory_streams_are_independent_and_reproducible():
    a = trajectory_rng(7, 0).standard_normal(5)
    assert np.array_equal(a, trajectory_rng(7, 0).standard_normal(5))
    assert not np.array_equal(a, trajectory_rng(7, 1).standard_normal(5))
    assert not np.array_equal(a, trajectory_rng(8, 0).standard_normal(5))


def test_no_measurement_gives_unitary_motion_and_pure_noise_current():
    H = 0.8 * SX
    des = FeedbackDesign(np.zeros((2, 2)), np.zeros((2, 2)), H)
    rec = simulate_sme(des, EXCITED, 2.0, 1e-2, seed=3)
    U = expm(-1j * H * 2.0)
    assert np.allclose(rec.final, U @ EXCITED @ U.conj().T, atol=1e-3)
    dw = trajectory_rng(3, 0).standard_normal(200) * np.sqrt(1e-2)
    assert np.allclose(rec.current_increments, dw)


def test_fixed_seed_is_bit_identical():
    des = qubit_design()
    a = simulate_sme(des, np.eye(2) / 2, 1.0, 1e-2, seed=11)
    b = simulate_sme(des, np.eye(2) / 2, 1.0, 1e-2, seed=11)
    c = simulate_sme(des, np.eye(2) / 2, 1.0, 1e-2, seed=12)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.current_increments, b.current_increments)
    assert not np.array_equal(a.states, c.states)


def test_conditional_states_stay_physical():
    rec = simulate_sme(qubit_design(), np.eye(2) / 2, 3.0, 1e-2, seed=5)
    assert rec.trace_drift() < 1e-12
    assert rec.min_eigenvalue() > -1e-6


def test_ensemble_is_independent_of_worker_count():
    des = qubit_design(0.8)
    a = simulate_ensemble(des, np.eye(2) / 2, 0.5, 1e-2, seed=2, n_trajectories=40, workers=1, chunk=10)
    b = simulate_ensemble(des, np.eye(2) / 2, 0.5, 1e-2, seed=2, n_trajectories=40, workers=2, chunk=10)
    assert np.array_equal(a.mean.states, b.mean.states)
    assert np.array_equal(a.current_mean, b.current_mean)


def test_kept_trajectories_match_single_runs():
    des = qubit_design()
    ens = simulate_ensemble(des, np.eye(2) / 2, 0.5, 1e-2, seed=4, n_trajectories=6, keep=3)
    assert len(ens.trajectories) == 3
    one = simulate_sme(des, np.eye(2) / 2, 0.5, 1e-2, seed=4, index=2)
    assert np.allclose(ens.trajectories[2].states, one.states, atol=1e-14)


@pytest.mark.parametrize("scheme", ["kraus", "euler"])
def test_ensemble_mean_tracks_fme(scheme):
    des = FeedbackDesign(SX / 2, -SY / 4, 0.3 * SZ, None, 0.7)
    rho0 = np.eye(2) / 2
    N = 400
    ens = simulate_ensemble(des, rho0, 2.0, 5e-3, seed=9, n_trajectories=N, keep=N, scheme=scheme)
    fme = integrate_master(build_fme(des), rho0, 2.0, 5e-3)
    every = np.array([t.bloch() for t in ens.trajectories])
    se = every.std(axis=0) / np.sqrt(N)
    dev = np.abs(ens.mean.bloch() - fme.bloch())
    assert np.max(dev[1:, 1:] / (se[1:, 1:] + 1e-3)) < 5.0


def test_mean_current_matches_expectation():
    des = FeedbackDesign(SX / 2, -SY / 4, 0.3 * SZ, None, 0.7)
    rho0 = np.eye(2) / 2
    N, dt = 400, 5e-3
    ens = simulate_ensemble(des, rho0, 2.0, dt, seed=13, n_trajectories=N, keep=N)
    fme = integrate_master(build_fme(des), rho0, 2.0, dt)
    M = des.M
    ex = 2 * np.real(np.einsum("ij,tji->t", M, fme.states[:-1]))
    totals = np.array([t.current_increments.sum() for t in ens.trajectories])
    expected = des.eta * np.sum(ex) * dt
    assert abs(totals.mean() - expected) < 4 * totals.std() / np.sqrt(N)
    assert np.allclose(ens.current_mean * N, sum(t.current_increments for t in ens.trajectories))
    assert ens.current_standard_error().shape == (400,)


# ------------------------------------------------------------------ averaging


def test_ensemble_mean_of_records(rng):
    t = np.array([0.0, 1.0])
    a = TrajectoryRecord(t, np.array([EXCITED, EXCITED]))
    b = TrajectoryRecord(t, np.array([np.diag([0, 1.0]), np.diag([0, 1.0])]))
    m = ensemble_mean([a, b])
    assert np.allclose(m.states[1], np.eye(2) / 2)
    assert np.array_equal(ensemble_mean([a, a]).states, a.states)
    with pytest.raises(GridMismatch):
        ensemble_mean([a, TrajectoryRecord(np.array([0.0, 2.0]), a.states)])


# ------------------------------------------------------------------ Lyapunov monitoring


def test_population_lyapunov_of_compensated_example():
    m = LindbladModel(SZ + SY / 2, ((1.0, SZ + SP),))
    rec = integrate_master(m, np.diag([0, 1.0]), 5.0, 1e-3)
    series, monotone = lyapunov_trace(rec, subspace_population(SpaceDecomposition.standard(1, 1, 1)))
    assert monotone
    assert np.max(np.abs(series - np.exp(-rec.times))) < 1e-8


def test_lyapunov_constant_on_invariant_initialized_state():
    m = LindbladModel(SZ + SY / 2, ((1.0, SZ + SP),))
    rec = integrate_master(m, EXCITED, 2.0, 1e-2)
    series, _ = lyapunov_trace(rec, subspace_population(SpaceDecomposition.standard(1, 1, 1)))
    assert np.max(np.abs(series)) < 1e-12


def test_energy_ladder_dimension_check():
    rec = integrate_master(decay(), EXCITED, 0.1, 0.1)
    series, _ = lyapunov_trace(rec, energy_ladder())
    assert np.isclose(series[0], 0.0)
    with pytest.raises(DimensionError):
        lyapunov_trace(rec, energy_ladder([0, 1, 2]))


def test_increasing_series_flagged():
    rec = integrate_master(decay(), EXCITED, 1.0, 0.1)
    _, monotone = lyapunov_trace(rec, energy_ladder())
    assert not monotone
