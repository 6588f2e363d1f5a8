"""Stochastic stepping, ensembles, the real representation, and the gradient form."""

import numpy as np
import pytest

from qsdlab import (
    DOUBLED_DRIFT,
    GISIN_PERCIVAL,
    SIGMA_X,
    SIGMA_Z,
    BlochPoint,
    DensityMatrix,
    EnvironmentModel,
    NotApplicableError,
    OperatorMatrix,
    QuantumState,
    SdeConfig,
    StepFailureError,
    bloch_to_state,
    diffusion_columns,
    drift,
    em_step,
    ensemble_density,
    from_real,
    hermitian_gradient_check,
    lindblad_evolve,
    make_environment,
    path_stream,
    real_diffusion_matrix,
    real_drift_diffusion,
    sample_wiener,
    simulate_trajectory,
    to_real,
    trajectory_to_csv,
)
from qsdlab.dynamics import _path_noise
from conftest import random_unit_state


class TestDrift:
    def test_eigenstate_of_hermitian_channel(self, dephasing):
        excited = QuantumState(np.array([1.0, 0.0], dtype=complex))
        assert np.max(np.abs(drift(excited, dephasing))) < 1e-14

    def test_closed_system_limit(self, rng):
        model = make_environment("custom", hamiltonian=SIGMA_Z, lindblads=[])
        state = random_unit_state(rng)
        expected = -1j * (SIGMA_Z @ state.amplitudes)
        assert np.allclose(drift(state, model), expected)

    def test_plus_state_against_term_by_term_oracle(self, dephasing, plus_state):
        # independent scalar evaluation of <Ld>L psi - L dag L psi / 2 - ...
        psi = plus_state.amplitudes
        l = dephasing.lindblads[0].entries
        ell = np.vdot(psi, l @ psi)
        bracket = np.zeros(2, dtype=complex)
        for i in range(2):
            acc = 0.0 + 0.0j
            for j in range(2):
                acc += np.conj(ell) * l[i, j] * psi[j]
                acc -= 0.5 * sum(np.conj(l[k, i]) * l[k, j] for k in range(2)) * psi[j]
            acc -= 0.5 * np.conj(ell) * ell * psi[i]
            bracket[i] = acc
        assert np.allclose(drift(plus_state, dephasing), bracket, atol=1e-14)

    def test_doubled_convention_doubles_bracket(self, rng, thermal):
        state = random_unit_state(rng)
        assert np.allclose(drift(state, thermal, DOUBLED_DRIFT),
                           2.0 * drift(state, thermal), atol=1e-14)

    def test_unknown_convention(self, plus_state, dephasing):
        with pytest.raises(ValueError):
            drift(plus_state, dephasing, "heun")


class TestDiffusionColumns:
    def test_eigenstate_column_vanishes(self, measurement):
        excited = QuantumState(np.array([1.0, 0.0], dtype=complex))
        assert np.max(np.abs(diffusion_columns(excited, measurement))) < 1e-14

    def test_plus_state_measurement_column(self, measurement, plus_state):
        cols = diffusion_columns(plus_state, measurement)
        assert np.allclose(cols[:, 0], np.array([1.0, -1.0]) / np.sqrt(2))

    def test_thermal_column_matches_matrix_oracle(self, rng, thermal):
        state = random_unit_state(rng)
        l = thermal.lindblads[0].entries
        expected = l @ state.amplitudes - np.vdot(state.amplitudes, l @ state.amplitudes) * state.amplitudes
        assert np.allclose(diffusion_columns(state, thermal)[:, 0], expected, atol=1e-14)

    def test_columns_orthogonal_to_state(self, rng, thermal):
        for _ in range(20):
            state = random_unit_state(rng)
            cols = diffusion_columns(state, thermal)
            assert np.max(np.abs(state.amplitudes.conj() @ cols)) < 1e-13


class TestWienerIncrements:
    N = 1_000_000
    DT = 1e-3

    def test_moments(self):
        draws = sample_wiener(2, self.DT, path_stream(101, 0), count=self.N)
        assert np.max(np.abs(draws.mean(axis=0))) < 4 * np.sqrt(self.DT / self.N)
        cov = draws.conj().T @ draws / self.N
        assert np.max(np.abs(cov - self.DT * np.eye(2))) < 5 * self.DT / np.sqrt(self.N)
        pseudo = draws.T @ draws / self.N
        assert np.max(np.abs(pseudo)) < 5 * self.DT / np.sqrt(self.N)

    def test_single_draw_shape(self):
        inc = sample_wiener(3, 1e-3, path_stream(5, 1))
        assert inc.values.shape == (3,)
        assert inc.dt == 1e-3

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            sample_wiener(1, 0.0, path_stream(5, 0))

    def test_streams_independent_of_order(self):
        a = _path_noise(9, 3, 10, 1, 1e-3)
        _ = _path_noise(9, 7, 10, 1, 1e-3)
        b = _path_noise(9, 3, 10, 1, 1e-3)
        assert np.array_equal(a, b)


class TestEmStep:
    def test_deterministic_limit_matches_unitary(self, rng):
        model = make_environment("custom", hamiltonian=SIGMA_Z, lindblads=[])
        state = random_unit_state(rng)
        dt = 1e-5
        stepped = em_step(state, model, dt, path_stream(1, 0), renormalize=False)
        exact = QuantumState(np.diag(np.exp(-1j * np.diag(SIGMA_Z) * dt)) @ state.amplitudes)
        assert np.max(np.abs(stepped.amplitudes - exact.amplitudes)) < 5 * dt ** 2

    def test_renormalized_output_is_unit(self, rng, thermal):
        state = random_unit_state(rng)
        out = em_step(state, thermal, 1e-2, path_stream(2, 0))
        assert abs(out.norm() - 1.0) < 1e-14

    def test_dephasing_eigenstate_fixed_for_any_noise(self, dephasing):
        excited = QuantumState(np.array([1.0, 0.0], dtype=complex))
        for k in range(10):
            out = em_step(excited, dephasing, 1e-2, path_stream(3, k))
            assert np.allclose(out.amplitudes, excited.amplitudes)

    def test_norm_floor_raises(self, plus_state):
        # with the noise zeroed out, mu^2 dt = 2 makes the drift cancel the
        # state exactly, tripping the pre-renormalization norm guard
        from qsdlab.dynamics import _apply_step
        model = make_environment("measurement", {"mu": 1.0})
        with pytest.raises(StepFailureError):
            _apply_step(plus_state.amplitudes, model, 2.0,
                        np.zeros(1, dtype=complex), 0.5, True, step_index=17)


class TestTrajectories:
    def test_minimal_run_records_initial_state(self, dephasing, plus_state):
        cfg = SdeConfig(dt=1e-3, steps=1, record_stride=2, seed=1)
        record = simulate_trajectory(plus_state, dephasing, cfg)
        assert len(record.states) == 1
        assert np.array_equal(record.states[0].amplitudes, plus_state.amplitudes)
        assert record.times[0] == 0.0

    def test_stationary_eigenstate_path(self, dephasing):
        excited = QuantumState(np.array([1.0, 0.0], dtype=complex))
        cfg = SdeConfig(dt=1e-3, steps=10_000, record_stride=100, seed=7)
        record = simulate_trajectory(excited, dephasing, cfg)
        sz = np.array([abs(s.amplitudes[0]) ** 2 - abs(s.amplitudes[1]) ** 2
                       for s in record.states])
        assert np.max(np.abs(sz - 1.0)) < 1e-10

    def test_bit_identical_reruns(self, measurement):
        state0 = bloch_to_state(BlochPoint(1.0, 0.2))
        cfg = SdeConfig(dt=1e-3, steps=2000, record_stride=40, seed=42)
        rec1 = simulate_trajectory(state0, measurement, cfg)
        rec2 = simulate_trajectory(state0, measurement, cfg)
        assert all(np.array_equal(a.amplitudes, b.amplitudes)
                   for a, b in zip(rec1.states, rec2.states))
        assert np.array_equal(rec1.norms, rec2.norms)

    def test_record_lengths_consistent(self, dephasing, plus_state):
        cfg = SdeConfig(dt=1e-3, steps=1000, record_stride=30, seed=3)
        record = simulate_trajectory(plus_state, dephasing, cfg)
        assert len(record.times) == len(record.states) == len(record.norms)
        assert np.allclose(np.diff(record.times), 0.03)

    def test_csv_schema(self, tmp_path, dephasing, plus_state):
        cfg = SdeConfig(dt=1e-3, steps=100, record_stride=20, seed=3)
        record = simulate_trajectory(plus_state, dephasing, cfg)
        out = tmp_path / "traj.csv"
        trajectory_to_csv(record, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "t,re_c0,im_c0,re_c1,im_c1,norm,sx,sy,sz"
        assert len(lines) == 1 + len(record.times)
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == 0.0
        assert first[6] == pytest.approx(1.0)  # sx of |+>


class TestEnsembles:
    def test_single_trajectory_projector_series(self, dephasing, plus_state):
        cfg = SdeConfig(dt=1e-3, steps=50, record_stride=10, seed=11)
        ens = ensemble_density(plus_state, dephasing, cfg, n_traj=1)
        record = simulate_trajectory(plus_state, dephasing, cfg)
        for k, state in enumerate(record.states):
            proj = np.outer(state.amplitudes, state.amplitudes.conj())
            assert np.allclose(ens.mean[k], proj)

    def test_matches_master_equation_dephasing(self, dephasing, plus_state):
        cfg = SdeConfig(dt=1e-3, steps=1000, record_stride=100, seed=2024)
        ens = ensemble_density(plus_state, dephasing, cfg, n_traj=1500)
        oracle = lindblad_evolve(DensityMatrix.from_state(plus_state), dephasing,
                                 cfg.t_final, 1e-4)
        rho_o = oracle.values[(cfg.record_indices() * 10)]
        dev_re = np.abs(ens.mean.real - rho_o.real)
        dev_im = np.abs(ens.mean.imag - rho_o.imag)
        assert np.all(dev_re <= 3.0 * ens.stderr.real + 1e-12)
        assert np.all(dev_im <= 3.0 * ens.stderr.imag + 1e-12)

    def test_thermal_relaxes_to_superoperator_fixed_point(self, thermal):
        from qsdlab import stationary_state
        excited = QuantumState(np.array([1.0, 0.0], dtype=complex))
        cfg = SdeConfig(dt=1e-3, steps=4000, record_stride=4000, seed=99)
        ens = ensemble_density(excited, thermal, cfg, n_traj=1200)
        target = stationary_state(thermal).entries
        dev_re = np.abs(ens.mean[-1].real - target.real)
        dev_im = np.abs(ens.mean[-1].imag - target.imag)
        assert np.all(dev_re <= 3.0 * ens.stderr[-1].real + 1e-3)
        assert np.all(dev_im <= 3.0 * ens.stderr[-1].imag + 1e-3)

    def test_doubled_drift_breaks_master_equation_consistency(self, dephasing, plus_state):
        # renormalization off makes the inflated dissipative drift visible:
        # the fitted coherence decay runs well above the master-equation rate
        cfg = SdeConfig(dt=1e-3, steps=1000, record_stride=25, seed=31,
                        renormalize_each_step=False)
        ens = ensemble_density(plus_state, dephasing, cfg, n_traj=1500,
                               convention=DOUBLED_DRIFT)
        rate = -np.polyfit(ens.times, np.log(np.abs(ens.mean[:, 0, 1])), 1)[0]
        reference = 0.5 * dephasing.couplings["mu"] ** 2
        assert rate / reference > 1.3

    def test_norm_preserved_in_expectation_default_convention(self, rng, dephasing):
        # E[d |psi|^2] per step is O(dt^2) for the default drift
        state = random_unit_state(rng)
        dt, n = 1e-3, 10_000
        stream = path_stream(404, 0)
        drifts = np.empty(n)
        for k in range(n):
            out = em_step(state, dephasing, dt, stream, renormalize=False)
            drifts[k] = out.norm() ** 2 - 1.0
        assert abs(drifts.mean()) < 5e-5

    def test_json_export_schema(self, dephasing, plus_state):
        import json
        cfg = SdeConfig(dt=1e-3, steps=10, record_stride=5, seed=1)
        ens = ensemble_density(plus_state, dephasing, cfg, n_traj=3)
        payload = json.loads(ens.to_json())
        assert set(payload) == {"times", "rho", "stderr"}
        assert np.array(payload["rho"]).shape == (3, 2, 2, 2)


class TestRealRepresentation:
    def test_real_amplitude(self):
        x = to_real(QuantumState(np.array([1.0, 0.0], dtype=complex))).x
        assert np.allclose(x, [np.sqrt(2), 0, 0, 0])

    def test_imaginary_amplitude(self):
        x = to_real(QuantumState(np.array([0.0, 1.0j], dtype=complex))).x
        assert np.allclose(x, [0, 0, 0, np.sqrt(2)])

    def test_roundtrip(self, rng):
        worst = 0.0
        for _ in range(100):
            state = random_unit_state(rng)
            back = from_real(to_real(state))
            worst = max(worst, np.max(np.abs(back.amplitudes - state.amplitudes)))
        assert worst < 1e-15

    def test_unit_state_chart_norm(self, rng):
        x = to_real(random_unit_state(rng)).x
        assert np.sum(x ** 2) == pytest.approx(2.0, abs=1e-12)

    def test_empty_channel_list_gives_zero_coefficients(self, rng):
        model = make_environment("custom", lindblads=[])
        x = to_real(random_unit_state(rng))
        f, b = real_drift_diffusion(x, model)
        assert np.max(np.abs(f)) == 0.0
        assert b.shape == (4, 0)

    def test_step_equivalence_with_complex_form(self, rng, thermal):
        state = random_unit_state(rng)
        dt = 1e-3
        d_w = sample_wiener(1, dt, path_stream(8, 0)).values
        psi_new = (state.amplitudes + drift(state, thermal) * dt
                   + diffusion_columns(state, thermal) @ d_w)
        f, b = real_drift_diffusion(to_real(state), thermal)
        d_w_real = np.concatenate([np.sqrt(2) * d_w.real, np.sqrt(2) * d_w.imag])
        x_new = to_real(state).x + f * dt + b @ d_w_real
        assert np.max(np.abs(from_real(x_new).amplitudes - psi_new)) < 1e-13

    def test_noise_blocks_square_to_twice_the_metric_image(self, rng, thermal):
        # scriptB scriptB^T equals the doubled real covariance image of B B^dagger;
        # the metric keeps the halved normalization
        state = random_unit_state(rng)
        _, b_real = real_drift_diffusion(to_real(state), thermal)
        cols = diffusion_columns(state, thermal)
        image = real_diffusion_matrix(cols @ cols.conj().T)
        assert np.max(np.abs(b_real @ b_real.T - 2.0 * image)) < 1e-13


class TestGradientForm:
    def test_measurement_with_commuting_hamiltonian(self, rng):
        model = make_environment("measurement", {"mu": 1.0}, hamiltonian=SIGMA_Z)
        for _ in range(30):
            report = hermitian_gradient_check(to_real(random_unit_state(rng)), model)
            assert report.max_residual < 1e-12

    def test_dephasing_with_transverse_perturbation(self, rng):
        model = make_environment("dephasing", {"mu": 0.6}, hamiltonian=0.01 * SIGMA_X)
        for _ in range(30):
            report = hermitian_gradient_check(to_real(random_unit_state(rng)), model)
            assert report.max_residual < 1e-12

    def test_complex_hermitian_channel_supported(self, rng):
        from qsdlab import SIGMA_Y
        model = EnvironmentModel(OperatorMatrix(0.2 * SIGMA_X),
                                 (OperatorMatrix(0.7 * SIGMA_Y),))
        report = hermitian_gradient_check(to_real(random_unit_state(rng)), model)
        assert report.max_residual < 1e-12

    def test_thermal_channel_not_applicable(self, rng, thermal):
        with pytest.raises(NotApplicableError):
            hermitian_gradient_check(to_real(random_unit_state(rng)), thermal)

    def test_two_channels_not_applicable(self, rng):
        model = make_environment("custom",
                                 lindblads=[0.3 * SIGMA_Z, 0.2 * SIGMA_X])
        with pytest.raises(NotApplicableError):
            hermitian_gradient_check(to_real(random_unit_state(rng)), model)
