"""Built-in oracle-equivalence and invariant checks behind `qsdlab verify`.

Each check is small, deterministic, and prints one line; the CLI exits
nonzero when any of them fails.  They overlap the test suite on purpose:
this is the quick field diagnostic for an installed copy.
"""

from __future__ import annotations

import numpy as np

from .quantum import (
    BlochPoint,
    DensityMatrix,
    EnvironmentModel,
    QuantumState,
    bloch_to_state,
    lindblad_evolve,
    make_environment,
    state_to_bloch,
)
from .dynamics import (
    DOUBLED_DRIFT,
    SdeConfig,
    diffusion_columns,
    drift,
    from_real,
    hermitian_gradient_check,
    path_stream,
    real_drift_diffusion,
    sample_wiener,
    simulate_trajectory,
    to_real,
)
from .geometry import (
    christoffel,
    closed_form_qubit_metric,
    metric_at,
    scalar_curvature_many,
)
from .quantum import SIGMA_X, SIGMA_Z

_PRESETS = [
    ("dephasing", {"mu": 0.6}),
    ("thermal", {"mu1": 2.0, "mu2": 1.0}),
    ("measurement", {"mu": 1.0}),
]


def _random_unit(rng):
    psi = rng.normal(size=2) + 1j * rng.normal(size=2)
    return QuantumState(psi / np.linalg.norm(psi))


def check_bloch_roundtrip():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        point = BlochPoint(rng.uniform(1e-6, np.pi - 1e-6), rng.uniform(0, 2 * np.pi))
        back = state_to_bloch(bloch_to_state(point))
        worst = max(worst, abs(back.theta - point.theta), abs(back.phi - point.phi))
    assert worst < 1e-10, f"roundtrip angular error {worst:.3e}"


def check_real_chart_roundtrip():
    rng = np.random.default_rng(12)
    for _ in range(100):
        state = _random_unit(rng)
        err = np.max(np.abs(from_real(to_real(state)).amplitudes - state.amplitudes))
        assert err < 1e-14, f"chart roundtrip error {err:.3e}"


def check_preset_serialization():
    for kind, coup in _PRESETS:
        model = make_environment(kind, coup)
        back = EnvironmentModel.from_json(model.to_json())
        assert back.kind == model.kind
        assert np.allclose(back.lindblads[0].entries, model.lindblads[0].entries)


def check_master_equation_dephasing():
    model = make_environment("dephasing", {"mu": 0.6})
    plus = QuantumState(np.array([1.0, 1.0]) / np.sqrt(2))
    series = lindblad_evolve(DensityMatrix.from_state(plus), model, 1.0, 1e-4)
    expected = 0.5 * np.exp(-0.18 * series.times)
    err = np.max(np.abs(np.abs(series.values[:, 0, 1]) - expected))
    assert err < 1e-8, f"dephasing decay error {err:.3e}"


def check_closed_form_metrics():
    rng = np.random.default_rng(13)
    for kind, coup in _PRESETS:
        model = make_environment(kind, coup)
        for _ in range(50):
            x = to_real(_random_unit(rng)).x
            err = np.max(np.abs(metric_at(x, model).g
                                - closed_form_qubit_metric(x, kind, coup).g))
            assert err < 1e-12, f"{kind}: closed form differs by {err:.3e}"


def check_flat_geometry():
    model = make_environment("custom", lindblads=[])
    rng = np.random.default_rng(14)
    xs = rng.normal(size=(20, 4))
    assert np.max(np.abs(scalar_curvature_many(xs, model))) < 1e-6
    assert np.max(np.abs(christoffel(xs[0], model))) < 1e-10


def check_real_complex_step():
    rng = np.random.default_rng(15)
    model = make_environment("thermal", {"mu1": 2.0, "mu2": 1.0})
    state = _random_unit(rng)
    dt = 1e-3
    d_w = sample_wiener(1, dt, path_stream(5, 0)).values
    psi_complex = (state.amplitudes + drift(state, model) * dt
                   + diffusion_columns(state, model) @ d_w)
    f_real, b_real = real_drift_diffusion(to_real(state), model)
    d_w_real = np.concatenate([np.sqrt(2) * d_w.real, np.sqrt(2) * d_w.imag])
    x_new = to_real(state).x + f_real * dt + b_real @ d_w_real
    err = np.max(np.abs(from_real(x_new).amplitudes - psi_complex))
    assert err < 1e-13, f"real/complex step mismatch {err:.3e}"


def check_wiener_moments():
    rng = path_stream(17, 0)
    n, dt = 200_000, 1e-3
    draws = sample_wiener(2, dt, rng, count=n)
    mean = np.abs(draws.mean(axis=0)).max()
    assert mean < 4 * np.sqrt(dt / n), f"wiener mean {mean:.3e}"
    cov = draws.conj().T @ draws / n
    assert np.max(np.abs(cov - dt * np.eye(2))) < 5 * dt / np.sqrt(n)
    pseudo = draws.T @ draws / n
    assert np.max(np.abs(pseudo)) < 5 * dt / np.sqrt(n)


def check_gradient_form():
    rng = np.random.default_rng(18)
    model = make_environment("measurement", {"mu": 1.0}, hamiltonian=SIGMA_Z)
    for _ in range(20):
        report = hermitian_gradient_check(to_real(_random_unit(rng)), model)
        assert report.max_residual < 1e-12, f"residual {report.max_residual:.3e}"


def check_gauge_isometry():
    rng = np.random.default_rng(19)
    model = make_environment("dephasing", {"mu": 0.6})
    state = _random_unit(rng)
    alpha = rng.uniform(0, 2 * np.pi)
    rotated = QuantumState(np.exp(1j * alpha) * state.amplitudes)
    xs = np.stack([to_real(state).x, to_real(rotated).x])
    r_both = scalar_curvature_many(xs, model)
    assert abs(r_both[0] - r_both[1]) < 1e-6


def check_trajectory_determinism():
    model = make_environment("measurement", {"mu": 1.0})
    state0 = bloch_to_state(BlochPoint(1.1, 0.4))
    cfg = SdeConfig(dt=1e-3, steps=500, seed=71, record_stride=50)
    rec1 = simulate_trajectory(state0, model, cfg)
    rec2 = simulate_trajectory(state0, model, cfg)
    for a, b in zip(rec1.states, rec2.states):
        assert np.array_equal(a.amplitudes, b.amplitudes)


def check_doubled_drift_is_doubled():
    rng = np.random.default_rng(20)
    model = make_environment("dephasing", {"mu": 0.6})
    state = _random_unit(rng)
    base = drift(state, model)
    doubled = drift(state, model, DOUBLED_DRIFT)
    dissipative = base  # presets carry H = 0
    err = np.max(np.abs(doubled - 2.0 * dissipative))
    assert err < 1e-14, f"doubled bracket mismatch {err:.3e}"


CHECKS = [
    ("bloch roundtrip", check_bloch_roundtrip),
    ("real chart roundtrip", check_real_chart_roundtrip),
    ("preset serialization", check_preset_serialization),
    ("master equation dephasing decay", check_master_equation_dephasing),
    ("closed-form metric equivalence", check_closed_form_metrics),
    ("flat geometry", check_flat_geometry),
    ("real/complex step equivalence", check_real_complex_step),
    ("wiener increment moments", check_wiener_moments),
    ("hermitian gradient form", check_gradient_form),
    ("global-phase isometry", check_gauge_isometry),
    ("trajectory determinism", check_trajectory_determinism),
    ("doubled drift bracket", check_doubled_drift_is_doubled),
]


def run_all(threads: int | None = None) -> list:
    """Run every check; returns the list of (name, error) failures."""
    del threads  # checks are small; kept for CLI symmetry
    failures = []
    for name, func in CHECKS:
        try:
            func()
        except AssertionError as exc:
            failures.append((name, str(exc)))
            print(f"FAIL  {name}: {exc}")
        except Exception as exc:  # noqa: BLE001 - report, then keep checking
            failures.append((name, f"{type(exc).__name__}: {exc}"))
            print(f"FAIL  {name}: {type(exc).__name__}: {exc}")
        else:
            print(f"ok    {name}")
    if failures:
        print(f"{len(failures)} of {len(CHECKS)} checks failed")
    else:
        print(f"all {len(CHECKS)} checks passed")
    return failures
