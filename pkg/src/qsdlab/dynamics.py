"""Stochastic pure-state dynamics driven by complex Wiener noise.

Drift and noise coefficients of the norm-preserving diffusion unravelling,
Euler-Maruyama trajectories, ensemble statistics against the master-equation
reference, the real 2n-dimensional representation, and the gradient-form
identity satisfied when the channel operator is Hermitian.

Two drift conventions are supported.  ``gisin_percival`` (default) uses the
bracket <L†>L - L†L/2 - <L†><L>/2 per channel, which together with complex
increments of covariance dt reproduces the master equation in the ensemble
mean.  ``doubled_drift`` doubles that bracket; it is retained for fidelity
experiments and is deliberately inconsistent with the master equation.

Randomness is counter-based: trajectory k of a run seeded with s draws from
an independent Philox stream keyed by (s, k), so ensembles are
order-independent and safe to farm out to parallel workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotApplicableError,
    StepFailureError,
)
from .quantum import EnvironmentModel, QuantumState, bloch_vector

GISIN_PERCIVAL = "gisin_percival"
DOUBLED_DRIFT = "doubled_drift"
CONVENTIONS = (GISIN_PERCIVAL, DOUBLED_DRIFT)

DEFAULT_SEED = 12345
NORM_FLOOR = 1e-8


def _bracket_scale(convention: str) -> float:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown drift convention {convention!r}; choose from {CONVENTIONS}")
    return 0.5 if convention == GISIN_PERCIVAL else 1.0


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def drift(state: QuantumState, model: EnvironmentModel,
          convention: str = GISIN_PERCIVAL) -> np.ndarray:
    """Deterministic part of the state increment (per unit time)."""
    if state.dim != model.dim:
        raise DimensionMismatchError(f"state is {state.dim}-dim, model is {model.dim}-dim")
    state.require_normalized()
    scale = _bracket_scale(convention)
    psi = state.amplitudes
    out = -1j * (model.hamiltonian.entries @ psi)
    for op in model.lindblads:
        l = op.entries
        l_psi = l @ psi
        ell = psi.conj() @ l_psi
        out = out + scale * (2.0 * ell.conjugate() * l_psi
                             - (l.conj().T @ l_psi)
                             - (ell.conjugate() * ell) * psi)
    return out


def diffusion_columns(state: QuantumState, model: EnvironmentModel) -> np.ndarray:
    """Noise coefficient matrix B; column l is the fluctuation (L_l - <L_l>) psi."""
    if state.dim != model.dim:
        raise DimensionMismatchError(f"state is {state.dim}-dim, model is {model.dim}-dim")
    state.require_normalized()
    psi = state.amplitudes
    cols = np.empty((state.dim, model.n_channels), dtype=complex)
    for k, op in enumerate(model.lindblads):
        l_psi = op.entries @ psi
        cols[:, k] = l_psi - (psi.conj() @ l_psi) * psi
    return cols


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseIncrement:
    """One draw of the m complex Wiener increments over a step dt."""

    values: np.ndarray
    dt: float


def path_stream(seed: int, path_index: int = 0) -> np.random.Generator:
    """Independent generator for one trajectory of a seeded run."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(path_index)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_wiener(m: int, dt: float, rng: np.random.Generator,
                  count: int | None = None):
    """Complex increments with E[dW dWbar] = dt and E[dW dW] = 0.

    Each component is (g_R + i g_I) sqrt(dt/2) with independent standard
    normals g_R, g_I.  With ``count`` given, returns a (count, m) array of
    draws instead of a single NoiseIncrement.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if count is None:
        g = rng.standard_normal(2 * m)
        values = (g[:m] + 1j * g[m:]) * np.sqrt(dt / 2.0)
        return NoiseIncrement(values=values, dt=dt)
    g = rng.standard_normal((count, 2 * m))
    return (g[:, :m] + 1j * g[:, m:]) * np.sqrt(dt / 2.0)


def _path_noise(seed: int, path_index: int, steps: int, m: int, dt: float) -> np.ndarray:
    """The full (steps, m) complex increment array of one trajectory."""
    rng = path_stream(seed, path_index)
    g = rng.standard_normal((steps, 2 * m))
    return (g[:, :m] + 1j * g[:, m:]) * np.sqrt(dt / 2.0)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SdeConfig:
    """Discretization, seeding, and recording policy of a stochastic run."""

    dt: float = 1e-3
    steps: int = 1000
    seed: int = DEFAULT_SEED
    renormalize_each_step: bool = True
    record_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")

    @property
    def t_final(self) -> float:
        return self.dt * self.steps

    def record_indices(self) -> np.ndarray:
        return np.arange(0, self.steps + 1, self.record_stride)


def _apply_step(psi, model, dt, d_w, scale, renormalize, step_index=None):
    """Shared Euler-Maruyama update for state batches psi[..., n]."""
    h = model.hamiltonian.entries
    out = psi + (-1j * dt) * np.einsum("ij,...j->...i", h, psi)
    for k, op in enumerate(model.lindblads):
        l = op.entries
        l_psi = np.einsum("ij,...j->...i", l, psi)
        ell = np.einsum("...i,...i->...", psi.conj(), l_psi)
        ell_bar = ell.conjugate()
        ld_l_psi = np.einsum("ij,...j->...i", l.conj().T, l_psi)
        bracket = (2.0 * ell_bar[..., None] * l_psi - ld_l_psi
                   - (ell_bar * ell)[..., None] * psi)
        out = out + (scale * dt) * bracket
        out = out + d_w[..., k, None] * (l_psi - ell[..., None] * psi)
    norms = np.linalg.norm(out, axis=-1)
    if np.any(norms < NORM_FLOOR):
        raise StepFailureError(
            f"state norm fell below {NORM_FLOOR:g} before renormalization",
            step_index=step_index,
        )
    if renormalize:
        out = out / norms[..., None]
    return out


def em_step(state: QuantumState, model: EnvironmentModel, dt: float,
            rng: np.random.Generator, convention: str = GISIN_PERCIVAL,
            renormalize: bool = True) -> QuantumState:
    """One Euler-Maruyama step psi + f dt + B dW, optionally renormalized."""
    if state.dim != model.dim:
        raise DimensionMismatchError(f"state is {state.dim}-dim, model is {model.dim}-dim")
    state.require_normalized(tol=1e-9)
    scale = _bracket_scale(convention)
    d_w = sample_wiener(model.n_channels, dt, rng).values
    return QuantumState(_apply_step(state.amplitudes, model, dt, d_w, scale, renormalize))


@dataclass(frozen=True)
class TrajectoryRecord:
    """States of one sample path on the recording grid."""

    times: np.ndarray
    states: list[QuantumState]
    norms: np.ndarray
    seed: int

    def __post_init__(self):
        if not (len(self.times) == len(self.states) == len(self.norms)):
            raise ValueError("times, states, and norms must have equal length")


def _evolve_recorded(psi0_batch, model, config: SdeConfig, convention: str):
    """Vectorized path bundle; returns recorded states [P, K, n] on the grid."""
    scale = _bracket_scale(convention)
    p, n = psi0_batch.shape
    m = model.n_channels
    rec = config.record_indices()
    rec_set = {int(i): k for k, i in enumerate(rec)}
    out = np.empty((p, len(rec), n), dtype=complex)

    noise = np.empty((p, config.steps, m), dtype=complex)
    for j in range(p):
        noise[j] = _path_noise(config.seed, j, config.steps, m, config.dt)

    psi = psi0_batch.astype(complex)
    if 0 in rec_set:
        out[:, rec_set[0]] = psi
    for step in range(config.steps):
        psi = _apply_step(psi, model, config.dt, noise[:, step], scale,
                          config.renormalize_each_step, step_index=step)
        k = rec_set.get(step + 1)
        if k is not None:
            out[:, k] = psi
    return config.dt * rec, out


def simulate_trajectory(state0: QuantumState, model: EnvironmentModel,
                        config: SdeConfig,
                        convention: str = GISIN_PERCIVAL) -> TrajectoryRecord:
    """Integrate one sample path and record every record_stride-th state."""
    if state0.dim != model.dim:
        raise DimensionMismatchError(f"state is {state0.dim}-dim, model is {model.dim}-dim")
    state0.require_normalized()
    times, states = _evolve_recorded(state0.amplitudes[None, :], model, config, convention)
    recorded = [QuantumState(v) for v in states[0]]
    norms = np.array([s.norm() for s in recorded])
    return TrajectoryRecord(times=times, states=recorded, norms=norms, seed=config.seed)


@dataclass(frozen=True)
class EnsembleResult:
    """Averaged projectors over trajectories, with per-entry standard errors.

    ``stderr`` stores the standard error of the real part in its real part and
    of the imaginary part in its imaginary part.
    """

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_traj: int
    failed_seeds: list = field(default_factory=list)

    def to_json(self) -> str:
        def as_pairs(arr):
            return [[[[float(z.real), float(z.imag)] for z in row] for row in mat]
                    for mat in arr]

        return json.dumps({
            "times": self.times.tolist(),
            "rho": as_pairs(self.mean),
            "stderr": as_pairs(self.stderr),
        })


def ensemble_density(state0: QuantumState, model: EnvironmentModel,
                     config: SdeConfig, n_traj: int,
                     convention: str = GISIN_PERCIVAL) -> EnsembleResult:
    """Monte Carlo mean of |psi><psi| over n_traj independent trajectories."""
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    state0.require_normalized()

    psi0 = np.broadcast_to(state0.amplitudes, (n_traj, state0.dim))
    try:
        times, states = _evolve_recorded(np.array(psi0), model, config, convention)
    except StepFailureError:
        # fall back to per-path integration so surviving paths are kept
        times = config.dt * config.record_indices()
        keep, failed = [], []
        for j in range(n_traj):
            sub = SdeConfig(config.dt, config.steps, config.seed,
                            config.renormalize_each_step, config.record_stride)
            try:
                states_j = _evolve_recorded(np.array(psi0[j:j + 1]), model, sub, convention)[1]
            except StepFailureError:
                failed.append(j)
                continue
            keep.append(states_j[0])
        if not keep:
            raise
        states = np.stack(keep)
        return _reduce_ensemble(times, states, failed)
    return _reduce_ensemble(times, states, [])


def _reduce_ensemble(times, states, failed_seeds):
    proj = states[..., :, None] * states[..., None, :].conj()  # [P, K, n, n]
    p = proj.shape[0]
    mean = proj.mean(axis=0)
    if p > 1:
        se_re = proj.real.std(axis=0, ddof=1) / np.sqrt(p)
        se_im = proj.imag.std(axis=0, ddof=1) / np.sqrt(p)
    else:
        se_re = np.zeros_like(mean, dtype=float)
        se_im = np.zeros_like(mean, dtype=float)
    return EnsembleResult(times=times, mean=mean, stderr=se_re + 1j * se_im,
                          n_traj=p, failed_seeds=failed_seeds)


# ---------------------------------------------------------------------------
# real 2n-dimensional representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RealStateVector:
    """Real chart X = (q, p) with q = sqrt2 Re psi and p = sqrt2 Im psi."""

    x: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.x, dtype=float).reshape(-1)
        if arr.size % 2 != 0:
            raise DimensionMismatchError("real chart vectors have even length")
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)

    @property
    def dim(self) -> int:
        return self.x.size // 2


def to_real(state: QuantumState) -> RealStateVector:
    psi = state.amplitudes
    return RealStateVector(np.concatenate([np.sqrt(2.0) * psi.real,
                                           np.sqrt(2.0) * psi.imag]))


def from_real(x: RealStateVector | np.ndarray) -> QuantumState:
    arr = x.x if isinstance(x, RealStateVector) else np.asarray(x, dtype=float).reshape(-1)
    n = arr.size // 2
    return QuantumState((arr[:n] + 1j * arr[n:]) / np.sqrt(2.0))


def real_drift_diffusion(x: RealStateVector | np.ndarray, model: EnvironmentModel,
                         convention: str = GISIN_PERCIVAL):
    """Exact real image (F, script-B) of the complex coefficients.

    The step x + F dt + scriptB (dWR, dWI), with dWR = sqrt2 Re dW and
    dWI = sqrt2 Im dW (each of variance dt per component), reproduces the
    complex step algebraically.
    """
    state = from_real(x)
    f = drift(state, model, convention)
    b = diffusion_columns(state, model)
    f_real = np.concatenate([np.sqrt(2.0) * f.real, np.sqrt(2.0) * f.imag])
    top = np.concatenate([b.real, -b.imag], axis=1)
    bot = np.concatenate([b.imag, b.real], axis=1)
    return f_real, np.concatenate([top, bot], axis=0)


# ---------------------------------------------------------------------------
# gradient form for a Hermitian channel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradientFormReport:
    """Residuals of the gradient/skew-gradient decomposition of the real SDE."""

    drift_residual: float
    noise_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.drift_residual, self.noise_residual)


def _real_block(matrix: np.ndarray) -> np.ndarray:
    """Real image [[Re M, -Im M], [Im M, Re M]] of a complex operator."""
    re, im = matrix.real, matrix.imag
    return np.block([[re, -im], [im, re]])


def hermitian_gradient_check(x: RealStateVector | np.ndarray,
                             model: EnvironmentModel) -> GradientFormReport:
    """Check the gradient form of the real SDE for one Hermitian channel.

    With <H>, <L>, <L^2> read as quadratic forms on the real chart (so their
    gradients are the block-matrix products H X, L X, L^2 X), the doubled
    drift decomposes exactly into a Hamiltonian skew-gradient, minus the
    gradient of the channel variance <L^2> - <L>^2, and a radial piece
    -<L>^2 X; the two noise blocks are (1/sqrt2) gradients of <L> minus their
    own radial and phase pieces.  Returns the largest absolute residual of
    the drift and noise comparisons.
    """
    if model.n_channels != 1:
        raise NotApplicableError("the gradient form needs exactly one channel operator")
    op = model.lindblads[0]
    if not op.is_hermitian():
        raise NotApplicableError("the gradient form needs a Hermitian channel operator")

    arr = x.x if isinstance(x, RealStateVector) else np.asarray(x, dtype=float).reshape(-1)
    n = model.dim
    if arr.size != 2 * n:
        raise DimensionMismatchError(f"point has {arr.size} coordinates, expected {2 * n}")
    state = from_real(arr).normalized()
    arr = to_real(state).x

    # left side: the actual real-SDE coefficients
    f_real, b_real = real_drift_diffusion(arr, model, convention=DOUBLED_DRIFT)
    noise_r, noise_i = b_real[:, 0], b_real[:, 1]

    # right side: gradients of expectation quadratic forms on the chart
    h_blk = _real_block(model.hamiltonian.entries)
    l_blk = _real_block(op.entries)
    lsq_blk = _real_block(op.entries @ op.entries)
    q, p = arr[:n], arr[n:]
    grad_h = h_blk @ arr
    grad_l = l_blk @ arr
    grad_lsq = lsq_blk @ arr
    ell = 0.5 * float(arr @ grad_l)          # <L> on the unit sphere of the chart
    grad_var = grad_lsq - 2.0 * ell * grad_l  # gradient of <L^2> - <L>^2

    omega_grad_h = np.concatenate([grad_h[n:], -grad_h[:n]])   # skew gradient
    expected_f = omega_grad_h - grad_var - ell * ell * arr
    drift_residual = float(np.max(np.abs(f_real - expected_f)))

    centered = grad_l - ell * arr
    gauge = np.concatenate([-centered[n:], centered[:n]])
    expected_r = centered / np.sqrt(2.0)
    expected_i = gauge / np.sqrt(2.0)
    noise_residual = float(max(np.max(np.abs(noise_r - expected_r)),
                               np.max(np.abs(noise_i - expected_i))))
    return GradientFormReport(drift_residual=drift_residual, noise_residual=noise_residual)


# ---------------------------------------------------------------------------
# exporters
# ---------------------------------------------------------------------------

def trajectory_to_csv(record: TrajectoryRecord, path) -> None:
    """Write `t,re_c0,im_c0,...,norm[,sx,sy,sz]` rows (Bloch columns for qubits)."""
    n = record.states[0].dim
    cols = ["t"]
    for i in range(n):
        cols += [f"re_c{i}", f"im_c{i}"]
    cols.append("norm")
    qubit = n == 2
    if qubit:
        cols += ["sx", "sy", "sz"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for t, state, norm in zip(record.times, record.states, record.norms):
            amp = state.amplitudes
            row = [f"{t:.12g}"]
            for i in range(n):
                row += [f"{amp[i].real:.12g}", f"{amp[i].imag:.12g}"]
            row.append(f"{norm:.12g}")
            if qubit:
                unit = state if state.is_normalized(1e-9) else state.normalized()
                row += [f"{v:.12g}" for v in bloch_vector(unit)]
            fh.write(",".join(row) + "\n")
