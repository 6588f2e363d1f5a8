"""Complex linear-algebra substrate for small open quantum systems.

States, operators, density matrices, environment presets for a single qubit,
the Bloch-sphere parametrization, and a deterministic fixed-step integrator
for the master equation that serves as the reference solution elsewhere.

Basis convention for the qubit: index 0 is the excited state ``|e>``, index 1
the ground state ``|g>``, so ``sigma_+ sigma_- = diag(1, 0)`` and
``sigma_z = diag(1, -1)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatchError, IntegrationDivergedError, NotNormalizedError

logger = logging.getLogger(__name__)

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |e><g|
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |g><e|


def _as_complex_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=complex).reshape(-1)
    return arr


def _as_complex_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class QuantumState:
    """A pure state given by its amplitude vector in a fixed basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        arr = _as_complex_vector(self.amplitudes)
        if arr.size < 2:
            raise DimensionMismatchError("a state needs at least two amplitudes")
        arr.setflags(write=False)
        object.__setattr__(self, "amplitudes", arr)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm() ** 2 - 1.0) < tol

    def normalized(self) -> "QuantumState":
        n = self.norm()
        if n == 0.0:
            raise NotNormalizedError("cannot normalize the zero vector")
        return QuantumState(self.amplitudes / n)

    def require_normalized(self, tol: float = NORM_TOL) -> None:
        if not self.is_normalized(tol):
            raise NotNormalizedError(f"state norm is {self.norm():.15g}, expected 1")


@dataclass(frozen=True)
class OperatorMatrix:
    """A linear operator on the system Hilbert space."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_complex_matrix(self.entries)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T)) < tol)

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T)


@dataclass(frozen=True)
class DensityMatrix:
    """A mixed state; Hermitian, unit trace, nonnegative spectrum."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_complex_matrix(self.entries)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def validate(self, hermitian_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL, eig_floor=-1e-10):
        m = self.entries
        if np.max(np.abs(m - m.conj().T)) >= hermitian_tol:
            raise IntegrationDivergedError("density matrix is not Hermitian within tolerance")
        if abs(np.trace(m).real - 1.0) >= trace_tol or abs(np.trace(m).imag) >= trace_tol:
            raise IntegrationDivergedError(f"density matrix trace is {np.trace(m):.15g}")
        eigs = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
        if eigs.min() < eig_floor:
            raise IntegrationDivergedError(f"density matrix has eigenvalue {eigs.min():.3e}")

    def purity(self) -> float:
        return float(np.trace(self.entries @ self.entries).real)

    @staticmethod
    def from_state(state: QuantumState) -> "DensityMatrix":
        psi = state.amplitudes
        return DensityMatrix(np.outer(psi, psi.conj()))


class EnvironmentKind(str, Enum):
    DEPHASING = "dephasing"
    THERMAL = "thermal"
    MEASUREMENT = "measurement"
    CUSTOM = "custom"


@dataclass(frozen=True)
class EnvironmentModel:
    """Hamiltonian plus decoherence channels; fixes drift, noise, and metric."""

    hamiltonian: OperatorMatrix
    lindblads: tuple[OperatorMatrix, ...]
    kind: EnvironmentKind = EnvironmentKind.CUSTOM
    couplings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "lindblads", tuple(self.lindblads))
        n = self.hamiltonian.dim
        for op in self.lindblads:
            if op.dim != n:
                raise DimensionMismatchError(
                    f"channel operator is {op.dim}x{op.dim}, Hamiltonian is {n}x{n}"
                )
        if len(self.lindblads) > n * n - 1:
            raise DimensionMismatchError(
                f"{len(self.lindblads)} channels exceed the n^2-1 = {n * n - 1} limit"
            )
        object.__setattr__(self, "couplings", dict(self.couplings))

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    @property
    def n_channels(self) -> int:
        return len(self.lindblads)

    def with_hamiltonian(self, hamiltonian) -> "EnvironmentModel":
        h = hamiltonian if isinstance(hamiltonian, OperatorMatrix) else OperatorMatrix(hamiltonian)
        return EnvironmentModel(h, self.lindblads, self.kind, self.couplings)

    def to_json(self) -> str:
        def matrix_pairs(op: OperatorMatrix):
            return [[[float(z.real), float(z.imag)] for z in row] for row in op.entries]

        payload = {
            "kind": self.kind.value,
            "couplings": {k: float(v) for k, v in self.couplings.items()},
            "hamiltonian": matrix_pairs(self.hamiltonian),
            "lindblads": [matrix_pairs(op) for op in self.lindblads],
        }
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "EnvironmentModel":
        payload = json.loads(text)

        def pairs_matrix(rows):
            return OperatorMatrix(
                np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)
            )

        return EnvironmentModel(
            hamiltonian=pairs_matrix(payload["hamiltonian"]),
            lindblads=tuple(pairs_matrix(rows) for rows in payload["lindblads"]),
            kind=EnvironmentKind(payload["kind"]),
            couplings={k: float(v) for k, v in payload["couplings"].items()},
        )


def make_environment(kind, couplings=None, hamiltonian=None, lindblads=None) -> EnvironmentModel:
    """Build one of the qubit presets, or a custom model.

    ``dephasing`` uses L = mu * sigma_+ sigma_-, ``thermal`` a single channel
    L = mu1 * sigma_+ + mu2 * sigma_-, ``measurement`` L = mu * sigma_z.
    Couplings must be nonnegative reals.
    """
    kind = EnvironmentKind(kind)
    couplings = dict(couplings or {})
    for name, value in couplings.items():
        if value < 0:
            raise ValueError(f"coupling {name} must be nonnegative, got {value}")

    if kind is EnvironmentKind.CUSTOM:
        if lindblads is None:
            lindblads = ()
        ops = tuple(op if isinstance(op, OperatorMatrix) else OperatorMatrix(op) for op in lindblads)
        if hamiltonian is None:
            dim = ops[0].dim if ops else 2
            hamiltonian = np.zeros((dim, dim), dtype=complex)
        h = hamiltonian if isinstance(hamiltonian, OperatorMatrix) else OperatorMatrix(hamiltonian)
        return EnvironmentModel(h, ops, kind, couplings)

    if lindblads is not None:
        raise ValueError("explicit channel operators are only allowed for kind='custom'")

    if kind is EnvironmentKind.DEPHASING:
        mu = float(couplings.get("mu", 0.0))
        ops = (OperatorMatrix(mu * (SIGMA_PLUS @ SIGMA_MINUS)),)
        couplings = {"mu": mu}
    elif kind is EnvironmentKind.MEASUREMENT:
        mu = float(couplings.get("mu", 0.0))
        ops = (OperatorMatrix(mu * SIGMA_Z),)
        couplings = {"mu": mu}
    else:  # thermal: one channel combining both temperature terms
        mu1 = float(couplings.get("mu1", 0.0))
        mu2 = float(couplings.get("mu2", 0.0))
        ops = (OperatorMatrix(mu1 * SIGMA_PLUS + mu2 * SIGMA_MINUS),)
        couplings = {"mu1": mu1, "mu2": mu2}

    if hamiltonian is None:
        hamiltonian = np.zeros((2, 2), dtype=complex)
    h = hamiltonian if isinstance(hamiltonian, OperatorMatrix) else OperatorMatrix(hamiltonian)
    if h.dim != 2:
        raise DimensionMismatchError("qubit presets require a 2x2 Hamiltonian")
    return EnvironmentModel(h, ops, kind, couplings)


def expectation(state: QuantumState, op: OperatorMatrix) -> complex:
    """Quantum expectation <psi|A|psi> for a normalized state."""
    if op.dim != state.dim:
        raise DimensionMismatchError(f"operator is {op.dim}-dim, state is {state.dim}-dim")
    state.require_normalized()
    psi = state.amplitudes
    return complex(psi.conj() @ (op.entries @ psi))


def lindblad_rhs(rho: DensityMatrix, model: EnvironmentModel) -> np.ndarray:
    """Right-hand side of the master equation; traceless and Hermitian."""
    if rho.dim != model.dim:
        raise DimensionMismatchError(f"state is {rho.dim}-dim, model is {model.dim}-dim")
    return _lindblad_rhs_raw(rho.entries, model.hamiltonian.entries,
                             [op.entries for op in model.lindblads])


def _lindblad_rhs_raw(rho, h, ls):
    out = -1j * (h @ rho - rho @ h)
    for l in ls:
        ld = l.conj().T
        out += l @ rho @ ld - 0.5 * (ld @ l @ rho + rho @ ld @ l)
    return out


@dataclass(frozen=True)
class DensitySeries:
    """Density matrices sampled on a uniform time grid."""

    times: np.ndarray
    values: np.ndarray  # complex, shape (len(times), n, n)

    def matrices(self) -> list[DensityMatrix]:
        return [DensityMatrix(v) for v in self.values]

    def final(self) -> DensityMatrix:
        return DensityMatrix(self.values[-1])


def lindblad_evolve(rho0: DensityMatrix, model: EnvironmentModel,
                    t_final: float, dt: float) -> DensitySeries:
    """Classical fixed-step 4th-order Runge-Kutta integration of the master equation.

    Trace drift above 1e-10 is renormalized away (and logged); larger invariant
    violations raise IntegrationDivergedError.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    if rho0.dim != model.dim:
        raise DimensionMismatchError(f"state is {rho0.dim}-dim, model is {model.dim}-dim")

    h = model.hamiltonian.entries
    ls = [op.entries for op in model.lindblads]
    steps = int(round(t_final / dt))
    rho = np.array(rho0.entries, dtype=complex)
    out = np.empty((steps + 1, rho.shape[0], rho.shape[1]), dtype=complex)
    out[0] = rho
    for k in range(steps):
        k1 = _lindblad_rhs_raw(rho, h, ls)
        k2 = _lindblad_rhs_raw(rho + 0.5 * dt * k1, h, ls)
        k3 = _lindblad_rhs_raw(rho + 0.5 * dt * k2, h, ls)
        k4 = _lindblad_rhs_raw(rho + dt * k3, h, ls)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tr = np.trace(rho).real
        if abs(tr - 1.0) > 1e-6:
            raise IntegrationDivergedError(f"trace drifted to {tr:.9g} at step {k + 1}")
        if abs(tr - 1.0) > TRACE_TOL:
            logger.warning("renormalizing trace drift %.3e at step %d", tr - 1.0, k + 1)
            rho = rho / tr
        out[k + 1] = rho

    series = DensitySeries(times=dt * np.arange(steps + 1), values=out)
    series.final().validate()
    return series


def lindblad_superoperator(model: EnvironmentModel) -> np.ndarray:
    """Matrix of the master-equation generator acting on row-major vec(rho)."""
    n = model.dim
    eye = np.eye(n, dtype=complex)
    h = model.hamiltonian.entries
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op in model.lindblads:
        l = op.entries
        ld = l.conj().T
        sup += np.kron(l, ld.T)
        sup -= 0.5 * (np.kron(ld @ l, eye) + np.kron(eye, (ld @ l).T))
    return sup


def stationary_state(model: EnvironmentModel) -> DensityMatrix:
    """Fixed point of the master equation via the generator's null space."""
    sup = lindblad_superoperator(model)
    w, v = np.linalg.eig(sup)
    idx = int(np.argmin(np.abs(w)))
    n = model.dim
    rho = v[:, idx].reshape(n, n)
    rho = (rho + rho.conj().T) / 2.0
    rho = rho / np.trace(rho).real
    return DensityMatrix(rho)


@dataclass(frozen=True)
class BlochPoint:
    """Spherical angles of a pure qubit state."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= np.pi):
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if not (0.0 <= self.phi < 2.0 * np.pi):
            object.__setattr__(self, "phi", float(np.mod(self.phi, 2.0 * np.pi)))


POLE_SIN_TOL = 1e-12


def bloch_to_state(point: BlochPoint) -> QuantumState:
    """Map (theta, phi) to the unit state (cos(theta/2), e^{i phi} sin(theta/2))."""
    c0 = np.cos(point.theta / 2.0)
    c1 = np.exp(1j * point.phi) * np.sin(point.theta / 2.0)
    return QuantumState(np.array([c0, c1], dtype=complex))


def state_to_bloch(state: QuantumState) -> BlochPoint:
    """Inverse of bloch_to_state, after fixing the global phase so c0 >= 0.

    At the poles (sin theta below 1e-12) phi is undefined and reported as 0.
    """
    if state.dim != 2:
        raise DimensionMismatchError("the Bloch map is defined for qubits only")
    state.require_normalized()
    c0, c1 = state.amplitudes
    phase = np.exp(-1j * np.angle(c0)) if abs(c0) > 0 else 1.0
    c0, c1 = c0 * phase, c1 * phase
    theta = 2.0 * np.arctan2(abs(c1), c0.real)
    if np.sin(theta) < POLE_SIN_TOL:
        return BlochPoint(float(np.clip(theta, 0.0, np.pi)), 0.0)
    phi = float(np.mod(np.angle(c1), 2.0 * np.pi))
    return BlochPoint(float(theta), phi)


def bloch_vector(state: QuantumState) -> np.ndarray:
    """Pauli expectations (<sx>, <sy>, <sz>) of a normalized qubit state."""
    c0, c1 = state.amplitudes
    m = c0.conjugate() * c1
    return np.array([2.0 * m.real, 2.0 * m.imag, abs(c0) ** 2 - abs(c1) ** 2])
