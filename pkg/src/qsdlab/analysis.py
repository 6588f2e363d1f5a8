"""Bloch-sphere experiments: landscapes, extrema, sweeps, and path statistics.

Scans evaluate the metric norm or the scalar curvature on a (theta, phi)
grid, extrema are refined by a local quadratic fit, coupling sweeps track the
extreme curvature as the environment strength varies, and the stability
experiment launches perturbed trajectory bundles from the curvature maximum
and measures how long they stay near it.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BracketingError, DegenerateFieldError, DimensionMismatchError, ExperimentIllPosedError
from .quantum import (
    BlochPoint,
    EnvironmentKind,
    EnvironmentModel,
    OperatorMatrix,
    bloch_to_state,
    bloch_vector,
    make_environment,
)
from .dynamics import GISIN_PERCIVAL, SdeConfig, TrajectoryRecord, _evolve_recorded
from .geometry import DEFAULT_FD_STEP, _metric_norm_many, scalar_curvature_many

QUANTITIES = ("norm", "curvature")
_DEGENERACY_EPS = 1e-12

# grid points processed per task; fixed so results do not depend on threading
_SCAN_CHUNK = 512


@dataclass(frozen=True)
class BlochGrid:
    """Rectangular (theta, phi) grid; poles included, phi periodic."""

    thetas: np.ndarray
    phis: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=float)
        ph = np.asarray(self.phis, dtype=float)
        if th.size == 0 or ph.size == 0:
            raise ValueError("grid must be nonempty")
        if np.any(np.diff(th) <= 0) or np.any(np.diff(ph) <= 0):
            raise ValueError("grid vectors must be strictly increasing")
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "phis", ph)

    @staticmethod
    def regular(n_theta: int = 96, n_phi: int = 96) -> "BlochGrid":
        return BlochGrid(np.linspace(0.0, np.pi, n_theta),
                         np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False))

    def chart_points(self) -> np.ndarray:
        """Real-chart coordinates of every node, shape (n_theta, n_phi, 4)."""
        t, p = np.meshgrid(self.thetas, self.phis, indexing="ij")
        c0 = np.cos(t / 2.0)
        c1 = np.exp(1j * p) * np.sin(t / 2.0)
        return np.stack([np.sqrt(2.0) * c0.real, np.sqrt(2.0) * c1.real,
                         np.sqrt(2.0) * c0.imag, np.sqrt(2.0) * c1.imag], axis=-1)


@dataclass(frozen=True)
class ScalarField:
    """Values of one scalar quantity on a Bloch grid."""

    thetas: np.ndarray
    phis: np.ndarray
    values: np.ndarray
    quantity: str

    def __post_init__(self):
        if self.values.shape != (self.thetas.size, self.phis.size):
            raise DimensionMismatchError("field values do not match the grid shape")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("theta,phi,value\n")
            for i, th in enumerate(self.thetas):
                for j, ph in enumerate(self.phis):
                    fh.write(f"{th:.12g},{ph:.12g},{self.values[i, j]:.12g}\n")


def _eval_quantity(xs: np.ndarray, model: EnvironmentModel, quantity: str,
                   fd_step: float) -> np.ndarray:
    if quantity == "norm":
        return _metric_norm_many(xs, model)
    if quantity == "curvature":
        return scalar_curvature_many(xs, model, fd_step)
    raise ValueError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")


def scan_field(model: EnvironmentModel, grid: BlochGrid | None = None,
               quantity: str = "curvature", fd_step: float = DEFAULT_FD_STEP,
               threads: int | None = None) -> ScalarField:
    """Evaluate the metric norm or scalar curvature at every grid node."""
    if model.dim != 2:
        raise DimensionMismatchError("Bloch scans are defined for qubit models")
    grid = grid or BlochGrid.regular()
    xs = grid.chart_points().reshape(-1, 4)

    if threads is None or threads <= 1 or xs.shape[0] <= _SCAN_CHUNK:
        values = _eval_quantity(xs, model, quantity, fd_step)
    else:
        chunks = [xs[i:i + _SCAN_CHUNK] for i in range(0, xs.shape[0], _SCAN_CHUNK)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda block: _eval_quantity(block, model, quantity, fd_step), chunks))
        values = np.concatenate(parts)
    return ScalarField(grid.thetas, grid.phis,
                       values.reshape(grid.thetas.size, grid.phis.size), quantity)


# ---------------------------------------------------------------------------
# extrema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtremumReport:
    max_point: BlochPoint
    max_value: float
    min_point: BlochPoint
    min_value: float
    sharpness: float
    degenerate: bool = False

    def __post_init__(self):
        if self.max_value < self.min_value:
            raise ValueError("max_value below min_value")


def _quadratic_refine(field: ScalarField, i: int, j: int, maximize: bool):
    """Refine a grid extremum by a quadratic fit on its 3x3 neighborhood."""
    th, ph, v = field.thetas, field.phis, field.values
    if i == 0 or i == th.size - 1 or th.size < 3 or ph.size < 3:
        return float(th[i]), float(np.mod(ph[j], 2 * np.pi)), float(v[i, j])
    dth = th[1] - th[0]
    dph = ph[1] - ph[0]
    rows = []
    rhs = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            jj = (j + dj) % ph.size
            a, b = di * dth, dj * dph
            rows.append([1.0, a, b, a * a, a * b, b * b])
            rhs.append(v[i + di, jj])
    coef, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    _, c1, c2, c11, c12, c22 = coef
    hess = np.array([[2 * c11, c12], [c12, 2 * c22]])
    try:
        delta = np.linalg.solve(hess, -np.array([c1, c2]))
    except np.linalg.LinAlgError:
        return float(th[i]), float(np.mod(ph[j], 2 * np.pi)), float(v[i, j])
    want_max = maximize
    curv_ok = (np.trace(hess) < 0) if want_max else (np.trace(hess) > 0)
    if not curv_ok or np.max(np.abs(delta / [dth, dph])) > 1.0:
        return float(th[i]), float(np.mod(ph[j], 2 * np.pi)), float(v[i, j])
    value = float(coef @ [1.0, delta[0], delta[1], delta[0] ** 2,
                          delta[0] * delta[1], delta[1] ** 2])
    theta = float(np.clip(th[i] + delta[0], 0.0, np.pi))
    phi = float(np.mod(ph[j] + delta[1], 2.0 * np.pi))
    return theta, phi, value


def _angular_distance_grid(field: ScalarField, point: BlochPoint) -> np.ndarray:
    t, p = np.meshgrid(field.thetas, field.phis, indexing="ij")
    v = np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)
    ref = np.array([np.sin(point.theta) * np.cos(point.phi),
                    np.sin(point.theta) * np.sin(point.phi),
                    np.cos(point.theta)])
    return np.arccos(np.clip(v @ ref, -1.0, 1.0))


def find_extrema(field: ScalarField, sharpness_radius: float = 0.5) -> ExtremumReport:
    """Locate and refine the field extrema; flag (numerically) constant fields.

    Sharpness is (max - mean of values within the angular radius of the max)
    divided by the field range, a peakedness number in [0, 1].
    """
    v = field.values
    spread = float(v.max() - v.min())
    scale = max(abs(v.max()), abs(v.min()), 1.0)
    if spread <= _DEGENERACY_EPS * scale:
        pt = BlochPoint(float(field.thetas[0]), float(field.phis[0]))
        return ExtremumReport(pt, float(v.max()), pt, float(v.min()),
                              sharpness=0.0, degenerate=True)

    i_max, j_max = np.unravel_index(int(np.argmax(v)), v.shape)
    i_min, j_min = np.unravel_index(int(np.argmin(v)), v.shape)
    th_max, ph_max, val_max = _quadratic_refine(field, i_max, j_max, maximize=True)
    th_min, ph_min, val_min = _quadratic_refine(field, i_min, j_min, maximize=False)
    max_point = BlochPoint(th_max, ph_max)

    ang = _angular_distance_grid(field, max_point)
    neighborhood = v[ang <= sharpness_radius]
    sharpness = float((val_max - neighborhood.mean()) / (val_max - val_min)) \
        if neighborhood.size else 0.0
    return ExtremumReport(max_point, float(val_max), BlochPoint(th_min, ph_min),
                          float(val_min), sharpness=max(sharpness, 0.0))


# ---------------------------------------------------------------------------
# coupling sweeps and the critical coupling
# ---------------------------------------------------------------------------

def _preset_at(kind: EnvironmentKind | str, coupling: float) -> EnvironmentModel:
    """Preset at one sweep coordinate; thermal sweeps ride the mu1 = 2 mu2 ray."""
    kind = EnvironmentKind(kind)
    if kind is EnvironmentKind.THERMAL:
        return make_environment(kind, {"mu1": 2.0 * coupling, "mu2": coupling})
    return make_environment(kind, {"mu": coupling})


@dataclass(frozen=True)
class SweepResult:
    couplings: np.ndarray
    max_curvature: np.ndarray
    min_curvature: np.ndarray

    def __post_init__(self):
        if not (self.couplings.size == self.max_curvature.size == self.min_curvature.size):
            raise ValueError("sweep arrays must have equal length")
        if np.any(np.diff(self.couplings) <= 0):
            raise ValueError("couplings must be strictly increasing")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("coupling,max_curvature,min_curvature\n")
            for c, hi, lo in zip(self.couplings, self.max_curvature, self.min_curvature):
                fh.write(f"{c:.12g},{hi:.12g},{lo:.12g}\n")


def coupling_sweep(kind, coupling_grid, scan_grid: BlochGrid | None = None,
                   fd_step: float = DEFAULT_FD_STEP, threads: int | None = None) -> SweepResult:
    """Extreme curvature values as a function of the coupling strength."""
    couplings = np.asarray(coupling_grid, dtype=float)
    if np.any(np.diff(couplings) <= 0):
        raise ValueError("coupling grid must be strictly increasing")
    scan_grid = scan_grid or BlochGrid.regular()
    hi = np.empty_like(couplings)
    lo = np.empty_like(couplings)
    for k, c in enumerate(couplings):
        fld = scan_field(_preset_at(kind, c), scan_grid, "curvature", fd_step, threads)
        hi[k] = fld.values.max()
        lo[k] = fld.values.min()
    return SweepResult(couplings, hi, lo)


def critical_coupling(kind, bracket_lo: float, bracket_hi: float, tol: float = 1e-3,
                      scan_grid: BlochGrid | None = None, fd_step: float = DEFAULT_FD_STEP,
                      threads: int | None = None) -> float:
    """Bisect on the sign of the curvature maximum; returns the midpoint."""
    if not (0 < bracket_lo < bracket_hi):
        raise ValueError("need 0 < bracket_lo < bracket_hi")
    scan_grid = scan_grid or BlochGrid.regular()

    def max_curv(c):
        return scan_field(_preset_at(kind, c), scan_grid, "curvature", fd_step, threads).values.max()

    f_lo, f_hi = max_curv(bracket_lo), max_curv(bracket_hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketingError(
            f"curvature maximum has the same sign at both ends of "
            f"[{bracket_lo}, {bracket_hi}]: {f_lo:.6g} and {f_hi:.6g}")
    lo, hi = bracket_lo, bracket_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = max_curv(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# curvature along sample paths and the stability experiment
# ---------------------------------------------------------------------------

def curvature_along_path(record: TrajectoryRecord, model: EnvironmentModel,
                         fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Scalar curvature at every recorded state, aligned with record.times."""
    for state in record.states:
        state.require_normalized(tol=1e-9)
    psi = np.stack([s.amplitudes for s in record.states])
    xs = np.concatenate([np.sqrt(2.0) * psi.real, np.sqrt(2.0) * psi.imag], axis=-1)
    return scalar_curvature_many(xs, model, fd_step)


@dataclass(frozen=True)
class StabilityConfig:
    """Calibrated constants of the residency experiment."""

    delta: float = 0.5            # angular residency radius, radians
    threshold: float = 0.8        # resident-fraction verdict boundary
    t_final: float = 100.0
    dt: float = 2e-3
    n_paths: int = 100
    record_stride: int = 25
    grid: tuple[int, int] = (96, 96)
    seed: int = 12345


STABILITY_DEFAULTS = StabilityConfig()


@dataclass(frozen=True)
class StabilityReport:
    kind: str
    couplings: dict
    perturbation: list
    n_paths: int
    fraction_resident: float
    per_path_fractions: np.ndarray
    delta: float
    threshold: float
    verdict: str
    max_point: tuple[float, float]
    seed: int

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "couplings": self.couplings,
            "perturbation": self.perturbation,
            "n_paths": self.n_paths,
            "fraction_resident": self.fraction_resident,
            "per_path_fractions": self.per_path_fractions.tolist(),
            "delta": self.delta,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "max_point": list(self.max_point),
            "seed": self.seed,
        }
        return json.dumps(payload)


def stability_experiment(kind, couplings, perturbation: OperatorMatrix | np.ndarray | None,
                         config: StabilityConfig = STABILITY_DEFAULTS,
                         fd_step: float = DEFAULT_FD_STEP,
                         threads: int | None = None) -> StabilityReport:
    """Launch perturbed paths from the curvature maximum and measure residency.

    The verdict is ``stable`` when the mean fraction of recorded time spent
    within the angular radius ``config.delta`` of the maximum reaches
    ``config.threshold``.
    """
    if not (0.0 < config.delta < np.pi):
        raise ValueError("delta must lie in (0, pi)")
    if config.n_paths < 1:
        raise ValueError("n_paths must be at least 1")

    model = _make_model(kind, couplings)
    field = scan_field(model, BlochGrid.regular(*config.grid), "curvature", fd_step, threads)
    report = find_extrema(field)
    if report.degenerate:
        raise ExperimentIllPosedError("curvature field is constant; no maximum to launch from")
    max_point = report.max_point

    if perturbation is None:
        h = np.zeros((2, 2), dtype=complex)
    else:
        h = perturbation.entries if isinstance(perturbation, OperatorMatrix) else np.asarray(perturbation, dtype=complex)
    run_model = model.with_hamiltonian(h)

    steps = int(round(config.t_final / config.dt))
    sde = SdeConfig(dt=config.dt, steps=steps, seed=config.seed,
                    renormalize_each_step=True, record_stride=config.record_stride)
    psi0 = bloch_to_state(max_point).amplitudes
    _, states = _evolve_recorded(np.broadcast_to(psi0, (config.n_paths, 2)).copy(),
                                 run_model, sde, GISIN_PERCIVAL)

    ref = np.array([np.sin(max_point.theta) * np.cos(max_point.phi),
                    np.sin(max_point.theta) * np.sin(max_point.phi),
                    np.cos(max_point.theta)])
    m01 = states[..., 0].conj() * states[..., 1]
    sx, sy = 2.0 * m01.real, 2.0 * m01.imag
    sz = np.abs(states[..., 0]) ** 2 - np.abs(states[..., 1]) ** 2
    cosang = np.clip(sx * ref[0] + sy * ref[1] + sz * ref[2], -1.0, 1.0)
    resident = np.arccos(cosang) <= config.delta
    fractions = resident.mean(axis=1)
    fraction = float(fractions.mean())
    verdict = "stable" if fraction >= config.threshold else "unstable"

    pert_list = [[[float(z.real), float(z.imag)] for z in row] for row in h]
    return StabilityReport(kind=str(EnvironmentKind(kind).value), couplings=dict(couplings),
                           perturbation=pert_list, n_paths=config.n_paths,
                           fraction_resident=fraction, per_path_fractions=fractions,
                           delta=config.delta, threshold=config.threshold,
                           verdict=verdict,
                           max_point=(max_point.theta, max_point.phi), seed=config.seed)


def _make_model(kind, couplings) -> EnvironmentModel:
    return make_environment(EnvironmentKind(kind), dict(couplings))
