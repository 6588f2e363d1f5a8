"""Riemannian geometry induced by the state-diffusion noise.

The noise columns of the stochastic evolution define a complex covariance
G = B B^dagger; its real image, scaled by 1/2 and added to the Euclidean
half-identity, is a Riemannian metric on the real chart R^{2n}.  This module
builds that metric, evaluates the Levi-Civita connection and the curvature
hierarchy by nested central differences, and carries hand-derived polynomial
forms of the qubit metrics as an independent cross-check.

The metric is a field on all of R^{2n}: expectation values inside the noise
columns use the raw (unnormalized) amplitudes, which is what makes the field
polynomial.  Curvature is only ever reported at unit-norm states.

The default finite-difference step balances truncation against nested
roundoff; with one Richardson level the truncation error of these low-degree
polynomial fields is negligible, and 1e-3 keeps the roundoff noise of the
scalar curvature below 1e-8.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .quantum import EnvironmentKind, EnvironmentModel, QuantumState

DEFAULT_FD_STEP = 1e-3


# ---------------------------------------------------------------------------
# diffusion matrices
# ---------------------------------------------------------------------------

def _raw_state(x: np.ndarray, n: int) -> np.ndarray:
    return (x[..., :n] + 1j * x[..., n:]) / np.sqrt(2.0)


def _noise_columns_raw(psi: np.ndarray, model: EnvironmentModel) -> np.ndarray:
    """Fluctuation columns (L - <L>) psi with raw expectations; shape (..., n, m)."""
    cols = []
    for op in model.lindblads:
        l_psi = np.einsum("ij,...j->...i", op.entries, psi)
        ell = np.einsum("...i,...i->...", psi.conj(), l_psi)
        cols.append(l_psi - ell[..., None] * psi)
    if not cols:
        return np.zeros(psi.shape + (0,), dtype=complex)
    return np.stack(cols, axis=-1)


def complex_diffusion_matrix(state: QuantumState, model: EnvironmentModel) -> np.ndarray:
    """Hermitian PSD covariance G = B B^dagger of the noise columns at a state."""
    if state.dim != model.dim:
        raise DimensionMismatchError(f"state is {state.dim}-dim, model is {model.dim}-dim")
    b = _noise_columns_raw(np.asarray(state.amplitudes, dtype=complex), model)
    return b @ b.conj().T


def real_diffusion_matrix(g_complex: np.ndarray) -> np.ndarray:
    """Real 2n x 2n image (1/2)[[Re G, -Im G], [Im G, Re G]] of a Hermitian PSD G."""
    g_complex = np.asarray(g_complex, dtype=complex)
    if np.max(np.abs(g_complex - g_complex.conj().T)) > 1e-10:
        raise DimensionMismatchError("complex diffusion matrix must be Hermitian")
    re, im = g_complex.real, g_complex.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return 0.5 * np.concatenate([top, bot], axis=-2)


@dataclass(frozen=True)
class DiffusionMetric:
    """Metric tensor g = I/2 + (real diffusion image) at one point of R^{2n}."""

    g: np.ndarray
    point: np.ndarray

    def validate(self, tol: float = 1e-13):
        g = self.g
        if np.max(np.abs(g - g.T)) >= tol:
            raise ValueError("metric is not symmetric")
        n = g.shape[0] // 2
        delta = g - 0.5 * np.eye(2 * n)
        if np.max(np.abs(delta[:n, :n] - delta[n:, n:])) >= tol:
            raise ValueError("q and p diagonal blocks differ")
        if np.linalg.eigvalsh(g).min() < 0.5 - 1e-12:
            raise ValueError("metric eigenvalue below the 1/2 floor")


def _metric_many(xs: np.ndarray, model: EnvironmentModel) -> np.ndarray:
    """Metric tensors for a batch of points xs[..., 2n] -> [..., 2n, 2n]."""
    xs = np.asarray(xs, dtype=float)
    n = model.dim
    psi = _raw_state(xs, n)
    b = _noise_columns_raw(psi, model)
    g_c = np.einsum("...ik,...jk->...ij", b, b.conj())
    re, im = g_c.real, g_c.imag
    out = np.zeros(xs.shape[:-1] + (2 * n, 2 * n), dtype=float)
    out[..., :n, :n] = 0.5 * re
    out[..., n:, n:] = 0.5 * re
    out[..., :n, n:] = -0.5 * im
    out[..., n:, :n] = 0.5 * im
    out += 0.5 * np.eye(2 * n)
    return out


def metric_at(x, model: EnvironmentModel) -> DiffusionMetric:
    """Metric tensor at one point of the real chart; defined for all x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != 2 * model.dim:
        raise DimensionMismatchError(f"point has {x.size} coordinates, expected {2 * model.dim}")
    return DiffusionMetric(g=_metric_many(x, model), point=x)


def metric_norm(x, model: EnvironmentModel) -> float:
    """Length sqrt(x^T g(x) x) of the position vector in its own metric."""
    x = np.asarray(x, dtype=float).reshape(-1)
    g = _metric_many(x, model)
    return float(np.sqrt(x @ g @ x))


def _metric_norm_many(xs: np.ndarray, model: EnvironmentModel) -> np.ndarray:
    g = _metric_many(xs, model)
    return np.sqrt(np.einsum("...i,...ij,...j->...", xs, g, xs))


# ---------------------------------------------------------------------------
# hand-derived qubit metric polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QubitMetricAux:
    """Quadratic invariants of the qubit chart used by the polynomial metrics."""

    d1sq: float
    d2sq: float
    s: float
    a: float

    @staticmethod
    def from_point(x) -> "QubitMetricAux":
        x1, x2, x3, x4 = np.asarray(x, dtype=float).reshape(4)
        return QubitMetricAux(
            d1sq=x1 * x1 + x3 * x3,
            d2sq=x2 * x2 + x4 * x4,
            s=x1 * x2 + x3 * x4,
            a=x1 * x4 - x2 * x3,
        )

    def check(self, tol: float = 1e-12):
        if self.d1sq < -tol or self.d2sq < -tol:
            raise ValueError("squared lengths must be nonnegative")
        if abs(self.s ** 2 + self.a ** 2 - self.d1sq * self.d2sq) > tol * max(1.0, self.d1sq * self.d2sq):
            raise ValueError("invariants violate s^2 + a^2 = d1^2 d2^2")


def _closed_form_blocks(aux: QubitMetricAux, kind: EnvironmentKind, couplings):
    """Scalar entries (G11, G22, Re G12, Im G12) of the qubit noise covariance.

    Derived by expanding the single-channel fluctuation outer product in the
    chart invariants; purely scalar arithmetic, independent of the matrix path.
    """
    d1, d2, s, a = aux.d1sq, aux.d2sq, aux.s, aux.a
    if kind is EnvironmentKind.DEPHASING:
        mu = couplings["mu"]
        k = mu * mu / 8.0
        body = 2.0 - d1
        return (k * d1 * body * body,
                k * d1 * d1 * d2,
                -k * d1 * body * s,
                k * d1 * body * a)
    if kind is EnvironmentKind.MEASUREMENT:
        mu = couplings["mu"]
        k = mu * mu / 8.0
        diff = d1 - d2
        return (k * d1 * (2.0 - diff) ** 2,
                k * d2 * (2.0 + diff) ** 2,
                -k * (4.0 - diff * diff) * s,
                k * (4.0 - diff * diff) * a)
    if kind is EnvironmentKind.THERMAL:
        mu1, mu2 = couplings["mu1"], couplings["mu2"]
        lr = 0.5 * (mu1 + mu2) * s
        li = 0.5 * (mu1 - mu2) * a
        lsq = lr * lr + li * li
        g11 = 0.5 * mu1 * mu1 * d2 + 0.5 * lsq * d1 - mu1 * (lr * s + li * a)
        g22 = 0.5 * mu2 * mu2 * d1 + 0.5 * lsq * d2 - mu2 * (lr * s - li * a)
        re12 = 0.5 * (mu1 * mu2 + lsq) * s - 0.5 * lr * (mu1 * d2 + mu2 * d1)
        im12 = 0.5 * (mu1 * mu2 - lsq) * a + 0.5 * li * (mu1 * d2 - mu2 * d1)
        return g11, g22, re12, im12
    raise ValueError(f"no closed form for kind {kind!r}")


def closed_form_qubit_metric(x, kind, couplings) -> DiffusionMetric:
    """Polynomial evaluation of the qubit metric for the three presets.

    Cross-check for metric_at: fills the symmetric 4x4 matrix from the four
    scalar covariance entries via g33=g11, g44=g22, g34=g12, g23=-g14,
    g13=g24=0.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != 4:
        raise DimensionMismatchError("closed forms are for the qubit chart R^4")
    kind = EnvironmentKind(kind)
    aux = QubitMetricAux.from_point(x)
    g11c, g22c, re12, im12 = _closed_form_blocks(aux, kind, couplings)

    g = np.zeros((4, 4))
    g[0, 0] = g[2, 2] = 0.5 + 0.5 * g11c
    g[1, 1] = g[3, 3] = 0.5 + 0.5 * g22c
    g[0, 1] = g[1, 0] = g[2, 3] = g[3, 2] = 0.5 * re12
    g[0, 3] = g[3, 0] = -0.5 * im12
    g[1, 2] = g[2, 1] = 0.5 * im12
    return DiffusionMetric(g=g, point=x)


# ---------------------------------------------------------------------------
# connection and curvature by nested central differences
# ---------------------------------------------------------------------------

def _metric_gradient_many(xs: np.ndarray, metric_fn, h: float):
    """Metric and its first derivatives; dg[..., mu, a, b] = d_mu g_ab.

    Central differences at steps h and h/2 combined by one Richardson level.
    """
    xs = np.asarray(xs, dtype=float)
    d = xs.shape[-1]
    eye = np.eye(d)
    offsets = np.concatenate([h * eye, -h * eye, 0.5 * h * eye, -0.5 * h * eye], axis=0)
    g_sten = metric_fn(xs[..., None, :] + offsets)
    gp, gm = g_sten[..., 0:d, :, :], g_sten[..., d:2 * d, :, :]
    gp2, gm2 = g_sten[..., 2 * d:3 * d, :, :], g_sten[..., 3 * d:4 * d, :, :]
    diff_h = (gp - gm) / (2.0 * h)
    diff_h2 = (gp2 - gm2) / h
    dg = (4.0 * diff_h2 - diff_h) / 3.0
    return metric_fn(xs), dg


def _christoffel_fn(xs: np.ndarray, metric_fn, h: float) -> np.ndarray:
    g, dg = _metric_gradient_many(xs, metric_fn, h)
    ginv = np.linalg.inv(g)
    # T[..., lam, mu, nu] = d_mu g_{lam nu} + d_nu g_{lam mu} - d_lam g_{mu nu}
    t = np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg
    return 0.5 * np.einsum("...kl,...lmn->...kmn", ginv, t)


def _riemann_fn(xs: np.ndarray, metric_fn, h: float):
    """Curvature tensor R^k_{lam mu nu}, plus the connection at the points."""
    xs = np.asarray(xs, dtype=float)
    d = xs.shape[-1]
    eye = np.eye(d)
    offsets = np.concatenate([h * eye, -h * eye, 0.5 * h * eye, -0.5 * h * eye], axis=0)
    gam_sten = _christoffel_fn(xs[..., None, :] + offsets, metric_fn, h)
    gp, gm = gam_sten[..., 0:d, :, :, :], gam_sten[..., d:2 * d, :, :, :]
    gp2, gm2 = gam_sten[..., 2 * d:3 * d, :, :, :], gam_sten[..., 3 * d:4 * d, :, :, :]
    diff_h = (gp - gm) / (2.0 * h)
    diff_h2 = (gp2 - gm2) / h
    dgam = (4.0 * diff_h2 - diff_h) / 3.0  # [..., mu, k, a, b] = d_mu Gamma^k_ab
    gam = _christoffel_fn(xs, metric_fn, h)

    term1 = np.einsum("...mkvl->...klmv", dgam)
    term2 = np.einsum("...vkml->...klmv", dgam)
    term3 = np.einsum("...evl,...kme->...klmv", gam, gam)
    term4 = np.einsum("...eml,...kve->...klmv", gam, gam)
    return term1 - term2 + term3 - term4, gam


def _ricci_scalar_fn(xs: np.ndarray, metric_fn, h: float):
    riem, _ = _riemann_fn(xs, metric_fn, h)
    ric = np.einsum("...abad->...bd", riem)
    ginv = np.linalg.inv(metric_fn(xs))
    scal = np.einsum("...mn,...mn->...", ginv, ric)
    return ric, scal


def _model_metric_fn(model: EnvironmentModel):
    return lambda xs: _metric_many(xs, model)


def scalar_curvature_many(xs, model: EnvironmentModel, fd_step: float = DEFAULT_FD_STEP,
                          chunk: int = 256) -> np.ndarray:
    """Scalar curvature for a batch of points, evaluated in bounded-memory chunks."""
    xs = np.asarray(xs, dtype=float)
    metric_fn = _model_metric_fn(model)
    flat = xs.reshape(-1, xs.shape[-1])
    out = np.empty(flat.shape[0])
    for start in range(0, flat.shape[0], chunk):
        block = flat[start:start + chunk]
        out[start:start + block.shape[0]] = _ricci_scalar_fn(block, metric_fn, fd_step)[1]
    return out.reshape(xs.shape[:-1])


def christoffel(x, model: EnvironmentModel, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Connection coefficients Gamma^k_{mu nu} at one point."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return _christoffel_fn(x, _model_metric_fn(model), fd_step)


def riemann(x, model: EnvironmentModel, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Curvature tensor R^k_{lam mu nu} at one point."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return _riemann_fn(x, _model_metric_fn(model), fd_step)[0]


def ricci_scalar(x, model: EnvironmentModel, fd_step: float = DEFAULT_FD_STEP):
    """Ricci tensor and scalar curvature at one point."""
    x = np.asarray(x, dtype=float).reshape(-1)
    ric, scal = _ricci_scalar_fn(x, _model_metric_fn(model), fd_step)
    return ric, float(scal)


@dataclass(frozen=True)
class CurvatureBundle:
    """Connection and curvature pieces evaluated at one point."""

    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    point: np.ndarray
    fd_step: float

    def to_json(self) -> str:
        return json.dumps({
            "point": self.point.tolist(),
            "fd_step": self.fd_step,
            "christoffel": self.christoffel.tolist(),
            "riemann": self.riemann.tolist(),
            "ricci": self.ricci.tolist(),
            "scalar": self.scalar,
        })


def curvature_bundle(x, model: EnvironmentModel, fd_step: float = DEFAULT_FD_STEP) -> CurvatureBundle:
    x = np.asarray(x, dtype=float).reshape(-1)
    riem, gam = _riemann_fn(x, _model_metric_fn(model), fd_step)
    ric = np.einsum("abad->bd", riem)
    ginv = np.linalg.inv(_metric_many(x, model))
    scal = float(np.einsum("mn,mn->", ginv, ric))
    return CurvatureBundle(christoffel=gam, riemann=riem, ricci=ric, scalar=scal,
                           point=x, fd_step=fd_step)


def write_field_csv(path, thetas, phis, norms, curvatures):
    """Write the two qubit landscapes as `theta,phi,norm,scalar_curvature` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("theta,phi,norm,scalar_curvature\n")
        for i, th in enumerate(thetas):
            for j, ph in enumerate(phis):
                fh.write(f"{th:.12g},{ph:.12g},{norms[i, j]:.12g},{curvatures[i, j]:.12g}\n")
