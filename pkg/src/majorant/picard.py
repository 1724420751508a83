"""Picard iteration for the mild Fourier-space Navier-Stokes equations on a lattice.

The mild form solved here is

    u(xi, t) = e^{-nu |xi|^2 t} u0(xi)
               + int_0^t e^{-nu |xi|^2 (t-s)} [ g(xi) + B(u, u)(xi, s) ] ds

with the bilinear term

    B(u, v)(xi) = (2 pi)^{-n/2} |xi| sum_eta u(eta) (x)_xi v(xi - eta) dxi^n,
    z (x)_xi w = -i (z . e_xi) P(xi) w.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import GeometryError, OverflowGuardError, PreconditionError
from .kernels import Kernel
from .lattice import LatticeField, LatticeGeometry, check_same_geometry, project_field, unit_vectors

OVERFLOW_GUARD = 1e12


# ---------------------------------------------------------------------------
# norms

def _inv_h(geometry: LatticeGeometry, kernel: Kernel) -> np.ndarray:
    h = geometry.kernel_values(kernel)
    with np.errstate(divide="ignore"):
        return np.where(h > 0, 1.0 / np.where(h > 0, h, 1.0), 0.0)


def fh_norm(field_: LatticeField, kernel: Kernel) -> float:
    """max over lattice sites (origin excluded) of |u(xi)| / h(xi)."""
    return float(np.max(field_.magnitude() * _inv_h(field_.geometry, kernel)))


@dataclass
class MildTrajectory:
    """Fields at the nodes of a time grid, stored on the ball sites only."""

    geometry: LatticeGeometry
    times: np.ndarray
    site_values: np.ndarray  # (len(times), site_count, n)
    kernel: Kernel | None = None
    iterate: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1 or (t.size > 1 and np.any(np.diff(t) <= 0)):
            raise PreconditionError("time grid must be strictly increasing")
        if t[0] != 0:
            raise PreconditionError("time grid must start at 0")
        self.times = t
        if self.site_values.shape != (t.size, self.geometry.site_count, self.geometry.dim):
            raise GeometryError("trajectory values do not match the time grid and lattice")

    @classmethod
    def from_fields(cls, times, fields, kernel=None, iterate=0) -> "MildTrajectory":
        g = check_same_geometry(*fields)
        return cls(g, np.asarray(times, float), np.stack([f.site_values() for f in fields]),
                   kernel, iterate)

    def field(self, i: int) -> LatticeField:
        return _dense(self.geometry, self.site_values[i])

    def __len__(self):
        return self.times.size


def _dense(g: LatticeGeometry, site_vals: np.ndarray) -> LatticeField:
    v = np.zeros((int(np.prod(g.shape)), g.dim), dtype=complex)
    v[g.site_index] = site_vals
    return LatticeField(g, v.reshape(g.shape + (g.dim,)))


def _site_inv_h(g: LatticeGeometry, kernel: Kernel) -> np.ndarray:
    return _inv_h(g, kernel).reshape(-1)[g.site_index]


def fht_norm(traj: MildTrajectory, kernel: Kernel) -> float:
    """max over time nodes of the F_h norm."""
    if len(traj) == 0:
        raise PreconditionError("empty trajectory")
    w = _site_inv_h(traj.geometry, kernel)
    return float(np.max(np.linalg.norm(traj.site_values, axis=-1) * w))


# ---------------------------------------------------------------------------
# bilinear term

@dataclass
class BilinearDiagnostics:
    high_mode_fraction: float


def _fft_shape(g: LatticeGeometry):
    L = 2 * g.M + 1
    return (sfft.next_fast_len(2 * L - 1),) * g.dim


def _prefactor(g: LatticeGeometry) -> np.ndarray:
    return (2 * math.pi) ** (-g.dim / 2) * g.radius * g.cell_volume


def bilinear_term(u: LatticeField, v: LatticeField, diagnostics: bool = False):
    """B(u, v) on the shared lattice via zero-padded FFT convolution.

    The padding covers the full linear convolution, so there is no
    wrap-around; pairs whose sum leaves the ball are truncated.  With
    ``diagnostics`` the fraction of input energy above xi_max/2 (the modes
    whose products can leave the ball) is returned as well.
    """
    g = check_same_geometry(u, v)
    if g.shifted:
        raise GeometryError("the bilinear term needs an unshifted lattice")
    n, M = g.dim, g.M
    shape = _fft_shape(g)
    axes = tuple(range(n))
    U = [sfft.fftn(u.values[..., j], shape, axes=axes) for j in range(n)]
    same = u is v or np.array_equal(u.values, v.values)
    V = U if same else [sfft.fftn(v.values[..., j], shape, axes=axes) for j in range(n)]
    sl = tuple(slice(M, 3 * M + 1) for _ in range(n))
    e = unit_vectors(g.coords)
    w = np.zeros(g.shape + (n,), dtype=complex)
    for j in range(n):
        for l in range(n):
            if same and l < j:
                continue
            C = sfft.ifftn(U[j] * V[l], axes=axes)[sl]
            w[..., l] += e[..., j] * C
            if same and l != j:
                w[..., j] += e[..., l] * C
    out = -1j * _prefactor(g)[..., None] * project_field(g.coords, w)
    res = LatticeField(g, out, divergence_free=True)
    if diagnostics:
        return res, BilinearDiagnostics(_high_mode_fraction(u) if same else
                                        max(_high_mode_fraction(u), _high_mode_fraction(v)))
    return res


def _high_mode_fraction(f: LatticeField) -> float:
    mag2 = f.magnitude() ** 2
    tot = mag2.sum()
    if tot == 0:
        return 0.0
    return float(mag2[f.geometry.radius > f.geometry.xi_max / 2].sum() / tot)


def bilinear_term_direct(u: LatticeField, v: LatticeField) -> LatticeField:
    """Double loop over ball sites; slow reference for ``bilinear_term``."""
    g = check_same_geometry(u, v)
    n, M = g.dim, g.M
    idx = g.site_multi_index
    coords = g.site_coords
    uv, vv = u.site_values(), v.site_values()
    lookup = g.lookup
    out = np.zeros((g.site_count, n), dtype=complex)
    pref = (2 * math.pi) ** (-n / 2) * g.cell_volume
    for a in range(g.site_count):
        xi = coords[a]
        r = np.linalg.norm(xi)
        if r == 0:
            continue
        e = xi / r
        acc = np.zeros(n, dtype=complex)
        for b in range(g.site_count):
            m = idx[a] - idx[b]
            if np.any(np.abs(m) > M):
                continue
            c = lookup[tuple(m + M)]
            if c < 0:
                continue
            z, wv = uv[b], vv[c]
            acc += -1j * np.dot(z, e) * (wv - np.dot(e, wv) * e)
        out[a] = pref * r * acc
    return _dense(g, out)


# ---------------------------------------------------------------------------
# time stepping

def _phi_weights(lam: np.ndarray, dt: float):
    """Weights (w0, w1) with int_0^dt e^{-lam(dt-s)} [(1-s/dt) a + (s/dt) b] ds = w0 a + w1 b."""
    z = lam * dt
    small = z < 1e-4
    zs = np.where(small, 1.0, z)
    em = -np.expm1(-zs)
    A = np.where(small, dt * (1 - z / 2 + z * z / 6), dt * em / zs)
    Bw = np.where(small, dt * (0.5 - z / 6 + z * z / 24), dt * (zs - em) / zs**2)
    return A - Bw, Bw


@dataclass
class PicardResult:
    iterates: list
    differences: np.ndarray
    residual: float
    high_mode_fraction: float


def _forcing_sites(g: LatticeGeometry, forcing) -> np.ndarray:
    if forcing is None:
        return np.zeros((g.site_count, g.dim), dtype=complex)
    if isinstance(forcing, LatticeField):
        check_same_geometry(forcing)
        if forcing.geometry != g:
            raise GeometryError("forcing lives on a different lattice")
        return forcing.site_values()
    if callable(forcing):
        vals = np.asarray(forcing(g.site_coords), dtype=complex)
        return project_field(g.site_coords, vals)
    raise PreconditionError("forcing must be None, a LatticeField or a callable of xi")


def heat_trajectory(u0: LatticeField, nu: float, times: np.ndarray, forcing=None) -> np.ndarray:
    """e^{-nu|xi|^2 t} u0 + (1 - e^{-nu|xi|^2 t}) / (nu|xi|^2) g at each node (site values)."""
    g = u0.geometry
    lam = nu * np.sum(g.site_coords**2, axis=-1)
    gs = _forcing_sites(g, forcing)
    decay = np.exp(-lam[None, :] * times[:, None])
    with np.errstate(invalid="ignore", divide="ignore"):
        forced = np.where(lam > 0, -np.expm1(-lam[None, :] * times[:, None]) / np.where(lam > 0, lam, 1.0),
                          times[:, None])
    out = decay[..., None] * u0.site_values()[None] + forced[..., None] * gs[None]
    origin = g.origin_site()
    if origin is not None:
        out[:, origin] = 0
    return out


def duhamel(traj_sites: np.ndarray, g: LatticeGeometry, nu: float, times: np.ndarray,
            bilinear=True) -> tuple[np.ndarray, float]:
    """Exponential-integrator Duhamel integral of B(u(s), u(s)) over the time grid."""
    lam = nu * np.sum(g.site_coords**2, axis=-1)
    out = np.zeros_like(traj_sites)
    if not bilinear:
        return out, 0.0
    N_prev = None
    high = 0.0
    for i in range(len(times)):
        fi = _dense(g, traj_sites[i])
        b, diag = bilinear_term(fi, fi, diagnostics=True)
        high = max(high, diag.high_mode_fraction)
        N_i = b.site_values()
        if i > 0:
            dt = times[i] - times[i - 1]
            w0, w1 = _phi_weights(lam, dt)
            out[i] = np.exp(-lam * dt)[:, None] * out[i - 1] + w0[:, None] * N_prev + w1[:, None] * N_i
        N_prev = N_i
    return out, high


def picard_iterate(u0: LatticeField, forcing=None, nu: float = 1.0, T: float = 0.1, K: int = 6,
                   kernel: Kernel | None = None, n_steps: int = 64, bilinear: bool = True,
                   overflow_guard: float = OVERFLOW_GUARD) -> PicardResult:
    """Iterates u^(0), ..., u^(K) as trajectories on a uniform time grid.

    u^(0) is the heat-plus-forcing term; u^(k+1) = u^(0) + Duhamel[B(u^(k), u^(k))].
    With ``bilinear=False`` every iterate equals u^(0).
    """
    if K < 1:
        raise PreconditionError("K must be >= 1")
    if not (nu > 0 and T > 0 and n_steps >= 1):
        raise PreconditionError("need nu > 0, T > 0 and at least one time step")
    if u0.divergence_residual() > 1e-10:
        raise PreconditionError("initial datum must be divergence-free")
    g = u0.geometry
    times = np.linspace(0.0, T, n_steps + 1)
    base = heat_trajectory(u0, nu, times, forcing)
    w = _site_inv_h(g, kernel) if kernel is not None else np.ones(g.site_count)
    trajs = [MildTrajectory(g, times, base, kernel, 0)]
    diffs = []
    high = 0.0
    cur = base
    for k in range(1, K + 1):
        d, hm = duhamel(cur, g, nu, times, bilinear)
        high = max(high, hm)
        nxt = base + d
        size = float(np.max(np.abs(nxt)))
        if not np.isfinite(size) or size * float(np.max(w)) > overflow_guard:
            raise OverflowGuardError(
                f"Picard iterate {k} exceeded the overflow guard ({overflow_guard:g}); "
                "the datum is too large for the iteration to converge on [0, T]")
        diffs.append(float(np.max(np.linalg.norm(nxt - cur, axis=-1) * w)))
        trajs.append(MildTrajectory(g, times, nxt, kernel, k))
        cur = nxt
    # one more application of the Picard map to measure the fixed-point residual
    d, _ = duhamel(cur, g, nu, times, bilinear)
    residual = float(np.max(np.linalg.norm(base + d - cur, axis=-1) * w))
    return PicardResult(trajs, np.array(diffs), residual, high)


# ---------------------------------------------------------------------------

@dataclass
class ContractionReport:
    differences: np.ndarray
    ratios: np.ndarray
    verdict: str
    estimated_ratio: float
    small_data_threshold: float | None = None
    datum_norm: float | None = None

    @property
    def contracting(self) -> bool:
        return self.verdict == "contracting"

    def to_dict(self) -> dict:
        return {"differences": self.differences.tolist(), "ratios": self.ratios.tolist(),
                "verdict": self.verdict, "estimated_ratio": self.estimated_ratio,
                "small_data_threshold": self.small_data_threshold, "datum_norm": self.datum_norm,
                "below_threshold": (None if self.small_data_threshold is None
                                    else self.datum_norm < self.small_data_threshold)}


def bilinear_gain(kernel: Kernel, nu: float, T: float) -> float:
    """gamma(T) with ||Duhamel B(u, v)||_{F_h,T} <= gamma ||u|| ||v|| for a kernel with (B, theta)."""
    B = kernel.sharp_B if kernel.sharp_B is not None else 1.0
    th = kernel.theta
    r = np.logspace(-6, 6, 4001)
    with np.errstate(over="ignore"):
        s = r ** (1 + th) * (-np.expm1(-nu * r * r * T)) / (nu * r * r)
    return (2 * math.pi) ** (-kernel.dim / 2) * B * float(np.max(s))


def contraction_report(iterates, kernel: Kernel, nu: float | None = None) -> ContractionReport:
    """Successive F_{h,T} differences d_k and their ratios d_{k+1}/d_k."""
    if len(iterates) < 3:
        raise PreconditionError("contraction report needs at least three iterates")
    d = np.array([_traj_diff(a, b, kernel) for a, b in zip(iterates, iterates[1:])])
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(d[:-1] > 0, d[1:] / np.where(d[:-1] > 0, d[:-1], 1.0), 0.0)
    verdict = "contracting" if np.all(ratios < 1) else "non-contracting"
    est = float(ratios[-1]) if ratios.size else 0.0
    thr = norm0 = None
    if nu is not None:
        T = float(iterates[0].times[-1])
        thr = 1.0 / (4.0 * bilinear_gain(kernel, nu, T))
        norm0 = fht_norm(iterates[0], kernel)
    return ContractionReport(d, ratios, verdict, est, thr, norm0)


def _traj_diff(a: MildTrajectory, b: MildTrajectory, kernel: Kernel) -> float:
    w = _site_inv_h(a.geometry, kernel)
    return float(np.max(np.linalg.norm(b.site_values - a.site_values, axis=-1) * w))


def interpolate_trajectory(traj: MildTrajectory, site: int, t: float) -> np.ndarray:
    """Linear interpolation in time of the value at one site."""
    ts = traj.times
    if not (0 <= t <= ts[-1] + 1e-12):
        raise PreconditionError(f"t={t} outside [0, {ts[-1]}]")
    j = int(np.searchsorted(ts, t, side="right")) - 1
    j = min(max(j, 0), len(ts) - 2) if len(ts) > 1 else 0
    if len(ts) == 1:
        return traj.site_values[0, site]
    a = (t - ts[j]) / (ts[j + 1] - ts[j])
    return (1 - a) * traj.site_values[j, site] + a * traj.site_values[j + 1, site]


def site_of(g: LatticeGeometry, xi) -> int:
    xi = np.asarray(xi, dtype=float).reshape(g.dim)
    m = np.rint((xi - np.asarray(g.offset)) / g.dxi).astype(int)
    if np.any(np.abs(m) > g.M) or not np.allclose(g.offset + m * g.dxi, xi, atol=1e-9 * g.dxi):
        raise GeometryError(f"point {xi} is not a lattice site")
    s = int(g.lookup[tuple(m + g.M)])
    if s < 0:
        raise GeometryError(f"point {xi} lies outside the lattice ball")
    return s
