"""Majorizing kernels and their self-convolutions.

A kernel is a positive function ``h`` on R^n for which

    h*h(xi) <= B |xi|^theta h(xi)

holds for some constants ``B`` and ``theta``.  This module represents the
candidate forms we work with, evaluates them, computes ``h*h`` by
singularity-aware quadrature and estimates the sharp constant ``B``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import ConfigurationError, KernelValidationError, PreconditionError

FORMS = ("power_law", "truncated_power", "exp_damped", "product", "tabulated_radial")

# relative tolerance used to call a kernel standardized
STANDARDIZE_TOL = 0.02
DEFAULT_QUAD_RTOL = 1e-3


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} in R^d."""
    if d <= 0:
        return 0.0
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int, r: float = 1.0) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * r**d


def riesz_constant(n: int, alpha: float, beta: float) -> float:
    """Constant C with |x|^-alpha * |x|^-beta = C |x|^(n-alpha-beta) in R^n.

    Valid for 0 < alpha, beta < n < alpha + beta.
    """
    if not (0 < alpha < n and 0 < beta < n and alpha + beta > n):
        return math.inf
    lg = (
        gammaln((n - alpha) / 2) + gammaln((n - beta) / 2) + gammaln((alpha + beta - n) / 2)
        - gammaln(alpha / 2) - gammaln(beta / 2) - gammaln(n - (alpha + beta) / 2)
    )
    return math.pi ** (n / 2) * math.exp(lg)


@dataclass(frozen=True, eq=False)
class Kernel:
    """A candidate or validated majorizing kernel on R^dim.

    ``params`` depends on ``form``:

    * power_law: ``a`` -- h = scale * r^-a
    * truncated_power: ``a_in``, ``a_out``, ``R`` -- r^-a_in inside R,
      continued as R^(a_out-a_in) r^-a_out outside
    * exp_damped: ``a``, ``c`` -- r^-a exp(-c r)
    * product: ``blocks`` -- sequence of (d_i, theta_i); h = prod r_i^-(d_i-theta_i)
    * tabulated_radial: ``radii``, ``log_values`` -- log-log interpolated table
      with power-law extrapolation from the end segments
    """

    dim: int
    form: str
    params: Mapping[str, Any]
    theta: float
    scale: float = 1.0
    sharp_B: float | None = None
    validated: bool = False
    name: str = ""

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigurationError(f"dim must be a positive integer, got {self.dim!r}")
        if self.form not in FORMS:
            raise ConfigurationError(f"unknown kernel form {self.form!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigurationError("kernel scale must be positive and finite")
        if self.theta < 0:
            raise ConfigurationError("theta must be nonnegative")
        if self.sharp_B is not None and not self.sharp_B > 0:
            raise ConfigurationError("sharp_B must be positive")
        object.__setattr__(self, "params", _check_params(self.form, self.dim, dict(self.params)))
        if self.validated and self.theta >= self.dim / 2:
            raise KernelValidationError(
                f"a validated majorizing kernel on R^{self.dim} needs theta < {self.dim / 2:g}; "
                f"got theta={self.theta:g} (no fully supported kernel exists for theta >= n/2)"
            )

    # -- radial profile -------------------------------------------------
    @property
    def is_radial(self) -> bool:
        return self.form != "product"

    def log_profile(self, r) -> np.ndarray:
        """log h along the radius for radial kernels (log of the scale included)."""
        r = np.asarray(r, dtype=float)
        p = self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(r)
            if self.form == "power_law":
                out = -p["a"] * lr
            elif self.form == "truncated_power":
                lR = math.log(p["R"])
                out = np.where(lr <= lR, -p["a_in"] * lr, -p["a_in"] * lR - p["a_out"] * (lr - lR))
            elif self.form == "exp_damped":
                out = -p["a"] * lr - p["c"] * r
            elif self.form == "tabulated_radial":
                out = _table_log_interp(p["_lr"], p["log_values"], lr)
            else:
                raise PreconditionError("log_profile is only defined for radial kernels")
            if self.form in ("power_law", "truncated_power", "exp_damped"):
                a0 = p["a"] if self.form != "truncated_power" else p["a_in"]
                out = np.where(r == 0, np.inf if a0 > 0 else 0.0, out)
        return out + math.log(self.scale)

    def profile(self, r) -> np.ndarray:
        return np.exp(self.log_profile(r))

    def block_exponents(self) -> list[tuple[int, float]]:
        if self.form != "product":
            raise PreconditionError("only product kernels have blocks")
        return [(d, float(d - th)) for d, th in self.params["blocks"]]

    def __call__(self, xi) -> np.ndarray:
        return eval_kernel(self, xi)

    def scaled(self, c: float) -> "Kernel":
        """The kernel c*h; a known sharp constant scales linearly with c."""
        B = None if self.sharp_B is None else self.sharp_B * c
        return replace(self, scale=self.scale * c, sharp_B=B)

    def to_config(self) -> dict:
        params = {k: v for k, v in self.params.items() if not k.startswith("_")}
        for k, v in params.items():
            if isinstance(v, np.ndarray):
                params[k] = v.tolist()
        if self.form == "product":
            params["blocks"] = [list(b) for b in self.params["blocks"]]
        cfg = {"dim": self.dim, "form": self.form, "parameters": params,
               "theta": self.theta, "scale": self.scale, "validated": self.validated}
        if self.sharp_B is not None:
            cfg["sharp_B"] = self.sharp_B
        if self.name:
            cfg["name"] = self.name
        return cfg

    def __repr__(self):
        params = {k: v for k, v in self.params.items() if not k.startswith("_")}
        if self.form == "tabulated_radial":
            params = {"table_size": len(self.params["radii"])}
        return (f"Kernel(dim={self.dim}, form={self.form!r}, params={params}, theta={self.theta}, "
                f"scale={self.scale:.6g}, sharp_B={self.sharp_B}, validated={self.validated})")


def _table_log_interp(lr_tab, lv_tab, lr):
    out = np.interp(lr, lr_tab, lv_tab)
    s0 = (lv_tab[1] - lv_tab[0]) / (lr_tab[1] - lr_tab[0])
    s1 = (lv_tab[-1] - lv_tab[-2]) / (lr_tab[-1] - lr_tab[-2])
    out = np.where(lr < lr_tab[0], lv_tab[0] + s0 * (lr - lr_tab[0]), out)
    out = np.where(lr > lr_tab[-1], lv_tab[-1] + s1 * (lr - lr_tab[-1]), out)
    return out


def _check_params(form: str, dim: int, p: dict) -> dict:
    def need(*keys):
        missing = [k for k in keys if k not in p]
        if missing:
            raise ConfigurationError(f"{form} kernel missing parameters {missing}")
        for k in keys:
            if form != "tabulated_radial" and k != "blocks":
                p[k] = float(p[k])
                if not math.isfinite(p[k]):
                    raise ConfigurationError(f"parameter {k} must be finite")

    if form == "power_law":
        need("a")
        if p["a"] < 0:
            raise ConfigurationError("power_law exponent must be nonnegative")
    elif form == "truncated_power":
        need("a_in", "a_out", "R")
        if p["R"] <= 0:
            raise ConfigurationError("truncated_power crossover radius must be positive")
        if p["a_in"] < 0 or p["a_out"] <= 0:
            raise ConfigurationError("truncated_power exponents must be nonnegative")
    elif form == "exp_damped":
        need("a", "c")
        if p["c"] <= 0:
            raise ConfigurationError("exp_damped decay rate must be positive")
        if p["a"] < 0:
            raise ConfigurationError("exp_damped exponent must be nonnegative")
    elif form == "product":
        need("blocks")
        blocks = tuple((int(d), float(th)) for d, th in p["blocks"])
        if len(blocks) < 1 or sum(d for d, _ in blocks) != dim:
            raise ConfigurationError("product block dimensions must sum to dim")
        for d, th in blocks:
            if d < 1 or th <= 0 or th >= d:
                raise ConfigurationError(f"bad product block ({d}, {th})")
        p["blocks"] = blocks
    elif form == "tabulated_radial":
        if "radii" not in p or ("values" not in p and "log_values" not in p):
            raise ConfigurationError("tabulated_radial needs radii and values (or log_values)")
        radii = np.asarray(p["radii"], dtype=float)
        if "log_values" in p:
            lv = np.asarray(p["log_values"], dtype=float)
        else:
            vals = np.asarray(p.pop("values"), dtype=float)
            if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
                raise ConfigurationError("tabulated values must be strictly positive and finite")
            lv = np.log(vals)
        if radii.ndim != 1 or radii.size < 2 or radii.shape != lv.shape:
            raise ConfigurationError("tabulated radii/values must be 1-d of equal length >= 2")
        if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
            raise ConfigurationError("tabulated radii must be positive and strictly increasing")
        if np.any(~np.isfinite(lv)):
            raise ConfigurationError("tabulated values must be strictly positive and finite")
        radii.setflags(write=False)
        lv.setflags(write=False)
        p["radii"], p["log_values"] = radii, lv
        lr = np.log(radii)
        lr.setflags(write=False)
        p["_lr"] = lr
    return p


# ---------------------------------------------------------------------------
# constructors

def power_law_kernel(dim: int, a: float, theta: float, scale: float = 1.0, **kw) -> Kernel:
    return Kernel(dim, "power_law", {"a": a}, theta, scale=scale, **kw)


def inverse_square_kernel() -> Kernel:
    """h(xi) = pi^-3 |xi|^-2 on R^3, which satisfies h*h = |xi| h exactly."""
    return Kernel(3, "power_law", {"a": 2.0}, 1.0, scale=math.pi**-3, sharp_B=1.0,
                  validated=True, name="inverse_square")


def exp_damped_kernel() -> Kernel:
    """h(xi) = (2 pi)^-1 |xi|^-1 exp(-|xi|) on R^3, a theta = 1 kernel."""
    return Kernel(3, "exp_damped", {"a": 1.0, "c": 1.0}, 1.0, scale=1 / (2 * math.pi),
                  name="exp_damped")


def tabulated_kernel(dim: int, radii, theta: float, values=None, log_values=None,
                     scale: float = 1.0, **kw) -> Kernel:
    params = {"radii": radii}
    if log_values is not None:
        params["log_values"] = log_values
    else:
        params["values"] = values
    return Kernel(dim, "tabulated_radial", params, theta, scale=scale, **kw)


def make_product_kernel(blocks: Sequence[tuple[int, float]], scale: float = 1.0) -> Kernel:
    """Product of radial power laws over a partition of the coordinates.

    Block i acts on d_i coordinates with h_i = r_i^-(d_i - theta_i); the
    product has exponent sum(theta_i) < n/2.
    """
    blocks = [(int(d), float(th)) for d, th in blocks]
    n = sum(d for d, _ in blocks)
    if len(blocks) < 2 or n < 2:
        raise PreconditionError("a product kernel needs at least two blocks and n >= 2")
    for d, th in blocks:
        if not 0 < th:
            raise KernelValidationError(f"block ({d}, {th}): theta_i must be positive")
        if th >= d / 2:
            raise KernelValidationError(
                f"block ({d}, {th}) rejected: theta_i must be < d_i/2 = {d / 2:g} in its own dimension")
    theta = sum(th for _, th in blocks)
    return Kernel(n, "product", {"blocks": tuple(blocks)}, theta, scale=scale, validated=True)


def block_kernel(d: int, theta: float) -> Kernel:
    """The radial factor r^-(d - theta) of a product kernel, as a kernel on R^d."""
    return Kernel(d, "power_law", {"a": d - theta}, theta)


# ---------------------------------------------------------------------------
# evaluation

def _as_points(xi, dim: int) -> np.ndarray:
    x = np.asarray(xi, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        if dim == 1 and x.ndim <= 1:
            return x.reshape(-1, 1) if x.ndim == 1 and x.size != 1 else x.reshape(1, 1)
        raise PreconditionError(f"points must have trailing dimension {dim}, got shape {x.shape}")
    return x


def eval_kernel(kernel: Kernel, xi) -> np.ndarray:
    """h(xi) for one point (shape (n,)) or many (shape (..., n)); inf on the singular set."""
    x = np.asarray(xi, dtype=float)
    single = x.ndim == 1 and (kernel.dim > 1 or x.size == 1)
    x = _as_points(x, kernel.dim)
    if kernel.is_radial:
        r = np.linalg.norm(x, axis=-1)
        out = kernel.profile(r)
    else:
        out = np.full(x.shape[:-1], kernel.scale)
        start = 0
        with np.errstate(divide="ignore"):
            for d, e in kernel.block_exponents():
                rb = np.linalg.norm(x[..., start:start + d], axis=-1)
                out = out * np.where(rb == 0, np.inf, rb ** -e)
                start += d
    if single:
        return float(np.asarray(out).reshape(-1)[0])
    return out


# ---------------------------------------------------------------------------
# self-convolution

@dataclass(frozen=True)
class RadialQuadratureGrid:
    """Log-spaced radial panels and an angular Gauss rule.

    When ``relative`` is true, ``r_min``/``r_max`` are multiples of |xi| for
    each evaluation point.
    """

    r_min: float = 1e-9
    r_max: float = 1e9
    panel_width: float = 0.5
    order: int = 8
    angular_order: int = 32
    relative: bool = True

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise PreconditionError("need 0 < r_min < r_max")
        if self.order < 2:
            raise PreconditionError("need at least two radial nodes per panel")
        if self.angular_order < 1:
            raise PreconditionError("angular order must be >= 1")

    @property
    def node_count(self) -> int:
        panels = math.ceil(math.log(self.r_max / self.r_min) / self.panel_width)
        return panels * self.order


@dataclass
class ConvolutionResult:
    points: np.ndarray
    values: np.ndarray
    tail_bound: float
    error_estimate: np.ndarray = field(default=None)
    converged: bool = True

    def radial_rows(self):
        """Rows (|xi|, direction index, value, tail_bound) for CSV output."""
        r = np.linalg.norm(self.points, axis=-1)
        return [(float(r[i]), i, float(self.values[i]), self.tail_bound) for i in range(len(r))]


@lru_cache(maxsize=64)
def _gauss(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _log_panels(lo: float, hi: float, width: float, extra=(), order: int = 8):
    nb = max(1, int(math.ceil((hi - lo) / width)))
    brk = np.linspace(lo, hi, nb + 1)
    extra = [e for e in extra if lo < e < hi]
    if extra:
        brk = np.unique(np.concatenate([brk, extra]))
    x, w = _gauss(order)
    a, b = brk[:-1], brk[1:]
    u = (0.5 * (b - a)[:, None] * x + 0.5 * (b + a)[:, None]).ravel()
    wu = (0.5 * (b - a)[:, None] * w).ravel()
    return u, wu


def _tail(f_end: float, slope: float, gap: float) -> float:
    """Integral of f_end*exp(-slope*t) over t in (gap, inf); inf when it does not decay."""
    if f_end == 0.0 or not np.isfinite(f_end):
        return 0.0 if f_end == 0.0 else math.inf
    if slope <= 1e-3:
        return math.inf
    return f_end * math.exp(-slope * gap) / slope


def _local_decay(u: np.ndarray, f: np.ndarray, end: str) -> float:
    """Exponential decay rate of f(u) at one end of the grid (positive = decaying outward)."""
    k = 6
    if end == "hi":
        uu, ff = u[-k:], f[-k:]
        sign = -1.0
    else:
        uu, ff = u[:k], f[:k]
        sign = 1.0
    if np.any(ff <= 0):
        return math.inf if np.all(ff[-1 if end == "hi" else 0] == 0) else 0.0
    slope = np.polyfit(uu, np.log(ff), 1)[0]
    return sign * slope


def _kinks(kernel: Kernel) -> list[float]:
    if kernel.form == "truncated_power":
        return [kernel.params["R"]]
    if kernel.form == "tabulated_radial":
        r = kernel.params["radii"]
        if r.size <= 64:
            return list(r)
    return []


def _radial_selfconv(kernel: Kernel, s: np.ndarray, grid: RadialQuadratureGrid, order=None,
                     m=None):
    """h*h(s) for a radial kernel, vectorized over radii s > 0.

    Uses the symmetry eta <-> xi - eta to integrate only over |eta| <= |xi - eta|,
    where the sole singularity sits at eta = 0 and is removed by eta = e^u.
    """
    n = kernel.dim
    order = order or grid.order
    m = m or grid.angular_order
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty(s.shape)
    tails = np.empty(s.shape)
    kinks = _kinks(kernel)
    for i, si in enumerate(s):
        scale = si if grid.relative else 1.0
        lo, hi = math.log(grid.r_min * scale), math.log(grid.r_max * scale)
        extra = [math.log(si / 2)] + [math.log(k) for k in kinks] + [math.log(si)]
        u, wu = _log_panels(lo, hi, grid.panel_width, extra, order)
        a = np.exp(u)
        if n == 1:
            # 2 * [int_0^inf h(a) h(s+a) da + int_0^{s/2} h(a) h(s-a) da]
            ha = kernel.profile(a)
            g = ha * kernel.profile(si + a)
            inner = a <= si / 2
            g = g + np.where(inner, ha * kernel.profile(np.abs(si - a)), 0.0)
            f = 2.0 * a * g
        else:
            xm, wm = _gauss(m)
            phimin = np.arccos(np.minimum(1.0, si / (2 * a)))
            half = 0.5 * (np.pi - phimin)
            phi = half[:, None] * xm + (0.5 * (np.pi + phimin))[:, None]
            wp = half[:, None] * wm
            b = np.sqrt(np.maximum(si * si + a[:, None] ** 2 - 2 * si * a[:, None] * np.cos(phi), 0.0))
            J = (kernel.profile(b) * np.sin(phi) ** (n - 2) * wp).sum(axis=1)
            f = 2.0 * sphere_area(n - 1) * a**n * kernel.profile(a) * J
        if not np.all(np.isfinite(f)):
            out[i], tails[i] = math.inf, math.inf
            continue
        body = float(np.dot(f, wu))
        gap_hi = hi - u[-1]
        gap_lo = u[0] - lo
        t_hi = _tail(f[-1], _local_decay(u, f, "hi"), gap_hi)
        t_lo = _tail(f[0], _local_decay(u, f, "lo"), gap_lo)
        # the quadrature already covers [lo, u0] and [u_end, hi] approximately; tails are beyond
        out[i] = body + t_hi + t_lo
        tails[i] = t_hi + t_lo
    return out, tails


def _radial_at_zero(kernel: Kernel, grid: RadialQuadratureGrid):
    """h*h(0) = int h^2."""
    n = kernel.dim
    lo, hi = math.log(grid.r_min), math.log(grid.r_max)
    u, wu = _log_panels(lo, hi, grid.panel_width, [math.log(k) for k in _kinks(kernel)], grid.order)
    a = np.exp(u)
    f = sphere_area(n) * a**n * kernel.profile(a) ** 2 if n > 1 else 2 * a * kernel.profile(a) ** 2
    t = _tail(f[-1], _local_decay(u, f, "hi"), hi - u[-1]) + _tail(f[0], _local_decay(u, f, "lo"), u[0] - lo)
    return float(np.dot(f, wu)) + t, t


def self_convolve(kernel: Kernel, points, grid: RadialQuadratureGrid | None = None,
                  rtol: float = DEFAULT_QUAD_RTOL) -> ConvolutionResult:
    """h*h at each point; inf where the integral diverges.

    The error estimate compares against a rule of half the order; points whose
    estimate exceeds ``rtol`` mark the result as not converged (a warning is
    issued rather than an exception).
    """
    grid = grid or RadialQuadratureGrid()
    pts = _as_points(np.asarray(points, dtype=float), kernel.dim)
    pts = pts.reshape(-1, kernel.dim)
    vals, errs, tail = _convolve_points(kernel, pts, grid)
    finite = np.isfinite(vals)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(finite & (vals > 0), errs / np.where(finite & (vals > 0), vals, 1.0), 0.0)
    converged = bool(np.all(rel <= rtol))
    if not converged:
        warnings.warn(f"self-convolution quadrature error {rel.max():.2e} exceeds rtol={rtol:g}",
                      RuntimeWarning, stacklevel=2)
    return ConvolutionResult(pts, vals, tail, errs, converged)


def _convolve_points(kernel: Kernel, pts: np.ndarray, grid: RadialQuadratureGrid):
    if kernel.is_radial:
        r = np.linalg.norm(pts, axis=-1)
        return _radial_values(kernel, r, grid)
    vals = np.full(len(pts), kernel.scale**2)
    errs = np.zeros(len(pts))
    tail = 0.0
    start = 0
    for d, th in kernel.params["blocks"]:
        rb = np.linalg.norm(pts[:, start:start + d], axis=-1)
        v, e, t = _radial_values(block_kernel(d, th), rb, grid)
        errs = errs * v + np.abs(vals) * e
        vals = vals * v
        tail = max(tail, t)
        start += d
    return vals, errs, tail


def _radial_values(kernel: Kernel, r: np.ndarray, grid: RadialQuadratureGrid):
    vals = np.empty(r.shape)
    errs = np.zeros(r.shape)
    tail = 0.0
    zero = r == 0
    if np.any(zero):
        v0, t0 = _radial_at_zero(kernel, grid)
        vals[zero] = v0
        tail = max(tail, t0 if np.isfinite(t0) else 0.0)
    nz = ~zero
    if np.any(nz):
        v, t = _radial_selfconv(kernel, r[nz], grid)
        v_lo, _ = _radial_selfconv(kernel, r[nz], grid, order=max(2, grid.order // 2),
                                   m=max(1, grid.angular_order // 2))
        vals[nz] = v
        with np.errstate(invalid="ignore"):
            errs[nz] = np.where(np.isfinite(v), np.abs(v - v_lo), np.inf)
        ft = t[np.isfinite(t)]
        if ft.size:
            tail = max(tail, float(ft.max()))
    return vals, errs, tail


# ---------------------------------------------------------------------------
# sharp constant and standardization

@dataclass
class SharpConstantReport:
    B: float
    theta: float
    standardized: bool
    ratios: np.ndarray
    probes: np.ndarray
    certificate: str | None = None

    def to_dict(self) -> dict:
        return {"B": self.B, "theta": self.theta, "standardized": self.standardized,
                "probe_count": int(len(self.probes)),
                "ratio_min": float(np.min(self.ratios)) if np.all(np.isfinite(self.ratios)) else None,
                "certificate": self.certificate}


def default_probes(kernel: Kernel, n_radii: int = 200, n_directions: int = 64,
                   r_lo: float = 1e-3, r_hi: float = 1e3, seed: int = 0) -> np.ndarray:
    radii = np.logspace(math.log10(r_lo), math.log10(r_hi), n_radii)
    n = kernel.dim
    if kernel.is_radial:
        e = np.zeros(n)
        e[0] = 1.0
        return radii[:, None] * e
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_directions, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return (radii[:, None, None] * dirs[None]).reshape(-1, n)


def sharp_constant(kernel: Kernel, theta: float | None = None, probes=None,
                   grid: RadialQuadratureGrid | None = None) -> SharpConstantReport:
    """max over probe points of h*h / (|xi|^theta h)."""
    theta = kernel.theta if theta is None else theta
    pts = default_probes(kernel) if probes is None else np.asarray(probes, dtype=float)
    pts = pts.reshape(-1, kernel.dim)
    r = np.linalg.norm(pts, axis=-1)
    if np.any(r == 0):
        raise PreconditionError("probe points must exclude the origin")
    conv = self_convolve(kernel, pts, grid)
    h = eval_kernel(kernel, pts)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = conv.values / (r**theta * h)
    if not np.all(np.isfinite(ratios)):
        return SharpConstantReport(math.inf, theta, False, ratios, pts,
                                   certificate=f"not a majorizing kernel for theta={theta:g}: "
                                               "self-convolution diverges at a probe point")
    B = float(np.max(ratios))
    return SharpConstantReport(B, theta, abs(B - 1.0) <= STANDARDIZE_TOL, ratios, pts)


def with_sharp_constant(kernel: Kernel, **kw) -> Kernel:
    rep = sharp_constant(kernel, **kw)
    if not math.isfinite(rep.B):
        raise KernelValidationError(rep.certificate)
    return replace(kernel, sharp_B=rep.B)


def standardize(kernel: Kernel) -> Kernel:
    """B^-1 h, whose sharp constant is 1."""
    if kernel.sharp_B is None or not math.isfinite(kernel.sharp_B):
        raise PreconditionError("standardize needs a finite sharp_B estimate; run sharp_constant first")
    out = kernel.scaled(1.0 / kernel.sharp_B)
    return replace(out, sharp_B=1.0)


# ---------------------------------------------------------------------------
# growth/decay exponents

@dataclass
class ExponentReport:
    alpha: float
    omega: float
    alpha_residual: float
    omega_residual: float
    origin_algebraic: bool
    infinity_algebraic: bool
    n: int
    theta: float

    @property
    def in_class(self) -> bool:
        """Radial algebraic growth and decay (both ends algebraic, omega > 0)."""
        return self.origin_algebraic and self.infinity_algebraic and self.alpha >= -0.05 and self.omega > 0

    @property
    def classification(self) -> str:
        return "H_alpha_omega" if self.in_class else "not in H^theta_{alpha,omega}"

    def alpha_check(self, tol: float = 0.05) -> bool | None:
        if not self.origin_algebraic:
            return None
        if self.theta == 0:
            return self.alpha < self.n + tol
        return self.alpha <= self.n - self.theta + tol

    def omega_check(self, tol: float = 0.05) -> bool | None:
        if not self.infinity_algebraic:
            return None
        return self.omega >= self.n - self.theta - tol

    def to_dict(self) -> dict:
        return {"alpha": float(self.alpha), "omega": float(self.omega),
                "alpha_residual": float(self.alpha_residual),
                "omega_residual": float(self.omega_residual), "classification": self.classification,
                "alpha_check": self.alpha_check(), "omega_check": self.omega_check()}


def log_eval_kernel(kernel: Kernel, xi) -> np.ndarray:
    """log h(xi), computed without under/overflow of h itself."""
    x = _as_points(np.asarray(xi, dtype=float), kernel.dim)
    if kernel.is_radial:
        return kernel.log_profile(np.linalg.norm(x, axis=-1))
    out = np.full(x.shape[:-1], math.log(kernel.scale))
    start = 0
    with np.errstate(divide="ignore"):
        for d, e in kernel.block_exponents():
            out = out - e * np.log(np.linalg.norm(x[..., start:start + d], axis=-1))
            start += d
    return out


def _loglog_fit(kernel: Kernel, radii: np.ndarray, direction: np.ndarray):
    lr = np.log(radii)
    lh = log_eval_kernel(kernel, radii[:, None] * direction)
    if not np.all(np.isfinite(lh)):
        return math.nan, math.inf
    A = np.vstack([lr, np.ones_like(lr)]).T
    coef, *_ = np.linalg.lstsq(A, lh, rcond=None)
    resid = lh - A @ coef
    # compare slopes on the two halves; curvature in log-log means non-algebraic
    half = len(lr) // 2
    s1 = np.polyfit(lr[:half], lh[:half], 1)[0]
    s2 = np.polyfit(lr[half:], lh[half:], 1)[0]
    return -coef[0], max(float(np.sqrt(np.mean(resid**2))), abs(s1 - s2))


def estimate_exponents(kernel: Kernel, direction=None, residual_tol: float = 0.02,
                       origin_range=(1e-8, 1e-5), infinity_range=(1e5, 1e8),
                       n_points: int = 40) -> ExponentReport:
    """Fit h ~ r^-alpha at the origin and h ~ r^-omega at infinity along a ray."""
    n = kernel.dim
    if direction is None:
        direction = np.ones(n) / math.sqrt(n) if not kernel.is_radial else np.eye(n)[0]
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    r0 = np.logspace(math.log10(origin_range[0]), math.log10(origin_range[1]), n_points)
    r1 = np.logspace(math.log10(infinity_range[0]), math.log10(infinity_range[1]), n_points)
    alpha, ra = _loglog_fit(kernel, r0, direction)
    omega, rw = _loglog_fit(kernel, r1, direction)
    return ExponentReport(float(alpha), float(omega), float(ra), float(rw),
                          bool(ra <= residual_tol), bool(rw <= residual_tol), n, kernel.theta)


# ---------------------------------------------------------------------------
# L^1 + L^2 membership

@dataclass
class SplitIntegralReport:
    threshold: float
    truncation: np.ndarray
    l1_integrals: np.ndarray
    l2_integrals: np.ndarray
    l1_status: str
    l2_status: str
    l1_limit: float
    l2_limit: float

    @property
    def member(self) -> bool | None:
        if self.l1_status == "divergent" or self.l2_status == "divergent":
            return False
        if self.l1_status == "convergent" and self.l2_status == "convergent":
            return True
        return None

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "truncation": self.truncation.tolist(),
                "l1_integrals": self.l1_integrals.tolist(), "l2_integrals": self.l2_integrals.tolist(),
                "l1_status": self.l1_status, "l2_status": self.l2_status,
                "l1_limit": self.l1_limit, "l2_limit": self.l2_limit, "member": self.member}


def _growth_status(vals: np.ndarray):
    inc = np.diff(vals)
    last = vals[-1]
    if last == 0 or (np.all(np.abs(inc) <= 1e-12 * max(abs(last), 1e-300))):
        return "convergent", float(last)
    if np.any(inc < -1e-9 * abs(last)):
        return "inconclusive", math.nan
    ratios = inc[1:] / np.where(inc[:-1] > 0, inc[:-1], np.nan)
    if inc[-1] <= 1e-6 * last:
        return "convergent", float(last)
    if np.all(np.isfinite(ratios)) and np.all(ratios < 0.8):
        rho = ratios[-1]
        return "convergent", float(last + inc[-1] * rho / (1 - rho))
    if np.all(np.isfinite(ratios)) and np.all(ratios >= 0.9):
        return "divergent", math.inf
    return "inconclusive", math.nan


def _radial_split(kernel: Kernel, M: float, R: float, power: int, above: bool, nodes=4000):
    n = kernel.dim
    u = np.linspace(-math.log(R), math.log(R), nodes + 1)
    lh = kernel.log_profile(np.exp(u))
    mask = lh >= math.log(M) if above else lh <= math.log(M)
    # refine the indicator edge: linear interpolation of log h between grid nodes
    f = np.exp(n * u + power * lh) * sphere_area(n) if n > 1 else 2 * np.exp(u + power * lh)
    g = np.where(mask, f, 0.0)
    # trapezoid with fractional cells at indicator switches
    du = u[1] - u[0]
    total = 0.0
    for j in range(nodes):
        m0, m1 = mask[j], mask[j + 1]
        if m0 and m1:
            total += 0.5 * du * (g[j] + g[j + 1])
        elif m0 != m1:
            t = (math.log(M) - lh[j]) / (lh[j + 1] - lh[j]) if lh[j + 1] != lh[j] else 0.5
            t = min(max(t, 0.0), 1.0)
            if m0:
                total += 0.5 * t * du * (f[j] + (f[j] + t * (f[j + 1] - f[j])))
            else:
                total += 0.5 * (1 - t) * du * (f[j + 1] + (f[j] + t * (f[j + 1] - f[j])))
    return total


def _product_split(kernel: Kernel, M: float, R: float, power: int, above: bool, nodes=600):
    """Split integral for product kernels over the box r_i in [1/R, R].

    In block log-radii u_i the integrand is exponential, and the region
    h >= M is a half-space; the last block coordinate is integrated exactly.
    """
    blocks = kernel.params["blocks"]
    e = np.array([d - th for d, th in blocks])
    d = np.array([bd for bd, _ in blocks])
    c = np.prod([sphere_area(int(bd)) for bd in d])
    # integrand exponent per coordinate: h dxi -> exp((d - e) u); h^2 dxi -> exp((d - 2e) u)
    k = (d - power * e).astype(float)
    L0 = (math.log(kernel.scale) - math.log(M))  # h >= M  <=>  sum e_i u_i <= L0
    lR = math.log(R)
    x, w = _gauss(8)
    nb = nodes // 8
    brk = np.linspace(-lR, lR, nb + 1)
    uu = (0.5 * (brk[1:] - brk[:-1])[:, None] * x + 0.5 * (brk[1:] + brk[:-1])[:, None]).ravel()
    ww = (0.5 * (brk[1:] - brk[:-1])[:, None] * w).ravel()
    outer = len(blocks) - 1
    grids = np.meshgrid(*([uu] * outer), indexing="ij")
    weights = np.ones_like(grids[0])
    for g_, i in zip(np.meshgrid(*([ww] * outer), indexing="ij"), range(outer)):
        weights = weights * g_
    partial = sum(e[i] * grids[i] for i in range(outer))
    base = np.exp(sum(k[i] * grids[i] for i in range(outer)))
    bound = (L0 - partial) / e[-1]
    if above:
        lo, hi = np.full_like(bound, -lR), np.minimum(bound, lR)
    else:
        lo, hi = np.maximum(bound, -lR), np.full_like(bound, lR)
    hi = np.maximum(hi, lo)
    kk = k[-1]
    if abs(kk) < 1e-14:
        last = hi - lo
    else:
        last = (np.exp(kk * hi) - np.exp(kk * lo)) / kk
    val = c * kernel.scale**power * np.sum(weights * base * last)
    return float(val)


def l1_plus_l2_report(kernel: Kernel, M: float = 1.0, R0: float = 8.0, doublings: int = 4
                      ) -> SplitIntegralReport:
    """Integrability of h 1[h >= M] in L^1 and h 1[h <= M] in L^2 over growing domains."""
    if not M > 0:
        raise PreconditionError("threshold M must be positive")
    Rs = R0 * 2.0 ** np.arange(doublings + 1)
    fn = _radial_split if kernel.is_radial else _product_split
    l1 = np.array([fn(kernel, M, R, 1, True) for R in Rs])
    l2 = np.array([fn(kernel, M, R, 2, False) for R in Rs])
    s1, lim1 = _growth_status(l1)
    s2, lim2 = _growth_status(l2)
    return SplitIntegralReport(M, Rs, l1, l2, s1, s2, lim1, lim2)


def l1_plus_l2_norm_power(n: int, theta: float) -> tuple[float, float]:
    """min over split radius of ||h* 1[<=rho]||_1 and ||h* 1[>rho]||_2 pieces for
    h* = |xi|^-(n-theta); returns the minimizing sum and the radius."""
    from scipy.optimize import minimize_scalar

    S = sphere_area(n)

    def total(lr):
        rho = math.exp(lr)
        return S * rho**theta / theta + math.sqrt(S * rho ** (2 * theta - n) / (n - 2 * theta))

    res = minimize_scalar(total, bounds=(-20, 20), method="bounded")
    return float(res.fun), math.exp(res.x)
