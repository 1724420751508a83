"""Complex vector fields sampled on a truncated uniform Fourier lattice.

Sites are ``offset + dxi * m`` for integer multi-indices ``|m_i| <= M``; only
sites with ``|xi| <= xi_max`` carry data.  Values are stored densely with
shape ``(2M+1,)*n + (n,)`` and vanish outside the ball.

Binary layout (little-endian float64 throughout): a 4-value header
``n, dxi, xi_max, site_count`` followed, for each ball site in lexicographic
multi-index order, by ``n`` complex components written as (re, im) pairs.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GeometryError, PreconditionError
from .kernels import Kernel, eval_kernel


@dataclass(frozen=True)
class LatticeGeometry:
    dim: int
    dxi: float
    xi_max: float
    offset: tuple = ()

    def __post_init__(self):
        if self.dim < 1:
            raise PreconditionError("lattice dimension must be >= 1")
        if not (self.dxi > 0 and self.xi_max >= self.dxi):
            raise PreconditionError("need 0 < dxi <= xi_max")
        off = tuple(float(v) for v in self.offset) or (0.0,) * self.dim
        if len(off) != self.dim:
            raise PreconditionError("offset must have one entry per dimension")
        object.__setattr__(self, "offset", off)

    @property
    def M(self) -> int:
        return int(math.floor(self.xi_max / self.dxi + 1e-9))

    @property
    def shape(self) -> tuple:
        return (2 * self.M + 1,) * self.dim

    @property
    def shifted(self) -> bool:
        return any(self.offset)

    @cached_property
    def coords(self) -> np.ndarray:
        ax = np.arange(-self.M, self.M + 1) * self.dxi
        grids = np.meshgrid(*([ax] * self.dim), indexing="ij")
        c = np.stack(grids, axis=-1) + np.asarray(self.offset)
        c.setflags(write=False)
        return c

    @cached_property
    def radius(self) -> np.ndarray:
        r = np.linalg.norm(self.coords, axis=-1)
        r.setflags(write=False)
        return r

    @cached_property
    def mask(self) -> np.ndarray:
        m = self.radius <= self.xi_max * (1 + 1e-12)
        m.setflags(write=False)
        return m

    @cached_property
    def site_index(self) -> np.ndarray:
        """Flat (C-order) dense indices of the ball sites, in lexicographic order."""
        idx = np.flatnonzero(self.mask.ravel())
        idx.setflags(write=False)
        return idx

    @property
    def site_count(self) -> int:
        return int(self.site_index.size)

    @cached_property
    def site_coords(self) -> np.ndarray:
        c = self.coords.reshape(-1, self.dim)[self.site_index]
        c.setflags(write=False)
        return c

    @cached_property
    def site_multi_index(self) -> np.ndarray:
        m = np.stack(np.unravel_index(self.site_index, self.shape), axis=-1) - self.M
        m.setflags(write=False)
        return m

    @cached_property
    def lookup(self) -> np.ndarray:
        """Dense array mapping a multi-index (shifted by M) to its site number, or -1."""
        lk = np.full(int(np.prod(self.shape)), -1, dtype=np.int64)
        lk[self.site_index] = np.arange(self.site_count)
        lk = lk.reshape(self.shape)
        lk.setflags(write=False)
        return lk

    @property
    def cell_volume(self) -> float:
        return self.dxi**self.dim

    def origin_site(self) -> int | None:
        if self.shifted:
            return None
        return int(self.lookup[(self.M,) * self.dim])

    def kernel_values(self, kernel: Kernel) -> np.ndarray:
        """h on the dense grid; zero at the origin and outside the ball."""
        h = np.zeros(self.shape)
        pts = self.coords[self.mask]
        with np.errstate(divide="ignore"):
            hv = eval_kernel(kernel, pts)
        hv = np.where(np.isfinite(hv), hv, 0.0)
        h[self.mask] = hv
        return h

    def scaled(self, lam: float) -> "LatticeGeometry":
        return LatticeGeometry(self.dim, self.dxi * lam, self.xi_max * lam,
                               tuple(lam * o for o in self.offset))


def unit_vectors(coords: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(coords, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.where(r > 0, coords / np.where(r > 0, r, 1.0), 0.0)
    return e


def project_field(coords: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Sitewise Leray projection; sites at the origin are sent to zero."""
    e = unit_vectors(coords)
    dot = np.einsum("...i,...i->...", e, values)
    out = values - dot[..., None] * e
    zero = np.linalg.norm(coords, axis=-1) == 0
    out[zero] = 0
    return out


@dataclass
class LatticeField:
    geometry: LatticeGeometry
    values: np.ndarray
    divergence_free: bool = False
    real: bool = False

    def __post_init__(self):
        g = self.geometry
        v = np.asarray(self.values, dtype=complex)
        if v.shape != g.shape + (g.dim,):
            raise GeometryError(f"values shape {v.shape} does not match lattice {g.shape + (g.dim,)}")
        v = np.where(g.mask[..., None], v, 0)
        if not g.shifted:
            v[(g.M,) * g.dim] = 0
        self.values = v

    @classmethod
    def zeros(cls, geometry: LatticeGeometry) -> "LatticeField":
        return cls(geometry, np.zeros(geometry.shape + (geometry.dim,), dtype=complex), True, True)

    @classmethod
    def from_function(cls, geometry: LatticeGeometry, fn, project: bool = False) -> "LatticeField":
        vals = np.zeros(geometry.shape + (geometry.dim,), dtype=complex)
        pts = geometry.coords[geometry.mask]
        vals[geometry.mask] = fn(pts)
        if project:
            vals = project_field(geometry.coords, vals)
        return cls(geometry, vals, divergence_free=project)

    @property
    def dim(self) -> int:
        return self.geometry.dim

    def copy(self) -> "LatticeField":
        return LatticeField(self.geometry, self.values.copy(), self.divergence_free, self.real)

    def with_values(self, values) -> "LatticeField":
        return LatticeField(self.geometry, values, self.divergence_free, self.real)

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)

    def site_values(self) -> np.ndarray:
        return self.values.reshape(-1, self.dim)[self.geometry.site_index]

    def divergence_residual(self) -> float:
        """max over sites of |xi . u(xi)| / (|xi| |u|), 0 for the zero field."""
        e = unit_vectors(self.geometry.coords)
        dot = np.abs(np.einsum("...i,...i->...", e, self.values))
        mag = self.magnitude()
        scale = mag.max()
        return float(dot.max() / scale) if scale > 0 else 0.0

    def reality_residual(self) -> float:
        g = self.geometry
        if g.shifted:
            raise GeometryError("reality pairs need an unshifted lattice")
        flipped = self.values[tuple(slice(None, None, -1) for _ in range(g.dim))]
        diff = np.abs(flipped - np.conj(self.values)).max()
        scale = np.abs(self.values).max()
        return float(diff / scale) if scale > 0 else 0.0

    def project(self) -> "LatticeField":
        return LatticeField(self.geometry, project_field(self.geometry.coords, self.values), True, self.real)

    def scaled(self, lam: float) -> "LatticeField":
        """Lattice version of f(lam x): values lam^-n f^(xi/lam) on spacing lam*dxi."""
        return LatticeField(self.geometry.scaled(lam), self.values * lam ** (-self.dim),
                            self.divergence_free, self.real)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "LatticeField"):
        check_same_geometry(self, other)
        return LatticeField(self.geometry, self.values + other.values,
                            self.divergence_free and other.divergence_free, self.real and other.real)

    def __sub__(self, other: "LatticeField"):
        return self + (-1.0) * other

    # -- binary format ---------------------------------------------------
    def to_bytes(self) -> bytes:
        g = self.geometry
        if g.shifted:
            raise GeometryError("the binary field format stores unshifted lattices only")
        header = struct.pack("<4d", g.dim, g.dxi, g.xi_max, g.site_count)
        body = np.ascontiguousarray(self.site_values().astype("<c16"))
        return header + body.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "LatticeField":
        if len(data) < 32:
            raise GeometryError("field file too short for its header")
        n, dxi, xi_max, count = struct.unpack("<4d", data[:32])
        if n != int(n) or count != int(count):
            raise GeometryError("corrupt field header")
        g = LatticeGeometry(int(n), dxi, xi_max)
        if g.site_count != int(count):
            raise GeometryError(f"header site count {int(count)} does not match lattice ({g.site_count})")
        body = np.frombuffer(data[32:], dtype="<c16")
        if body.size != g.site_count * g.dim:
            raise GeometryError("field body length does not match header")
        vals = np.zeros((int(np.prod(g.shape)), g.dim), dtype=complex)
        vals[g.site_index] = body.reshape(-1, g.dim)
        f = cls(g, vals.reshape(g.shape + (g.dim,)))
        f.divergence_free = f.divergence_residual() < 1e-12
        return f

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "LatticeField":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def check_same_geometry(*fields: LatticeField) -> LatticeGeometry:
    g = fields[0].geometry
    for f in fields[1:]:
        if f.geometry != g:
            raise GeometryError("fields live on different lattices")
    return g


# ---------------------------------------------------------------------------
# data presets

def _unit(v, n):
    v = np.asarray(v, dtype=float).reshape(n)
    return v / np.linalg.norm(v)


def single_mode(geometry: LatticeGeometry, kernel: Kernel, k0, amplitude: float = 0.05,
                direction=None) -> LatticeField:
    """Wave packet on k0 and its nearest lattice neighbours, mirrored to -k0.

    Each packet site carries amplitude * h(xi) * P(xi) e_dir.  A single exact
    Fourier mode has no self-interaction (the product vanishes when both
    factors are parallel to xi), so the neighbours are needed for a nonzero
    nonlinearity.
    """
    n = geometry.dim
    k0 = np.asarray(k0, dtype=float).reshape(n)
    m0 = np.rint((k0 - np.asarray(geometry.offset)) / geometry.dxi).astype(int)
    if direction is None:
        # a generic direction, so that no packet site is orthogonal to all others
        direction = 1.0 / np.arange(1, n + 1) ** 0.5
        if abs(np.dot(_unit(direction, n), _unit(k0, n))) > 0.99:
            direction = np.roll(direction, 1)
    e_dir = _unit(direction, n)
    offsets = [np.zeros(n, dtype=int)]
    for i in range(n):
        for s in (-1, 1):
            d = np.zeros(n, dtype=int)
            d[i] = s
            offsets.append(d)
    vals = np.zeros(geometry.shape + (n,), dtype=complex)
    M = geometry.M
    h = geometry.kernel_values(kernel)
    for sign in (1, -1):
        for d in offsets:
            m = sign * (m0 + d)
            if np.any(np.abs(m) > M):
                continue
            idx = tuple(m + M)
            if not geometry.mask[idx] or h[idx] == 0:
                continue
            vals[idx] = amplitude * h[idx] * e_dir
    vals = project_field(geometry.coords, vals)
    return LatticeField(geometry, vals, divergence_free=True, real=True)


def random_small(geometry: LatticeGeometry, kernel: Kernel, amplitude: float = 0.05,
                 seed: int = 0, real: bool = True) -> LatticeField:
    """Random divergence-free field with sup |u|/h equal to ``amplitude``."""
    n = geometry.dim
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(geometry.shape + (n,)) + 1j * rng.standard_normal(geometry.shape + (n,))
    h = geometry.kernel_values(kernel)
    vals = project_field(geometry.coords, z * h[..., None])
    if real and not geometry.shifted:
        flipped = np.conj(vals[tuple(slice(None, None, -1) for _ in range(n))])
        vals = 0.5 * (vals + flipped)
    f = LatticeField(geometry, vals, divergence_free=True, real=real)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(h > 0, f.magnitude() / np.where(h > 0, h, 1.0), 0.0)
    top = ratio.max()
    return f * (amplitude / top) if top > 0 else f


def h_shaped(geometry: LatticeGeometry, kernel: Kernel, amplitude: float = 0.05,
             direction=None) -> LatticeField:
    """amplitude * h(xi) * P(xi) e_dir at every site."""
    n = geometry.dim
    e_dir = _unit(direction if direction is not None else np.eye(n)[-1], n)
    h = geometry.kernel_values(kernel)
    vals = project_field(geometry.coords, amplitude * h[..., None] * e_dir)
    return LatticeField(geometry, vals, divergence_free=True, real=True)


PRESETS = {"single-mode": single_mode, "random-small": random_small, "h-shaped": h_shaped}
