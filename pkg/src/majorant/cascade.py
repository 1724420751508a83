"""Stochastic cascade representation of Fourier-space Navier-Stokes solutions.

With chi = u/h, a particle of type xi lives an exponential time of rate
lambda_xi = nu |xi|^2.  If it outlives the horizon it reports chi0(xi);
otherwise a fair coin decides between reporting the rescaled forcing
phi(xi, s) and splitting into two particles (Xi1, Xi2 = xi - Xi1) drawn from

    p_xi(eta) = h(eta) h(xi - eta) / h*h(xi),

whose values combine as m(xi) X1 (x)_xi X2 with

    m(xi)      = 2 (2 pi)^{-n/2} h*h(xi) / (nu |xi| h(xi)),
    phi(xi, s) = 2 g(xi, s) / (nu |xi|^2 h(xi)).

Then u(xi, t) = h(xi) E X(xi, t).  Trees are grown generation by generation
for a whole block of replicates at once.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from joblib import Parallel, delayed
from scipy import fft as sfft
from scipy import integrate

from .errors import DomainError, PreconditionError, ResourceBudgetError
from .kernels import Kernel, eval_kernel, self_convolve, sphere_area
from .lattice import LatticeField
from .rng import block_sizes, check_seed, substream

DEFAULT_DEPTH_CAP = 40
NODE_BUDGET = 50_000_000
BLOCK_SIZE = 4096
TRUNCATION_WARN = 0.01
# snapping grid for continuous types: multiples of 2^-32 inside |coord| < 2^20
SNAP = 2.0**32
COORD_LIMIT = 2.0**20
# bound on p/q for the two-centre proposal used with the h = c|xi|^-2 kernel in R^3
TWO_CENTRE_BOUND = 20 / math.pi


# ---------------------------------------------------------------------------
# algebra

def leray_project(xi, z) -> np.ndarray:
    """z - (e.z) e with e = xi/|xi|; works on single vectors or stacks."""
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi, axis=-1, keepdims=True)
    if np.any(r == 0):
        raise DomainError("Leray projection is undefined at xi = 0")
    e = xi / r
    z = np.asarray(z)
    return z - np.sum(e * z, axis=-1, keepdims=True) * e


def otimes(z, w, xi) -> np.ndarray:
    """z (x)_xi w = -i (z . e_xi) P(xi) w, without complex conjugation."""
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi, axis=-1, keepdims=True)
    if np.any(r == 0):
        raise DomainError("the product is undefined at xi = 0")
    e = xi / r
    z = np.asarray(z)
    return -1j * np.sum(z * e, axis=-1, keepdims=True) * leray_project(xi, w)


def sample_lifetime(xi, nu: float, rng: np.random.Generator, size=None):
    """Exponential lifetime with rate nu |xi|^2."""
    r2 = float(np.sum(np.asarray(xi, dtype=float) ** 2))
    if r2 == 0:
        raise DomainError("lifetime rate vanishes at xi = 0")
    if not nu > 0:
        raise PreconditionError("viscosity must be positive")
    return rng.standard_exponential(size) / (nu * r2)


def multiplier_m(kernel: Kernel, xi, nu: float) -> float:
    """2 (2 pi)^{-n/2} h*h(xi) / (nu |xi| h(xi))."""
    xi = np.asarray(xi, dtype=float).reshape(kernel.dim)
    r = float(np.linalg.norm(xi))
    if r == 0:
        raise DomainError("m is undefined at xi = 0")
    hh = float(self_convolve(kernel, xi[None]).values[0])
    if not math.isfinite(hh):
        raise DomainError("h*h diverges at xi; the kernel has no splitting law there")
    return 2 * (2 * math.pi) ** (-kernel.dim / 2) * hh / (nu * r * float(eval_kernel(kernel, xi)))


# ---------------------------------------------------------------------------
# splitting laws on R^n

def _is_inverse_square(kernel: Kernel) -> bool:
    return kernel.dim == 3 and kernel.form == "power_law" and kernel.params["a"] == 2.0


def _snap(x: np.ndarray) -> np.ndarray:
    return np.rint(x * SNAP) / SNAP


def _orthonormal_complement_dirs(e: np.ndarray, rng) -> np.ndarray:
    """Uniform unit vectors orthogonal to each row of e."""
    w = rng.standard_normal(e.shape)
    w -= np.sum(w * e, axis=1, keepdims=True) * e
    nrm = np.linalg.norm(w, axis=1, keepdims=True)
    return w / np.where(nrm > 0, nrm, 1.0)


class SplittingLaw:
    """Splitting density p_xi on R^n with a vectorized sampler.

    ``strategy`` is "two_centre_rejection" (two-centre heavy-tailed proposal, exact)
    for c|xi|^-2 in R^3, otherwise "radial_table" (inverse transform on a
    radial/angular table built over the half-domain |eta| <= |xi - eta|).
    """

    def __init__(self, kernel: Kernel, strategy: str | None = None, table_cells: int = 224,
                 angle_cells: int = 64, acceptance_floor: float = 1e-3):
        if not kernel.is_radial:
            raise PreconditionError("splitting laws are implemented for radial kernels")
        if kernel.dim < 2:
            raise PreconditionError("cascades are formulated for n >= 2")
        self.kernel = kernel
        self.strategy = strategy or ("two_centre_rejection" if _is_inverse_square(kernel) else "radial_table")
        if self.strategy == "two_centre_rejection" and not _is_inverse_square(kernel):
            raise PreconditionError("the rejection sampler needs h = c|xi|^-2 in R^3")
        self.table_cells = table_cells
        self.angle_cells = angle_cells
        self.acceptance_floor = acceptance_floor
        self.proposals = 0
        self.accepted = 0
        self._tables: OrderedDict = OrderedDict()

    # -- density ---------------------------------------------------------
    def normalizer(self, xi) -> float:
        return float(_normalizer_cached(self.kernel, float(np.linalg.norm(xi))))

    def density(self, eta, xi) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return (eval_kernel(self.kernel, eta.reshape(-1, self.kernel.dim))
                * eval_kernel(self.kernel, (xi - eta).reshape(-1, self.kernel.dim))
                / self.normalizer(xi))

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 1.0

    # -- sampling --------------------------------------------------------
    def sample(self, parents: np.ndarray, rng: np.random.Generator):
        """Children (Xi1, Xi2) for each parent row; Xi1 + Xi2 equals the parent exactly."""
        parents = np.atleast_2d(np.asarray(parents, dtype=float))
        if np.any(np.all(parents == 0, axis=1)):
            raise DomainError("cannot split a particle of type 0")
        out = np.empty_like(parents)
        pending = np.arange(len(parents))
        for _ in range(10000):
            if pending.size == 0:
                break
            if self.strategy == "two_centre_rejection":
                eta = self._two_centre(parents[pending], rng)
            else:
                eta = self._table(parents[pending], rng)
            eta = _snap(eta)
            ok = (np.all(np.abs(eta) < COORD_LIMIT, axis=1) & np.any(eta != 0, axis=1)
                  & np.any(eta != parents[pending], axis=1))
            out[pending[ok]] = eta[ok]
            pending = pending[~ok]
        else:
            raise ResourceBudgetError("splitting sampler failed to produce admissible children")
        return out, parents - out

    def _two_centre(self, xi: np.ndarray, rng) -> np.ndarray:
        k = len(xi)
        s = np.linalg.norm(xi, axis=1)
        res = np.empty_like(xi)
        pending = np.arange(k)
        while pending.size:
            x, ss = xi[pending], s[pending]
            m = pending.size
            second = rng.random(m) < 0.5
            r = ss * np.tan(0.5 * np.pi * rng.random(m))
            d = rng.standard_normal((m, 3))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            eta = r[:, None] * d + np.where(second[:, None], x, 0.0)
            a = np.linalg.norm(eta, axis=1)
            b = np.linalg.norm(x - eta, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                p = ss / (math.pi**3 * a * a * b * b)
                q0 = lambda t: ss / (2 * math.pi**2 * t * t * (ss * ss + t * t))
                q = 0.5 * q0(a) + 0.5 * q0(b)
                acc = rng.random(m) * TWO_CENTRE_BOUND * q <= p
            acc &= np.isfinite(p)
            self.proposals += m
            self.accepted += int(acc.sum())
            res[pending[acc]] = eta[acc]
            pending = pending[~acc]
            if self.proposals > 10000 and self.acceptance_rate < self.acceptance_floor:
                raise ResourceBudgetError(
                    f"acceptance rate {self.acceptance_rate:.2e} below floor; refine the proposal")
        return res

    def _get_table(self, s: float):
        key = 1.0 if self.kernel.form == "power_law" else s
        if key in self._tables:
            self._tables.move_to_end(key)
            return self._tables[key]
        tab = _build_table(self.kernel, key, self.table_cells, self.angle_cells)
        self._tables[key] = tab
        if len(self._tables) > 256:
            self._tables.popitem(last=False)
        return tab

    def _table(self, xi: np.ndarray, rng) -> np.ndarray:
        s = np.linalg.norm(xi, axis=1)
        e = xi / s[:, None]
        res = np.empty_like(xi)
        if self.kernel.form == "power_law":
            groups = [(np.arange(len(xi)), 1.0)]
        else:
            uniq, inv = np.unique(s, return_inverse=True)
            groups = [(np.flatnonzero(inv == i), u) for i, u in enumerate(uniq)]
        for idx, key in groups:
            u_edges, cdf_u, phi_edges, cdf_phi = self._get_table(key)
            m = idx.size
            cell = np.searchsorted(cdf_u, rng.random(m) * cdf_u[-1], side="right")
            cell = np.minimum(cell, len(cdf_u) - 1)
            u = u_edges[cell] + rng.random(m) * (u_edges[cell + 1] - u_edges[cell])
            row = cdf_phi[cell]
            pc = np.array([np.searchsorted(row[i], v * row[i, -1], side="right")
                           for i, v in enumerate(rng.random(m))])
            pc = np.minimum(pc, row.shape[1] - 1)
            ph = phi_edges[cell, pc] + rng.random(m) * (phi_edges[cell, pc + 1] - phi_edges[cell, pc])
            r = np.exp(u) * (s[idx] if self.kernel.form == "power_law" else 1.0)
            ee = e[idx]
            w = _orthonormal_complement_dirs(ee, rng)
            eta = r[:, None] * (np.cos(ph)[:, None] * ee + np.sin(ph)[:, None] * w)
            swap = rng.random(m) < 0.5
            eta = np.where(swap[:, None], xi[idx] - eta, eta)
            res[idx] = eta
        return res


@lru_cache(maxsize=4096)
def _normalizer_cached(kernel: Kernel, s: float) -> float:
    pt = np.zeros((1, kernel.dim))
    pt[0, 0] = s
    return float(self_convolve(kernel, pt).values[0])


def _build_table(kernel: Kernel, s: float, cells: int, angle_cells: int):
    """Cell masses of p_s over the half-domain |eta| <= |xi - eta| in (log r, phi)."""
    n = kernel.dim
    ls = math.log(s)
    u_edges = np.linspace(ls - 14, ls + 14, cells + 1)
    xg, wg = np.polynomial.legendre.leggauss(4)
    u_mid = 0.5 * (u_edges[1:] + u_edges[:-1])
    r = np.exp(u_mid)
    phimin = np.arccos(np.minimum(1.0, s / (2 * r)))
    t = np.linspace(0, 1, angle_cells + 1)
    phi_edges = phimin[:, None] + (np.pi - phimin)[:, None] * t[None]
    masses = np.zeros((cells, angle_cells))
    du = u_edges[1] - u_edges[0]
    for a, wa in zip(xg, wg):
        uu = u_mid + 0.5 * du * a
        rr = np.exp(uu)
        for b, wb in zip(xg, wg):
            pm = 0.5 * (phi_edges[:, 1:] + phi_edges[:, :-1])
            dp = phi_edges[:, 1:] - phi_edges[:, :-1]
            ph = pm + 0.5 * dp * b
            bb = np.sqrt(np.maximum(s * s + rr[:, None] ** 2 - 2 * s * rr[:, None] * np.cos(ph), 0))
            f = (rr[:, None] ** n * kernel.profile(rr)[:, None] * kernel.profile(bb)
                 * np.sin(ph) ** (n - 2))
            masses += 0.25 * wa * wb * du * dp * f
    masses = np.where(np.isfinite(masses), masses, 0.0)
    cdf_phi = np.cumsum(masses, axis=1)
    cdf_phi = np.concatenate([np.zeros((cells, 1)), cdf_phi], axis=1)[:, 1:]
    cdf_u = np.cumsum(masses.sum(axis=1))
    return u_edges, cdf_u, phi_edges, np.maximum(cdf_phi, 1e-300)


def splitting_normalization(kernel: Kernel, xi, R_factor: float = 1e3) -> dict:
    """Integral of p_xi over |eta| < R (R = R_factor |xi|) by nested adaptive quadrature,
    plus the far-field tail computed from h(eta)^2."""
    xi = np.asarray(xi, dtype=float).reshape(kernel.dim)
    n = kernel.dim
    s = float(np.linalg.norm(xi))
    R = R_factor * s
    Z = _normalizer_cached(kernel, s)
    c = sphere_area(n - 1)

    def inner(r):
        def g(phi):
            b = math.sqrt(max(s * s + r * r - 2 * s * r * math.cos(phi), 0.0))
            if b == 0:
                return 0.0
            return float(kernel.profile(b)) * math.sin(phi) ** (n - 2)
        val, _ = integrate.quad(g, 0.0, math.pi, limit=200)
        return c * r ** (n - 1) * float(kernel.profile(r)) * val

    body = 0.0
    for lo, hi in [(0, 0.5 * s), (0.5 * s, s), (s, 2 * s), (2 * s, R)]:
        v, _ = integrate.quad(inner, lo, hi, limit=400)
        body += v
    tail, _ = integrate.quad(lambda r: sphere_area(n) * r ** (n - 1) * float(kernel.profile(r)) ** 2,
                             R, np.inf, limit=200)
    return {"truncated": body / Z, "tail": tail / Z, "total": (body + tail) / Z, "radius": R}


# ---------------------------------------------------------------------------
# problems: the data a cascade needs, for continuous or lattice types

class ContinuousProblem:
    """Cascade on R^n types with chi0(xi) and phi(xi, s) given as vectorized callables."""

    lattice = False

    def __init__(self, kernel: Kernel, nu: float, chi0, phi=None, branching: bool = True,
                 law: SplittingLaw | None = None):
        if not nu > 0:
            raise PreconditionError("viscosity must be positive")
        self.kernel, self.nu = kernel, nu
        self._chi0, self._phi = chi0, phi
        self.branching = branching
        self.law = law or (SplittingLaw(kernel) if branching else None)
        self._m_const = None
        self._m_table = None
        if branching:
            self._setup_m()

    def _setup_m(self):
        k = self.kernel
        e = np.zeros(k.dim)
        e[0] = 1.0
        m1 = multiplier_m(k, e, self.nu)
        if k.form == "power_law":
            self._m_const = (m1, k.dim - k.params["a"] - 1)
        else:
            r = np.logspace(-4, 4, 161)
            pts = r[:, None] * e
            hh = self_convolve(k, pts).values
            mv = 2 * (2 * math.pi) ** (-k.dim / 2) * hh / (self.nu * r * k.profile(r))
            self._m_table = (np.log(r), np.log(mv))

    def root(self, xi):
        x = _snap(np.asarray(xi, dtype=float).reshape(1, -1))
        if not np.any(x):
            raise DomainError("xi must be nonzero")
        return x

    def repeat(self, root, k):
        return np.repeat(root, k, axis=0)

    def coords(self, types):
        return types

    def rate(self, types):
        return self.nu * np.sum(types**2, axis=1)

    def m(self, types):
        r = np.linalg.norm(types, axis=1)
        if self._m_const is not None:
            m1, p = self._m_const
            return m1 * r**p
        lr, lm = self._m_table
        return np.exp(np.interp(np.log(r), lr, lm))

    def chi0(self, types):
        return np.broadcast_to(np.asarray(self._chi0(types), dtype=complex),
                               types.shape).copy()

    def phi(self, types, s):
        if self._phi is None:
            return np.zeros(types.shape, dtype=complex)
        return np.broadcast_to(np.asarray(self._phi(types, s), dtype=complex), types.shape).copy()

    def split(self, types, rng):
        return self.law.sample(types, rng)

    def h(self, xi) -> float:
        return float(eval_kernel(self.kernel, np.asarray(xi, dtype=float).reshape(self.kernel.dim)))


class LatticeProblem:
    """Cascade whose types are sites of a truncated lattice.

    The splitting law is the lattice analogue h(eta) h(xi - eta) dxi^n over
    pairs of nonzero ball sites, and m uses the lattice sum for h*h, so the
    depth-k expectation reproduces the k-th lattice Picard iterate.
    """

    lattice = True

    def __init__(self, kernel: Kernel, nu: float, u0: LatticeField, forcing: LatticeField | None = None,
                 branching: bool = True):
        g = u0.geometry
        if g.shifted:
            raise PreconditionError("lattice cascades need an unshifted lattice")
        self.kernel, self.nu, self.geometry = kernel, nu, g
        self.branching = branching
        hd = g.kernel_values(kernel)
        self.h_sites = hd.reshape(-1)[g.site_index]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(self.h_sites > 0, 1.0 / np.where(self.h_sites > 0, self.h_sites, 1.0), 0.0)
        self.chi0_sites = u0.site_values() * inv[:, None]
        r2 = np.sum(g.site_coords**2, axis=1)
        self.rate_sites = nu * r2
        if forcing is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                f = np.where(r2 > 0, 2 * inv / (nu * np.where(r2 > 0, r2, 1.0)), 0.0)
            self.phi_sites = forcing.site_values() * f[:, None]
        else:
            self.phi_sites = None
        # lattice h*h on the ball by zero-padded FFT
        shape = (sfft.next_fast_len(2 * (2 * g.M + 1) - 1),) * g.dim
        F = sfft.fftn(hd, shape)
        sl = tuple(slice(g.M, 3 * g.M + 1) for _ in range(g.dim))
        hh = np.real(sfft.ifftn(F * F))[sl] * g.cell_volume
        self.hh_sites = np.maximum(hh.reshape(-1)[g.site_index], 0.0)
        r = np.sqrt(r2)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.m_sites = np.where(self.h_sites > 0, 2 * (2 * math.pi) ** (-g.dim / 2) * self.hh_sites
                                    / (nu * np.where(r > 0, r, 1.0) * np.where(self.h_sites > 0, self.h_sites, 1.0)), 0.0)
        self._cdf: OrderedDict = OrderedDict()

    def root(self, xi):
        from .picard import site_of

        s = site_of(self.geometry, xi)
        if self.h_sites[s] == 0:
            raise DomainError("xi must be a nonzero lattice site")
        return np.array([s])

    def repeat(self, root, k):
        return np.repeat(root, k)

    def coords(self, types):
        return self.geometry.site_coords[types]

    def rate(self, types):
        return self.rate_sites[types]

    def m(self, types):
        return self.m_sites[types]

    def chi0(self, types):
        return self.chi0_sites[types].copy()

    def phi(self, types, s):
        if self.phi_sites is None:
            return np.zeros((len(types), self.geometry.dim), dtype=complex)
        return self.phi_sites[types].copy()

    def split_table(self, site: int):
        if site in self._cdf:
            self._cdf.move_to_end(site)
            return self._cdf[site]
        g = self.geometry
        diff = g.site_multi_index[site] - g.site_multi_index
        ok = np.all(np.abs(diff) <= g.M, axis=1)
        partner = np.full(g.site_count, -1)
        partner[ok] = g.lookup[tuple((diff[ok] + g.M).T)]
        valid = partner >= 0
        w = np.where(valid, self.h_sites * self.h_sites[np.where(valid, partner, 0)], 0.0)
        cdf = np.cumsum(w)
        if cdf[-1] <= 0:
            raise DomainError("lattice site has no admissible splitting pairs")
        entry = (cdf, partner)
        self._cdf[site] = entry
        if len(self._cdf) > 4096:
            self._cdf.popitem(last=False)
        return entry

    def split(self, types, rng):
        u = rng.random(len(types))
        c1 = np.empty_like(types)
        c2 = np.empty_like(types)
        for site in np.unique(types):
            idx = np.flatnonzero(types == site)
            cdf, partner = self.split_table(int(site))
            j = np.searchsorted(cdf, u[idx] * cdf[-1], side="right")
            j = np.minimum(j, len(cdf) - 1)
            c1[idx] = j
            c2[idx] = partner[j]
        return c1, c2

    def h(self, xi) -> float:
        from .picard import site_of

        return float(self.h_sites[site_of(self.geometry, xi)])


# ---------------------------------------------------------------------------
# tree growth

@dataclass
class BlockResult:
    samples: np.ndarray  # (k, n) complex
    truncated: np.ndarray  # (k,) bool
    nodes: int
    max_depth: int


def simulate_block(problem, root, t: float, count: int, rng: np.random.Generator,
                   depth_cap: int = DEFAULT_DEPTH_CAP, record: list | None = None,
                   node_budget: int = None) -> BlockResult:
    """Grow ``count`` independent trees for the root type and evaluate X at time t.

    Per generation the draws are: lifetimes for every node, coins for the
    nodes that die before the horizon, then children for the nodes that split.
    Nodes at generation ``depth_cap`` that would split return 0.
    """
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    node_budget = NODE_BUDGET if node_budget is None else node_budget
    n = problem.coords(problem.repeat(root, 1)).shape[1]
    types = problem.repeat(root, count)
    rem = np.full(count, float(t))
    owner = np.arange(count)
    gens = []
    truncated = np.zeros(count, dtype=bool)
    nodes = 0
    depth = 0
    while True:
        k = len(rem)
        nodes += k
        if nodes > node_budget:
            raise ResourceBudgetError(f"cascade exceeded the node budget of {node_budget}")
        life = rng.standard_exponential(k) / problem.rate(types)
        leaf = life > rem
        dying = np.flatnonzero(~leaf)
        heads = np.zeros(k, dtype=bool)
        heads[dying] = rng.random(dying.size) < 0.5
        vals = np.zeros((k, n), dtype=complex)
        li = np.flatnonzero(leaf)
        if li.size:
            vals[li] = problem.chi0(types[li])
        tails = np.flatnonzero(~leaf & ~heads)
        if tails.size:
            vals[tails] = problem.phi(types[tails], (rem - life)[tails])
        split_idx = np.flatnonzero(heads)
        if record is not None:
            record.append({"types": types, "kind": np.where(heads, 1, 0), "owner": owner,
                           "life": life})
        gen = {"types": types, "vals": vals, "split": np.empty(0, dtype=int)}
        gens.append(gen)
        if not problem.branching or split_idx.size == 0:
            break
        if depth >= depth_cap:
            truncated[owner[split_idx]] = True
            break
        c1, c2 = problem.split(types[split_idx], rng)
        gen["split"] = split_idx
        if problem.lattice:
            new_types = np.empty(2 * split_idx.size, dtype=types.dtype)
            new_types[0::2], new_types[1::2] = c1, c2
        else:
            new_types = np.empty((2 * split_idx.size, n))
            new_types[0::2], new_types[1::2] = c1, c2
        new_rem = np.repeat((rem - life)[split_idx], 2)
        types, rem, owner = new_types, new_rem, np.repeat(owner[split_idx], 2)
        depth += 1
    # evaluate bottom-up
    for g in range(len(gens) - 2, -1, -1):
        gen, child = gens[g], gens[g + 1]
        s = gen["split"]
        if s.size == 0:
            continue
        x1, x2 = child["vals"][0::2], child["vals"][1::2]
        pt = problem.coords(gen["types"][s])
        gen["vals"][s] = problem.m(gen["types"][s])[:, None] * otimes(x1, x2, pt)
    return BlockResult(gens[0]["vals"], truncated, nodes, len(gens) - 1)


def grow_and_evaluate(problem, xi, t: float, rng: np.random.Generator,
                      depth_cap: int = DEFAULT_DEPTH_CAP) -> np.ndarray:
    """One realization of X(xi, t)."""
    return simulate_block(problem, problem.root(xi), t, 1, rng, depth_cap).samples[0]


@dataclass
class CascadeTree:
    """Generations of one realized tree: types, node kinds (0 input, 1 operational), owners."""

    generations: list

    def kinds(self):
        return [g["kind"] for g in self.generations]


def realize_tree(problem, xi, t: float, rng, depth_cap: int = DEFAULT_DEPTH_CAP) -> CascadeTree:
    rec: list = []
    simulate_block(problem, problem.root(xi), t, 1, rng, depth_cap, record=rec)
    return CascadeTree(rec)


@dataclass
class CascadeEstimate:
    xi: np.ndarray
    t: float
    N: int
    mean: np.ndarray
    stderr: np.ndarray
    truncation_fraction: float
    seed: int
    workers: int
    heavy_tail: float
    unreliable: bool
    chi_mean: np.ndarray = field(repr=False, default=None)

    def row(self) -> dict:
        out = {"t": self.t, "N": self.N, "seed": self.seed,
               "truncation_fraction": self.truncation_fraction, "heavy_tail": self.heavy_tail,
               "unreliable": self.unreliable}
        for i, v in enumerate(self.xi):
            out[f"xi_{i}"] = float(v)
        for i, (m, s) in enumerate(zip(self.mean, self.stderr)):
            out[f"re_{i}"] = float(m.real)
            out[f"im_{i}"] = float(m.imag)
            out[f"se_{i}"] = float(s)
        return out


def _run_block(problem, root, t, count, seed, index, depth_cap, node_budget):
    return simulate_block(problem, root, t, count, substream(seed, index), depth_cap,
                          node_budget=node_budget)


def sample_values(problem, xi, t: float, N: int, seed: int, depth_cap: int = DEFAULT_DEPTH_CAP,
                  workers: int = 1, block: int = BLOCK_SIZE, node_budget: int = NODE_BUDGET):
    """All N samples of X(xi, t) in replicate order, and the truncation flags."""
    if N < 1:
        raise PreconditionError("N must be >= 1")
    seed = check_seed(seed)
    root = problem.root(xi)
    sizes = block_sizes(N, block)
    jobs = [delayed(_run_block)(problem, root, t, c, seed, i, depth_cap, node_budget)
            for i, c in enumerate(sizes)]
    if workers == 1:
        results = [j[0](*j[1], **j[2]) for j in jobs]
    else:
        results = Parallel(n_jobs=workers, backend="loky")(jobs)
    samples = np.concatenate([r.samples for r in results])
    trunc = np.concatenate([r.truncated for r in results])
    return samples, trunc


def estimate_solution(problem, xi, t: float, N: int, seed: int, depth_cap: int = DEFAULT_DEPTH_CAP,
                      workers: int = 1, truncation_threshold: float = TRUNCATION_WARN,
                      node_budget: int = None) -> CascadeEstimate:
    """h(xi) times the sample mean of X(xi, t), with componentwise standard errors.

    The result depends only on (seed, N, depth_cap), not on ``workers``.
    """
    samples, trunc = sample_values(problem, xi, t, N, seed, depth_cap, workers,
                                   node_budget=node_budget or NODE_BUDGET)
    # reduce along a contiguous axis so numpy uses pairwise summation
    cols = np.ascontiguousarray(samples.T)
    mean = cols.mean(axis=1)
    if N > 1:
        dev = np.abs(cols - mean[:, None]) ** 2
        se = np.sqrt(dev.sum(axis=1) / (N - 1) / N)
    else:
        se = np.zeros(len(mean))
    h = problem.h(xi)
    frac = float(trunc.mean())
    heavy = float(np.max(np.abs(samples)) / math.sqrt(N)) if N else 0.0
    return CascadeEstimate(np.asarray(xi, dtype=float).reshape(-1), float(t), N, h * mean, h * se,
                           frac, seed, workers, heavy, frac > truncation_threshold, mean)
