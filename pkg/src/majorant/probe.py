"""Numerical witnesses for the exponent bound theta < n/2.

The chain below follows the level radius

    rho(x) = sup{r > 0 : |xi|^theta h(xi) > x on the punctured ball B*(r)}

through the recursion x_k = x_{k-1}^2 lambda(x_{k-1}), and turns the
resulting lower bounds on ``h*h`` into certificates that a candidate cannot
satisfy the convolution inequality.  Certificates are one-sided: only
violations are certified, "inconclusive" asserts nothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate

from .errors import PreconditionError
from .kernels import Kernel, eval_kernel, log_eval_kernel, self_convolve, sphere_area

RHO_R_MIN = 1e-9
RHO_R_MAX = 1e3
RHO_GRID = 4001
RHO_BISECT = 60


def _log(x) -> float:
    if isinstance(x, Fraction):
        return math.log(x.numerator) - math.log(x.denominator)
    if isinstance(x, int):
        return math.log(x)
    return math.log(float(x))


def _directions(n: int, count: int, seed: int = 7) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((count, n))
    d[0] = np.eye(n)[0]
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _log_level(kernel: Kernel, theta: float, r: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """log of min over directions of |xi|^theta h(xi) at each radius."""
    pts = r[:, None, None] * dirs[None]
    lh = log_eval_kernel(kernel, pts)
    return theta * np.log(r) + lh.min(axis=1)


@dataclass
class LevelProfile:
    """Running infimum of log(|xi|^theta h) outward from the origin on a log grid."""

    kernel: Kernel
    theta: float
    radii: np.ndarray
    running_min: np.ndarray
    dirs: np.ndarray

    @classmethod
    def build(cls, kernel: Kernel, theta: float, n_grid: int = RHO_GRID,
              r_min: float = RHO_R_MIN, r_max: float = RHO_R_MAX, n_directions: int = 32):
        dirs = _directions(kernel.dim, 1 if kernel.is_radial else n_directions)
        r = np.logspace(math.log10(r_min), math.log10(r_max), n_grid)
        return cls(kernel, theta, r, np.minimum.accumulate(_log_level(kernel, theta, r, dirs)), dirs)

    def rho(self, x) -> float:
        lx = _log(x)
        m = self.running_min
        if not m[0] > lx:
            return 0.0
        if m[-1] > lx:
            return math.inf
        j = int(np.argmax(m <= lx))  # first grid radius where the condition fails
        lo, hi = math.log(self.radii[j - 1]), math.log(self.radii[j])
        base = m[j - 1]
        for _ in range(RHO_BISECT):
            mid = 0.5 * (lo + hi)
            val = min(base, float(_log_level(self.kernel, self.theta, np.array([math.exp(mid)]),
                                             self.dirs)[0]))
            if val > lx:
                lo = mid
            else:
                hi = mid
        return math.exp(lo)


def rho(candidate: Kernel, theta: float, x, **grid) -> float:
    """Largest radius on whose punctured ball |xi|^theta h(xi) exceeds x.

    Returns 0 when no such radius exists within the probed range and inf
    when the condition holds on the whole probed range.
    """
    if not x > 0:
        raise PreconditionError("rho needs x > 0")
    return LevelProfile.build(candidate, theta, **grid).rho(x)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainConstants:
    C: float
    C_prime: float
    ball_integral: float
    ball_integral_ratio: float


def chain_C(n: int, theta: float) -> float:
    """pi^(n/2) / ((n - theta) 2^(n-theta) Gamma(n/2)), defined for theta < n."""
    if not theta < n:
        raise PreconditionError("the chain constant needs theta < n")
    return math.pi ** (n / 2) / ((n - theta) * 2 ** (n - theta) * math.gamma(n / 2))


def ball_integral(n: int, theta: float, rho_: float = 1.0) -> float:
    """Integral of |eta|^-theta over |eta| < rho/2, divided by rho^theta, by quadrature."""
    val, _ = integrate.quad(lambda r: r ** (n - 1 - theta), 0.0, rho_ / 2, limit=200)
    return sphere_area(n) * val / rho_**theta


def chain_constants(n: int, theta: float, rho_: float = 1.0) -> ChainConstants:
    """C_{n,theta}, C'_{n,theta} = 2^(n-theta) C and the directly integrated ball integral.

    ``ball_integral_ratio`` compares the direct integral to C rho^(n-2 theta);
    it comes out as 2, so certificates built on C stay on the safe side.
    """
    if not (n / 2 <= theta < n):
        raise PreconditionError(f"chain constants need n/2 <= theta < n, got n={n}, theta={theta}")
    C = chain_C(n, theta)
    direct = ball_integral(n, theta, rho_)
    return ChainConstants(C, 2 ** (n - theta) * C, direct, direct / (C * rho_ ** (n - 2 * theta)))


@dataclass
class ChainEntry:
    k: int
    x: Fraction
    rho: float
    lam: float
    lower_bound: float
    rho_bound: float
    bound_holds: bool
    double_exp_holds: bool


@dataclass
class ChainingTrace:
    theta: float
    dim: int
    entries: list = field(default_factory=list)
    verdict: str = "inconclusive"
    note: str = ""

    def rows(self):
        return [(e.k, float(e.x) if e.x < 2**1000 else math.inf, e.rho, e.lam, e.lower_bound)
                for e in self.entries]

    @property
    def x_increasing(self) -> bool:
        xs = [e.x for e in self.entries]
        return all(b > a for a, b in zip(xs, xs[1:]))

    @property
    def rho_nonincreasing(self) -> bool:
        rs = [e.rho for e in self.entries]
        return all(b <= a for a, b in zip(rs, rs[1:]))

    def to_dict(self) -> dict:
        return {"theta": self.theta, "dim": self.dim, "verdict": self.verdict, "note": self.note,
                "double_exponential_bound": all(e.double_exp_holds for e in self.entries),
                "rho_bound": all(e.bound_holds for e in self.entries),
                "steps": len(self.entries) - 1}


def _float_to_fraction_down(v: float) -> Fraction:
    """A rational not exceeding the real number the float v approximates."""
    return Fraction(math.nextafter(v, 0.0)) if v > 0 else Fraction(0)


def _lower_bound(C_prime: float, x: Fraction, r: float, n: int, theta: float) -> float:
    if r == 0:
        return 0.0
    lg = math.log(C_prime) + _log(x) + (n - theta) * math.log(r)
    return math.exp(lg) if lg < 700 else math.inf


def initial_x0(n: int, theta: float, profile: LevelProfile) -> Fraction:
    C = chain_C(n, theta)
    if theta == n / 2:
        return max(Fraction(2), 2 / _float_to_fraction_down(C))
    x = Fraction(2)
    for _ in range(2000):
        r = profile.rho(x)
        if r == 0:
            break
        if math.isinf(r) or C * r ** (n - 2 * theta) >= 2:
            return x
        x *= 2
    raise PreconditionError("no x0 >= 2 with lambda(x0) >= 2 within the probed range")


def chain_sequence(n: int, theta: float, candidate: Kernel, K: int, x0=None,
                   profile: LevelProfile | None = None) -> ChainingTrace:
    """Iterate x_k = x_{k-1}^2 lambda(x_{k-1}) in exact rational arithmetic.

    lambda(x) = C rho(x)^(n - 2 theta), rounded down to a rational so that the
    check x_k >= 2^(2^k) is exact.  Each entry also records the measured
    rho(x_k) against 2^-k rho(x0).
    """
    if K < 1:
        raise PreconditionError("K must be >= 1")
    consts = chain_constants(n, theta)
    profile = profile or LevelProfile.build(candidate, theta)
    x = Fraction(x0) if x0 is not None else initial_x0(n, theta, profile)
    r0 = profile.rho(x)
    if r0 == 0:
        raise PreconditionError("premise fails: candidate does not have liminf = inf at origin "
                                f"(rho(x0) = 0 at x0 = {float(x):g})")
    if math.isinf(r0):
        raise PreconditionError("premise fails: rho(x0) is infinite on the probed domain")
    trace = ChainingTrace(theta, n)
    for k in range(K + 1):
        r = r0 if k == 0 else profile.rho(x)
        lam_f = consts.C if theta == n / 2 else (consts.C * r ** (n - 2 * theta) if r > 0 else math.inf)
        rb = r0 / 2**k
        trace.entries.append(ChainEntry(
            k, x, r, lam_f, _lower_bound(consts.C_prime, x, r, n, theta), rb,
            bool(r >= rb * (1 - 1e-12)), x >= 2 ** (2**k)))
        if k == K:
            break
        if not math.isfinite(lam_f):
            trace.note = f"rho vanished at step {k}"
            break
        lam = _float_to_fraction_down(lam_f)
        # cap denominators so the exact numbers stay manageable
        lam = _round_down(lam, 64)
        x = x * x * lam
    return trace


def _round_down(q: Fraction, bits: int) -> Fraction:
    den = 1 << bits
    return Fraction((q.numerator * den) // q.denominator, den)


# ---------------------------------------------------------------------------

@dataclass
class Certificate:
    verdict: str
    route: str = ""
    k: int | None = None
    delta: float | None = None
    epsilon: float = 0.5
    bound: float | None = None
    threshold: float | None = None
    trace: ChainingTrace | None = None
    note: str = ""

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict, "route": self.route, "k": self.k, "delta": self.delta,
               "epsilon": self.epsilon, "bound": self.bound, "threshold": self.threshold,
               "note": self.note}
        if self.trace is not None:
            out["trace"] = self.trace.to_dict()
        return out


def estimate_delta(candidate: Kernel, xi0: np.ndarray, epsilon: float = 0.5,
                   n_shell: int = 16, n_dirs: int = 64) -> float:
    """Largest dyadic delta with inf of h over B(xi0, delta) >= epsilon h(xi0)."""
    h0 = float(eval_kernel(candidate, xi0))
    dirs = _directions(candidate.dim, n_dirs, seed=11)
    r0 = float(np.linalg.norm(xi0))
    for j in range(1, 60):
        delta = r0 * 2.0**-j
        shells = np.linspace(0, delta, n_shell + 1)[1:]
        pts = xi0 + shells[:, None, None] * dirs[None]
        if np.min(eval_kernel(candidate, pts.reshape(-1, candidate.dim))) >= epsilon * h0:
            return delta
    return 0.0


def blowup_certificate(candidate: Kernel, theta: float, xi0, K: int = 6,
                       B: float | None = None) -> Certificate:
    """Look for a violation of h*h <= B |xi|^theta h on the candidate.

    Three routes are tried: divergence of h*h at xi0; the growing lower bound
    eps h(xi0) C' x_k rho(x_k)^(n-theta) on h*h(xi0); and the lower bound
    h*h >= x_k on the punctured ball of radius rho(x_{k-1})/2, compared with the
    candidate's own values of B |xi|^theta h there.
    """
    xi0 = np.asarray(xi0, dtype=float).reshape(candidate.dim)
    n = candidate.dim
    if not np.any(xi0):
        raise PreconditionError("xi0 must be nonzero")
    h0 = float(eval_kernel(candidate, xi0))
    if not math.isfinite(h0):
        raise PreconditionError("candidate must be finite at xi0")
    B = B if B is not None else (candidate.sharp_B or 1.0)
    threshold = B * float(np.linalg.norm(xi0)) ** theta * h0

    conv = self_convolve(candidate, xi0[None]) if candidate.dim > 0 else None
    if conv is not None and not math.isfinite(conv.values[0]):
        return Certificate("certificate_of_violation", "divergent_convolution", 0,
                           threshold=threshold, note="h*h(xi0) diverges")

    profile = LevelProfile.build(candidate, theta)
    if theta >= n:
        if profile.rho(2) > 0:
            return Certificate("certificate_of_violation", "theta_ge_n", 0, threshold=threshold,
                               note="|eta|^-theta is not integrable near 0, so h*h is infinite "
                                    "on a punctured ball")
        return Certificate("inconclusive", note="rho vanishes; see origin_classify")

    delta = estimate_delta(candidate, xi0)
    C = chain_C(n, theta)
    C_prime = 2 ** (n - theta) * C
    x = Fraction(2) if theta < n / 2 else None
    if x is None:
        try:
            x = initial_x0(n, theta, profile)
        except PreconditionError:
            return Certificate("inconclusive", delta=delta, threshold=threshold,
                               note="no admissible x0 on the probed range")
    r = profile.rho(x)
    if r == 0:
        return Certificate("inconclusive", delta=delta, threshold=threshold,
                           note="rho(x0) = 0: liminf of |xi|^theta h at the origin is finite; "
                                "see origin_classify")
    if math.isinf(r):
        return Certificate("inconclusive", delta=delta, threshold=threshold,
                           note="rho is infinite on the probed range")

    trace = ChainingTrace(theta, n)
    trace.entries.append(ChainEntry(0, x, r, C * r ** (n - 2 * theta), 0.0, r, True, x >= 2))
    for k in range(1, K + 1):
        lam = C * r ** (n - 2 * theta)
        x_prev_r = r
        x = x * x * _round_down(_float_to_fraction_down(lam), 64)
        if x <= 0:
            break
        r = profile.rho(x)
        lb = _lower_bound(C_prime, x, r, n, theta)
        trace.entries.append(ChainEntry(k, x, r, lam, 0.5 * h0 * lb, trace.entries[0].rho / 2**k,
                                        r >= trace.entries[0].rho / 2**k, x >= 2 ** (2**k)))
        if 0 < r < delta and 0.5 * h0 * lb > threshold:
            return Certificate("certificate_of_violation", "xi0_lower_bound", k, delta,
                               bound=0.5 * h0 * lb, threshold=threshold, trace=trace)
        # on B*(rho(x_{k-1})/2) every point has h*h >= x_k
        radius = x_prev_r / 2
        if radius > 0:
            rr = radius * np.logspace(-6, 0, 200)
            level = np.exp(_log_level(candidate, theta, rr, profile.dirs))
            witness = float(np.min(B * level))
            if witness < float(x):
                return Certificate("certificate_of_violation", "near_origin_witness", k, delta,
                                   bound=float(x), threshold=witness, trace=trace,
                                   note=f"h*h >= x_k on B*({radius:.3g}) but B|xi|^theta h "
                                        f"drops to {witness:.4g} there")
        if r == 0 or math.isinf(r):
            break
    trace.verdict = "inconclusive"
    return Certificate("inconclusive", delta=delta, threshold=threshold, trace=trace)


# ---------------------------------------------------------------------------

@dataclass
class OriginClassification:
    estimate: float
    cls: str
    radii: np.ndarray
    decade_minima: np.ndarray
    slope: float
    note: str = ""

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "class": self.cls, "slope": self.slope,
                "radius_min": float(self.radii[0]), "radius_max": float(self.radii[-1]),
                "note": self.note}


def origin_classify(candidate: Kernel, theta: float, r_min: float | None = None,
                    decades: int = 8, per_decade: int = 4000, slope_tol: float = 0.02
                    ) -> OriginClassification:
    """Classify liminf of |xi|^theta h(xi) as xi -> 0 from per-decade minima.

    For tabulated candidates the scan starts at the first tabulated radius.
    """
    if r_min is None:
        if candidate.form == "tabulated_radial":
            r_min = float(candidate.params["radii"][0])
            r_max_tab = float(candidate.params["radii"][-1])
            decades = max(1, min(decades, int(math.floor(math.log10(r_max_tab / r_min)))))
        else:
            r_min = 10.0 ** (-decades - 1)
    dirs = _directions(candidate.dim, 1 if candidate.is_radial else 32)
    mins, centers, all_r = [], [], []
    for d in range(decades):
        lo = r_min * 10.0**d
        r = np.logspace(math.log10(lo), math.log10(lo * 10), per_decade)
        mins.append(float(np.min(_log_level(candidate, theta, r, dirs))))
        centers.append(math.log10(lo) + 0.5)
        all_r.append(r)
    mins = np.array(mins)
    slope = float(np.polyfit(centers, mins / math.log(10), 1)[0])
    est = float(np.exp(mins[: max(1, decades // 3)].min()))
    if slope > slope_tol:
        cls, est = "zero", (0.0 if est < 1e-3 or decades >= 3 else est)
    elif slope < -slope_tol:
        cls, est = "infinite", math.inf
    elif np.all(np.isfinite(mins)):
        cls = "finite_positive"
    else:
        cls = "inconclusive"
    note = ""
    if cls == "finite_positive" and theta >= candidate.dim / 2:
        note = ("finite positive liminf with theta >= n/2: h*h would be infinite near the origin, "
                "so the candidate cannot satisfy the inequality")
    return OriginClassification(est, cls, np.concatenate(all_r), np.exp(mins), slope, note)


def min_on_ball(kernel: Kernel, R: float, n_shell: int = 64, n_dirs: int = 64) -> float:
    """Minimum of h over a sampled closed ball of radius R around the origin."""
    dirs = _directions(kernel.dim, n_dirs, seed=5)
    shells = np.linspace(0, R, n_shell + 1)[1:]
    return float(np.min(eval_kernel(kernel, (shells[:, None, None] * dirs[None]).reshape(-1, kernel.dim))))
