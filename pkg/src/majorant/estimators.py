"""Estimator-style wrappers around the Picard and cascade solvers.

Both follow the scikit-learn conventions for parameters (``get_params`` /
``set_params`` / ``clone``), ``fit`` binds an initial datum and ``predict``
maps rows ``[xi_1, ..., xi_n, t]`` to complex velocity values u^(xi, t).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .cascade import DEFAULT_DEPTH_CAP, LatticeProblem, estimate_solution
from .errors import PreconditionError
from .kernels import Kernel
from .lattice import LatticeField
from .picard import contraction_report, interpolate_trajectory, picard_iterate, site_of


def _rows(X, dim: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != dim + 1:
        raise PreconditionError(f"expected rows of length {dim + 1} ([xi..., t]), got {X.shape[1]}")
    return X


class PicardSolver(BaseEstimator):
    """Lattice Picard iteration for the mild formulation.

    After ``fit(u0)``: ``result_`` holds all iterates, ``contraction_`` the
    contraction report (None for K < 2) and ``trajectory_`` the last iterate.
    """

    def __init__(self, kernel: Kernel | None = None, nu: float = 1.0, T: float = 0.1, K: int = 6,
                 n_steps: int = 64, bilinear: bool = True):
        self.kernel = kernel
        self.nu = nu
        self.T = T
        self.K = K
        self.n_steps = n_steps
        self.bilinear = bilinear

    def fit(self, u0: LatticeField, forcing=None):
        self.result_ = picard_iterate(u0, forcing, nu=self.nu, T=self.T, K=self.K, kernel=self.kernel,
                                      n_steps=self.n_steps, bilinear=self.bilinear)
        self.trajectory_ = self.result_.iterates[-1]
        self.contraction_ = (contraction_report(self.result_.iterates, self.kernel, self.nu)
                             if self.kernel is not None and self.K >= 2 else None)
        self.geometry_ = u0.geometry
        return self

    def predict(self, X, iterate: int | None = None) -> np.ndarray:
        check_is_fitted(self, "result_")
        g = self.geometry_
        X = _rows(X, g.dim)
        traj = self.trajectory_ if iterate is None else self.result_.iterates[iterate]
        return np.array([interpolate_trajectory(traj, site_of(g, r[:-1]), r[-1]) for r in X])


class CascadeSolver(BaseEstimator):
    """Monte Carlo cascade estimates on a lattice datum.

    ``depth_cap`` truncates the trees; with ``depth_cap=k`` the expectation
    equals the k-th Picard iterate on the same lattice.
    """

    def __init__(self, kernel: Kernel | None = None, nu: float = 1.0, N: int = 10_000, seed: int = 0,
                 depth_cap: int = DEFAULT_DEPTH_CAP, workers: int = 1, branching: bool = True):
        self.kernel = kernel
        self.nu = nu
        self.N = N
        self.seed = seed
        self.depth_cap = depth_cap
        self.workers = workers
        self.branching = branching

    def fit(self, u0: LatticeField, forcing: LatticeField | None = None):
        if self.kernel is None:
            raise PreconditionError("CascadeSolver needs a kernel")
        self.problem_ = LatticeProblem(self.kernel, self.nu, u0, forcing, branching=self.branching)
        self.geometry_ = u0.geometry
        return self

    def estimate(self, X) -> list:
        """Full estimates (means, standard errors, truncation diagnostics) per row."""
        check_is_fitted(self, "problem_")
        X = _rows(X, self.geometry_.dim)
        self.estimates_ = [estimate_solution(self.problem_, r[:-1], r[-1], self.N, self.seed,
                                             self.depth_cap, self.workers) for r in X]
        return self.estimates_

    def predict(self, X) -> np.ndarray:
        return np.array([e.mean for e in self.estimate(X)])
