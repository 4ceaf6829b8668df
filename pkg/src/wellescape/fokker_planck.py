"""Deterministic Fokker-Planck oracle for one-dimensional Langevin dynamics.

Solves the forward equation of ``dX = -V'(X) dt + sigma dW``,

    dp/dt = d/dx [ V'(x) p + (sigma^2 / 2) dp/dx ],

with a conservative (flux-form) central discretization on a uniform node
grid and Crank-Nicolson time stepping.  The discrete flux at the face
between nodes j and j+1 is

    G_{j+1/2} = V'(x_{j+1/2}) (p_j + p_{j+1}) / 2
                + (sigma^2 / 2) (p_{j+1} - p_j) / dx,

so with reflecting (zero-flux) walls the discrete mass sum(p) * dx is
conserved exactly up to solver roundoff.  Crank-Nicolson is started with
two backward-Euler half steps, which damps the spurious oscillations the
trapezoidal rule would otherwise preserve from rough initial data (point
sources).

This solver is an oracle: it provides non-sampling reference values for
escape probabilities and transition densities against which the Monte
Carlo estimators and the short-time expansions are checked.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import SolverError
from .sde import steps_for

_CHECK_EVERY = 25
_NEGATIVE_TOL = 1e-6


@dataclass
class FpGrid:
    """A density snapshot on a uniform grid."""

    x: np.ndarray
    density: np.ndarray
    time: float
    dt: float
    boundary: str
    clamped_mass: float = 0.0

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def mass(self):
        """The discretely conserved mass, sum(p) * dx."""
        return float(self.density.sum() * self.dx)


def gaussian_bump(center, std):
    """Normalized Gaussian initial density of standard deviation ``std``."""

    def p0(x):
        return np.exp(-((x - center) ** 2) / (2 * std**2)) / (
            std * math.sqrt(2 * math.pi)
        )

    return p0


def stationary_density(potential, noise, x):
    """Gibbs density exp(-2 V / sigma^2), normalized so sum(p) * dx = 1."""
    v = np.asarray(potential.value(x), dtype=float)
    p = np.exp(-2.0 * (v - v.min()) / noise.sigma**2)
    dx = float(x[1] - x[0])
    return p / (p.sum() * dx)


def _operator_diagonals(potential, noise, x, boundary):
    """Lower/main/upper diagonals of the discrete Fokker-Planck operator."""
    n = x.size
    dx = float(x[1] - x[0])
    dc = 0.5 * noise.sigma**2
    faces = x[:-1] + 0.5 * dx
    b = np.asarray(potential.gradient(faces), dtype=float)  # V' at faces
    if not np.all(np.isfinite(b)):
        raise SolverError("drift is non-finite on the grid")

    upper = np.zeros(n)  # upper[j] multiplies p_{j+1} in row j
    lower = np.zeros(n)  # lower[j] multiplies p_{j-1} in row j
    main = np.zeros(n)
    # interior rows: (G_{j+1/2} - G_{j-1/2}) / dx
    upper[1:-1] = (0.5 * b[1:] + dc / dx) / dx
    lower[1:-1] = (-0.5 * b[:-1] + dc / dx) / dx
    main[1:-1] = (0.5 * (b[1:] - b[:-1]) - 2.0 * dc / dx) / dx
    if boundary == "reflecting":
        # outermost faces carry zero flux
        main[0] = (0.5 * b[0] - dc / dx) / dx
        upper[0] = (0.5 * b[0] + dc / dx) / dx
        main[-1] = (-0.5 * b[-1] - dc / dx) / dx
        lower[-1] = (-0.5 * b[-1] + dc / dx) / dx
    elif boundary == "absorbing":
        # Dirichlet rows: end nodes are pinned at zero density
        main[0] = main[-1] = 0.0
    else:
        raise ValueError(f"unknown boundary condition {boundary!r}")
    return lower, main, upper


def _banded(lower, main, upper, scale, shift):
    """Banded form of shift * I + scale * A for solve_banded((1, 1), ...)."""
    n = main.size
    ab = np.zeros((3, n))
    ab[0, 1:] = scale * upper[:-1]
    ab[1] = shift + scale * main
    ab[2, :-1] = scale * lower[1:]
    return ab


def _apply(lower, main, upper, p):
    out = main * p
    out[:-1] += upper[:-1] * p[1:]
    out[1:] += lower[1:] * p[:-1]
    return out


def evolve(potential, noise, initial, domain, n_cells, horizon, dt,
           boundary="reflecting", smooth_start=True):
    """Advance an initial density to time ``horizon``.

    Parameters
    ----------
    initial : callable or ndarray
        Initial density p0(x) (renormalized to unit discrete mass).
    domain : (float, float)
        Grid endpoints; walls sit at the outermost nodes.
    n_cells : int
        Number of grid nodes.
    horizon, dt : float
        Final time and Crank-Nicolson step.
    boundary : str
        "reflecting" (zero flux, mass conserving) or "absorbing"
        (zero density at the walls, mass decreasing).
    smooth_start : bool
        Start with two backward-Euler half steps (recommended for point
        initial data).
    """
    lo, hi = float(domain[0]), float(domain[1])
    x = np.linspace(lo, hi, int(n_cells))
    dx = float(x[1] - x[0])
    if noise.sigma > 0 and dx > 0.25 * noise.sigma * math.sqrt(dt):
        warnings.warn(
            f"grid spacing dx={dx:.2e} is coarse relative to the diffusion "
            f"scale sigma*sqrt(dt)/4={0.25 * noise.sigma * math.sqrt(dt):.2e}; "
            "consider more cells or a larger dt",
            stacklevel=2,
        )
    p = np.asarray(initial(x) if callable(initial) else initial, dtype=float).copy()
    if p.shape != x.shape:
        raise ValueError("initial density does not match the grid")
    if boundary == "absorbing":
        p[0] = p[-1] = 0.0
    total = p.sum() * dx
    if not (total > 0):
        raise ValueError("initial density has no mass on the grid")
    p /= total

    lower, main, upper = _operator_diagonals(potential, noise, x, boundary)
    n_steps = steps_for(horizon, dt)

    def run(steps, step_dt, theta_banded, rhs_diags):
        nonlocal p
        for i in range(steps):
            rhs = _apply(*rhs_diags, p) if rhs_diags is not None else p
            p = solve_banded((1, 1), theta_banded, rhs)
            if (i % _CHECK_EVERY == 0 or i == steps - 1) and not _healthy(p):
                raise SolverError(
                    f"density became invalid at t={min((i + 1) * step_dt, horizon):g}; "
                    "try a smaller dt or a finer grid"
                )

    def _healthy(q):
        return bool(np.all(np.isfinite(q)) and q.min() >= -_NEGATIVE_TOL * max(1.0, q.max()))

    remaining = n_steps
    if smooth_start and n_steps >= 1:
        be_half = _banded(lower, main, upper, -0.5 * dt, 1.0)
        run(2, 0.5 * dt, be_half, None)
        remaining -= 1
    if remaining > 0:
        left = _banded(lower, main, upper, -0.5 * dt, 1.0)
        rhs_diags = (0.5 * dt * lower, 1.0 + 0.5 * dt * main, 0.5 * dt * upper)
        run(remaining, dt, left, rhs_diags)

    clamped = float(-p[p < 0].sum() * dx) if np.any(p < 0) else 0.0
    np.clip(p, 0.0, None, out=p)
    return FpGrid(x=x, density=p, time=n_steps * dt, dt=dt, boundary=boundary,
                  clamped_mass=clamped)


def integrate_density(grid, a, b):
    """Integral of the density over [a, b] with fractional end cells."""
    a = max(float(a), float(grid.x[0]))
    b = min(float(b), float(grid.x[-1]))
    if b <= a:
        return 0.0
    fine = np.linspace(a, b, 20_001)
    vals = np.interp(fine, grid.x, grid.density)
    return float(np.trapezoid(vals, fine))


def escape_probability(potential, noise, x0, region, horizon, *,
                       n_cells=6144, dt=5e-4, pad=None, source_std=None,
                       return_grid=False):
    """P(X_T outside D) for X started at x0, by solving the forward PDE.

    The grid covers D and the start point inflated by ``pad`` (default
    6 sigma sqrt(T)) so that reflecting far walls do not influence the
    answer; the point start is mollified to a Gaussian of standard
    deviation one grid cell.  Returns 1 minus the density mass left in D
    at the horizon, plus the terminal grid when ``return_grid`` is set.
    """
    a, b = region.bounding_box[0]
    if pad is None:
        pad = 6.0 * noise.sigma * math.sqrt(horizon)
    lo = min(a, float(x0)) - pad
    hi = max(b, float(x0)) + pad
    dx = (hi - lo) / (int(n_cells) - 1)
    std = dx if source_std is None else float(source_std)
    grid = evolve(
        potential, noise, gaussian_bump(float(x0), std), (lo, hi),
        n_cells, horizon, dt, boundary="reflecting",
    )
    p = 1.0 - integrate_density(grid, a, b)
    if return_grid:
        return p, grid
    return p
