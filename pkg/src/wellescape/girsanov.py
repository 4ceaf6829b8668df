"""Pathwise change-of-measure weights between Langevin dynamics.

Let P be the law of ``dX = -grad(V) dt + sigma dW`` and P~ the law of the
same equation with a sampling potential V~ (both started at x0, observed on
[0, T]).  The log Radon-Nikodym derivative along a path admits a form that
involves no stochastic integral, only the potentials and the generator-type
integrand ``g_V = sigma^2 Laplace(V) - |grad V|^2``:

    log dP/dP~ = sigma^-2 [ V(x0) - V(X_T) - V~(x0) + V~(X_T)
                            + 1/2 * integral_0^T (g_V - g_V~)(X_s) ds ].

The same weight in its classical stochastic-integral form, with
U = V~ - V, is

    log dP/dP~ = sigma^-1 integral grad(U)(X_s) . dW~_s
                 - sigma^-2 / 2 * integral |grad U|^2 (X_s) ds.

Both are discretized on recorded Euler paths here: the generator form with
a left-endpoint Riemann sum on a coarsened mesh tau (an integer multiple of
the simulation step h), the stochastic form on the simulation grid using
the recorded driving increments.  For linear U the two discrete forms agree
to machine precision when tau = h; in general they differ at the Riemann
error level.

Against an arbitrary reference SDE ``dX = F dt + sigma dW`` the running
integrand becomes ``-|grad V|^2 + 2 F . grad V + sigma^2 Laplace(V)`` and
the boundary term drops the V~ contribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .potentials import generator_apply_general, generator_apply_to_self

_MESH_REL_TOL = 1e-9


@dataclass
class LogWeight:
    """A decomposed log change-of-measure weight.

    ``log_value = boundary_term + running_integral``; ``mesh`` is the
    Riemann mesh used for the running part (the simulation step for the
    stochastic-integral form).
    """

    log_value: float
    boundary_term: float
    running_integral: float
    mesh: float


def mesh_stride(tau, h, n_steps=None):
    """Validate tau against h and return the integer stride tau / h."""
    ratio = tau / h
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > _MESH_REL_TOL * max(1.0, abs(ratio)):
        raise ConfigurationError(
            f"Riemann mesh tau={tau} is not a positive integer multiple of h={h}"
        )
    if n_steps is not None and n_steps % m != 0:
        raise ConfigurationError(
            f"tau={tau} does not divide the horizon: {n_steps} steps with "
            f"stride {m} leaves a partial cell"
        )
    return m


def _require_increments(path):
    if path.increments is None or len(path.increments) != path.n_steps:
        raise ValueError(
            "path does not carry one recorded increment per step; "
            "reweighting needs the driving noise"
        )


def log_weight_generator_form(path, potential, sampling_potential, noise, tau):
    """Weight of a P~-path under P, generator form, left-endpoint Riemann sum.

    ``path`` must have been simulated under the sampling potential; the
    running integrand is evaluated at times 0, tau, 2 tau, ..., T - tau.
    """
    h = path.h
    m = mesh_stride(tau, h, path.n_steps)
    left = path.states[:-1][::m]
    inv_eps = 1.0 / noise.sigma ** 2
    g_diff = (np.asarray(generator_apply_to_self(potential, noise, left))
              - np.asarray(generator_apply_to_self(sampling_potential, noise, left)))
    running = inv_eps * 0.5 * (m * h) * float(np.sum(g_diff))
    boundary = inv_eps * float(
        potential.value(path.x0) - potential.value(path.terminal)
        - sampling_potential.value(path.x0) + sampling_potential.value(path.terminal)
    )
    return LogWeight(
        log_value=boundary + running,
        boundary_term=boundary,
        running_integral=running,
        mesh=m * h,
    )


def log_weight_stochastic_integral_form(path, potential, sampling_potential, noise):
    """Weight of a P~-path under P via the classical stochastic integral.

    Uses U = V~ - V and the recorded unit-variance draws xi_i of the path:
    the discrete stochastic integral is sum grad(U)(X_i) . (sqrt(h) xi_i).
    Defined only for nondegenerate noise.
    """
    _require_increments(path)
    if noise.sigma == 0:
        raise ValueError("stochastic-integral form requires sigma > 0")
    h = path.h
    left = path.states[:-1]
    gu = (np.asarray(sampling_potential.gradient(left))
          - np.asarray(potential.gradient(left)))
    if potential.dimension == 1:
        cross = gu * path.increments
        gu_sq = gu * gu
    else:
        cross = (gu * path.increments).sum(axis=-1)
        gu_sq = (gu ** 2).sum(axis=-1)
    running = (np.sqrt(h) / noise.sigma) * float(np.sum(cross)) \
        - 0.5 / noise.sigma ** 2 * h * float(np.sum(gu_sq))
    return LogWeight(
        log_value=running, boundary_term=0.0, running_integral=running, mesh=h
    )


def log_weight_general_reference(path, potential, drift, noise, tau):
    """Weight under P of a path simulated from dX = F dt + sigma dW."""
    h = path.h
    m = mesh_stride(tau, h, path.n_steps)
    left = path.states[:-1][::m]
    inv_eps = 1.0 / noise.sigma ** 2
    g = np.asarray(generator_apply_general(potential, drift, noise, left))
    running = inv_eps * 0.5 * (m * h) * float(np.sum(g))
    boundary = inv_eps * float(
        potential.value(path.x0) - potential.value(path.terminal)
    )
    return LogWeight(
        log_value=boundary + running,
        boundary_term=boundary,
        running_integral=running,
        mesh=m * h,
    )


class WeightAccumulator:
    """Streaming generator-form log-weights for a block of samples.

    Plugs into :func:`wellescape.sde.evolve_block` as the observer: at
    each simulation step it adds the running integrand at whichever of
    the requested Riemann meshes fall on that step, so a single pass over
    the trajectory produces the weight at several tau values (sharing the
    same noise, which isolates the mesh effect when comparing them).
    """

    def __init__(self, potential, sampling_potential, noise, h, n_steps, taus):
        self.potential = potential
        self.sampling_potential = sampling_potential
        self.noise = noise
        self.h = h
        self.strides = [mesh_stride(t, h, n_steps) for t in taus]
        self.taus = [m * h for m in self.strides]
        self._sums = None

    def _g_diff(self, X):
        return (np.asarray(generator_apply_to_self(self.potential, self.noise, X))
                - np.asarray(generator_apply_to_self(
                    self.sampling_potential, self.noise, X)))

    def observe(self, i, X):
        due = [j for j, m in enumerate(self.strides) if i % m == 0]
        if not due:
            return
        g = self._g_diff(X)
        if self._sums is None:
            self._sums = np.zeros((len(self.strides), len(X)))
        for j in due:
            self._sums[j] += g

    def finalize(self, x0, terminal):
        """Log-weights, shape (n_taus, block); call after the last step."""
        inv_eps = 1.0 / self.noise.sigma ** 2
        boundary = inv_eps * (
            float(self.potential.value(x0))
            - np.asarray(self.potential.value(terminal))
            - float(self.sampling_potential.value(x0))
            + np.asarray(self.sampling_potential.value(terminal))
        )
        out = np.empty((len(self.strides), len(terminal)))
        for j, m in enumerate(self.strides):
            running = inv_eps * 0.5 * (m * self.h) * self._sums[j]
            out[j] = boundary + running
        return out
