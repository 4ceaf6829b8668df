"""Euler-Maruyama simulation of overdamped Langevin dynamics.

The scheme for ``dX = -grad(V) dt + sigma dW`` with step ``h`` is

    X_{i+1} = X_i - grad(V)(X_i) h + sigma sqrt(h) xi_i,

where the ``xi_i`` are independent standard normal draws.  Paths record the
unit-variance draws alongside the states so that reweighting in
:mod:`wellescape.girsanov` can rebuild the driving increments exactly.

Reproducibility is organised around :class:`RngPolicy`: noise is generated
in fixed blocks of :data:`BLOCK_SAMPLES` samples, block ``j`` seeded by
``SeedSequence(master_seed, spawn_key=(j,))``.  Sample ``k`` always reads
row ``k mod BLOCK_SAMPLES`` of block ``k // BLOCK_SAMPLES``, so its noise
depends only on ``(master_seed, k)`` and never on batch sizes, worker
counts, or scheduling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SimulationError

BLOCK_SAMPLES = 4096


class RngPolicy:
    """Deterministic per-sample noise streams derived from one master seed."""

    def __init__(self, master_seed):
        self.master_seed = int(master_seed)

    def block_normals(self, block_index, n_steps, dim=1):
        """Standard normals for one block, shape (BLOCK_SAMPLES, n_steps[, dim])."""
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(int(block_index),))
        gen = np.random.Generator(np.random.PCG64(ss))
        shape = (BLOCK_SAMPLES, n_steps) if dim == 1 else (BLOCK_SAMPLES, n_steps, dim)
        return gen.standard_normal(shape)

    def normals_for_sample(self, sample_index, n_steps, dim=1):
        """The noise draws sample ``sample_index`` receives, shape (n_steps[, dim])."""
        block, row = divmod(int(sample_index), BLOCK_SAMPLES)
        return self.block_normals(block, n_steps, dim)[row]

    def stream(self, sample_index):
        return SampleStream(self, sample_index)

    def n_blocks(self, n_samples):
        return -(-int(n_samples) // BLOCK_SAMPLES)

    def __repr__(self):
        return f"RngPolicy(master_seed={self.master_seed})"


@dataclass(frozen=True)
class SampleStream:
    """Handle for the noise of a single sample under a policy."""

    policy: RngPolicy
    sample_index: int

    def normals(self, n_steps, dim=1):
        return self.policy.normals_for_sample(self.sample_index, n_steps, dim)


@dataclass
class SamplePath:
    """One simulated trajectory on a uniform time grid.

    ``states[i]`` is the state at ``times[i]``; ``increments[i]`` is the
    unit-variance normal draw that produced the step from ``times[i]`` to
    ``times[i+1]`` (the Brownian increment is ``sigma * sqrt(h) * increments[i]``).
    """

    times: np.ndarray
    states: np.ndarray
    increments: np.ndarray

    @property
    def x0(self):
        return self.states[0]

    @property
    def terminal(self):
        return self.states[-1]

    @property
    def n_steps(self):
        return len(self.times) - 1

    @property
    def h(self):
        return float(self.times[1] - self.times[0])


def steps_for(horizon, h):
    """Number of Euler steps covering [0, horizon]; rounds up if T/h is not integral."""
    if h <= 0 or horizon <= 0:
        raise ValueError("horizon and step must be positive")
    ratio = horizon / h
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, ratio):
        n = math.ceil(ratio - 1e-12)
        warnings.warn(
            f"horizon {horizon} is not an integer multiple of h={h}; "
            f"using {n} steps (terminal time {n * h:g})",
            stacklevel=2,
        )
    return n


def _draw_increments(rng, n_steps, dim):
    if isinstance(rng, SampleStream):
        return rng.normals(n_steps, dim)
    if isinstance(rng, np.random.Generator):
        shape = (n_steps,) if dim == 1 else (n_steps, dim)
        return rng.standard_normal(shape)
    arr = np.asarray(rng, dtype=float)
    expected = (n_steps,) if dim == 1 else (n_steps, dim)
    if arr.shape != expected:
        raise ValueError(f"increment array has shape {arr.shape}, expected {expected}")
    return arr


def simulate_with_drift(drift, noise, x0, horizon, h, rng):
    """Euler-Maruyama path of dX = F(X) dt + sigma dW.

    Parameters
    ----------
    drift : callable
        The drift field F, vectorized over points.
    noise : NoiseScale
    x0 : float or array
        Initial state (scalar for d = 1, shape (d,) otherwise).
    horizon, h : float
        Final time and step size; ``horizon / h`` should be integral.
    rng : SampleStream, numpy Generator, or ndarray
        Source of the unit-variance draws.  Passing an ndarray replays a
        recorded path exactly.
    """
    x0 = np.asarray(x0, dtype=float)
    dim = 1 if x0.ndim == 0 else x0.shape[0]
    n = steps_for(horizon, h)
    xi = _draw_increments(rng, n, dim)

    shape = (n + 1,) if dim == 1 else (n + 1, dim)
    states = np.empty(shape)
    states[0] = x0
    amp = noise.sigma * math.sqrt(h)
    x = x0
    for i in range(n):
        x = x + np.asarray(drift(x)) * h + amp * xi[i]
        if not np.all(np.isfinite(x)):
            raise SimulationError(
                f"state became non-finite at step {i} (t={(i + 1) * h:g})", step=i
            )
        states[i + 1] = x
    times = h * np.arange(n + 1)
    return SamplePath(times=times, states=states, increments=xi)


def simulate(potential, noise, x0, horizon, h, rng):
    """Euler-Maruyama path of the Langevin SDE dX = -grad(V) dt + sigma dW."""
    return simulate_with_drift(
        lambda x: -np.asarray(potential.gradient(x)), noise, x0, horizon, h, rng
    )


def evolve_block(drift, noise, x0, n_steps, h, noise_block, observer=None):
    """Advance a whole block of samples and return their terminal states.

    ``noise_block`` has shape (B, n_steps) for d = 1 or (B, n_steps, d);
    row b drives sample b.  ``observer(i, X)``, when given, is called with
    the current states at the start of step i (so it sees X at times
    i * h for i = 0 .. n_steps - 1); this is how streaming weight
    accumulators tap the trajectory without storing it.
    """
    n_block = noise_block.shape[0]
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 0:
        X = np.full(n_block, float(x0))
    else:
        X = np.tile(x0, (n_block, 1))
    amp = noise.sigma * math.sqrt(h)
    for i in range(n_steps):
        if observer is not None:
            observer(i, X)
        X = X + np.asarray(drift(X)) * h + amp * noise_block[:, i]
        if not np.all(np.isfinite(X)):
            raise SimulationError(
                f"a sample became non-finite at step {i} (t={(i + 1) * h:g})", step=i
            )
    return X
