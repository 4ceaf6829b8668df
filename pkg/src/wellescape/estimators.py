"""Monte Carlo estimators of escape probabilities, plain and reweighted.

The target is P(A) for the escape event A = {X_T outside D} under the
Langevin dynamics of a potential V.  Two estimators are provided:

* plain:       average of the indicator over paths simulated under V;
* importance:  average of  w * indicator  over paths simulated under a
  sampling potential V~, with w = dP/dP~ the pathwise Girsanov weight in
  generator form.  The estimator is unbiased for every sampling potential
  admitted by the weight identity; a good V~ (e.g. the well flattened or
  inverted on D) makes escapes common and the weight small on them.

Runs stream over fixed noise blocks (see :class:`wellescape.sde.RngPolicy`)
and reduce mergeable moment summaries in block order, so results are
bit-for-bit independent of the worker count.  Efficiency diagnostics
follow the usual second-moment analysis: the relative error of the
importance estimator after N samples is sqrt((Lambda - P(A)^2) / N) / P(A)
with Lambda = E~[w^2 1_A]; Lambda >= P(A)^2 always, and for the flattened
potential it obeys the a-priori bound

    Lambda <= exp( eps^-1 (V(x0) - V~(x0)) + T M ),
    M = 1/2 sup_D (Laplace V - Laplace V~),      eps = sigma^2,

which certifies variance reduction before any sampling is done.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .girsanov import WeightAccumulator
from .potentials import region_supremum
from .sde import BLOCK_SAMPLES, evolve_block, steps_for

_LOG_WEIGHT_CLIP = 700.0

CSV_COLUMNS = [
    "estimator", "potential", "N", "tau", "h", "seed", "mean",
    "per_sample_variance", "std_error", "relative_error", "lambda",
    "variance_ratio", "theorem3_bound",
]


@dataclass(frozen=True)
class EscapeEvent:
    """The event that the path sits outside the region at the horizon."""

    region: object
    horizon: float

    def indicator(self, terminal):
        inside = np.asarray(self.region.indicator(terminal))
        return 1.0 - inside.astype(float)


@dataclass
class EstimatorSummary:
    """Mergeable moment summary of per-sample estimator values.

    ``mean`` and ``m2`` are the running mean and sum of squared deviations
    (Welford); ``sum_w_ind`` and ``sum_w2_ind`` are the raw first and
    second moments of weight-times-indicator needed for the second-moment
    diagnostics; ``hits`` counts samples that realized the event.
    """

    n: int
    mean: float
    m2: float
    sum_w_ind: float
    sum_w2_ind: float
    hits: int
    kind: str

    @classmethod
    def from_values(cls, values, kind, hits=None):
        values = np.asarray(values, dtype=float)
        n = values.size
        mean = float(values.mean()) if n else 0.0
        m2 = float(((values - mean) ** 2).sum())
        if hits is None:
            hits = int(np.count_nonzero(values))
        return cls(
            n=n, mean=mean, m2=m2, sum_w_ind=float(values.sum()),
            sum_w2_ind=float((values**2).sum()), hits=int(hits), kind=kind,
        )

    def merge(self, other):
        """Combine two summaries as if their samples were pooled."""
        if self.kind != other.kind:
            raise ValueError(f"cannot merge {self.kind!r} with {other.kind!r}")
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta**2 * self.n * other.n / n
        return EstimatorSummary(
            n=n, mean=mean, m2=m2,
            sum_w_ind=self.sum_w_ind + other.sum_w_ind,
            sum_w2_ind=self.sum_w2_ind + other.sum_w2_ind,
            hits=self.hits + other.hits, kind=self.kind,
        )

    @property
    def variance(self):
        """Unbiased per-sample variance."""
        if self.n < 2:
            return float("nan")
        return self.m2 / (self.n - 1)

    @property
    def std_error(self):
        return math.sqrt(self.variance / self.n)

    @property
    def relative_error(self):
        if self.mean == 0.0:
            return None
        return self.std_error / self.mean

    def zero_hit_upper_bound(self):
        """One-sided 95% 'rule of three' bound when no sample hit the event."""
        return 3.0 / self.n


@dataclass
class Diagnostics:
    """Efficiency report for an importance run against a plain baseline.

    Fields are None when undefined (no hits, or degenerate baseline)
    rather than raising on division by zero.
    """

    relative_error: float | None
    lambda_factor: float | None
    variance_ratio: float | None
    theorem3_bound: float | None


def _reduce_blocks(per_block, n_blocks, workers):
    if workers <= 1:
        results = [per_block(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(per_block, range(n_blocks)))
    merged = results[0]
    for r in results[1:]:
        merged = [a.merge(b) for a, b in zip(merged, r)]
    return merged


def _run(potential, sampling_potential, noise, x0, event, h, taus, n_samples,
         policy, workers):
    """Shared engine: simulate n_samples under the sampling law, summarize.

    Returns one summary per requested Riemann mesh (a single-entry list
    with tau None for plain runs).  All meshes share one simulation pass,
    and therefore one noise stream.
    """
    n_steps = steps_for(event.horizon, h)
    weighted = sampling_potential is not None
    sampler = sampling_potential if weighted else potential
    drift = lambda x: -np.asarray(sampler.gradient(x))
    kind = "importance" if weighted else "plain"
    n_slots = len(taus) if weighted else 1

    def per_block(b):
        noise_block = policy.block_normals(b, n_steps)
        take = min(BLOCK_SAMPLES, n_samples - b * BLOCK_SAMPLES)
        if take < BLOCK_SAMPLES:
            noise_block = noise_block[:take]
        acc = None
        if weighted:
            acc = WeightAccumulator(
                potential, sampling_potential, noise, h, n_steps, taus
            )
        terminal = evolve_block(
            drift, noise, x0, n_steps, h, noise_block,
            acc.observe if acc else None,
        )
        ind = event.indicator(terminal)
        hits = int(np.count_nonzero(ind))
        if not weighted:
            return [EstimatorSummary.from_values(ind, kind, hits)]
        logw = acc.finalize(x0, terminal)
        if np.any(logw > _LOG_WEIGHT_CLIP):
            warnings.warn(
                "some log-weights exceed the overflow clip; results may be "
                "inaccurate (is the sampling potential sensible?)",
                stacklevel=2,
            )
            logw = np.minimum(logw, _LOG_WEIGHT_CLIP)
        w_ind = np.exp(logw) * ind
        return [EstimatorSummary.from_values(w_ind[j], kind, hits)
                for j in range(n_slots)]

    summaries = _reduce_blocks(per_block, policy.n_blocks(n_samples), workers)
    return summaries


def run_plain(potential, noise, x0, event, h, n_samples, policy, workers=1):
    """Vanilla Monte Carlo estimate of P(A) under the target dynamics."""
    return _run(potential, None, noise, x0, event, h, [None], n_samples,
                policy, workers)[0]


def run_importance(potential, sampling_potential, noise, x0, event, h, tau,
                   n_samples, policy, workers=1):
    """Reweighted estimate of P(A), sampling under ``sampling_potential``."""
    return _run(potential, sampling_potential, noise, x0, event, h, [tau],
                n_samples, policy, workers)[0]


def run_importance_meshes(potential, sampling_potential, noise, x0, event, h,
                          taus, n_samples, policy, workers=1):
    """Importance run evaluated at several Riemann meshes in one pass.

    All meshes see the same trajectories, so differences between the
    returned summaries isolate the effect of the weight discretization.
    """
    summaries = _run(potential, sampling_potential, noise, x0, event, h,
                     list(taus), n_samples, policy, workers)
    return dict(zip(taus, summaries))


def theorem3_bound(potential, sampling_potential, region, noise, horizon, x0):
    """A-priori upper bound on Lambda = E~[w^2 1_A] for flattened wells.

    exp( eps^-1 (V(x0) - V~(x0)) + T M ) with
    M = 1/2 sup_D (Laplace V - Laplace V~).
    """
    m_const = 0.5 * region_supremum(
        lambda x: np.asarray(potential.laplacian(x))
        - np.asarray(sampling_potential.laplacian(x)),
        region,
    )
    gap = float(potential.value(x0)) - float(sampling_potential.value(x0))
    return math.exp(gap / noise.epsilon + horizon * m_const)


def diagnostics(plain, importance, potential, sampling_potential, region,
                noise, horizon, x0):
    """Second-moment efficiency diagnostics for an importance run."""
    lam = None
    if importance.sum_w_ind > 0:
        lam = importance.n * importance.sum_w2_ind / importance.sum_w_ind**2
    ratio = None
    if plain is not None and plain.n >= 2 and plain.variance > 0:
        ratio = importance.variance / plain.variance
    return Diagnostics(
        relative_error=importance.relative_error,
        lambda_factor=lam,
        variance_ratio=ratio,
        theorem3_bound=theorem3_bound(
            potential, sampling_potential, region, noise, horizon, x0
        ),
    )


@dataclass
class SweepRow:
    epsilon: float
    n: int
    hits: int
    probability: float
    lambda_factor: float | None
    eps_log_lambda: float | None


def small_noise_sweep(potential, sampling_potential, region, x0, horizon, h,
                      tau, epsilons, n_samples, seed, workers=1):
    """Importance runs across noise levels, reporting eps * log(Lambda).

    For sampling schemes that keep the exit mechanism deterministic and
    flat on the boundary, eps * log(Lambda) tends to 0 as eps -> 0
    (asymptotic optimality); the rows returned here make that decay
    empirically checkable.  ``n_samples`` may be one int for all noise
    levels or a sequence aligned with ``epsilons``; each level uses the
    derived master seed ``seed + its index``.
    """
    from .potentials import NoiseScale
    from .sde import RngPolicy

    if isinstance(n_samples, int):
        n_samples = [n_samples] * len(epsilons)
    rows = []
    for i, (eps, n) in enumerate(zip(epsilons, n_samples)):
        noise = NoiseScale(epsilon=eps)
        event = EscapeEvent(region, horizon)
        summary = run_importance(
            potential, sampling_potential, noise, x0, event, h, tau, n,
            RngPolicy(seed + i), workers,
        )
        if summary.hits < 100:
            warnings.warn(
                f"only {summary.hits} hits at eps={eps}; increase n_samples "
                "for a trustworthy Lambda estimate",
                stacklevel=2,
            )
        lam = None
        ell = None
        if summary.sum_w_ind > 0:
            lam = summary.n * summary.sum_w2_ind / summary.sum_w_ind**2
            ell = eps * math.log(lam)
        rows.append(SweepRow(
            epsilon=eps, n=n, hits=summary.hits, probability=summary.mean,
            lambda_factor=lam, eps_log_lambda=ell,
        ))
    return rows


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def csv_row(summary, *, potential_label, tau, h, seed, diag=None):
    """One result row following the fixed CSV schema."""
    return {
        "estimator": summary.kind,
        "potential": potential_label,
        "N": summary.n,
        "tau": tau if tau is not None else "",
        "h": h,
        "seed": seed,
        "mean": summary.mean,
        "per_sample_variance": summary.variance,
        "std_error": summary.std_error,
        "relative_error": summary.relative_error,
        "lambda": diag.lambda_factor if diag else None,
        "variance_ratio": diag.variance_ratio if diag else None,
        "theorem3_bound": diag.theorem3_bound if diag else None,
    }


def write_csv(path, rows):
    """Write result rows with a fixed column order and stable formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])
