"""Monte Carlo strong-error estimation, rate fitting, blowup and comparison studies.

Errors are measured against a coupled reference: each sample draws one fine
Brownian path, the reference scheme consumes it at the finest resolution and
every coarse run consumes aligned block sums of the same increments, so the
sample-wise difference isolates discretization error.

The runner streams the fine path in chunks and advances all resolutions in
lockstep, vectorized over a batch of samples; nothing is ever materialized at
full (M_fine x samples) size.  Per-sample seeds derive from (master_seed,
sample index), so results are independent of batching and worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dynamics import Scheme, SolverError, Stepper
from .noise import (
    CHUNK_STEPS,
    NoiseKind,
    NoiseSpec,
    derive_sample_seed,
    fine_increment_chunk,
)
from .spectral import BasisSpec, SpectralField, projection_mask

__all__ = [
    "ExperimentPlan",
    "ErrorReport",
    "CompareReport",
    "BlowupTable",
    "RateFit",
    "initial_field",
    "fit_rate",
    "strong_temporal_error",
    "strong_spatial_error",
    "compare_schemes",
    "blowup_table",
]

# samples are processed in fixed-size batches; the layout is a pure function
# of the plan so results do not depend on the worker count
BATCH_SAMPLES = 100

IC_PRESETS = {"cos_pi": 1.0, "cos_pi_20": 20.0}


def initial_field(basis: BasisSpec, preset: str) -> SpectralField:
    """Named initial data: amplitude on the first cosine mode."""
    try:
        a = IC_PRESETS[preset]
    except KeyError:
        raise ValueError(
            f"unknown ic preset {preset!r}; choose from {sorted(IC_PRESETS)}"
        ) from None
    k = 1 if basis.dim == 1 else (1, 1)
    return SpectralField.from_modes(basis, {k: a})


def _steps(T: float, tau: float) -> int:
    m = T / tau
    M = round(m)
    if M < 1 or abs(m - M) > 1e-9 * max(1.0, m):
        raise ValueError(f"stepsize {tau} does not divide horizon {T}")
    return M


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything a strong-error study needs, including its seed."""

    taus: tuple = ()
    tau_ref: float = 2.0**-14
    samples: int = 200
    master_seed: int = 0
    dim: int = 1
    N: int = 64
    noise_kind: NoiseKind = NoiseKind.TRACE_CLASS_LOG
    ic: str = "cos_pi"
    schemes: tuple = (Scheme.TAMED_EXP_EULER,)
    T: float = 1.0
    nonlinearity: bool = True
    n_grid: Optional[int] = None
    n_list: tuple = ()
    n_ref: Optional[int] = None
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.T <= 0:
            raise ValueError(f"T must be > 0, got {self.T}")
        M_fine = _steps(self.T, self.tau_ref)
        for tau in self.taus:
            M = _steps(self.T, tau)
            if M_fine % M != 0:
                raise ValueError(
                    f"tau_ref={self.tau_ref} does not refine tau={tau}"
                )
        for n in self.n_list:
            if self.n_ref is None or n > self.n_ref:
                raise ValueError(f"spatial level N={n} exceeds N_ref={self.n_ref}")

    @property
    def M_fine(self) -> int:
        return _steps(self.T, self.tau_ref)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float
    residual: float


def fit_rate(pairs) -> RateFit:
    """Ordinary least squares of log(error) on log(h)."""
    pts = [(float(h), float(e)) for h, e in pairs]
    if len(pts) < 2:
        raise ValueError("rate fit needs at least two points")
    if any(h <= 0 or e <= 0 for h, e in pts):
        raise ValueError("rate fit requires positive stepsizes and errors")
    x = np.log([h for h, _ in pts])
    y = np.log([e for _, e in pts])
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    r = y - (slope * x + intercept)
    ssr = float((r**2).sum())
    n = len(pts)
    stderr = math.sqrt(ssr / (n - 2) / sxx) if n > 2 else 0.0
    return RateFit(slope, intercept, stderr, math.sqrt(ssr / n))


@dataclass(frozen=True)
class ErrorReport:
    kind: str  # "temporal" | "spatial"
    scheme: Scheme
    h: tuple  # tau (temporal) or lambda_N (spatial)
    errors: tuple
    stderrs: tuple
    diverged: tuple
    slope: float
    slope_stderr: float
    fit_residual: float
    samples: int
    master_seed: int
    sample_seeds: tuple
    wallclock_s: tuple
    ref_wallclock_s: float


@dataclass(frozen=True)
class CompareReport:
    taus: tuple
    errors_tamed: tuple
    errors_bem: tuple
    stderrs_tamed: tuple
    stderrs_bem: tuple
    time_tamed_s: float
    time_bem_s: float
    samples: int
    master_seed: int
    ref_wallclock_s: float


@dataclass(frozen=True)
class BlowupTable:
    scheme: Scheme
    m_values: tuple
    mean_norms: tuple
    samples: int
    master_seed: int


# ---------------------------------------------------------------------------
# streaming coupled-path runner


def _state0(basis: BasisSpec, field: SpectralField, batch: int) -> np.ndarray:
    S = np.empty((batch, 1 + basis.n_modes))
    S[:, 0] = field.mean
    S[:, 1:] = field.coeffs
    return S


def _stepper(plan: ExperimentPlan, basis: BasisSpec, tau, scheme, batch) -> Stepper:
    return Stepper(
        basis,
        tau,
        scheme,
        batch=batch,
        nonlinearity=plan.nonlinearity,
        n_grid=plan.n_grid,
        newton_tol=plan.newton_tol,
        newton_max_iter=plan.newton_max_iter,
    )


class _CoarseRun:
    """A coarse-resolution scheme advanced from block sums of the fine path."""

    def __init__(self, scheme, tau, stepper, state, block):
        self.scheme = scheme
        self.tau = tau
        self.stepper = stepper
        self.S = state
        self.block = block
        self.pending = []
        self.seconds = 0.0

    def consume(self, inc: np.ndarray) -> None:
        """Feed one chunk of fine increments, shape (L, b, P)."""
        L = inc.shape[0]
        if self.block <= L:
            blocks = _chunk_block_sums(inc, self.block)
            t0 = time.perf_counter()
            for j in range(blocks.shape[0]):
                self.stepper.step(self.S, blocks[j])
            self.seconds += time.perf_counter() - t0
        else:
            self.pending.append(_chunk_block_sums(inc, L)[0])
            if len(self.pending) == self.block // L:
                stacked = np.stack(self.pending)
                self.pending.clear()
                block = _chunk_block_sums(stacked, stacked.shape[0])[0]
                t0 = time.perf_counter()
                self.stepper.step(self.S, block)
                self.seconds += time.perf_counter() - t0


def _chunk_block_sums(arr: np.ndarray, block: int) -> np.ndarray:
    # arr (L, ...) -> (L//block, ...), balanced pairwise tree per block;
    # association matches noise.aligned_block_sums element-wise
    nb = arr.shape[0] // block
    out = arr.reshape(nb, block, *arr.shape[1:])
    while out.shape[1] > 1:
        out = out.reshape(nb, out.shape[1] // 2, 2, *arr.shape[1:]).sum(axis=2)
    return out[:, 0]


def _chunk_layout(M_fine: int) -> tuple[int, int]:
    L = min(CHUNK_STEPS, M_fine)
    if M_fine % L != 0:
        raise ValueError(
            f"M_fine={M_fine} is not chunk-alignable; use dyadic step counts"
        )
    return L, M_fine // L


def _temporal_batch(plan: ExperimentPlan, lo: int, hi: int):
    """Squared coupled errors for samples [lo, hi); returns per-(scheme, tau)
    arrays plus stepping times."""
    b = hi - lo
    basis = BasisSpec(plan.dim, plan.N)
    spec = NoiseSpec(plan.noise_kind, basis)
    X0 = initial_field(basis, plan.ic)
    M_fine = plan.M_fine
    L, n_chunks = _chunk_layout(M_fine)
    seeds = [derive_sample_seed(plan.master_seed, s) for s in range(lo, hi)]

    ref = _stepper(plan, basis, plan.tau_ref, Scheme.TAMED_EXP_EULER, b)
    S_ref = _state0(basis, X0, b)
    runs = []
    for scheme in plan.schemes:
        for tau in plan.taus:
            block = M_fine // _steps(plan.T, tau)
            if block & (block - 1):
                raise ValueError(
                    f"refinement factor {block} for tau={tau} is not a power of two"
                )
            runs.append(
                _CoarseRun(
                    scheme, tau, _stepper(plan, basis, tau, scheme, b),
                    _state0(basis, X0, b), block,
                )
            )

    inc = np.zeros((L, b, 1 + basis.n_modes))
    ref_seconds = 0.0
    for c in range(n_chunks):
        for i, seed in enumerate(seeds):
            inc[:, i, 1:] = fine_increment_chunk(spec, plan.T, M_fine, seed, c)
        t0 = time.perf_counter()
        for j in range(L):
            ref.step(S_ref, inc[j])
        ref_seconds += time.perf_counter() - t0
        for run in runs:
            run.consume(inc)

    out = {}
    for run in runs:
        d = run.S - S_ref
        with np.errstate(over="ignore", invalid="ignore"):
            sq = np.einsum("bk,bk->b", d, d)
        out[(run.scheme, run.tau)] = sq
    times = {(run.scheme, run.tau): run.seconds for run in runs}
    return out, times, ref_seconds, seeds


def _spatial_batch(plan: ExperimentPlan, lo: int, hi: int):
    b = hi - lo
    basis_ref = BasisSpec(plan.dim, plan.n_ref)
    spec = NoiseSpec(plan.noise_kind, basis_ref)
    tau = plan.taus[0]
    M = _steps(plan.T, tau)
    L, n_chunks = _chunk_layout(M)
    seeds = [derive_sample_seed(plan.master_seed, s) for s in range(lo, hi)]
    scheme = plan.schemes[0]

    ref = _stepper(plan, basis_ref, tau, scheme, b)
    S_ref = _state0(basis_ref, initial_field(basis_ref, plan.ic), b)
    coarse = []
    for n in plan.n_list:
        basis_n = BasisSpec(plan.dim, n)
        mask = np.concatenate(([True], projection_mask(basis_ref, n)))
        coarse.append(
            (
                n,
                mask,
                _stepper(plan, basis_n, tau, scheme, b),
                _state0(basis_n, initial_field(basis_n, plan.ic), b),
            )
        )

    inc = np.zeros((L, b, 1 + basis_ref.n_modes))
    times = {n: 0.0 for n in plan.n_list}
    ref_seconds = 0.0
    for c in range(n_chunks):
        for i, seed in enumerate(seeds):
            inc[:, i, 1:] = fine_increment_chunk(spec, plan.T, M, seed, c)
        t0 = time.perf_counter()
        for j in range(L):
            ref.step(S_ref, inc[j])
        ref_seconds += time.perf_counter() - t0
        for n, mask, stepper, S_n in coarse:
            sub = np.ascontiguousarray(inc[:, :, mask])
            t0 = time.perf_counter()
            for j in range(L):
                stepper.step(S_n, sub[j])
            times[n] += time.perf_counter() - t0

    out = {}
    for n, mask, _, S_n in coarse:
        d = S_ref.copy()
        d[:, mask] -= S_n
        with np.errstate(over="ignore", invalid="ignore"):
            out[n] = np.einsum("bk,bk->b", d, d)
    return out, times, ref_seconds, seeds


def _batch_spans(samples: int):
    return [(lo, min(lo + BATCH_SAMPLES, samples)) for lo in range(0, samples, BATCH_SAMPLES)]


def _run_batches(fn, plan: ExperimentPlan, workers: int):
    spans = _batch_spans(plan.samples)
    if workers <= 1 or len(spans) == 1:
        return spans, [fn(plan, lo, hi) for lo, hi in spans]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, plan, lo, hi) for lo, hi in spans]
        return spans, [f.result() for f in futures]


def _rms_and_stderr(sq: np.ndarray):
    mean_sq = float(np.sum(sq) / sq.size)
    err = math.sqrt(mean_sq)
    if sq.size > 1 and err > 0 and np.isfinite(mean_sq):
        se_mean = float(np.std(sq, ddof=1)) / math.sqrt(sq.size)
        se = se_mean / (2.0 * err)
    else:
        se = 0.0
    return err, se


def strong_temporal_error(plan: ExperimentPlan, workers: int = 1) -> ErrorReport:
    """Coupled-path RMS error at T for each tau against the tamed fine reference.

    A diverged tamed/backward-Euler sample is a hard error; plain-scheme
    divergences are counted per stepsize and propagate as Inf/NaN.
    """
    if len(plan.schemes) != 1:
        raise ValueError("strong_temporal_error expects exactly one scheme")
    if not plan.taus:
        raise ValueError("plan has no stepsizes")
    scheme = plan.schemes[0]
    spans, results = _run_batches(_temporal_batch, plan, workers)

    sq = {tau: np.empty(plan.samples) for tau in plan.taus}
    times = {tau: 0.0 for tau in plan.taus}
    ref_seconds = 0.0
    seeds: list[int] = []
    for (lo, hi), (out, tms, rs, sds) in zip(spans, results):
        for tau in plan.taus:
            sq[tau][lo:hi] = out[(scheme, tau)]
            times[tau] += tms[(scheme, tau)]
        ref_seconds += rs
        seeds.extend(sds)

    errors, stderrs, diverged = [], [], []
    for tau in plan.taus:
        bad = int(np.count_nonzero(~np.isfinite(sq[tau])))
        if bad and scheme is not Scheme.PLAIN_EXP_EULER:
            raise SolverError(
                f"{scheme.value} run diverged in {bad} samples at tau={tau}"
            )
        diverged.append(bad)
        err, se = _rms_and_stderr(sq[tau])
        errors.append(err)
        stderrs.append(se)

    fit = None
    if len(plan.taus) >= 2 and all(e > 0 for e in errors):
        fit = fit_rate(zip(plan.taus, errors))
    return ErrorReport(
        kind="temporal",
        scheme=scheme,
        h=tuple(plan.taus),
        errors=tuple(errors),
        stderrs=tuple(stderrs),
        diverged=tuple(diverged),
        slope=fit.slope if fit else float("nan"),
        slope_stderr=fit.stderr if fit else float("nan"),
        fit_residual=fit.residual if fit else float("nan"),
        samples=plan.samples,
        master_seed=plan.master_seed,
        sample_seeds=tuple(seeds),
        wallclock_s=tuple(times[tau] for tau in plan.taus),
        ref_wallclock_s=ref_seconds,
    )


def strong_spatial_error(plan: ExperimentPlan, workers: int = 1) -> ErrorReport:
    """Coupled RMS error of truncation levels n_list against N_ref, fitted
    against lambda_N (slope target -gamma/2)."""
    if len(plan.schemes) != 1:
        raise ValueError("strong_spatial_error expects exactly one scheme")
    if len(plan.taus) != 1:
        raise ValueError("spatial studies share a single tau; give one stepsize")
    if not plan.n_list or plan.n_ref is None:
        raise ValueError("plan needs n_list and n_ref for a spatial study")
    scheme = plan.schemes[0]
    spans, results = _run_batches(_spatial_batch, plan, workers)

    sq = {n: np.empty(plan.samples) for n in plan.n_list}
    times = {n: 0.0 for n in plan.n_list}
    ref_seconds = 0.0
    seeds: list[int] = []
    for (lo, hi), (out, tms, rs, sds) in zip(spans, results):
        for n in plan.n_list:
            sq[n][lo:hi] = out[n]
            times[n] += tms[n]
        ref_seconds += rs
        seeds.extend(sds)

    lam_n = [float(np.pi**2 * n**2) for n in plan.n_list]
    errors, stderrs, diverged = [], [], []
    for n in plan.n_list:
        bad = int(np.count_nonzero(~np.isfinite(sq[n])))
        if bad and scheme is not Scheme.PLAIN_EXP_EULER:
            raise SolverError(f"{scheme.value} run diverged in {bad} samples at N={n}")
        diverged.append(bad)
        err, se = _rms_and_stderr(sq[n])
        errors.append(err)
        stderrs.append(se)

    positive = all(e > 0 for e in errors)
    fit = fit_rate(zip(lam_n, errors)) if len(errors) >= 2 and positive else None
    return ErrorReport(
        kind="spatial",
        scheme=scheme,
        h=tuple(lam_n),
        errors=tuple(errors),
        stderrs=tuple(stderrs),
        diverged=tuple(diverged),
        slope=fit.slope if fit else float("nan"),
        slope_stderr=fit.stderr if fit else float("nan"),
        fit_residual=fit.residual if fit else float("nan"),
        samples=plan.samples,
        master_seed=plan.master_seed,
        sample_seeds=tuple(seeds),
        wallclock_s=tuple(times[n] for n in plan.n_list),
        ref_wallclock_s=ref_seconds,
    )


def compare_schemes(plan: ExperimentPlan, workers: int = 1) -> CompareReport:
    """Tamed exponential Euler vs backward Euler on coupled paths, with the
    per-scheme stepping wall-clock (path generation excluded)."""
    wanted = (Scheme.TAMED_EXP_EULER, Scheme.BACKWARD_EULER)
    if set(plan.schemes) != set(wanted):
        plan = replace(plan, schemes=wanted)
    spans, results = _run_batches(_temporal_batch, plan, workers)

    sq = {key: np.empty(plan.samples) for key in
          [(s, t) for s in wanted for t in plan.taus]}
    times = {s: 0.0 for s in wanted}
    ref_seconds = 0.0
    for (lo, hi), (out, tms, rs, _) in zip(spans, results):
        for key in sq:
            sq[key][lo:hi] = out[key]
            times[key[0]] += tms[key]
        ref_seconds += rs

    stats = {}
    for key, arr in sq.items():
        if not np.isfinite(arr).all():
            raise SolverError(f"{key[0].value} run diverged at tau={key[1]}")
        stats[key] = _rms_and_stderr(arr)

    return CompareReport(
        taus=tuple(plan.taus),
        errors_tamed=tuple(stats[(wanted[0], t)][0] for t in plan.taus),
        errors_bem=tuple(stats[(wanted[1], t)][0] for t in plan.taus),
        stderrs_tamed=tuple(stats[(wanted[0], t)][1] for t in plan.taus),
        stderrs_bem=tuple(stats[(wanted[1], t)][1] for t in plan.taus),
        time_tamed_s=times[wanted[0]],
        time_bem_s=times[wanted[1]],
        samples=plan.samples,
        master_seed=plan.master_seed,
        ref_wallclock_s=ref_seconds,
    )


def blowup_table(
    m_list,
    samples: int,
    master_seed: int,
    *,
    scheme: Scheme = Scheme.PLAIN_EXP_EULER,
    dim: int = 1,
    N: int = 100,
    noise_kind: NoiseKind = NoiseKind.TRACE_CLASS_LOG,
    ic: str = "cos_pi_20",
    T: float = 1.0,
    n_grid: Optional[int] = None,
) -> BlowupTable:
    """Mean of ||X_T|| over samples for each step count M.

    Inf/NaN propagate through the average exactly as they arise in the
    arithmetic; nothing is masked.
    """
    basis = BasisSpec(dim, N)
    spec = NoiseSpec(noise_kind, basis)
    X0 = initial_field(basis, ic)
    means = []
    for M in m_list:
        M = int(M)
        norms = np.empty(samples)
        for lo, hi in _batch_spans(samples):
            b = hi - lo
            stepper = Stepper(basis, T / M, scheme, batch=b, n_grid=n_grid)
            S = _state0(basis, X0, b)
            inc = np.zeros((M, b, 1 + basis.n_modes))
            n_chunks = -(-M // CHUNK_STEPS)
            for i, s in enumerate(range(lo, hi)):
                seed = derive_sample_seed(master_seed, M, s)
                for c in range(n_chunks):
                    chunk = fine_increment_chunk(spec, T, M, seed, c)
                    inc[c * CHUNK_STEPS : c * CHUNK_STEPS + chunk.shape[0], i, 1:] = chunk
            for m in range(M):
                stepper.step(S, inc[m])
            with np.errstate(over="ignore", invalid="ignore"):
                norms[lo:hi] = np.sqrt(np.einsum("bk,bk->b", S, S))
        with np.errstate(over="ignore", invalid="ignore"):
            means.append(float(np.mean(norms)))
    return BlowupTable(
        scheme=scheme,
        m_values=tuple(int(m) for m in m_list),
        mean_norms=tuple(means),
        samples=samples,
        master_seed=master_seed,
    )
