"""Tamed exponential Euler vs fully implicit backward Euler on coupled paths.

Both schemes consume the same Brownian increments and are measured against
the same fine tamed reference, so the error columns are directly comparable.
The explicit scheme needs one nonlinearity evaluation per step; backward
Euler pays several per Newton iteration, which shows in the wall-clock."""

import time

from stochch import ExperimentPlan, NoiseKind, Scheme, compare_schemes

t0 = time.time()
plan = ExperimentPlan(
    taus=tuple(2.0**-j for j in range(9, 14)),
    tau_ref=2.0**-16,
    samples=100,
    master_seed=5,
    N=32,
    noise_kind=NoiseKind.TRACE_CLASS_LOG,
    schemes=(Scheme.TAMED_EXP_EULER, Scheme.BACKWARD_EULER),
)
report = compare_schemes(plan)

print(f"trace-class noise, {plan.samples} samples, reference tau = 2^-16")
print(f"{'tau':>10} {'error (TEEM)':>14} {'error (BEM)':>14}")
for tau, et, eb in zip(report.taus, report.errors_tamed, report.errors_bem):
    print(f"{tau:10.2e} {et:14.5g} {eb:14.5g}")
print(f"\nstepping wall-clock: TEEM {report.time_tamed_s:.2f}s, "
      f"BEM {report.time_bem_s:.2f}s (reference run {report.ref_wallclock_s:.1f}s)")
print(f"total {time.time() - t0:.0f}s")
