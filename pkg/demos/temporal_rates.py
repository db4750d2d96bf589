"""Strong temporal convergence rates of the tamed exponential Euler method.

Endpoint mean-square errors at stepsizes fine enough for the asymptotic
regime (tau = 2^-9 .. 2^-12 against a 2^-16 reference), at a truncation level
and sample count that run on a laptop in about half a minute.

Expected slopes: about 1/2 for the trace-class spectrum, about 3/8 for white
noise.  Note the transfer-function effect visible when stepsizes are too
coarse: every noisy mode k contributes its full content q_k/(2 lambda_k^2)
to the error until tau lambda_k^2 ~ 1, so the error curve flattens above
tau ~ 2^-10 for the log-decay spectra (the lowest noisy mode is k = 2).
"""

import time

from stochch import ExperimentPlan, NoiseKind, strong_temporal_error

TAUS = tuple(2.0**-j for j in range(9, 13))

for kind, label in [
    (NoiseKind.TRACE_CLASS_LOG, "trace-class  q_i = 1/(i ln^2 i)"),
    (NoiseKind.WHITE, "white        q_i = 1"),
]:
    t0 = time.time()
    plan = ExperimentPlan(
        taus=TAUS,
        tau_ref=2.0**-16,
        samples=48,
        master_seed=1,
        N=32,
        noise_kind=kind,
    )
    report = strong_temporal_error(plan)
    print(f"\n{label}")
    print(f"{'tau':>10} {'rms error':>12} {'stderr':>10}")
    for tau, err, se in zip(report.h, report.errors, report.stderrs):
        print(f"{tau:10.2e} {err:12.5g} {se:10.2g}")
    print(
        f"fitted slope {report.slope:.3f} +- {report.slope_stderr:.3f}"
        f"   ({time.time() - t0:.0f}s, {plan.samples} samples)"
    )

print(
    "\nsmooth noise (q_i = 1/(i^5 ln^2 i)) needs stepsizes below the mode-2"
    "\ndesaturation scale 2^-10.6 before its order-1 decay shows; at the"
    "\nstepsizes above it still sits on the saturation plateau."
)
