"""Compare the compiled and pure-Python characteristic tracers.

Times ``char_trace`` on its own and a full tail evaluation (``tail_at``) for
both backends, checks that they return the same numbers, and prints the
speed-up. Run from the repository root::

    python benchmarks/bench_kernels.py --repeat 5
"""

import argparse
import statistics
import time

import numpy as np

from matchprior import kernels
from matchprior.approx import tail_at
from matchprior.model import ParamPoint, logistic_model
from matchprior.prior import TraceSettings, resolve_prior

CASES = {
    # name: (kernel code, covariates, psi_star, lam_start, psi_anchor)
    "logistic n=30": ("logistic", np.random.default_rng(1).random(30), 1.2, -0.6, -0.3),
    "logistic n=100": ("logistic", np.random.default_rng(2).random(100), 1.2, -0.6, -0.3),
    "exp-ratio": ("exp_ratio", np.empty(0), 2.0, 1.3, 0.5),
}


def best_of(fn, repeat, number):
    """Median seconds per call over ``repeat`` rounds of ``number`` calls."""
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        times.append((time.perf_counter() - t0) / number)
    return statistics.median(times)


def bench_trace(backends, repeat, number, rtol, atol, panels):
    rows = []
    for label, (code, x, psi_star, lam, anchor) in CASES.items():
        timings, outputs = {}, {}
        for name, mod in backends.items():
            for backward in (True, False):
                args = (code, x, psi_star, lam, anchor, rtol, atol, panels, backward)
                outputs[name, backward] = mod.char_trace(*args)
            args = (code, x, psi_star, lam, anchor, rtol, atol, panels, True)
            timings[name] = best_of(lambda: mod.char_trace(*args), repeat, number)
        rows.append((f"char_trace {label}", timings, _max_gap(outputs, backends)))
    return rows


def bench_tail(backends, repeat, number):
    rng = np.random.default_rng(3)
    x = rng.random(30)
    m = logistic_model(x)
    data = m.sampler(ParamPoint(0.5, -1.0), 30, rng)
    ic = resolve_prior("qfam:2/5")
    timings, outputs = {}, {}
    for name in backends:
        st = TraceSettings(backend=name)
        outputs[name, True] = (tail_at(m, data, 0.5, ic, st).p_bn,)
        timings[name] = best_of(lambda: tail_at(m, data, 0.5, ic, st), repeat, number)
    return [("tail_at logistic n=30", timings, _max_gap(outputs, backends))]


def _max_gap(outputs, backends):
    if len(backends) < 2:
        return 0.0
    gap = 0.0
    for (name, flag), vals in outputs.items():
        if name == "cython":
            ref = outputs["python", flag]
            gap = max(gap, max(abs(float(a) - float(b)) for a, b in zip(vals[:2], ref[:2])))
    return gap


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20, help="calls per timing round")
    ap.add_argument("--rtol", type=float, default=1e-8)
    ap.add_argument("--atol", type=float, default=1e-10)
    ap.add_argument("--panels", type=int, default=128)
    args = ap.parse_args(argv)

    backends = {"python": kernels.get_backend("python")}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled kernels not built; timing the Python backend only")

    rows = bench_trace(backends, args.repeat, args.number, args.rtol, args.atol, args.panels)
    rows += bench_tail(backends, args.repeat, max(1, args.number // 4))

    print(f"{'case':28s}{'python ms':>12s}{'cython ms':>12s}{'speed-up':>10s}{'max |diff|':>12s}")
    for label, t, gap in rows:
        py_ms = 1e3 * t["python"]
        if "cython" in t:
            cy_ms = 1e3 * t["cython"]
            print(f"{label:28s}{py_ms:12.3f}{cy_ms:12.3f}{py_ms / cy_ms:9.1f}x{gap:12.1e}")
        else:
            print(f"{label:28s}{py_ms:12.3f}{'-':>12s}{'-':>10s}{'-':>12s}")


if __name__ == "__main__":
    main()
