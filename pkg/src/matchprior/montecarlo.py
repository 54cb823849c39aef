"""Seeded Monte Carlo harness for type-I error and coverage studies.

Replicate ``i`` draws from ``Generator(PCG64(SeedSequence(master_seed,
spawn_key=(i,))))``, the same stream ``SeedSequence(master_seed).spawn``
hands to its ``i``-th child. Streams therefore depend only on
``(master_seed, i)``, so results do not depend on how replicates are split
across workers; per-method tallies are integer sums.
"""

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .approx import (
    BN,
    FORMATS,
    LOWER,
    LR,
    UPPER,
    credible_interval,
    evaluate_priors,
    fit_null,
    p_values_from_tail,
)
from .errors import MatchPriorError
from .model import ParamPoint, exp_ratio_model, logistic_model
from .numerics import std_normal_cdf
from .prior import BACKWARD, FORWARD, TraceSettings, resolve_prior

LRT = "lrt"

TABLE1_METHODS = ("lrt", "ic-default", "analytic-invpsi", "ic-loglambda",
                  "analytic-invpsilambda")
TABLE2_METHODS = ("lrt", "ic-default", "qfam:2", "qfam:2/5", "qfam:2/11")

# column order of the per-method count vector
_COLS = ("valid", "degenerate", "near_singular", "lr_clamped",
         "bn_1", "bn_2", "lr_1", "lr_2")
_IDX = {c: k for k, c in enumerate(_COLS)}


@dataclass(frozen=True)
class SimConfig:
    model_id: str = "exp-ratio"
    n: int = 10
    reps: int = 1000
    true_params: tuple = (1.0, 1.0)
    psi0: float = None
    alpha: float = 0.05
    methods: tuple = TABLE1_METHODS
    master_seed: int = 20240501
    convention: str = FORWARD
    side: str = LOWER
    rtol: float = 1e-8
    atol: float = 1e-10
    n_panels: int = 128

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.model_id not in ("exp-ratio", "logistic"):
            raise ValueError(f"unknown model {self.model_id!r}")
        if self.convention not in (FORWARD, BACKWARD):
            raise ValueError(f"unknown convention {self.convention!r}")
        if self.side not in (LOWER, UPPER):
            raise ValueError(f"unknown side {self.side!r}")
        object.__setattr__(self, "true_params", tuple(float(v) for v in self.true_params))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.psi0 is None:
            object.__setattr__(self, "psi0", self.true_params[0])
        for name in self.methods:
            if name != LRT:
                resolve_prior(name)

    @property
    def settings(self):
        return TraceSettings(rtol=self.rtol, atol=self.atol, n_panels=self.n_panels,
                             convention=self.convention)


def table1_config(reps=100_000, master_seed=20240501, **kw):
    return SimConfig(model_id="exp-ratio", n=10, reps=reps, true_params=(1.0, 1.0),
                     methods=TABLE1_METHODS, master_seed=master_seed, **kw)


def table2_config(reps=10_000, master_seed=20240501, **kw):
    return SimConfig(model_id="logistic", n=30, reps=reps, true_params=(0.5, -1.0),
                     methods=TABLE2_METHODS, master_seed=master_seed, **kw)


@dataclass
class MethodCounts:
    method: str
    valid: int = 0
    degenerate: int = 0
    near_singular: int = 0
    lr_clamped: int = 0
    rejections: dict = field(default_factory=dict)

    def rate(self, fmt, sided):
        if self.valid == 0:
            return math.nan
        return self.rejections[(fmt, sided)] / self.valid

    def type1_1sided(self, fmt=BN):
        return self.rate(fmt, 1)

    def type1_2sided(self, fmt=BN):
        return self.rate(fmt, 2)


@dataclass
class SimReport:
    config: SimConfig
    methods: list
    wall_time: float = 0.0

    def __getitem__(self, name):
        for mc in self.methods:
            if mc.method == name:
                return mc
        raise KeyError(name)

    def counts(self):
        """Everything except wall time, for equality checks."""
        return [asdict(mc) for mc in self.methods]


def replicate_rng(master_seed, i):
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(i,)))


def draw_replicate(cfg, i):
    """Model and dataset for replicate ``i``."""
    rng = replicate_rng(cfg.master_seed, i)
    truth = ParamPoint(*cfg.true_params)
    if cfg.model_id == "exp-ratio":
        m = exp_ratio_model(cfg.n)
    else:
        m = logistic_model(rng.random(cfg.n))
    return m, m.sampler(truth, cfg.n, rng)


def _reject_flags(tail, side, alpha):
    p1, p2 = p_values_from_tail(tail, side)
    return p1 < alpha, p2 < alpha


def _run_block(cfg, start, stop):
    priors = {name: resolve_prior(name) for name in cfg.methods if name != LRT}
    prior_list = list(priors.values())
    settings = cfg.settings
    counts = np.zeros((len(cfg.methods), len(_COLS)), dtype=np.int64)
    for i in range(start, stop):
        m, data = draw_replicate(cfg, i)
        try:
            nf = fit_null(m, data, cfg.psi0)
        except (MatchPriorError, ArithmeticError):
            counts[:, _IDX["degenerate"]] += 1
            continue
        _, results = evaluate_priors(m, data, cfg.psi0, prior_list, settings, nf)
        for k, name in enumerate(cfg.methods):
            row = counts[k]
            if name == LRT:
                tail = std_normal_cdf(nf.R)
                tails = {BN: tail, LR: tail}
            else:
                res = results[priors[name].name]
                if isinstance(res, Exception):
                    row[_IDX["degenerate"]] += 1
                    continue
                tails = {BN: res.p_bn, LR: res.p_lr}
                row[_IDX["near_singular"]] += res.near_singular
                row[_IDX["lr_clamped"]] += res.lr_clamped
            row[_IDX["valid"]] += 1
            for fmt in FORMATS:
                r1, r2 = _reject_flags(tails[fmt], cfg.side, cfg.alpha)
                row[_IDX[f"{fmt}_1"]] += r1
                row[_IDX[f"{fmt}_2"]] += r2
    return counts


def _blocks(reps, workers):
    n_blocks = max(1, min(reps, 8 * workers))
    edges = np.linspace(0, reps, n_blocks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _map_blocks(fn, cfg, workers, *extra):
    blocks = _blocks(cfg.reps, workers)
    if workers <= 1:
        return [fn(cfg, a, b, *extra) for a, b in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(fn, cfg, a, b, *extra) for a, b in blocks]
        return [f.result() for f in futs]


def run_type1(cfg, workers=1):
    """Rejection counts for every method in ``cfg`` at level ``cfg.alpha``.

    Degenerate replicates (failed fits or traces) are excluded from that
    method's denominator and counted separately.
    """
    t0 = time.perf_counter()
    total = sum(_map_blocks(_run_block, cfg, workers))
    methods = []
    for k, name in enumerate(cfg.methods):
        row = total[k]
        methods.append(MethodCounts(
            method=name,
            valid=int(row[_IDX["valid"]]),
            degenerate=int(row[_IDX["degenerate"]]),
            near_singular=int(row[_IDX["near_singular"]]),
            lr_clamped=int(row[_IDX["lr_clamped"]]),
            rejections={(fmt, s): int(row[_IDX[f"{fmt}_{s}"]])
                        for fmt in FORMATS for s in (1, 2)},
        ))
    return SimReport(cfg, methods, time.perf_counter() - t0)


# --- coverage ---------------------------------------------------------------

@dataclass
class CoverageCounts:
    method: str
    covered: int = 0
    total: int = 0
    degenerate: int = 0

    @property
    def rate(self):
        return self.covered / self.total if self.total else math.nan


def _coverage_block(cfg, start, stop, level, fmt, interval):
    priors = [(name, resolve_prior(name)) for name in cfg.methods if name != LRT]
    out = np.zeros((len(priors), 3), dtype=np.int64)
    truth = cfg.true_params[0]
    settings = cfg.settings
    for i in range(start, stop):
        m, data = draw_replicate(cfg, i)
        for k, (_, pr) in enumerate(priors):
            try:
                lo, hi = interval(m, data, pr, level, fmt, settings)
            except (MatchPriorError, ArithmeticError):
                out[k, 2] += 1
                continue
            out[k, 0] += lo <= truth <= hi
            out[k, 1] += 1
    return out


def run_coverage(cfg, level, fmt=BN, workers=1, interval=credible_interval):
    """Credible-interval coverage of the true psi for each prior method."""
    total = sum(_map_blocks(_coverage_block, cfg, workers, level, fmt, interval))
    names = [name for name in cfg.methods if name != LRT]
    return [CoverageCounts(name, int(r[0]), int(r[1]), int(r[2]))
            for name, r in zip(names, total)]


# --- output -----------------------------------------------------------------

def report_rows(report):
    rows = []
    for mc in report.methods:
        rows.append({
            "method": mc.method,
            "valid": mc.valid,
            "degenerate": mc.degenerate,
            "near_singular": mc.near_singular,
            "lr_clamped": mc.lr_clamped,
            **{f"{fmt}_{s}sided_rejections": mc.rejections[(fmt, s)]
               for fmt in FORMATS for s in (1, 2)},
            **{f"{fmt}_{s}sided_type1": repr(mc.rate(fmt, s))
               for fmt in FORMATS for s in (1, 2)},
        })
    return rows


def report_csv(report):
    buf = io.StringIO()
    rows = report_rows(report)
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def report_table(report):
    """Plain-text table: methods as rows, format x sidedness as columns."""
    cfg = report.config
    head = f"{'':26s}|{'BN format':^17s}|{'LR format':^17s}|"
    sub = f"{'Test':26s}|{'1-sided':>8s}{'2-sided':>9s}|{'1-sided':>8s}{'2-sided':>9s}|"
    lines = [head, sub, "-" * len(sub)]
    for mc in report.methods:
        label = "Likelihood ratio test" if mc.method == LRT else mc.method
        vals = [mc.rate(fmt, s) for fmt in FORMATS for s in (1, 2)]
        lines.append(f"{label:26s}|{vals[0]:8.4f}{vals[1]:9.4f}|{vals[2]:8.4f}{vals[3]:9.4f}|")
    lines.append("")
    lines.append(f"{cfg.model_id}, n={cfg.n}, {cfg.reps} replicates, nominal {cfg.alpha:g}, "
                 f"seed {cfg.master_seed}")
    for mc in report.methods:
        lines.append(f"  {mc.method}: {mc.valid} valid, {mc.degenerate} degenerate, "
                     f"{mc.near_singular} near-singular, {mc.lr_clamped} LR-clamped")
    return "\n".join(lines) + "\n"
