"""Per-phase microbenchmarks of the untrusted-sender transfer.

Each repetition runs one complete transfer with a PhaseTimer attached, then
times the auditor-side detection of sigma and of every part bit on the
received document.  Phases run sequentially on one thread.
"""

from __future__ import annotations

import gc
import statistics
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .crypto import GroupParams, SeededRandomness, group_from_env
from .document import Document, SplitGeometry, random_document, split
from .protocol import Party, Role, untrusted_transfer
from .watermark import DEFAULT_SETTINGS, WatermarkDescriptor, WatermarkSettings, classify, correlation, part_scores

PHASES = ("watermarking", "signatures", "encryption", "oblivious_transfer", "detection")


class PhaseTimer:
    """Accumulates wall-clock seconds per named phase."""

    def __init__(self):
        self.totals: dict[str, float] = defaultdict(float)

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] += time.perf_counter() - t0


@dataclass
class BenchReport:
    n: int
    width: int
    height: int
    alpha: float
    m: int
    group: str
    reps: int
    samples: dict[str, list[float]] = field(default_factory=dict)
    all_detected: bool = True

    def mean(self, phase: str) -> float:
        return statistics.fmean(self.samples[phase])

    def std(self, phase: str) -> float:
        s = self.samples[phase]
        return statistics.stdev(s) if len(s) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "params": {"n": self.n, "width": self.width, "height": self.height, "alpha": self.alpha,
                       "m": self.m, "group": self.group, "reps": self.reps},
            "phases": {p: {"mean_s": self.mean(p), "std_s": self.std(p)} for p in PHASES},
            "all_detected": self.all_detected,
        }


def _one_run(doc: Document, geometry: SplitGeometry, params: GroupParams, settings: WatermarkSettings,
             rand: SeededRandomness) -> tuple[dict[str, float], bool]:
    s = Party("sender", Role.CONSUMER, rand.child("s"))
    r = Party("recipient", Role.CONSUMER, rand.child("r"))
    timer = PhaseTimer()
    res = untrusted_transfer(s, r, geometry, document=doc, params=params, settings=settings,
                             rng=rand.child("run"), timer=timer)
    rec = res.sender_record
    part_cfg = settings.part_config(geometry.part_width, geometry.part_height)
    with timer.phase("detection"):
        score = correlation(res.document, WatermarkDescriptor(rec.sigma.payload(), rec.k1), doc, settings.document)
        bits = [classify(part_scores(p, rec.k2, i, o, part_cfg), part_cfg.threshold)
                for i, (p, o) in enumerate(zip(split(res.document, geometry), split(res.marked, geometry)), 1)]
    ok = score >= settings.document.threshold and [b.bit for b in bits] == res.recipient_record.bits
    return {p: timer.totals.get(p, 0.0) for p in PHASES}, ok


def _timed_run(doc, geometry, params, settings, rand) -> tuple[dict[str, float], bool]:
    gc.collect()
    gc.disable()  # as timeit does: keep collector pauses out of the phase timings
    try:
        return _one_run(doc, geometry, params, settings, rand)
    finally:
        gc.enable()


def bench_configs(configs: list[tuple[int, int, int]], reps: int, params: GroupParams | None = None,
                  settings: WatermarkSettings = DEFAULT_SETTINGS, seed: int = 0,
                  warmup: int = 1) -> list[BenchReport]:
    """Benchmark several (width, height, n) configurations.

    Repetitions are interleaved round-robin across configurations so that slow
    drift of the machine (clock scaling, background load) does not masquerade
    as a difference between configurations.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    if any(n < 1 for _, _, n in configs):
        raise ValueError("number of parts must be positive")
    params = params or group_from_env()
    setups, reports = [], []
    for width, height, n in configs:
        geometry = SplitGeometry.square(width, height, n)
        doc = random_document(np.random.default_rng(seed), width, height)
        rand = SeededRandomness(f"bench/{seed}/{width}x{height}/{n}".encode())
        setups.append((doc, geometry, rand))
        reports.append(BenchReport(n, width, height, settings.document.alpha, settings.document.m, params.mode,
                                   reps, {p: [] for p in PHASES}))
    for k in range(warmup + reps):
        for (doc, geometry, rand), report in zip(setups, reports):
            times, ok = _timed_run(doc, geometry, params, settings, rand.child(str(k)))
            if k < warmup:
                continue
            for p in PHASES:
                report.samples[p].append(times[p])
            report.all_detected &= ok
    return reports


def bench_config(width: int, height: int, n: int, reps: int, params: GroupParams | None = None,
                 settings: WatermarkSettings = DEFAULT_SETTINGS, seed: int = 0, warmup: int = 1) -> BenchReport:
    return bench_configs([(width, height, n)], reps, params, settings, seed, warmup)[0]


def bench_vary_parts(size: int = 512, parts=(16, 64, 256, 1024), reps: int = 50,
                     params: GroupParams | None = None, settings: WatermarkSettings = DEFAULT_SETTINGS,
                     seed: int = 0) -> list[BenchReport]:
    return bench_configs([(size, size, n) for n in parts], reps, params, settings, seed)


def bench_vary_size(n: int = 256, sizes=(256, 512, 1024, 2048), reps: int = 50,
                    params: GroupParams | None = None, settings: WatermarkSettings = DEFAULT_SETTINGS,
                    seed: int = 0) -> list[BenchReport]:
    return bench_configs([(s, s, n) for s in sizes], reps, params, settings, seed)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(x, y) -> LinearFit:
    res = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return LinearFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))


def parts_trends(reports: list[BenchReport]) -> dict[str, LinearFit]:
    """Least-squares fit of mean phase time against n."""
    xs = [r.n for r in reports]
    return {p: linear_fit(xs, [r.mean(p) for r in reports]) for p in PHASES}


def size_ratios(reports: list[BenchReport]) -> dict[str, float]:
    """max/min of mean phase time across the reports."""
    out = {}
    for p in PHASES:
        means = [r.mean(p) for r in reports]
        out[p] = max(means) / min(means) if min(means) > 0 else float("inf")
    return out


def format_table(reports: list[BenchReport]) -> str:
    head = f"{'n':>6} {'size':>11} " + " ".join(f"{p[:12]:>14}" for p in PHASES)
    lines = [head, "-" * len(head)]
    for r in reports:
        cells = " ".join(f"{1e3 * r.mean(p):8.2f}±{1e3 * r.std(p):5.2f}" for p in PHASES)
        lines.append(f"{r.n:>6} {f'{r.width}x{r.height}':>11} {cells}")
    lines.append("(milliseconds, mean±std over reps)")
    return "\n".join(lines)
