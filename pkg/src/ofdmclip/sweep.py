"""Monte Carlo sweeps: paired frames, stop rules, aggregation and output files.

Every frame gets its own generator seeded from ``(master seed, point index,
frame index)``, so a frame's channel, noise and data do not depend on which
thread ran it or on how many frames ran before it.  Frames are processed in
fixed-size batches and the stop rule is only checked between batches, which
keeps the number of frames per point independent of the thread count.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import ConfigError
from .link import OfdmConfig

EXPERIMENTS = {
    "ber_vs_ebn0": "eb_n0_db",
    "ber_vs_p": "P",
    "ber_vs_cr": "clip_ratio",
    "bootstrap": "clip_ratio",
    "simo_cr": "clip_ratio",
    "multiuser_ebn0": "eb_n0_db",
    "chanest_mse": "eb_n0_db",
    "chanest_error": "error_variance",
}
MSE_EXPERIMENTS = ("chanest_mse",)
DEFAULT_TARGET = 200
DEFAULT_MAX_FRAMES = 200_000
MIN_TARGET = 50
BATCH = 8
CSV_HEADER = ("sweep_var", "algorithm", "value", "metric", "errors", "frames", "seconds")


@dataclass(frozen=True)
class SweepSetup:
    """One experiment: a grid over a single variable with everything else fixed.

    ``extras`` carries experiment-specific knobs (antenna count, reserved tone
    count, pilot counts, ...).  For MSE experiments the stop rule is a fixed
    frame count, ``max_frames``.
    """

    experiment: str
    grid: tuple
    base: OfdmConfig = OfdmConfig()
    algorithms: tuple = ()
    target_errors: int = DEFAULT_TARGET
    max_frames: int = DEFAULT_MAX_FRAMES
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        g = np.asarray(self.grid, dtype=float)
        if g.size == 0:
            raise ConfigError("sweep grid must not be empty")
        d = np.diff(g)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigError(f"sweep grid must be strictly monotone, got {list(self.grid)}")
        if self.target_errors < MIN_TARGET:
            raise ConfigError(f"target errors must be at least {MIN_TARGET}, got {self.target_errors}")
        if self.max_frames < 1:
            raise ConfigError("max frames must be positive")
        if not self.algorithms:
            raise ConfigError("no algorithms selected")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 unsigned bits")

    @property
    def sweep_var(self) -> str:
        return EXPERIMENTS[self.experiment]

    @property
    def is_mse(self) -> bool:
        return self.experiment in MSE_EXPERIMENTS

    def config_at(self, value) -> OfdmConfig:
        """Link configuration at one grid value; fails early on infeasible values."""
        var = self.sweep_var
        if var == "error_variance":
            return self.base
        v = int(value) if var == "P" else float(value)
        return self.base.with_(**{var: v})


@dataclass(frozen=True)
class PointRecord:
    sweep_var: str
    algorithm: str
    value: float
    metric: float
    errors: int
    bits: int
    frames: int
    seconds: float
    stop: str


@dataclass(frozen=True)
class SweepResult:
    points: list
    manifest: dict

    def without_timing(self) -> tuple:
        """Everything except wall-clock fields, for reproducibility checks."""
        pts = [tuple(v for k, v in asdict(p).items() if k != "seconds") for p in self.points]
        return pts, json.dumps(self.manifest, sort_keys=True)

    def metric(self, algorithm: str, value) -> float:
        for p in self.points:
            if p.algorithm == algorithm and p.value == value:
                return p.metric
        raise KeyError((algorithm, value))

    def record(self, algorithm: str, value) -> PointRecord:
        for p in self.points:
            if p.algorithm == algorithm and p.value == value:
                return p
        raise KeyError((algorithm, value))


def frame_rng(seed: int, point: int, frame: int) -> np.random.Generator:
    """Independent generator for one frame of one sweep point."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(point), int(frame)]))


FrameFn = Callable[[np.random.Generator], dict]


def _accumulate(acc: dict, res: dict, is_mse: bool) -> None:
    for name, val in res.items():
        if is_mse:
            acc.setdefault(name, [0.0, 0])
            acc[name][0] += float(val)
            acc[name][1] += 1
        else:
            e, b = val
            acc.setdefault(name, [0, 0])
            acc[name][0] += int(e)
            acc[name][1] += int(b)


def run_point(fn: FrameFn, seed: int, point: int, algorithms, target: int, max_frames: int,
              is_mse: bool, threads: int = 1):
    """Run frames of one grid value until the stop rule fires.

    Returns ``(accumulators, frames, stop_reason)``.  ``fn`` maps a frame
    generator to ``{algorithm: (errors, bits)}`` or ``{algorithm: mse}``.
    """
    acc: dict = {}
    frames = 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while frames < max_frames:
            n = min(BATCH, max_frames - frames)
            rngs = [frame_rng(seed, point, frames + k) for k in range(n)]
            results = list(pool.map(fn, rngs)) if pool else [fn(r) for r in rngs]
            for res in results:
                _accumulate(acc, {a: res[a] for a in algorithms}, is_mse)
            frames += n
            if not is_mse and min(acc[a][0] for a in algorithms) >= target:
                return acc, frames, "target_errors"
    finally:
        if pool:
            pool.shutdown()
    return acc, frames, "max_frames"


def run_sweep(setup: SweepSetup, threads: int = 1, progress: Callable[[str], None] | None = None) -> SweepResult:
    """Run every grid value of ``setup`` with paired frames across algorithms."""
    from .experiments import frame_function

    configs = [setup.config_at(v) for v in setup.grid]  # validates before any trial
    fns = [frame_function(setup, cfg, v) for cfg, v in zip(configs, setup.grid)]
    points = []
    stops = []
    for j, (value, fn) in enumerate(zip(setup.grid, fns)):
        t0 = time.perf_counter()
        acc, frames, stop = run_point(fn, setup.seed, j, setup.algorithms, setup.target_errors,
                                      setup.max_frames, setup.is_mse, threads)
        dt = time.perf_counter() - t0
        stops.append(stop)
        for name in setup.algorithms:
            tot, cnt = acc[name]
            if setup.is_mse:
                metric = 10 * math.log10(tot / cnt) if tot > 0 else -math.inf
                errors, bits = 0, 0
            else:
                metric = tot / cnt if cnt else 0.0
                errors, bits = tot, cnt
            points.append(PointRecord(setup.sweep_var, name, value, metric, errors, bits, frames, dt, stop))
        if progress:
            progress(f"{setup.sweep_var}={value}: {frames} frames ({stop})")
    manifest = {
        "experiment": setup.experiment,
        "seed": setup.seed,
        "grid": list(setup.grid),
        "algorithms": list(setup.algorithms),
        "config": asdict(setup.base),
        "extras": dict(setup.extras),
        "stop_rule": {"target_errors": setup.target_errors, "max_frames": setup.max_frames},
        "stop_reasons": stops,
        "version": __version__,
    }
    return SweepResult(points=points, manifest=manifest)


def fmt(x) -> str:
    """Decimal text that parses back to the same double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def points_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in result.points:
        w.writerow([p.sweep_var, p.algorithm, fmt(p.value), fmt(p.metric), fmt(p.errors), fmt(p.frames),
                    fmt(p.seconds)])
    return buf.getvalue()


def parse_points_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    for r in rows:
        for k in ("value", "metric", "seconds"):
            r[k] = float(r[k])
        for k in ("errors", "frames"):
            r[k] = int(r[k])
    return rows


def emit(result: SweepResult, out_dir) -> list[Path]:
    """Write ``points.csv``, ``manifest.json`` and ``plot.svg`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "points.csv": points_csv(result),
            "manifest.json": json.dumps(result.manifest, indent=2, sort_keys=True) + "\n",
            "plot.svg": render_svg(result),
        }
        paths = []
        for name, text in files.items():
            p = out / name
            p.write_text(text, encoding="utf-8")
            paths.append(p)
    except OSError as exc:
        raise OSError(f"cannot write results to {os.fspath(out)}: {exc.strerror or exc}") from exc
    return paths


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf")


def render_svg(result: SweepResult, width: int = 640, height: int = 420) -> str:
    """Line plot of the metric against the sweep variable, one polyline per algorithm.

    Error rates use a logarithmic axis, MSE in dB a linear one.  Zero error
    rates cannot be drawn on a log axis and are left out of their polyline.
    """
    is_mse = result.manifest.get("experiment") in MSE_EXPERIMENTS
    left, right, top, bottom = 70, 150, 20, 50
    pw, ph = width - left - right, height - top - bottom
    algs = list(dict.fromkeys(p.algorithm for p in result.points))
    series = {a: [(p.value, p.metric) for p in result.points if p.algorithm == a] for a in algs}
    ylab = "MSE (dB)" if is_mse else "BER"
    xlab = result.points[0].sweep_var if result.points else ""

    def tf(y):
        return y if is_mse else math.log10(y)

    pts = [(x, tf(y)) for s in series.values() for x, y in s if math.isfinite(y) and (is_mse or y > 0)]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
             f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{xlab}</text>',
             f'<text x="15" y="{top + ph / 2}" text-anchor="middle" font-size="12" '
             f'transform="rotate(-90 15 {top + ph / 2})">{ylab}</text>']
    if pts:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if not is_mse:
            y0, y1 = math.floor(y0), math.ceil(y1)
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1

        def px(x):
            return left + (x - x0) / (x1 - x0) * pw

        def py(y):
            return top + (y1 - y) / (y1 - y0) * ph

        for k in range(5):
            xv = x0 + k * (x1 - x0) / 4
            parts.append(f'<text x="{px(xv):.1f}" y="{top + ph + 15}" text-anchor="middle" '
                         f'font-size="10">{xv:.4g}</text>')
        yt = range(int(y0), int(y1) + 1) if not is_mse else [y0 + k * (y1 - y0) / 4 for k in range(5)]
        for yv in yt:
            lab = f"1e{int(yv)}" if not is_mse else f"{yv:.1f}"
            parts.append(f'<text x="{left - 5}" y="{py(yv) + 3:.1f}" text-anchor="end" font-size="10">{lab}</text>')
        for i, a in enumerate(algs):
            c = _COLORS[i % len(_COLORS)]
            xy = [(px(x), py(tf(y))) for x, y in series[a] if math.isfinite(y) and (is_mse or y > 0)]
            if xy:
                coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in xy)
                parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{coords}"/>')
    for i, a in enumerate(algs):
        c = _COLORS[i % len(_COLORS)]
        y = top + 15 + 18 * i
        parts.append(f'<line x1="{left + pw + 10}" y1="{y}" x2="{left + pw + 30}" y2="{y}" stroke="{c}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{y + 4}" font-size="11">{a}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
