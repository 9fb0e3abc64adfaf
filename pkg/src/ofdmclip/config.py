"""TOML experiment configuration.

A file may hold one table per subcommand plus an optional ``[link]`` table of
link parameters shared by all of them::

    seed = 7

    [link]
    N = 512

    [cr-sweep]
    grid = [1.4, 1.61, 1.8, 2.0]
    eb_n0_db = 27
    algorithms = ["none", "oracle", "wpa", "plain"]
    max_frames = 4000

Keys of a subcommand table are link parameters (any ``OfdmConfig`` field),
run settings (``grid``, ``algorithms``, ``seed``, ``target_errors``,
``max_frames``, ``threads``) or experiment knobs such as ``L`` or ``P_u``.
Every error names the offending line.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, fields
from pathlib import Path

import tomli

from .errors import ConfigError
from .experiments import EXTRA_KEYS, check_algorithms, default_algorithms
from .link import OfdmConfig
from .sweep import DEFAULT_MAX_FRAMES, DEFAULT_TARGET, SweepSetup

SUBCOMMANDS = {
    "ber-sweep": "ber_vs_ebn0",
    "rc-sweep": "ber_vs_p",
    "cr-sweep": "ber_vs_cr",
    "bootstrap": "bootstrap",
    "simo": "simo_cr",
    "multiuser": "multiuser_ebn0",
    "chanest": "chanest_mse",
    "chanest-error": "chanest_error",
}

DEFAULT_GRIDS = {
    "ber_vs_ebn0": (15.0, 18.0, 21.0, 24.0, 27.0),
    "ber_vs_p": (75, 100, 125, 150, 175),
    "ber_vs_cr": (1.4, 1.61, 1.8, 2.0),
    "bootstrap": (1.4, 1.61, 1.8),
    "simo_cr": (1.4, 1.61, 1.8, 2.0),
    "multiuser_ebn0": (21.0, 24.0, 27.0, 30.0),
    "chanest_mse": (10.0, 20.0, 30.0, 40.0),
    "chanest_error": (0.0, 1e-4, 1e-3, 1e-2),
}

DEFAULT_LINK = {
    "simo_cr": {"P": 77},
    "chanest_mse": {"N": 256, "clip_ratio": 1.73},
    "chanest_error": {"clip_ratio": 1.62, "eb_n0_db": 20.0},
}

# channel estimation curves average a fixed number of frames
DEFAULT_MSE_FRAMES = 500

RUN_KEYS = ("grid", "algorithms", "seed", "target_errors", "max_frames", "threads")
# the link seed always equals the master seed
LINK_KEYS = tuple(f.name for f in fields(OfdmConfig) if f.name != "seed")


@dataclass(frozen=True)
class RunSettings:
    setup: SweepSetup
    threads: int


def _line_of(text: str, key: str, table: str | None) -> int | None:
    """1-based line of ``key = ...`` inside ``[table]`` (top level if ``None``)."""
    current = None
    pat = re.compile(r"^\s*\[\s*([^\]]+?)\s*\]\s*(#.*)?$")
    kpat = re.compile(r'^\s*"?' + re.escape(key) + r'"?\s*=')
    for i, line in enumerate(text.splitlines(), start=1):
        m = pat.match(line)
        if m:
            current = m.group(1).strip('"')
            continue
        if current == table and kpat.match(line):
            return i
    return None


def _where(path, text, key, table) -> str:
    line = _line_of(text, key, table)
    return f"{path}:{line}" if line else f"{path}"


def load_file(path) -> tuple[dict, str]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc.strerror}") from None
    try:
        return tomli.loads(text), text
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = m.group(1) if m else str(max(text.count("\n"), 1))
        raise ConfigError(f"{p}:{line}: invalid TOML: {exc}") from None


def build_settings(subcommand: str, data: dict | None = None, text: str = "", path="<config>",
                   overrides: dict | None = None) -> RunSettings:
    """Merge defaults, the config file and command-line overrides into a setup."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    exp = SUBCOMMANDS[subcommand]
    data = data or {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    link = dict(DEFAULT_LINK.get(exp, {}))
    link_at: dict = {}
    run: dict = {}
    extras = dict(EXTRA_KEYS.get(exp, {}))

    def take(table_name, table):
        for key, val in table.items():
            where = _where(path, text, key, table_name)
            if isinstance(val, dict):
                if table_name is None:
                    raise ConfigError(f"{where}: unknown table [{key}]")
                raise ConfigError(f"{where}: nested table {key!r} not allowed here")
            if key in LINK_KEYS:
                link[key] = val
                link_at[key] = where
            elif key in RUN_KEYS:
                run[key] = (val, where)
            elif key in EXTRA_KEYS.get(exp, {}):
                extras[key] = val
            else:
                raise ConfigError(f"{where}: unknown key {key!r} for {subcommand}")

    top = {k: v for k, v in data.items() if not isinstance(v, dict)}
    for k in top:
        if k not in RUN_KEYS:
            raise ConfigError(f"{_where(path, text, k, None)}: unknown top-level key {k!r}")
    take(None, top)
    for name in data:
        if isinstance(data[name], dict) and name != "link" and name not in SUBCOMMANDS:
            raise ConfigError(f"{path}: unknown table [{name}]")
    if isinstance(data.get("link"), dict):
        for key in data["link"]:
            if key not in LINK_KEYS:
                raise ConfigError(f"{_where(path, text, key, 'link')}: unknown link parameter {key!r}")
            link[key] = data["link"][key]
            link_at[key] = _where(path, text, key, "link")
    if isinstance(data.get(subcommand), dict):
        take(subcommand, data[subcommand])

    def run_value(key, default):
        if key in overrides:
            return overrides[key], "command line"
        if key in run:
            return run[key]
        return default, None

    try:
        base = OfdmConfig(**link)
    except (TypeError, ValueError) as exc:
        # blame the first key that fails on its own, else the whole file
        loc = str(path)
        for key, val in link.items():
            try:
                OfdmConfig(**{key: val})
            except (TypeError, ValueError):
                loc = link_at.get(key, loc)
                break
        raise ConfigError(f"{loc}: bad link parameters: {exc}") from None

    grid, gw = run_value("grid", DEFAULT_GRIDS[exp])
    algs, aw = run_value("algorithms", default_algorithms(exp))
    if isinstance(algs, str):
        algs = [a.strip() for a in algs.split(",") if a.strip()]
    seed, sw = run_value("seed", 0)
    target, tw = run_value("target_errors", DEFAULT_TARGET)
    default_frames = DEFAULT_MSE_FRAMES if exp == "chanest_mse" else DEFAULT_MAX_FRAMES
    max_frames, mw = run_value("max_frames", default_frames)
    threads, thw = run_value("threads", 1)

    def need_int(val, key, where):
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{where or path}: {key} must be an integer, got {val!r}")
        return val

    for val, key, where in ((seed, "seed", sw), (target, "target_errors", tw), (max_frames, "max_frames", mw),
                            (threads, "threads", thw)):
        need_int(val, key, where)
    base = base.with_(seed=seed)
    if threads < 1:
        raise ConfigError(f"{thw or path}: threads must be positive")
    if not isinstance(grid, (list, tuple)) or not all(isinstance(g, (int, float)) for g in grid):
        raise ConfigError(f"{gw or path}: grid must be a list of numbers")
    try:
        algs = check_algorithms(exp, algs)
    except ConfigError as exc:
        raise ConfigError(f"{aw or path}: {exc}") from None
    try:
        setup = SweepSetup(experiment=exp, grid=tuple(grid), base=base, algorithms=algs,
                         target_errors=target, max_frames=max_frames, seed=seed, extras=extras)
    except ConfigError as exc:
        msg = str(exc)
        loc = next((w for word, w in (("grid", gw), ("target", tw), ("max frames", mw), ("seed", sw))
                    if word in msg), None)
        raise ConfigError(f"{loc or path}: {exc}") from None
    try:
        for v in setup.grid:
            setup.config_at(v)
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{gw or path}: grid value not usable: {exc}") from None
    return RunSettings(setup=setup, threads=threads)
