"""Flat sectioned key-value scenario configs."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

SCENARIOS = ("fig1", "fig2", "fig5", "two_timescale", "link", "unsync_queues", "custom")
RNGS = {
    "pcg64": np.random.PCG64,
    "philox": np.random.Philox,
    "sfc64": np.random.SFC64,
    "mt19937": np.random.MT19937,
}


class ConfigError(ValueError):
    """Config rejected before any run; the message names the violated condition."""


def make_rng(name: str, seed: int) -> np.random.Generator:
    try:
        return np.random.Generator(RNGS[name.lower()](seed))
    except KeyError:
        raise ConfigError(f"unknown rng {name!r}; choose from {sorted(RNGS)}") from None


@dataclass
class ScenarioConfig:
    scenario: str
    steps: int
    seed: int = 0
    rng: str = "pcg64"
    sections: dict = field(default_factory=dict)
    out_dir: str = "out"
    fmt: str = "csv"
    plots: bool = True
    source: Optional[str] = None

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def get(self, section: str, key: str, default=None):
        return self.section(section).get(key, default)

    def get_float(self, section: str, key: str, default=None) -> Optional[float]:
        v = self.get(section, key)
        if v is None or v == "":
            return default
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {v!r}") from None

    def get_int(self, section: str, key: str, default=None) -> Optional[int]:
        v = self.get_float(section, key)
        if v is None:
            return default
        if v != int(v):
            raise ConfigError(f"[{section}] {key} must be an integer, got {v}")
        return int(v)

    def get_vector(self, section: str, key: str, default=None) -> Optional[np.ndarray]:
        v = self.get(section, key)
        if v is None or v == "":
            return None if default is None else np.asarray(default, dtype=float)
        return parse_vector(v, f"[{section}] {key}")

    def get_matrix(self, section: str, key: str) -> Optional[np.ndarray]:
        v = self.get(section, key)
        if v is None or v == "":
            return None
        rows = [parse_vector(r, f"[{section}] {key}") for r in v.split(";")]
        if len({len(r) for r in rows}) != 1:
            raise ConfigError(f"[{section}] {key}: ragged matrix rows")
        return np.vstack(rows)

    def get_bool(self, section: str, key: str, default: bool = False) -> bool:
        v = self.get(section, key)
        if v is None or v == "":
            return default
        return str(v).strip().lower() in ("1", "true", "yes", "on")

    def rng_for(self, offset: int = 0) -> np.random.Generator:
        return make_rng(self.rng, self.seed + offset)


def parse_vector(text: str, where: str = "value") -> np.ndarray:
    try:
        return np.array([float(t) for t in text.replace(",", " ").split()], dtype=float)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as numbers") from None


def parse_blocks(text: str) -> list[tuple[int, ...]]:
    return [tuple(int(t) for t in part.replace(",", " ").split()) for part in text.split(";") if part.strip()]


def load_config(path: str | Path, overrides: Optional[dict] = None) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    p = Path(path)
    try:
        with p.open() as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {p}: {exc}") from exc
    sections = {s: dict(cp[s]) for s in cp.sections()}
    return from_sections(sections, overrides, source=str(p))


def from_sections(sections: dict, overrides: Optional[dict] = None,
                  source: Optional[str] = None) -> ScenarioConfig:
    sc = sections.get("scenario", {})
    if "id" not in sc:
        raise ConfigError("[scenario] id is required")
    out = sections.get("output", {})
    cfg = ScenarioConfig(
        scenario=sc["id"].strip(),
        steps=0,
        rng=sc.get("rng", "pcg64").strip(),
        sections=sections,
        out_dir=out.get("dir", "out"),
        fmt=out.get("format", "csv"),
        source=source,
    )
    cfg.steps = cfg.get_int("scenario", "steps", 0) or default_steps(cfg.scenario)
    cfg.seed = cfg.get_int("scenario", "seed", 0)
    cfg.plots = cfg.get_bool("output", "plots", True)
    for k, v in (overrides or {}).items():
        if v is not None:
            setattr(cfg, k, v)
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; choose from {SCENARIOS}")
    if cfg.fmt not in ("csv", "jsonlines"):
        raise ConfigError(f"unknown output format {cfg.fmt!r}")
    if cfg.steps < 0:
        raise ConfigError("steps must be nonnegative")
    make_rng(cfg.rng, cfg.seed)
    return cfg


def default_steps(scenario: str) -> int:
    return {"link": 1000, "unsync_queues": 5000, "custom": 1000}.get(scenario, 1000)


def builtin_config(scenario: str, **overrides) -> ScenarioConfig:
    return from_sections({"scenario": {"id": scenario}}, overrides)
