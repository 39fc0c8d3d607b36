"""Experiment configuration and run manifests.

Configs are JSON objects with nested sections.  Every key is optional: an
empty file (or ``{}``) gives the canonical jamming scenario, namely
psi1/psi2 imaging at pi/4, pi/4 against the omega1 intruder at r = 0.5,
n = 1e5 photons and 1e4 dark counts per image on a 34 x 34 grid.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import polarization as pol
from .detection import NoiseModel, SearchSettings, TestParams
from .errors import InvalidArgumentError

ENV_VAR = "ANTIJAM_CONFIG"

# Named legitimate pairs: entangled, one entangled plus one separable, separable.
NAMED_PAIRS = {
    "entangled": ("psi1", "psi2"),
    "mixed": ("psi1", "omega1"),
    "classical": ("omega1", "omega2"),
}


def resolve_state(spec):
    """A canonical state name or an explicit [mu_x, mu_y, mu_z] triple."""
    if isinstance(spec, str):
        states = pol.canonical_states()
        if spec not in states:
            raise InvalidArgumentError(f"unknown state {spec!r}; choose from {sorted(states)} or give [mu_x, mu_y, mu_z]")
        return states[spec]
    try:
        mu = [float(x) for x in spec]
    except TypeError:
        raise InvalidArgumentError(f"state must be a name or a list of three numbers, got {spec!r}") from None
    if len(mu) != 3:
        raise InvalidArgumentError(f"Bell-diagonal state needs three correlations, got {len(mu)}")
    return pol.bell_diagonal_state(pol.BellDiagonalParams(*mu))


def resolve_pair(spec):
    """Returns (name, rho1, rho2)."""
    if isinstance(spec, str):
        if spec not in NAMED_PAIRS:
            raise InvalidArgumentError(f"unknown pair {spec!r}; choose from {sorted(NAMED_PAIRS)}")
        a, b = NAMED_PAIRS[spec]
        return spec, resolve_state(a), resolve_state(b)
    if isinstance(spec, dict):
        unknown = set(spec) - {"name", "rho1", "rho2"}
        if unknown or "rho1" not in spec or "rho2" not in spec:
            raise InvalidArgumentError(f"explicit pair needs rho1 and rho2 (and optional name), got {sorted(spec)}")
        return str(spec.get("name", "custom")), resolve_state(spec["rho1"]), resolve_state(spec["rho2"])
    raise InvalidArgumentError(f"pair must be a name or an object with rho1/rho2, got {spec!r}")


def _default_levels():
    return [round(float(x), 12) for x in np.linspace(0.0, 1.0, 21)]


@dataclass
class SceneSection:
    width: int = 34
    height: int = 34
    photons: float = 1e5
    dark_total: float = 1e4
    mask_true: str | None = None
    mask_false: str | None = None


@dataclass
class IntruderSection:
    state: object = "omega1"
    r: float = 0.5
    brightness: list = field(default_factory=lambda: [1.0, 1.0])


@dataclass
class AnalyzeSection:
    expected_visibility: float = 1.0
    # visibility under the alternative hypothesis; fixes the test's design d
    alternative_visibility: float = 0.5
    region: str = "overlap"
    background: str | None = "object_free"
    estimate_weight: bool = False
    weight_region: str = "t_only"


@dataclass
class WorstCaseSection:
    level: float = 0.1
    single_photon: bool = False
    r: float = 0.5


@dataclass
class ExperimentConfig:
    pair: object = "entangled"
    pairs: list = field(default_factory=lambda: list(NAMED_PAIRS))
    angles: list = field(default_factory=lambda: [math.pi / 4, math.pi / 4])
    intruder: IntruderSection = field(default_factory=IntruderSection)
    sigma: float = 0.1
    trials: int = 1
    lam: float = 1.0
    prior: float = 0.5
    levels: list = field(default_factory=_default_levels)
    search: dict = field(default_factory=dict)
    scene: SceneSection = field(default_factory=SceneSection)
    analyze: AnalyzeSection = field(default_factory=AnalyzeSection)
    worst_case: WorstCaseSection = field(default_factory=WorstCaseSection)
    seed: int = 0
    out: str = "antijam-out"
    png: bool = False
    base_dir: str = field(default=".", repr=False)

    _SECTIONS = {"intruder": IntruderSection, "scene": SceneSection,
                 "analyze": AnalyzeSection, "worst_case": WorstCaseSection}

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise InvalidArgumentError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = set(data) - names
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            section = cls._SECTIONS.get(key)
            if section is not None:
                if not isinstance(value, dict):
                    raise InvalidArgumentError(f"config section {key!r} must be an object")
                allowed = {f.name for f in dataclasses.fields(section)}
                bad = set(value) - allowed
                if bad:
                    raise InvalidArgumentError(f"unknown keys in {key!r}: {sorted(bad)}")
                value = section(**value)
            kwargs[key] = value
        cfg = cls(**kwargs, base_dir=str(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        data = json.loads(text) if text.strip() else {}
        return cls.from_dict(data, base_dir=Path(path).resolve().parent)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("base_dir")
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # --- derived objects --------------------------------------------------

    def validate(self) -> None:
        self.noise()
        self.test_params()
        self.search_settings()
        self.analyzer()
        resolve_pair(self.pair)
        for p in self.pairs:
            resolve_pair(p)
        resolve_state(self.intruder.state)
        if not 0.0 <= float(self.intruder.r) <= 1.0:
            raise InvalidArgumentError(f"intruder.r must lie in [0, 1], got {self.intruder.r}")
        if any(not 0.0 <= float(x) <= 1.0 for x in self.levels):
            raise InvalidArgumentError("levels must lie in [0, 1]")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidArgumentError(f"seed must be a non-negative integer, got {self.seed}")
        for name in ("mask_true", "mask_false"):
            path = getattr(self.scene, name)
            if path is not None and not self.resolve_path(path).is_file():
                raise InvalidArgumentError(f"scene.{name}: file not found: {path}")
        for v in (self.analyze.expected_visibility, self.analyze.alternative_visibility):
            if not 0.0 <= float(v) <= 1.0:
                raise InvalidArgumentError(f"visibilities must lie in [0, 1], got {v}")

    def resolve_path(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def noise(self) -> NoiseModel:
        return NoiseModel(float(self.sigma), int(self.trials))

    def test_params(self) -> TestParams:
        return TestParams(float(self.lam), float(self.prior))

    def search_settings(self, threads: int | None = None) -> SearchSettings:
        known = {f.name for f in dataclasses.fields(SearchSettings)}
        bad = set(self.search) - known
        if bad:
            raise InvalidArgumentError(f"unknown search keys: {sorted(bad)}")
        opts = dict(self.search)
        if threads is not None:
            opts["threads"] = threads
        return SearchSettings(**opts)

    def analyzer(self) -> pol.AnalyzerConfig:
        if len(self.angles) != 2:
            raise InvalidArgumentError(f"angles must hold two values, got {self.angles}")
        return pol.AnalyzerConfig(tuple(float(a) for a in self.angles))


def config_digest(text: str) -> str:
    """SHA-256 of the config text with line endings normalized."""
    return hashlib.sha256(text.replace("\r\n", "\n").encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_digest: str
    version: str = __version__
    seed: int = 0
    wall_clock_s: float = 0.0
    started: str = ""
    outputs: dict = field(default_factory=dict)

    def add_output(self, path) -> None:
        self.outputs[Path(path).name] = file_sha256(path)

    def dumps(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"


def start_manifest(command: str, config_text: str, seed: int) -> tuple[RunManifest, float]:
    stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return RunManifest(command, config_digest(config_text), seed=int(seed), started=stamp), time.perf_counter()


def default_config_path() -> str | None:
    return os.environ.get(ENV_VAR) or None
