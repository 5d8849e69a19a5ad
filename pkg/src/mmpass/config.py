"""Configuration ingestion and scenario building.

Configs are YAML mappings, either flat or organized in sections (the
section names are ignored; keys merge into one namespace).  Every key
is optional: an empty file yields the reference setup of a 100 GHz
carrier in a 3 x 2 mm guide with core index 2.0, guide and air losses
of 0.08 and 0.05 dB/m, 10 W transmit power and a -26 dBW noise floor
in a 10 x 6 x 3 m region with 4 waveguides x 3 elements serving 24
users.

Attenuations are entered in dB/m and converted to Np/m on load
(Np = dB * ln 10 / 10); powers may be given in watts (``power_w``) or
dBW (``power_dbw``); noise is in dBW.  Angles never appear in configs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .scenario import Scenario, make_scenario
from .waveguide import MediumConstants

NP_PER_DB = float(np.log(10.0) / 10.0)


def db_per_m_to_np(value_db: float) -> float:
    """Attenuation unit conversion: exponential field formulas need
    nepers, papers quote dB."""
    return value_db * NP_PER_DB


def dbw_to_watt(value_dbw: float) -> float:
    return 10.0 ** (value_dbw / 10.0)


@dataclass
class ScenarioConfig:
    # region, m
    d_x: float = 10.0
    d_y: float = 6.0
    d_z: float = 3.0
    # array sizes
    num_waveguides: int = 4
    pas_per_waveguide: int = 3
    num_modes: int = 2
    num_users: int = 24
    # medium
    frequency_hz: float = 100e9
    a: float = 3e-3
    b: float = 2e-3
    n_core: float = 2.0
    alpha_w_db: float = 0.08
    alpha_a_db: float = 0.05
    kappa: float = 100.0
    aperture_scale: float = 15.0
    gain_normalization: str = "per-mode"  # or "none"
    # power
    power_w: float = 10.0
    noise_dbw: float = -26.0
    # run control
    seed: int = 1
    schemes: tuple = ("pa-mm", "pi-mm", "dp-mm", "pa-sm", "pi-sm")
    user_mode: str = "uniform"  # or "explicit"
    user_positions: tuple = ()

    @property
    def alpha_w_np(self) -> float:
        return db_per_m_to_np(self.alpha_w_db)

    @property
    def alpha_a_np(self) -> float:
        return db_per_m_to_np(self.alpha_a_db)

    @property
    def noise_w(self) -> float:
        return dbw_to_watt(self.noise_dbw)

    @property
    def power_dbw(self) -> float:
        return 10.0 * np.log10(self.power_w)

    def validate(self) -> "ScenarioConfig":
        positive = ("d_x", "d_y", "d_z", "frequency_hz", "a", "b", "n_core",
                    "kappa", "power_w", "aperture_scale")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config field '{name}' must be positive")
        for name in ("num_waveguides", "pas_per_waveguide", "num_users"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"config field '{name}' must be >= 1")
        if self.num_modes not in (1, 2):
            raise ValueError("config field 'num_modes' must be 1 or 2 "
                             "(TE10 and TE01 are the supported modes)")
        if self.a <= self.b:
            raise ValueError("config fields 'a' and 'b' must satisfy a > b")
        if self.alpha_w_db < 0 or self.alpha_a_db < 0:
            raise ValueError("attenuation coefficients must be >= 0")
        if self.gain_normalization not in ("per-mode", "none"):
            raise ValueError("config field 'gain_normalization' must be "
                             "'per-mode' or 'none'")
        if self.user_mode not in ("uniform", "explicit"):
            raise ValueError("config field 'user_mode' must be 'uniform' "
                             "or 'explicit'")
        if self.user_mode == "explicit" and not self.user_positions:
            raise ValueError("config field 'user_positions' is required "
                             "when user_mode is 'explicit'")
        return self


def _flatten(mapping: dict) -> dict:
    flat = {}
    for key, value in mapping.items():
        if isinstance(value, dict):
            for sub, v in _flatten(value).items():
                if sub in flat:
                    raise ValueError(f"duplicate config field '{sub}'")
                flat[sub] = v
        else:
            if key in flat:
                raise ValueError(f"duplicate config field '{key}'")
            flat[key] = value
    return flat


def load_config(path=None) -> ScenarioConfig:
    """Read a YAML config file; ``None`` or an empty file gives defaults."""
    raw = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config root must be a mapping, got "
                             f"{type(loaded).__name__}")
        raw = _flatten(loaded)

    known = {f.name for f in fields(ScenarioConfig)}
    aliases = {"frequency_ghz": ("frequency_hz", lambda v: float(v) * 1e9),
               "power_dbw": ("power_w", dbw_to_watt)}
    kwargs = {}
    for key, value in raw.items():
        if key in aliases:
            target, conv = aliases[key]
            if target in kwargs or target in raw:
                raise ValueError(f"config field '{key}' conflicts with "
                                 f"'{target}'")
            kwargs[target] = conv(value)
        elif key in known:
            kwargs[key] = value
        else:
            raise ValueError(f"unknown config field '{key}'")
    if "schemes" in kwargs:
        kwargs["schemes"] = tuple(str(s) for s in kwargs["schemes"])
    if "user_positions" in kwargs:
        kwargs["user_positions"] = tuple(tuple(float(c) for c in p)
                                         for p in kwargs["user_positions"])
    for name in ("num_waveguides", "pas_per_waveguide", "num_modes",
                 "num_users", "seed"):
        if name in kwargs:
            kwargs[name] = int(kwargs[name])
    return ScenarioConfig(**kwargs).validate()


def config_hash(cfg: ScenarioConfig) -> str:
    """Short deterministic digest identifying a configuration."""
    payload = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def draw_users(cfg: ScenarioConfig, rng=None) -> np.ndarray:
    """User positions on the floor plane, uniform over the region or as
    listed in the config."""
    if cfg.user_mode == "explicit":
        pts = np.asarray(cfg.user_positions, dtype=float)
        if pts.shape[1] == 2:
            pts = np.column_stack([pts, np.zeros(len(pts))])
        return pts
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    xy = rng.uniform([0.0, 0.0], [cfg.d_x, cfg.d_y],
                     size=(cfg.num_users, 2))
    return np.column_stack([xy, np.zeros(cfg.num_users)])


def build_scenario(cfg: ScenarioConfig, users=None, rng=None) -> Scenario:
    """Construct the runtime scenario for a validated config."""
    cfg.validate()
    med = MediumConstants(frequency=cfg.frequency_hz, n_core=cfg.n_core)
    if users is None:
        users = draw_users(cfg, rng)
    return make_scenario(
        med, region=(cfg.d_x, cfg.d_y, cfg.d_z),
        num_waveguides=cfg.num_waveguides, num_pas=cfg.pas_per_waveguide,
        num_modes=cfg.num_modes, users=users, power=cfg.power_w,
        noise_w=cfg.noise_w, alpha_w=cfg.alpha_w_np, alpha_a=cfg.alpha_a_np,
        a=cfg.a, b=cfg.b, kappa=cfg.kappa, aperture_scale=cfg.aperture_scale,
        normalize_gains=(cfg.gain_normalization == "per-mode"))
