"""Scenario files: everything needed to reproduce a simulation run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import DerFleet, default_weights
from .errors import InvalidFeeder
from .feeder import FeederModel, load_feeder
from .simulate import ScenarioEvent


@dataclass
class EstimatorConfig:
    enabled: bool = True
    window_size: int = 60          # snapshots held (m + 1)
    gamma: float = 1.0
    rcond: float = 1e-8
    estimate_every: int = 1


@dataclass
class ControllerConfig:
    enabled: bool = False
    mode: str = "data-driven"      # or "frozen-model"
    beta1: float = 1e5
    beta2: float = 1e5
    v_min: float = 0.95            # magnitude bounds the controller regulates to
    v_max: float = 1.05

    def __post_init__(self):
        if self.mode not in ("data-driven", "frozen-model"):
            raise ValueError(f"unknown controller mode {self.mode!r}")


@dataclass
class LoadConfig:
    scale: float = 1.0
    jitter_std: float = 0.25
    anchor_spacing: int = 300
    anchor_std: float = 0.03
    scale_range: tuple | None = None   # per-run uniform redraw for Monte Carlo


@dataclass
class Scenario:
    feeder_path: str
    horizon: int
    seed: int = 0
    true_config: str = "0"
    v0: float = 1.0                    # squared substation voltage
    snr_db: float | None = None
    events: list = field(default_factory=list)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    fleet: DerFleet | None = None
    load: LoadConfig = field(default_factory=LoadConfig)

    def with_seed(self, seed: int, rescale=None) -> "Scenario":
        """Copy with a different seed (and optional load-scale redraw)."""
        load = LoadConfig(**vars(self.load))
        if rescale is not None:
            load.scale = rescale
        return Scenario(
            feeder_path=self.feeder_path, horizon=self.horizon, seed=seed,
            true_config=self.true_config, v0=self.v0, snr_db=self.snr_db,
            events=list(self.events), estimator=self.estimator,
            controller=self.controller, fleet=self.fleet, load=load,
        )


def _parse_fleet(doc) -> DerFleet | None:
    ders = doc.get("ders", [])
    if not ders:
        return None
    n = len(ders)
    w_default = default_weights(n)
    return DerFleet(
        buses=np.array([int(d["bus"]) for d in ders]),
        p_min=np.array([float(d.get("p_min", 0.0)) for d in ders]),
        p_max=np.array([float(d.get("p_max", 0.0)) for d in ders]),
        q_min=np.array([float(d.get("q_min", 0.0)) for d in ders]),
        q_max=np.array([float(d.get("q_max", 0.0)) for d in ders]),
        wp=np.array([float(d.get("wp", w_default[i])) for i, d in enumerate(ders)]),
        wq=np.array([float(d.get("wq", w_default[i])) for i, d in enumerate(ders)]),
    )


def load_fleet(path) -> DerFleet | None:
    with open(path) as fh:
        return _parse_fleet(json.load(fh))


def load_scenario(path) -> Scenario:
    """Parse a scenario JSON file; relative feeder paths resolve next to it."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    try:
        events = []
        for ev in doc.get("events", []):
            events.append(ScenarioEvent(
                t=int(ev["t"]), kind=str(ev["kind"]),
                config=str(ev["config"]) if "config" in ev else None,
                factor=float(ev["factor"]) if "factor" in ev else None,
            ))
        est = doc.get("estimator", {})
        ctl = doc.get("controller", {})
        load = doc.get("load", {})
        noise = doc.get("noise", {})
        feeder_path = str(doc["feeder"])
        if feeder_path != "ieee123" and not Path(feeder_path).is_absolute():
            feeder_path = str((path.parent / feeder_path).resolve())
        scale_range = load.get("scale_range")
        return Scenario(
            feeder_path=feeder_path,
            horizon=int(doc["horizon"]),
            seed=int(doc.get("seed", 0)),
            true_config=str(doc.get("true_config", "0")),
            v0=float(doc.get("v0", 1.0)),
            snr_db=(float(noise["snr_db"]) if noise.get("snr_db") is not None else None),
            events=events,
            estimator=EstimatorConfig(
                enabled=bool(est.get("enabled", True)),
                window_size=int(est.get("window", 60)),
                gamma=float(est.get("gamma", 1.0)),
                rcond=float(est.get("rcond", 1e-8)),
                estimate_every=int(est.get("estimate_every", 1)),
            ),
            controller=ControllerConfig(
                enabled=bool(ctl.get("enabled", False)),
                mode=str(ctl.get("mode", "data-driven")),
                beta1=float(ctl.get("beta1", 1e5)),
                beta2=float(ctl.get("beta2", 1e5)),
                v_min=float(ctl.get("v_min", 0.95)),
                v_max=float(ctl.get("v_max", 1.05)),
            ),
            fleet=_parse_fleet(doc),
            load=LoadConfig(
                scale=float(load.get("scale", 1.0)),
                jitter_std=float(load.get("jitter_std", 0.25)),
                anchor_spacing=int(load.get("anchor_spacing", 300)),
                anchor_std=float(load.get("anchor_std", 0.03)),
                scale_range=tuple(scale_range) if scale_range else None,
            ),
        )
    except KeyError as err:
        raise InvalidFeeder(f"scenario file {path}: missing field {err}") from None


def resolve_feeder(scenario: Scenario) -> FeederModel:
    """Load the scenario's feeder; the name ``ieee123`` maps to the shipped file."""
    if scenario.feeder_path == "ieee123":
        from .data import ieee123_path

        return load_feeder(ieee123_path())
    return load_feeder(scenario.feeder_path)
