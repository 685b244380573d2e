"""Run configuration: YAML loading, validation with field paths, seed fan-out.

Angles in the file are in degrees and frequencies in GHz/MHz; everything is
converted to SI units and radians when the library objects are built.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .channel import ChannelConfig
from .features import DetectionNoise, GridConfig, make_grid
from .geometry import Cuboid
from .scenario import ScenarioConfig, VehicleGroup, default_buildings


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# Stage identifiers for the seed counter scheme: sub-seeds are drawn from
# SeedSequence([master, stage, *indices]).
STAGES = {
    "scenario": 1,
    "detection": 2,
    "split": 3,
    "train_vdban": 4,
    "train_bct": 5,
    "location_noise": 6,
    "resample": 7,
}


def sub_seed(master: int, stage: str, *indices: int) -> int:
    ss = np.random.SeedSequence([int(master), STAGES[stage], *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


DEFAULTS: dict[str, Any] = {
    "seed": 2024,
    "scenarios": 200,
    "workers": 1,
    "scenario": {
        "vehicles_per_group": [15, 14],
        "spawn_windows": [[-60.0, 240.0], [-200.0, 100.0]],
        "speed_range": [8.0, 15.0],
        "gap_min": 2.0,
        "ms_entry_lead": [0.0, 5.0],
        "horizon_s": 12.0,
        "snapshot_interval_s": 0.05,
        "coverage": [0.0, 15.0, -15.0, 15.0],
        "rsu_position": [0.0, 0.0, 3.0],
        "buildings": None,  # None selects the built-in two-row layout
    },
    "channel": {
        "carrier_ghz": 28.0,
        "num_subcarriers": 16,
        "subcarrier_spacing_mhz": 25.0,
        "num_bs_antennas": 64,
        "num_ms_antennas": 64,
        "max_paths": 5,
        "reflection": {"metal": 0.9, "concrete": 0.6, "ground": 0.6},
        "target_snr_db": 29.5,
        "per_subcarrier_power": 1.0,
        "noise_power": None,
    },
    "codebook": {"tx": 64, "rx": 64},
    "grid": {"cell_length": 11.7, "cell_width": 2.0, "y_range": [-40.0, 40.0]},
    "features": {
        "cameras": 4,
        "image_width": 320,
        "image_height": 120,
        "camera_lift": 0.5,
        "seq_len": 3,
        "sif": False,
        "detection_noise": {"center": 0.1, "size": 0.05, "azimuth_deg": 0.0},
    },
    "splits": [0.8, 0.1, 0.1],
    "train": {
        "vdban": {
            "epochs": 60, "batch_size": 64, "lr": 1e-3, "optimizer": "adam",
            "dims": [64, 128], "key_dims": [16, 32], "heads": 4, "ff_dim": 256,
            "head": [1024, 1024], "resample": False,
        },
        "bct": {
            "epochs": 40, "batch_size": 64, "lr": 1e-3, "optimizer": "adam",
            "hidden": 128, "pool": 4, "resample": True,
        },
    },
    "eval": {
        "top_b": [1, 2, 3, 5, 10],
        "location_sigmas": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        "fixed_bct": [1, 2, 3, 4, 5, 6, 7, 8],
        "tb_over_td": [0.3333333333333333, 0.5],
        "knn_k": 5,
        "split": "test",
    },
}


def _merge(base: dict, over: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        p = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(p, "unknown field")
        if isinstance(base[k], dict) and v is not None:
            if not isinstance(v, dict):
                raise ConfigError(p, "expected a mapping")
            out[k] = _merge(base[k], v, p)
        else:
            out[k] = v
    return out


def _num(cfg, path, lo=None, hi=None, integer=False, lo_open=False):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(path, f"expected a number, got {node!r}")
    if integer and not float(node).is_integer():
        raise ConfigError(path, f"expected an integer, got {node!r}")
    if not math.isfinite(node):
        raise ConfigError(path, "must be finite")
    if lo is not None and (node < lo or (lo_open and node == lo)):
        raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {node}")
    if hi is not None and node > hi:
        raise ConfigError(path, f"must be <= {hi}, got {node}")
    return node


def _list(cfg, path, length=None, min_len=0):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if not isinstance(node, list):
        raise ConfigError(path, f"expected a list, got {node!r}")
    if length is not None and len(node) != length:
        raise ConfigError(path, f"expected {length} entries, got {len(node)}")
    if len(node) < min_len:
        raise ConfigError(path, f"expected at least {min_len} entries")
    for i, v in enumerate(node):
        if isinstance(v, list):
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}[{i}]", f"expected a number, got {v!r}")
    return node


def validate(cfg: dict) -> None:
    _num(cfg, "seed", 0, integer=True)
    _num(cfg, "scenarios", 1, integer=True)
    _num(cfg, "workers", 1, integer=True)
    counts = _list(cfg, "scenario.vehicles_per_group", 2)
    for i, c in enumerate(counts):
        if c < 0 or not float(c).is_integer():
            raise ConfigError(f"scenario.vehicles_per_group[{i}]", "must be a nonnegative integer")
    wins = _list(cfg, "scenario.spawn_windows", 2)
    for i, w in enumerate(wins):
        if not isinstance(w, list) or len(w) != 2 or not w[0] < w[1]:
            raise ConfigError(f"scenario.spawn_windows[{i}]", "expected [low, high] with low < high")
    sr = _list(cfg, "scenario.speed_range", 2)
    if not 0 < sr[0] <= sr[1]:
        raise ConfigError("scenario.speed_range", "expected 0 < low <= high")
    _num(cfg, "scenario.gap_min", 0)
    lead = _list(cfg, "scenario.ms_entry_lead", 2)
    if not 0 <= lead[0] <= lead[1]:
        raise ConfigError("scenario.ms_entry_lead", "expected 0 <= low <= high")
    _num(cfg, "scenario.horizon_s", 0, lo_open=True)
    _num(cfg, "scenario.snapshot_interval_s", 0, lo_open=True)
    cov = _list(cfg, "scenario.coverage", 4)
    if not (cov[0] < cov[1] and cov[2] < cov[3]):
        raise ConfigError("scenario.coverage", "expected [xmin, xmax, ymin, ymax] with min < max")
    _list(cfg, "scenario.rsu_position", 3)
    blds = cfg["scenario"]["buildings"]
    if blds is not None:
        if not isinstance(blds, list):
            raise ConfigError("scenario.buildings", "expected null or a list of boxes")
        for i, b in enumerate(blds):
            p = f"scenario.buildings[{i}]"
            if not isinstance(b, dict) or set(b) - {"center", "length", "width", "height", "azimuth_deg"}:
                raise ConfigError(p, "expected {center, length, width, height, azimuth_deg}")
            for k in ("length", "width", "height"):
                if not isinstance(b.get(k), (int, float)) or b[k] <= 0:
                    raise ConfigError(f"{p}.{k}", "must be a positive number")
            if not isinstance(b.get("center"), list) or len(b["center"]) != 3:
                raise ConfigError(f"{p}.center", "expected 3 numbers")

    _num(cfg, "channel.carrier_ghz", 0, lo_open=True)
    _num(cfg, "channel.num_subcarriers", 1, integer=True)
    _num(cfg, "channel.subcarrier_spacing_mhz", 0, lo_open=True)
    _num(cfg, "channel.num_bs_antennas", 1, integer=True)
    _num(cfg, "channel.num_ms_antennas", 1, integer=True)
    _num(cfg, "channel.max_paths", 1, integer=True)
    for m in ("metal", "concrete", "ground"):
        _num(cfg, f"channel.reflection.{m}", 0, 1, lo_open=True)
    _num(cfg, "channel.target_snr_db")
    _num(cfg, "channel.per_subcarrier_power", 0, lo_open=True)
    if cfg["channel"]["noise_power"] is not None:
        _num(cfg, "channel.noise_power", 0, lo_open=True)
    _num(cfg, "codebook.tx", 1, integer=True)
    _num(cfg, "codebook.rx", 1, integer=True)

    _num(cfg, "grid.cell_length", 0, lo_open=True)
    _num(cfg, "grid.cell_width", 0, lo_open=True)
    yr = _list(cfg, "grid.y_range", 2)
    if not yr[0] < yr[1]:
        raise ConfigError("grid.y_range", "expected low < high")

    _num(cfg, "features.cameras", 3, integer=True)
    _num(cfg, "features.image_width", 1, integer=True)
    _num(cfg, "features.image_height", 1, integer=True)
    _num(cfg, "features.camera_lift", 0)
    _num(cfg, "features.seq_len", 1, integer=True)
    if not isinstance(cfg["features"]["sif"], bool):
        raise ConfigError("features.sif", "expected true or false")
    for k in ("center", "size", "azimuth_deg"):
        _num(cfg, f"features.detection_noise.{k}", 0)

    fr = _list(cfg, "splits", 3)
    if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError("splits", f"fractions must be nonnegative and sum to 1, got {fr}")
    if cfg["scenarios"] < 3:
        raise ConfigError("scenarios", "need at least 3 scenarios to fill train/val/test")

    for kind in ("vdban", "bct"):
        p = f"train.{kind}"
        _num(cfg, f"{p}.epochs", 1, integer=True)
        _num(cfg, f"{p}.batch_size", 1, integer=True)
        _num(cfg, f"{p}.lr", 0)
        if cfg["train"][kind]["optimizer"] not in ("adam", "sgd"):
            raise ConfigError(f"{p}.optimizer", "expected 'adam' or 'sgd'")
        if not isinstance(cfg["train"][kind]["resample"], bool):
            raise ConfigError(f"{p}.resample", "expected true or false")
    dims = _list(cfg, "train.vdban.dims", min_len=1)
    kd = _list(cfg, "train.vdban.key_dims", len(dims))
    for i, v in enumerate(dims + kd):
        if v < 1 or not float(v).is_integer():
            raise ConfigError("train.vdban.dims" if i < len(dims) else "train.vdban.key_dims",
                              "entries must be positive integers")
    _num(cfg, "train.vdban.heads", 1, integer=True)
    _num(cfg, "train.vdban.ff_dim", 1, integer=True)
    _list(cfg, "train.vdban.head", min_len=0)
    _num(cfg, "train.bct.hidden", 1, integer=True)
    _num(cfg, "train.bct.pool", 1, integer=True)

    for i, b in enumerate(_list(cfg, "eval.top_b", min_len=1)):
        if b < 1 or not float(b).is_integer():
            raise ConfigError(f"eval.top_b[{i}]", "must be a positive integer")
    for i, s in enumerate(_list(cfg, "eval.location_sigmas", min_len=1)):
        if s < 0:
            raise ConfigError(f"eval.location_sigmas[{i}]", "must be >= 0")
    for i, m in enumerate(_list(cfg, "eval.fixed_bct", min_len=1)):
        if m < 1 or not float(m).is_integer():
            raise ConfigError(f"eval.fixed_bct[{i}]", "must be a positive integer")
    for i, t in enumerate(_list(cfg, "eval.tb_over_td", min_len=1)):
        if not 0 <= t < 1:
            raise ConfigError(f"eval.tb_over_td[{i}]", "must lie in [0, 1)")
    _num(cfg, "eval.knn_k", 1, integer=True)
    if cfg["eval"]["split"] not in ("validation", "test"):
        raise ConfigError("eval.split", "expected 'validation' or 'test'")


class RunConfig:
    """Validated, fully defaulted run configuration."""

    def __init__(self, data: dict | None = None):
        merged = _merge(DEFAULTS, data or {}, "")
        validate(merged)
        self.data = merged

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"not valid YAML: {exc}") from None
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "expected a mapping")
        return cls(raw)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    # -- library objects --------------------------------------------------

    def scenario_config(self) -> ScenarioConfig:
        s = self.data["scenario"]
        f = self.data["features"]
        lanes_l = ("ST1L-0", "ST1L-1", "ST1L-2")
        lanes_r = ("ST1R-0", "ST1R-1", "ST1R-2")
        groups = (VehicleGroup(lanes_l, int(s["vehicles_per_group"][0]), tuple(s["spawn_windows"][0])),
                  VehicleGroup(lanes_r, int(s["vehicles_per_group"][1]), tuple(s["spawn_windows"][1])))
        if s["buildings"] is None:
            buildings = default_buildings()
        else:
            buildings = tuple(Cuboid(tuple(b["center"]), b["length"], b["width"], b["height"],
                                     math.radians(b.get("azimuth_deg", 0.0)))
                              for b in s["buildings"])
        return ScenarioConfig(
            groups=groups, speed_range=tuple(s["speed_range"]), gap_min=float(s["gap_min"]),
            ms_entry_lead=tuple(s["ms_entry_lead"]), buildings=buildings,
            coverage=tuple(float(v) for v in s["coverage"]),
            rsu_position=tuple(float(v) for v in s["rsu_position"]),
            snapshot_interval=float(s["snapshot_interval_s"]), horizon=float(s["horizon_s"]),
            num_cameras=int(f["cameras"]), camera_lift=float(f["camera_lift"]),
            image_width=int(f["image_width"]), image_height=int(f["image_height"]))

    def channel_config(self) -> ChannelConfig:
        c = self.data["channel"]
        return ChannelConfig(
            carrier_hz=c["carrier_ghz"] * 1e9, num_subcarriers=int(c["num_subcarriers"]),
            subcarrier_spacing_hz=c["subcarrier_spacing_mhz"] * 1e6,
            num_bs_antennas=int(c["num_bs_antennas"]), num_ms_antennas=int(c["num_ms_antennas"]),
            max_paths=int(c["max_paths"]),
            reflection_loss_db={k: -20.0 * math.log10(v) for k, v in c["reflection"].items()},
            noise_power=c["noise_power"], per_subcarrier_power=float(c["per_subcarrier_power"]),
            target_snr_db=float(c["target_snr_db"]))

    def grid_config(self, lanes) -> GridConfig:
        g = self.data["grid"]
        return make_grid(lanes, g["cell_length"], g["cell_width"], tuple(g["y_range"]))

    def detection_noise(self) -> DetectionNoise:
        n = self.data["features"]["detection_noise"]
        return DetectionNoise(n["center"], n["size"], math.radians(n["azimuth_deg"]))
