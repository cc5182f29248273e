"""Run configuration: YAML with unit-suffixed keys, schema-versioned, with line diagnostics."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError, SoftPropError
from .learning.train import TrainConfig
from .sim.protocols import LoadProtocol
from .sim.scaffold import ScaffoldSpec

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "SOFTPROP_OUTPUT_ROOT"


def default_config_text() -> str:
    return resources.files("softprop").joinpath("data/default.yaml").read_text()


def _key_line(text: str, path) -> Optional[int]:
    """1-based line of the mapping key at ``path`` (list indices allowed), if it can be located."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for part in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == str(part):
                    line, node = k.start_mark.line + 1, v
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def _section(d: dict, name: str, allowed, path=()):
    sec = d.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name} must be a mapping", key=".".join((*path, name)))
    unknown = set(sec) - set(allowed)
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown key {k!r} in {name}", key=".".join((*path, name, k)))
    return sec


NETWORK_KEYS = ("group_scales", "layer_scales", "contact_stiffness_N_per_mm", "friction")
CALIBRATION_KEYS = ("targets_N_per_mm", "height_fractions", "angle_deg", "depth_mm", "speed_mm_per_s", "fps", "spread_weight", "enabled")
CAMERA_KEYS = ("width", "height", "fps", "pixel_noise_sigma")
DATASET_KEYS = (
    "train_protocols", "test_protocols", "fps", "delta_t_s", "with_nodes", "depth_mm", "speed_mm_per_s", "slow_speed_mm_per_s",
    "slow_fraction", "heights", "max_cycles", "max_records_per_protocol", "workers", "protocol_seed",
)
MODEL_KEYS = ("feature_sets", "wrench_hidden", "kinesthesia_hidden")
GRASP_KEYS = ("scenario", "controller", "disturbances", "duration_s", "gravity_N", "mu_true", "noise_N")
RECON_KEYS = ("world", "radius_mm", "sweep_deg", "length_mm", "force_band_N", "slide_step_mm", "noise_N")
TOP_KEYS = (
    "schema_version", "seed", "output_dir", "scaffold", "network", "calibration", "camera", "protocols",
    "dataset", "train", "models", "grasp", "reconstruct",
)


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    scaffold: ScaffoldSpec = field(default_factory=ScaffoldSpec)
    network: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    camera: dict = field(default_factory=dict)
    protocols: list = field(default_factory=list)  # (name, LoadProtocol)
    dataset: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    models: dict = field(default_factory=dict)
    grasp: dict = field(default_factory=dict)
    reconstruct: dict = field(default_factory=dict)
    text: str = ""
    source: str = "<default>"

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def output_path(self, override: Optional[str] = None) -> Path:
        out = Path(override or self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate; every :class:`ConfigError` names the key and, when known, its line."""
    try:
        return _parse(text, source)
    except ConfigError as err:
        key = err.key or ""
        path = [int(p) if p.isdigit() else p for p in key.split(".") if p]
        line = _key_line(text, path) if path else None
        where = f"{source}:{line}: " if line else f"{source}: "
        raise ConfigError(f"{where}{err} (key: {key})" if key else f"{where}{err}", key=key) from None


def _parse(text: str, source: str) -> RunConfig:
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = f"{mark.line + 1}: " if mark else ""
        raise ConfigError(f"{line}invalid YAML: {getattr(e, 'problem', e)}") from None
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError("top level must be a mapping")
    unknown = set(d) - set(TOP_KEYS)
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown top-level key {k!r}", key=k)
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}", key="schema_version")
    seed = d.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer", key="seed")
    try:
        scaffold = ScaffoldSpec.from_dict(d.get("scaffold") or {})
    except (SoftPropError, TypeError) as e:
        raise ConfigError(str(e), key="scaffold") from None

    protocols = []
    raw = d.get("protocols") or []
    if not isinstance(raw, list):
        raise ConfigError("protocols must be a list", key="protocols")
    for i, p in enumerate(raw):
        if not isinstance(p, dict):
            raise ConfigError("each protocol must be a mapping", key=f"protocols.{i}")
        p = dict(p)
        name = str(p.pop("name", f"protocol_{i}"))
        try:
            protocols.append((name, LoadProtocol.from_dict(p)))
        except ConfigError as e:
            raise ConfigError(str(e), key=f"protocols.{i}.{e.key}" if e.key else f"protocols.{i}") from None
        except TypeError as e:
            raise ConfigError(str(e), key=f"protocols.{i}") from None
    try:
        train = TrainConfig.from_dict(d.get("train") or {})
    except ConfigError as e:
        raise ConfigError(str(e), key=f"train.{e.key}" if e.key and e.key != "train" else "train") from None
    except TypeError as e:
        raise ConfigError(str(e), key="train") from None

    cfg = RunConfig(
        seed=seed,
        output_dir=str(d.get("output_dir", "runs/default")),
        scaffold=scaffold,
        network=_section(d, "network", NETWORK_KEYS),
        calibration=_section(d, "calibration", CALIBRATION_KEYS),
        camera=_section(d, "camera", CAMERA_KEYS),
        protocols=protocols,
        dataset=_section(d, "dataset", DATASET_KEYS),
        train=train,
        models=_section(d, "models", MODEL_KEYS),
        grasp=_section(d, "grasp", GRASP_KEYS),
        reconstruct=_section(d, "reconstruct", RECON_KEYS),
        text=text,
        source=source,
    )
    _check_numbers(cfg)
    return cfg


def _positive(sec: dict, name: str, keys):
    for k in keys:
        if k in sec and not (isinstance(sec[k], (int, float)) and sec[k] > 0):
            raise ConfigError(f"{k} must be a positive number", key=f"{name}.{k}")


def _check_numbers(cfg: RunConfig):
    _positive(cfg.network, "network", ["contact_stiffness_N_per_mm"])
    _positive(cfg.calibration, "calibration", ["depth_mm", "speed_mm_per_s", "fps"])
    _positive(cfg.camera, "camera", ["width", "height", "fps"])
    _positive(cfg.dataset, "dataset", ["fps", "delta_t_s"])
    for k in ("train_protocols", "test_protocols"):
        v = cfg.dataset.get(k, 0)
        if not (isinstance(v, int) and v >= 0):
            raise ConfigError(f"{k} must be a non-negative integer", key=f"dataset.{k}")
    for k in ("max_cycles", "max_records_per_protocol"):
        v = cfg.dataset.get(k)
        if v is not None and not (isinstance(v, int) and v >= 1):
            raise ConfigError(f"{k} must be a positive integer", key=f"dataset.{k}")
    sf = cfg.dataset.get("slow_fraction")
    if sf is not None and not (isinstance(sf, (int, float)) and 0 <= sf <= 1):
        raise ConfigError("slow_fraction must lie in [0, 1]", key="dataset.slow_fraction")
    for h in cfg.dataset.get("heights", []):
        if h not in ("H1", "H2", "H3", "H4"):
            raise ConfigError(f"unknown height {h!r}", key="dataset.heights")
    for k in ("depth_mm", "speed_mm_per_s", "slow_speed_mm_per_s"):
        v = cfg.dataset.get(k)
        if v is not None and not (isinstance(v, list) and len(v) == 2 and 0 < v[0] <= v[1]):
            raise ConfigError(f"{k} must be a [low, high] range", key=f"dataset.{k}")
    band = cfg.reconstruct.get("force_band_N")
    if band is not None and not (isinstance(band, list) and len(band) == 2 and band[1] > band[0] > 0):
        raise ConfigError("force band must be [low, high] with high > low > 0", key="reconstruct.force_band_N")
    for fs in cfg.models.get("feature_sets", []):
        if fs not in ("D", "D+Dd", "D+Dd+Ddd"):
            raise ConfigError(f"unknown feature set {fs!r}", key="models.feature_sets")


def load_config(path=None) -> RunConfig:
    if path is None:
        return parse_config(default_config_text(), "<default>")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} does not exist", key="config")
    return parse_config(p.read_text(), str(p))
