"""Model files, engine configuration and record streams."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .gmoe import PARAM_NAMES, GmoeModel
from .kinematics import Skeleton
from .engine import EngineSettings, NioshContext
from .synth import ScriptDistribution
from .training import TrainConfig


class ModelFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


# -- model files ----------------------------------------------------------------

def _payload(model: GmoeModel) -> dict:
    return {
        "dimensions": {"hidden": model.hidden, "n_in": model.n_in, "n_out": model.n_out,
                       "horizon": model.horizon, "n_actions": model.n_actions,
                       "window": model.window},
        "out_columns": model.out_columns.tolist(),
        "normalization": {"mean": model.in_mean.tolist(), "scale": model.in_scale.tolist()},
        "weights": {name: model.params[name].tolist() for name in PARAM_NAMES},
    }


def _digest(dims: dict, out_columns, mean, scale, weights: dict) -> str:
    """SHA-256 over the dimensions and the little-endian float64 bytes of every array."""
    h = hashlib.sha256(json.dumps(dims, sort_keys=True).encode("utf-8"))
    h.update(np.asarray(out_columns, dtype="<i8").tobytes())
    for arr in (mean, scale, *(weights[name] for name in PARAM_NAMES)):
        h.update(np.asarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def model_to_document(model: GmoeModel) -> dict:
    payload = _payload(model)
    digest = _digest(payload["dimensions"], model.out_columns, model.in_mean, model.in_scale,
                     model.params)
    return {"format_version": GmoeModel.FORMAT_VERSION, **payload, "sha256": digest}


def model_from_document(doc: dict) -> GmoeModel:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != GmoeModel.FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r}")
    try:
        payload = {k: doc[k] for k in ("dimensions", "out_columns", "normalization", "weights")}
    except KeyError as exc:
        raise ModelFormatError(f"model document lacks section {exc.args[0]!r}") from None
    dims = payload["dimensions"]
    shell = GmoeModel(**dims)
    params = {}
    for name, shape in shell.param_shapes().items():
        if name not in payload["weights"]:
            raise ModelFormatError(f"missing weight array {name}")
        try:
            arr = np.asarray(payload["weights"][name], dtype=float)
        except ValueError:
            raise ModelFormatError(f"weight array {name} is ragged") from None
        if arr.shape != shape:
            raise ModelFormatError(f"weight array {name} has shape {arr.shape}, expected {shape}")
        params[name] = arr
    norm = payload["normalization"]
    for key in ("mean", "scale"):
        if len(norm[key]) != shell.n_in:
            raise ModelFormatError(f"normalization array {key} has {len(norm[key])} entries, "
                                   f"expected {shell.n_in}")
    digest = _digest(dims, payload["out_columns"], norm["mean"], norm["scale"], params)
    if doc.get("sha256") != digest:
        raise ModelFormatError("checksum mismatch: model file is corrupted")
    return GmoeModel(**dims, out_columns=payload["out_columns"], params=params,
                     in_mean=norm["mean"], in_scale=norm["scale"])


def save_model(model: GmoeModel, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_document(model), fh)
    return path


def load_model(path) -> GmoeModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is truncated or not JSON: {exc}") from None
    return model_from_document(doc)


# -- configuration --------------------------------------------------------------

@dataclass
class EngineConfig:
    """All tunable settings of the toolkit, loaded from one YAML document.

    Top-level blocks: ``skeleton``, ``generator``, ``training``, ``model``,
    ``rnle``, ``engine`` and the scalar ``seed``.  Unknown keys are rejected.
    """

    skeleton: Skeleton = field(default_factory=Skeleton)
    generator: ScriptDistribution = field(default_factory=ScriptDistribution)
    training: TrainConfig = field(default_factory=TrainConfig)
    hidden: int = 64
    rnle: NioshContext = field(default_factory=NioshContext)
    engine: EngineSettings = field(default_factory=EngineSettings)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict | None) -> "EngineConfig":
        d = dict(d or {})
        unknown = set(d) - {"skeleton", "generator", "training", "model", "rnle", "engine", "seed"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            model = _strict(d.get("model"), {"hidden"}, "model")
            return cls(
                skeleton=Skeleton.from_dict(d.get("skeleton") or {}),
                generator=ScriptDistribution.from_dict(d.get("generator") or {}),
                training=TrainConfig.from_dict(d.get("training") or {}),
                hidden=int(model.get("hidden", 64)),
                rnle=NioshContext(**_strict(d.get("rnle"), _names(NioshContext), "rnle")),
                engine=EngineSettings(**_strict(d.get("engine"), _names(EngineSettings), "engine")),
                seed=int(d.get("seed", 0)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    def to_dict(self) -> dict:
        rnle = asdict(self.rnle)
        for k, v in rnle.items():
            if hasattr(v, "value"):
                rnle[k] = v.value
        gen = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.generator).items()}
        eng = asdict(self.engine)
        eng["bands"] = list(eng["bands"])
        return {"skeleton": self.skeleton.to_dict(), "generator": gen,
                "training": asdict(self.training), "model": {"hidden": self.hidden},
                "rnle": rnle, "engine": eng, "seed": self.seed}


def _names(cls) -> set:
    return {f.name for f in fields(cls)}


def _strict(block, allowed: set, where: str) -> dict:
    block = dict(block or {})
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return block


def load_config(path=None) -> EngineConfig:
    if path is None:
        return EngineConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    return EngineConfig.from_dict(doc)


def save_config(config: EngineConfig, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)
    return path


# -- engine records ---------------------------------------------------------------

def write_records(records, fh) -> int:
    n = 0
    for rec in records:
        fh.write(json.dumps(rec.to_dict() if hasattr(rec, "to_dict") else rec) + "\n")
        n += 1
    return n
