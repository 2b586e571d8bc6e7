"""TOML run configuration: defaults, overrides, and assumption validation."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import tomli

from .agent import AgentSpec, PrincipalSpec, validate_assumptions
from .behavior_models import (
    BT_TEMPERATURE,
    GAUSSIAN_SFT,
    LATENT_FACTOR,
    BehaviorModel,
    ModelValidationError,
)
from .contracts import BinaryContract, LinearContract
from .mechanism import ConfigurationError

DEFAULT_SWEEP_NS = [64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384]

#: reference Gaussian configuration; mirrored in configs/reference_gaussian.toml
DEFAULTS: dict[str, Any] = {
    "base_seed": 20240901,
    "model": {
        "kind": "gaussian_sft",
        "sigma2": 1.0,
        "theta_lo": 0.0,
        "theta_hi": 2.0,
    },
    "agent": {
        "ga": "cara",
        "rho": 1.0,
        "w_min": 0.0,
        "e0": 0.05,
        "e1": 0.05,
        "u0": 0.35,
    },
    "principal": {
        "m1": 0.98,
        "m2": 0.25,
    },
    "contract": {
        "kind": "binary",
        "tau": 1.2,
        "w0": 0.2,
        "wb": 0.5,
        "wage_floor": 0.0,
        "wage_cap": 4.0,
    },
    "sweep": {
        "n": 256,
        "ns": DEFAULT_SWEEP_NS,
        "reps": 2000,
        "wb": 0.5,
        "theta": None,
        "mle_ns": [16, 32, 64, 128, 256, 512, 1024, 2048, 4096],
        "mle_reps": 400,
        "clt_ns": [16, 64, 256, 1024],
        "clt_reps": 10000,
        "contrast_offset": 0.2,
    },
    "io": {
        "out_dir": "out",
        "formats": ["csv", "json"],
    },
}

_MODEL_KINDS = {
    "gaussian_sft": GAUSSIAN_SFT,
    "latent_factor": LATENT_FACTOR,
    "bt_temperature": BT_TEMPERATURE,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters plus the constructed domain objects."""

    raw: dict[str, Any]
    base_seed: int
    model: BehaviorModel
    agent: AgentSpec
    principal: PrincipalSpec
    contract: BinaryContract | LinearContract

    @property
    def sweep(self) -> dict[str, Any]:
        return self.raw["sweep"]

    @property
    def out_dir(self) -> str:
        return self.raw["io"]["out_dir"]

    @property
    def wage_floor(self) -> float:
        return float(self.raw["contract"]["wage_floor"])

    @property
    def wage_cap(self) -> float:
        return float(self.raw["contract"]["wage_cap"])

    @property
    def sweep_theta(self) -> float:
        theta = self.sweep.get("theta")
        if theta is None:
            return 0.5 * (self.model.domain.lo + self.model.domain.hi)
        return float(theta)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_override(item: str) -> tuple[list[str], Any]:
    """Parse one ``section.key=value`` override; values use JSON literals."""
    if "=" not in item:
        raise ConfigurationError(f"override {item!r} must look like section.key=value")
    key, raw_val = item.split("=", 1)
    path = key.strip().split(".")
    if not all(path):
        raise ConfigurationError(f"override {item!r} has an empty key component")
    try:
        value = json.loads(raw_val)
    except json.JSONDecodeError:
        value = raw_val
    return path, value


def _apply_override(cfg: dict, path: list[str], value: Any) -> None:
    node = cfg
    for part in path[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[path[-1]] = value


def _build_model(block: dict[str, Any]) -> BehaviorModel:
    kind = block.get("kind")
    if kind not in _MODEL_KINDS:
        raise ConfigurationError(
            f"model.kind must be one of {sorted(_MODEL_KINDS)}, got {kind!r}")
    lo = float(block["theta_lo"])
    hi = float(block["theta_hi"])
    try:
        if kind == "gaussian_sft":
            return BehaviorModel.gaussian_sft(float(block["sigma2"]), lo, hi)
        weights = block.get("weights")
        if kind == "latent_factor":
            return BehaviorModel.latent_factor(block["p_star"], weights, lo, hi)
        return BehaviorModel.bt_temperature(block["delta_r"], weights, lo, hi)
    except KeyError as exc:
        raise ConfigurationError(f"model block is missing key {exc}") from None
    except ModelValidationError as exc:
        clause = "Assumption 2(b)" if "concave" in str(exc) else "Assumption 2(a)"
        raise ConfigurationError(f"{clause}: {exc}") from exc


def _build_agent(block: dict[str, Any], theta_min: float) -> AgentSpec:
    return AgentSpec(
        ga_kind=block.get("ga", "cara"),
        rho=float(block.get("rho", 1.0)),
        w_min=float(block.get("w_min", 0.0)),
        e0=float(block.get("e0", 0.0)),
        e1=float(block.get("e1", 1.0)),
        u0=float(block.get("u0", 0.0)),
        theta_min=theta_min,
    )


def _build_contract(block: dict[str, Any]) -> BinaryContract | LinearContract:
    kind = block.get("kind", "binary")
    floor = float(block["wage_floor"])
    cap = float(block["wage_cap"])
    if kind == "binary":
        return BinaryContract(tau=float(block["tau"]), w0=float(block["w0"]),
                              wb=float(block["wb"]), wage_floor=floor,
                              wage_cap=cap)
    if kind == "linear":
        knots = block.get("knots")
        if not knots:
            raise ConfigurationError("linear contract needs a knots = [[x, y], ...] list")
        xs = tuple(float(k[0]) for k in knots)
        ys = tuple(float(k[1]) for k in knots)
        return LinearContract(knots=xs, values=ys, wage_floor=floor, wage_cap=cap)
    raise ConfigurationError(f"contract.kind must be binary or linear, got {kind!r}")


def load_config(path: str | Path | None = None,
                overrides: list[str] | None = None,
                seed: int | None = None,
                out_dir: str | None = None) -> RunConfig:
    """Merge defaults, an optional TOML file, and --set overrides; validate."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, "rb") as fh:
            cfg = _deep_merge(cfg, tomli.load(fh))
    for item in overrides or []:
        key_path, value = _parse_override(item)
        _apply_override(cfg, key_path, value)
    if seed is not None:
        cfg["base_seed"] = int(seed)
    if out_dir is not None:
        cfg["io"]["out_dir"] = str(out_dir)

    model = _build_model(cfg["model"])
    agent = _build_agent(cfg["agent"], theta_min=model.domain.lo)
    try:
        principal = PrincipalSpec(m1=float(cfg["principal"]["m1"]),
                                  m2=float(cfg["principal"]["m2"]))
    except ValueError as exc:
        raise ConfigurationError(f"Assumption 1(b): {exc}") from exc
    contract = _build_contract(cfg["contract"])
    violations = validate_assumptions(agent, principal, model,
                                      contract.wage_floor, contract.wage_cap)
    if isinstance(contract, BinaryContract) and not model.domain.contains(contract.tau):
        violations.append(
            "contract: tau must lie inside the action domain")
    if violations:
        raise ConfigurationError("; ".join(violations))
    return RunConfig(raw=cfg, base_seed=int(cfg["base_seed"]), model=model,
                     agent=agent, principal=principal, contract=contract)
