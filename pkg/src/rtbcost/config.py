"""JSON configuration with strict key checking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .costs import ArpuFactors, TimeShiftCoefficient, Window
from .features.geo import GeoTable
from .features.interests import IabMap
from .features.vector import References
from .ingest import Blacklist, parse_timestamp
from .model.forest import ForestParams
from .nurl import MacroRule, load_rules


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    blacklist: Path | None = None
    geo: Path | None = None
    iab_map: Path | None = None
    macro_rules: Path | None = None
    model: Path | None = None
    contributions: Path | None = None
    registry: Path | None = None

    MUST_EXIST = ("blacklist", "geo", "iab_map", "macro_rules", "model")


@dataclass(frozen=True)
class CampaignConfig:
    dimensions: dict[str, list[str]] | None = None
    strategy: str = "full_cross"
    std: float = 0.694
    alpha: float = 0.05
    d: float = 0.1
    impressions: int | None = None
    max_bid_cpm: float = 5.0


@dataclass(frozen=True)
class EvaluationConfig:
    folds: int = 10
    runs: int = 10
    seed: int = 0


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080


@dataclass(frozen=True)
class Config:
    paths: Paths = field(default_factory=Paths)
    timezone: str = "UTC"
    binning_k: int = 4
    forest: ForestParams = field(default_factory=ForestParams)
    seed: int = 0
    arpu: ArpuFactors = field(default_factory=ArpuFactors)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    window: Window | None = None
    time_shift: TimeShiftCoefficient | None = None
    time_shift_encrypted: bool = False
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    simulation: dict[str, Any] = field(default_factory=dict)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def references(self) -> References:
        p = self.paths
        return References(
            Blacklist.from_csv(p.blacklist) if p.blacklist else Blacklist(),
            GeoTable.from_csv(p.geo) if p.geo else GeoTable(),
            IabMap.from_csv(p.iab_map) if p.iab_map else IabMap(),
            self.timezone,
        )

    def rules(self) -> list[MacroRule]:
        return load_rules(self.paths.macro_rules)

    def override(self, **kw: Any) -> Config:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


SIM_KEYS = {"seed", "n_users", "days", "ads_per_day", "app_share", "tablet_share", "ios_share",
            "sigma", "cleartext_only", "zero_noise", "binning_k", "start_ms"}


def _section(d: Any, name: str, allowed: set[str]) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"{name} must be an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    return d


def _names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def from_dict(d: Mapping[str, Any], base_dir: Path | None = None) -> Config:
    top = _section(dict(d), "config", {"paths", "timezone", "binning", "forest", "seed", "arpu", "campaign",
                                       "window", "time_shift", "evaluation", "simulation", "service"})
    base = base_dir or Path.cwd()
    try:
        raw_paths = _section(top.get("paths"), "paths", _names(Paths))
        paths = Paths(**{k: (base / v if v is not None else None) for k, v in raw_paths.items()})
        for k in Paths.MUST_EXIST:
            p = getattr(paths, k)
            if p is not None and not p.exists():
                raise ConfigError(f"paths.{k} does not exist: {p}")
        binning = _section(top.get("binning"), "binning", {"k"})
        forest = ForestParams(**_section(top.get("forest"), "forest", _names(ForestParams)))
        arpu = ArpuFactors(**_section(top.get("arpu"), "arpu", _names(ArpuFactors)))
        campaign = CampaignConfig(**_section(top.get("campaign"), "campaign", _names(CampaignConfig)))
        ev = EvaluationConfig(**_section(top.get("evaluation"), "evaluation", _names(EvaluationConfig)))
        svc = ServiceConfig(**_section(top.get("service"), "service", _names(ServiceConfig)))
        sim = dict(_section(top.get("simulation"), "simulation", SIM_KEYS))
        window = None
        if top.get("window") is not None:
            w = _section(top["window"], "window", {"start", "end"})
            window = Window(parse_timestamp(w["start"]), parse_timestamp(w["end"]))
        ts = None
        ts_enc = False
        if top.get("time_shift") is not None:
            t = _section(top["time_shift"], "time_shift", {"ratio", "include_encrypted"})
            ts = TimeShiftCoefficient(float(t["ratio"]))
            ts_enc = bool(t.get("include_encrypted", False))
        return Config(paths=paths, timezone=str(top.get("timezone", "UTC")), binning_k=int(binning.get("k", 4)),
                      forest=forest, seed=int(top.get("seed", 0)), arpu=arpu, campaign=campaign, window=window,
                      time_shift=ts, time_shift_encrypted=ts_enc, evaluation=ev, simulation=sim, service=svc)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid config: {e}") from None


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    p = Path(path)
    try:
        d = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(d, p.parent)
