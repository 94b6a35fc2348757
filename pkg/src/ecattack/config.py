"""Scenario configuration: a single JSON document with a schema version.

Validation collects every problem before raising, so a bad file is reported
in one go.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .attacker import MAX_DURATION, MIN_DURATION
from .campaign import DEFAULT_AP, CampaignPlan, FapPlan, FloodTemplate
from .devicemodel import (
    RATE_CAP,
    DeviceProfile,
    PayloadClass,
    PortClass,
    PortState,
    ProfileError,
    builtin_profile,
    BUILTIN_PROFILES,
)
from .netsim import AccessPoint, Protocol

SCHEMA_VERSION = 1
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Schema violation; ``problems`` lists every one found."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid config:\n  - " + "\n  - ".join(problems))
        self.problems = problems


class ConfigParseError(ValueError):
    def __init__(self, path, lineno: int, colno: int, msg: str):
        super().__init__(f"{path}:{lineno}:{colno}: parse error: {msg}")
        self.lineno = lineno


@dataclass
class DeviceEntry:
    id: str
    profile: str
    overrides: dict = field(default_factory=dict)


@dataclass
class ApConfig:
    ssid: str = DEFAULT_AP.ssid
    bssid: str = DEFAULT_AP.bssid
    channel: int = DEFAULT_AP.channel
    security: str = DEFAULT_AP.security_profile
    signal_strength: float = DEFAULT_AP.signal_strength


@dataclass
class FloodConfig:
    protocol: str = "TCP_SYN"
    payload: str = "NP"
    port: Union[str, int, None] = "open"
    rate: Optional[int] = None
    minutes: float = 30.0


@dataclass
class AttackerConfig:
    ecddos: list[FloodConfig] = field(default_factory=lambda: [FloodConfig()])
    ddos: FloodConfig = field(default_factory=lambda: FloodConfig(minutes=10.0))


@dataclass
class FapConfig:
    enabled: bool = True
    signal_margin: float = 10.0
    protocols: list[str] = field(default_factory=lambda: ["TCP_SYN", "UDP", "ICMP_ECHO"])
    rate: Optional[int] = None
    minutes: float = 19.0


@dataclass
class CampaignConfig:
    baseline_minutes: float = 30.0
    measure_thresholds: bool = True


@dataclass
class OutputConfig:
    dir: str = "out"
    formats: list[str] = field(default_factory=lambda: list(FORMATS))


@dataclass
class ScenarioConfig:
    seed: int
    devices: list[DeviceEntry]
    ap: ApConfig = field(default_factory=ApConfig)
    attacker: AttackerConfig = field(default_factory=AttackerConfig)
    fap: FapConfig = field(default_factory=FapConfig)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def profiles(self) -> dict[str, DeviceProfile]:
        return {d.id: build_profile(d) for d in self.devices}

    def device(self, name: str) -> DeviceEntry:
        for d in self.devices:
            if d.id == name:
                return d
        for d in self.devices:
            if d.profile == name:
                return d
        if name in BUILTIN_PROFILES:
            return DeviceEntry(name, name)
        raise ConfigError([f"no device {name!r} in config"])

    def to_plan(self, seed: Optional[int] = None, devices: Optional[list[DeviceEntry]] = None) -> CampaignPlan:
        entries = self.devices if devices is None else devices
        fap = None
        if self.fap.enabled:
            fap = FapPlan(self.fap.signal_margin, tuple(Protocol.parse(p) for p in self.fap.protocols),
                          self.fap.rate, self.fap.minutes)
        return CampaignPlan(
            devices={d.id: build_profile(d) for d in entries},
            baseline_minutes=self.campaign.baseline_minutes,
            attack_matrix=tuple(flood_template(f) for f in self.attacker.ecddos),
            ddos=flood_template(self.attacker.ddos),
            fap=fap,
            ap=AccessPoint(self.ap.ssid, self.ap.bssid, self.ap.channel, self.ap.security, self.ap.signal_strength),
            seed=self.seed if seed is None else seed,
            measure_thresholds=self.campaign.measure_thresholds,
        )


def default_config(seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(seed=seed, devices=[DeviceEntry("raspberry_pi", "raspberry_pi"),
                                              DeviceEntry("arduino", "arduino")])


def parse_port(value) -> Union[PortState, int, None]:
    if value is None or isinstance(value, int):
        return value
    return PortState(str(value).lower().replace("-", "_"))


def flood_template(f: FloodConfig) -> FloodTemplate:
    return FloodTemplate(Protocol.parse(f.protocol), PayloadClass.parse(f.payload), parse_port(f.port),
                         f.rate, f.minutes)


# --- profile overrides -------------------------------------------------------

_SCALAR_OVERRIDES = ("r_lin", "gamma", "fap_e_level", "fap_e_max", "fap_attempt_success", "voltage")


def build_profile(entry: DeviceEntry) -> DeviceProfile:
    base = builtin_profile(entry.profile)
    ov = dict(entry.overrides)
    changes: dict[str, Any] = {k: float(ov.pop(k)) for k in _SCALAR_OVERRIDES if k in ov}
    for key in ("e_base", "fap_connect_range"):
        if key in ov:
            lo, hi = ov.pop(key)
            changes[key] = (float(lo), float(hi))
    if "thresholds" in ov:
        thr = dict(base.ar_threshold)
        for k, v in ov.pop("thresholds").items():
            thr[PayloadClass.parse(k)] = None if v is None else int(v)
        changes["ar_threshold"] = thr
    if "sd" in ov:
        sd = dict(base.sd_ref)
        for proto, per_payload in ov.pop("sd").items():
            for k, v in per_payload.items():
                sd[(Protocol.parse(proto), PayloadClass.parse(k))] = None if v is None else float(v)
        changes["sd_ref"] = sd
    if "ceilings" in ov:
        e_base = changes.get("e_base", base.e_base)
        mid = (e_base[0] + e_base[1]) / 2
        e_max = dict(base.e_max)
        for proto, value in ov.pop("ceilings").items():
            p = Protocol.parse(proto)
            for payload in PayloadClass:
                e_max[(p, payload, PortClass.OPEN)] = float(value)
                e_max[(p, payload, PortClass.CLOSED)] = mid + 0.5 * (float(value) - mid)
        changes["e_max"] = e_max
    if ov:
        raise ProfileError([f"unknown profile override(s): {sorted(ov)}"])
    return dataclasses.replace(base, **changes)


# --- validation ---------------------------------------------------------------


def _check_keys(d: dict, cls, where: str, problems: list[str]) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    for k in d:
        if k not in known:
            problems.append(f"{where}: unknown key {k!r}")


def _section(raw: dict, key: str, cls, problems: list[str]):
    d = raw.get(key, {})
    if not isinstance(d, dict):
        problems.append(f"{key}: expected an object")
        return cls()
    _check_keys(d, cls, key, problems)
    known = {f.name for f in dataclasses.fields(cls)}
    try:
        return cls(**{k: v for k, v in d.items() if k in known})
    except TypeError as exc:
        problems.append(f"{key}: {exc}")
        return cls()


def _flood(d, where: str, problems: list[str]) -> FloodConfig:
    if not isinstance(d, dict):
        problems.append(f"{where}: expected an object")
        return FloodConfig()
    _check_keys(d, FloodConfig, where, problems)
    f = FloodConfig(**{k: v for k, v in d.items() if k in {x.name for x in dataclasses.fields(FloodConfig)}})
    try:
        proto = Protocol.parse(str(f.protocol))
    except ValueError:
        problems.append(f"{where}.protocol: unknown protocol {f.protocol!r}")
        proto = None
    try:
        PayloadClass.parse(str(f.payload))
    except ValueError:
        problems.append(f"{where}.payload: must be NP or HP, got {f.payload!r}")
    if proto is Protocol.ICMP_ECHO:
        f.port = None
    else:
        try:
            port = parse_port(f.port)
            if isinstance(port, int) and not 0 <= port <= 65535:
                problems.append(f"{where}.port: {port} out of range")
        except ValueError:
            problems.append(f"{where}.port: not a port number or port state: {f.port!r}")
    if f.rate is not None:
        if not isinstance(f.rate, int) or isinstance(f.rate, bool) or f.rate < 0:
            problems.append(f"{where}.rate: must be a non-negative integer")
        elif f.rate > RATE_CAP:
            problems.append(f"{where}.rate: rate exceeds cap ({f.rate} > {RATE_CAP})")
    if not isinstance(f.minutes, (int, float)) or not MIN_DURATION <= f.minutes <= MAX_DURATION:
        problems.append(f"{where}.minutes: must be within [{MIN_DURATION:g}, {MAX_DURATION:g}]")
    return f


def config_from_dict(raw: Any) -> ScenarioConfig:
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be an object"])
    _check_keys(raw, ScenarioConfig, "config", problems)

    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        problems.append(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")

    seed = raw.get("seed")
    if seed is None:
        problems.append("seed: missing (a seed is required for reproducible runs)")
    elif not isinstance(seed, int) or isinstance(seed, bool):
        problems.append(f"seed: must be an integer, got {seed!r}")

    devices: list[DeviceEntry] = []
    raw_devices = raw.get("devices")
    if not isinstance(raw_devices, list) or not raw_devices:
        problems.append("devices: need a non-empty list")
        raw_devices = []
    for i, d in enumerate(raw_devices):
        if isinstance(d, str):
            d = {"id": d, "profile": d}
        if not isinstance(d, dict) or "profile" not in d:
            problems.append(f"devices[{i}]: expected a profile name or an object with 'profile'")
            continue
        _check_keys(d, DeviceEntry, f"devices[{i}]", problems)
        entry = DeviceEntry(str(d.get("id", d["profile"])), str(d["profile"]), dict(d.get("overrides", {})))
        if entry.profile not in BUILTIN_PROFILES:
            problems.append(f"devices[{i}].profile: unknown profile {entry.profile!r}")
        else:
            try:
                build_profile(entry)
            except (ProfileError, ValueError, TypeError, KeyError) as exc:
                problems.append(f"devices[{i}].overrides: {exc}")
        devices.append(entry)
    ids = [d.id for d in devices]
    for dup in sorted({x for x in ids if ids.count(x) > 1}):
        problems.append(f"devices: duplicate id {dup!r}")

    ap = _section(raw, "ap", ApConfig, problems)
    try:
        AccessPoint(ap.ssid, ap.bssid, ap.channel, ap.security, ap.signal_strength)
    except (ValueError, TypeError) as exc:
        problems.append(f"ap: {exc}")

    att_raw = raw.get("attacker", {})
    attacker = AttackerConfig()
    if not isinstance(att_raw, dict):
        problems.append("attacker: expected an object")
    else:
        _check_keys(att_raw, AttackerConfig, "attacker", problems)
        if "ecddos" in att_raw:
            if not isinstance(att_raw["ecddos"], list) or not att_raw["ecddos"]:
                problems.append("attacker.ecddos: need a non-empty list (the attack matrix)")
            else:
                attacker.ecddos = [_flood(f, f"attacker.ecddos[{i}]", problems) for i, f in enumerate(att_raw["ecddos"])]
        if "ddos" in att_raw:
            attacker.ddos = _flood(att_raw["ddos"], "attacker.ddos", problems)

    fap = _section(raw, "fap", FapConfig, problems)
    if not isinstance(fap.signal_margin, (int, float)) or fap.signal_margin <= 0:
        problems.append("fap.signal_margin: margin must be positive")
    if not isinstance(fap.minutes, (int, float)) or not MIN_DURATION <= fap.minutes <= MAX_DURATION:
        problems.append(f"fap.minutes: must be within [{MIN_DURATION:g}, {MAX_DURATION:g}]")
    for p in fap.protocols if isinstance(fap.protocols, list) else ["<not a list>"]:
        try:
            Protocol.parse(str(p))
        except ValueError:
            problems.append(f"fap.protocols: unknown protocol {p!r}")
    if fap.rate is not None and (not isinstance(fap.rate, int) or not 0 <= fap.rate <= RATE_CAP):
        problems.append(f"fap.rate: must be an integer in [0, {RATE_CAP}]")

    campaign = _section(raw, "campaign", CampaignConfig, problems)
    if not isinstance(campaign.baseline_minutes, (int, float)) or campaign.baseline_minutes < 30:
        problems.append("campaign.baseline_minutes: must be >= 30")

    output = _section(raw, "output", OutputConfig, problems)
    bad = [f for f in output.formats if f not in FORMATS] if isinstance(output.formats, list) else ["?"]
    if bad:
        problems.append(f"output.formats: unsupported {bad}; choose from {list(FORMATS)}")

    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(seed, devices, ap, attacker, fap, campaign, output, version)


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(path, exc.lineno, exc.colno, exc.msg) from None
    return config_from_dict(raw)


def dump_config(config: ScenarioConfig) -> str:
    return json.dumps(config.to_dict(), indent=2) + "\n"


def write_config(config: ScenarioConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(dump_config(config), encoding="utf-8", newline="\n")
    return path
