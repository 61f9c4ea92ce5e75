"""Testbed configuration file: sectioned key-value (INI) parsing/validation.

Sections: ``[harness]`` run knobs, ``[scenarios]`` the measurement matrix,
``[ims]`` / ``[gateway]`` / ``[enum]`` per-server bind addresses and profile
overrides.  ``load_config`` collects every diagnostic it can find and raises
one ConfigError carrying all of them, so a validate run reports everything
at once.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from voipbed.enumdns.zone import EnumZone, ZoneError, load_zone_file
from voipbed.gateway import DialplanEntry, DialplanError, FxsEndpoint, load_dialplan
from voipbed.harness import (
    ARRIVAL_POISSON,
    ARRIVAL_UNIFORM,
    SCENARIOS,
    TopologySettings,
)
from voipbed.profiles import (
    ENUM_PROFILE,
    GATEWAY_PROFILE,
    IMS_PROFILE,
    ProfileError,
    ServerProfile,
)


class ConfigError(Exception):
    def __init__(self, diagnostics: list[str]) -> None:
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass
class TestbedConfig:
    src_path: str
    out_dir: str = "out"
    matrix: list[tuple[str, float]] = field(default_factory=list)
    duration: float = 12.0
    measured_calls: int = 30
    arrival: str = ARRIVAL_UNIFORM
    settings: TopologySettings = field(default_factory=TopologySettings)
    zone_path: str | None = None
    dialplan_path: str | None = None
    gateway_endpoints: list[FxsEndpoint] = field(default_factory=list)
    dialplan: list[DialplanEntry] = field(default_factory=list)
    enum_enabled: bool = True

    def profiles(self) -> dict[str, ServerProfile]:
        return {
            "ims": self.settings.ims_profile,
            "gateway": self.settings.gateway_profile,
            "enum": self.settings.enum_profile,
        }


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _profile_overrides(section: configparser.SectionProxy, base: ServerProfile,
                       diagnostics: list[str], name: str) -> ServerProfile:
    changes: dict[str, object] = {}
    delays = dict(base.per_signal_delay)
    delays_changed = False
    for key in section:
        if key.startswith("delay_") and key.endswith("_ms"):
            kind = key[len("delay_"):-len("_ms")]
            kind = kind.upper() if kind.isalpha() else kind
            try:
                delays[kind] = float(section[key]) / 1000.0
                delays_changed = True
            except ValueError:
                diagnostics.append(f"[{name}] {key}: not a number: {section[key]!r}")
    if delays_changed:
        changes["per_signal_delay"] = delays
    for key, attr in (("capacity", "capacity"), ("queue_seconds", "queue_seconds"),
                      ("hard_fail_at", "hard_fail_at")):
        if key in section:
            try:
                changes[attr] = float(section[key])
            except ValueError:
                diagnostics.append(f"[{name}] {key}: not a number: {section[key]!r}")
    if "capacity" in changes and changes["capacity"] != base.capacity:
        # a capacity override invalidates the stock calibration curve
        changes.setdefault("cpu_curve", ())
    if not changes:
        return base
    profile = base.scaled(**changes)
    try:
        profile.validate()
    except ProfileError as exc:
        diagnostics.append(f"[{name}] invalid profile: {exc}")
        return base
    return profile


def _parse_matrix(text: str, diagnostics: list[str]) -> list[tuple[str, float]]:
    matrix: list[tuple[str, float]] = []
    for token in text.split():
        scenario_id, sep, rates = token.partition(":")
        if not sep:
            diagnostics.append(f"[scenarios] matrix: expected '<id>:<rates>', got {token!r}")
            continue
        if scenario_id not in SCENARIOS:
            diagnostics.append(f"[scenarios] matrix: unknown scenario {scenario_id!r}")
            continue
        for rate_text in rates.split(","):
            try:
                rate = float(rate_text)
            except ValueError:
                diagnostics.append(f"[scenarios] matrix: bad rate {rate_text!r}")
                continue
            if rate < 0:
                diagnostics.append(f"[scenarios] matrix: negative rate {rate_text!r}")
                continue
            matrix.append((scenario_id, rate))
    return matrix


def _parse_endpoints(text: str, diagnostics: list[str],
                     ring_delay: float, answer_delay: float) -> list[FxsEndpoint]:
    endpoints: list[FxsEndpoint] = []
    for token in text.replace(",", " ").split():
        ep_id, sep, number = token.partition(":")
        if not sep or not ep_id or not number.isdigit():
            diagnostics.append(f"[gateway] endpoints: expected 'id:number', got {token!r}")
            continue
        endpoints.append(FxsEndpoint(id=ep_id, number=number,
                                     ring_delay=ring_delay, answer_delay=answer_delay))
    return endpoints


def load_config(path: str) -> TestbedConfig:
    """Parse and statically validate a testbed config file."""
    diagnostics: list[str] = []
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError([f"cannot read config file {path!r}"])
    base_dir = os.path.dirname(os.path.abspath(path))
    cfg = TestbedConfig(src_path=path)
    settings = TopologySettings()

    if parser.has_section("harness"):
        h = parser["harness"]
        cfg.out_dir = _resolve(base_dir, h.get("output", cfg.out_dir))
        for key, caster, attr in (
            ("duration", float, "duration"),
            ("measured_calls", int, "measured_calls"),
        ):
            if key in h:
                try:
                    setattr(cfg, attr, caster(h[key]))
                except ValueError:
                    diagnostics.append(f"[harness] {key}: not a number: {h[key]!r}")
        cfg.arrival = h.get("arrival", cfg.arrival)
        if cfg.arrival not in (ARRIVAL_UNIFORM, ARRIVAL_POISSON):
            diagnostics.append(f"[harness] arrival: unknown process {cfg.arrival!r}")
        for key, attr in (
            ("seed", "seed"),
            ("warmup", "warmup"),
            ("hold_time", "hold_time"),
            ("uas_answer_delay", "uas_answer_delay"),
            ("callee_pool", "callee_pool"),
            ("drain_timeout", "drain_timeout"),
            ("probe_gap", "probe_gap"),
        ):
            if key in h:
                try:
                    value = float(h[key])
                    if attr in ("seed", "callee_pool"):
                        value = int(value)
                    setattr(settings, attr, value)
                except ValueError:
                    diagnostics.append(f"[harness] {key}: not a number: {h[key]!r}")
        if "endpoint_overhead_ms" in h:
            try:
                settings.endpoint_overhead = float(h["endpoint_overhead_ms"]) / 1000.0
            except ValueError:
                diagnostics.append(
                    f"[harness] endpoint_overhead_ms: not a number: {h['endpoint_overhead_ms']!r}")

    if parser.has_section("scenarios"):
        cfg.matrix = _parse_matrix(parser["scenarios"].get("matrix", ""), diagnostics)

    ports: dict[str, int] = {}
    for name, base_profile, port_attr in (
        ("ims", IMS_PROFILE, "ims_port"),
        ("gateway", GATEWAY_PROFILE, "gateway_port"),
        ("enum", ENUM_PROFILE, "enum_port"),
    ):
        if not parser.has_section(name):
            continue
        section = parser[name]
        if "host" in section:
            settings.host = section["host"]
        if "port" in section:
            try:
                port = int(section["port"])
                setattr(settings, port_attr, port)
                if port != 0:
                    ports[name] = port
            except ValueError:
                diagnostics.append(f"[{name}] port: not an integer: {section['port']!r}")
        profile = _profile_overrides(section, base_profile, diagnostics, name)
        setattr(settings, f"{name}_profile", profile)

    seen: dict[int, str] = {}
    for name, port in ports.items():
        if port in seen:
            diagnostics.append(f"[{name}] port {port} already used by [{seen[port]}]")
        seen[port] = name

    if parser.has_section("enum"):
        e = parser["enum"]
        settings.apex = e.get("apex", settings.apex)
        if "zone" in e:
            cfg.zone_path = _resolve(base_dir, e["zone"])
            if not os.path.isfile(cfg.zone_path):
                diagnostics.append(f"[enum] zone: no such file {cfg.zone_path!r}")
            else:
                try:
                    settings.static_zone = load_zone_file(cfg.zone_path, apex=settings.apex)
                except ZoneError as exc:
                    diagnostics.append(f"[enum] zone {cfg.zone_path}: {exc}")

    if parser.has_section("gateway"):
        g = parser["gateway"]
        ring = g.getfloat("ring_delay", settings.fxs_ring_delay)
        answer = g.getfloat("answer_delay", settings.fxs_answer_delay)
        settings.fxs_ring_delay = ring
        settings.fxs_answer_delay = answer
        if "endpoints" in g:
            cfg.gateway_endpoints = _parse_endpoints(g["endpoints"], diagnostics,
                                                     ring, answer)
        if "dialplan" in g:
            cfg.dialplan_path = _resolve(base_dir, g["dialplan"])
            if not os.path.isfile(cfg.dialplan_path):
                diagnostics.append(f"[gateway] dialplan: no such file {cfg.dialplan_path!r}")
            else:
                try:
                    cfg.dialplan = load_dialplan(
                        cfg.dialplan_path, {ep.id for ep in cfg.gateway_endpoints})
                except DialplanError as exc:
                    diagnostics.append(f"[gateway] dialplan {cfg.dialplan_path}: {exc}")

    if parser.has_section("ims"):
        cfg.enum_enabled = parser["ims"].getboolean("enum_enabled", True)

    cfg.settings = settings
    if diagnostics:
        raise ConfigError(diagnostics)
    return cfg


def make_zone_template(gateway_host: str, gateway_port: int,
                       apex: str = "e164.test") -> EnumZone:
    """Minimal zone mapping the stock FXS number to a gateway address."""
    zone = EnumZone(apex=apex)
    zone.add_uri("2003", f"sip:2003@{gateway_host}:{gateway_port}")
    return zone
