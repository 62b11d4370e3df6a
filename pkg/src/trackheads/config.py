"""Plain-text ``key = value`` configuration mapped onto the config dataclasses.

Keys are ``section.field`` where the section is one of ``features``,
``boxprop``, ``prop`` or ``assoc``; ``#`` starts a comment.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .associate import AssocConfig
from .boxprop import BoxPropConfig
from .features import FeatureSource
from .labelprop import PropConfig

SECTIONS = {"features": FeatureSource, "boxprop": BoxPropConfig, "prop": PropConfig, "assoc": AssocConfig}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


def parse_text(text: str, source: str = "<config>") -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {s: {} for s in SECTIONS}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} (use section.field, "
                              f"sections: {', '.join(SECTIONS)})")
        out[section][name] = value
    return out


def coerce(value: str, default):
    """Convert ``value`` to the type of ``default``."""
    v = value.strip()
    if v.lower() == "none":
        return None
    if isinstance(default, bool):
        if v.lower() in _TRUE:
            return True
        if v.lower() in _FALSE:
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(default, tuple):
        parts = [p for p in v.replace("x", ",").split(",") if p.strip()]
        kind = type(default[0]) if default else float
        return tuple(kind(p) for p in parts)
    if isinstance(default, int):
        return int(v)
    if isinstance(default, float) or default is None:
        return float(v)
    return v


def build(cls, values: dict[str, str], **nested):
    """Instantiate ``cls`` from its defaults, string overrides and ready-made nested objects."""
    defaults = cls()
    kwargs = dict(nested)
    names = {f.name for f in dataclasses.fields(cls)}
    for name, raw in values.items():
        if name not in names:
            raise ConfigError(f"{cls.__name__} has no field {name!r}")
        try:
            kwargs[name] = coerce(raw, getattr(defaults, name))
        except ValueError as exc:
            raise ConfigError(f"{cls.__name__}.{name}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from None


@dataclass
class Settings:
    features: FeatureSource = field(default_factory=FeatureSource)
    boxprop: BoxPropConfig = field(default_factory=BoxPropConfig)
    prop: PropConfig = field(default_factory=PropConfig)
    assoc: AssocConfig = field(default_factory=AssocConfig)


def load_settings(path=None, overrides: dict[str, dict[str, str]] | None = None) -> Settings:
    """Settings from an optional file, then ``overrides`` (flags) on top."""
    values = {s: {} for s in SECTIONS}
    if path is not None:
        p = Path(path)
        for s, kv in parse_text(p.read_text(), str(p)).items():
            values[s].update(kv)
    for s, kv in (overrides or {}).items():
        values[s].update({k: str(v) for k, v in kv.items()})
    feats = build(FeatureSource, values["features"])
    return Settings(
        features=feats,
        boxprop=build(BoxPropConfig, values["boxprop"], features=feats),
        prop=build(PropConfig, values["prop"], features=feats),
        assoc=build(AssocConfig, values["assoc"]),
    )


def dump_settings(s: Settings) -> str:
    lines = []
    for section in SECTIONS:
        obj = getattr(s, section)
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                continue
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{section}.{f.name} = {v}")
    return "\n".join(lines) + "\n"
