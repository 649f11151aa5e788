"""Flat ``section.key = value`` configuration files and tracker construction.

Sections: ``rsst``, ``rklt``, ``klt`` and ``ic``. Example::

    # comments start with '#'
    rsst.eta = 0.02
    rsst.rot_range = 20
    rklt.ransac_thresh = 2.5
    klt.window = 15
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

from .geom import DofModel
from .lk import IcConfig, KltConfig
from .rklt import RkltConfig, RkltTracker
from .rsst import RsstConfig, RsstTracker

SECTIONS = {"rsst": RsstConfig, "rklt": RkltConfig, "klt": KltConfig, "ic": IcConfig}
TRACKERS = ("rsst", "rklt")


class ConfigError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (p.strip() for p in s.split("=", 1))
        if "." not in key:
            raise ConfigError(f"{source}:{lineno}: key {key!r} lacks a section prefix")
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"{source}:{lineno}: unknown section {section!r}")
        fields = {f.name for f in dataclasses.fields(SECTIONS[section])} - {"klt", "ic"}
        if name not in fields:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out.setdefault(section, {})[name] = value
    return out


def load_config(path) -> dict[str, dict[str, str]]:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {p}: {e}") from e
    return parse_config_text(text, str(p))


def _coerce(cls, overrides: dict[str, str], **extra):
    kwargs = dict(extra)
    defaults = cls()
    for name, raw in overrides.items():
        ref = getattr(defaults, name)
        try:
            if isinstance(ref, bool):
                kwargs[name] = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(ref, int):
                kwargs[name] = int(raw)
            else:
                kwargs[name] = float(raw)
        except ValueError:
            raise ConfigError(f"{cls.__name__}.{name}: cannot parse {raw!r}") from None
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def build_rsst_config(cfg: dict) -> RsstConfig:
    return _coerce(RsstConfig, cfg.get("rsst", {}))


def build_rklt_config(cfg: dict, seed: int = 0) -> RkltConfig:
    klt = _coerce(KltConfig, cfg.get("klt", {}))
    ic = _coerce(IcConfig, cfg.get("ic", {}))
    rk = dict(cfg.get("rklt", {}))
    rk.pop("seed", None)
    return _coerce(RkltConfig, rk, klt=klt, ic=ic, seed=int(seed))


def make_tracker(name: str, dof=4, cfg: dict | None = None, seed: int = 0):
    cfg = cfg or {}
    if name == "rsst":
        if int(dof) != 4:
            raise ConfigError("rsst estimates 4 DoF only; use --dof 4")
        return RsstTracker(build_rsst_config(cfg))
    if name == "rklt":
        return RkltTracker(DofModel.parse(dof), build_rklt_config(cfg, seed))
    raise ConfigError(f"unknown tracker {name!r}; expected one of {TRACKERS}")


def config_hash(tracker) -> str:
    """Short digest of the fully resolved tracker configuration."""
    payload = {"tracker": tracker.name, "config": dataclasses.asdict(tracker.config)}
    if hasattr(tracker, "dof"):
        payload["dof"] = int(tracker.dof)
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
