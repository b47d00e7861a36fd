"""INI-style configuration for generation, cameras, ROI and rewards.

Example::

    [generate]
    n_scenes = 100
    max_objects = 9
    seed = 42
    container = shelf

    [container.shelf]
    interior = 0.80, 0.40, 0.35

    [asset.box_snack]
    shape = box
    dims = 0.05, 0.10, 0.12
    roles = target, obstacle

    [camera.left]
    eye = 0.2, -0.6, 0.28
    look_at = 0.4, 0.2, 0.175

    [roi]
    extents = 0.20, 0.20, 0.30

    [reward]
    stage = 0
    sigma_trans = 0.03, 0.015, 0.01, 0.005, 0.0
"""
from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .impact_metrics import RewardConfig
from .scene import CONTAINER_KINDS, Container
from .scene_gen import CONTAINER_PRESETS, DEFAULT_ASSETS, GenConfig
from .view_render import DEFAULT_ROI, CameraModel
from .voxelizer import ObjectAsset


class ConfigError(ValueError):
    """Invalid configuration value; carries the offending key and line when known."""

    def __init__(self, message: str, key: str = "", line: Optional[int] = None, path: str = "") -> None:
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(f"{where}{message}")
        self.key = key
        self.line = line


class _Source:
    def __init__(self, text: str, path: str) -> None:
        self.path = path
        self.parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            self.parser.read_string(text, source=path)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(f"malformed config: {exc.message if hasattr(exc, 'message') else exc}", "", line, path) from exc
        self._lines = text.splitlines()

    def line_of(self, section: str, key: str = "") -> Optional[int]:
        current = None
        for i, raw in enumerate(self._lines, start=1):
            s = raw.strip()
            m = re.match(r"^\[(.+)\]$", s)
            if m:
                current = m.group(1).strip()
                if not key and current == section:
                    return i
                continue
            if current == section and key and re.match(rf"^{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
                return i
        return None

    def fail(self, section: str, key: str, message: str) -> ConfigError:
        return ConfigError(f"[{section}] {key}: {message}", f"{section}.{key}", self.line_of(section, key), self.path)

    def get(self, section: str, key: str, kind, default=None):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            if kind is bool:
                low = raw.lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(raw)
            if kind == "floats":
                return tuple(float(v) for v in raw.split(",") if v.strip())
            if kind == "names":
                return tuple(v.strip() for v in raw.split(",") if v.strip())
            value = kind(raw)
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(raw)
            return value
        except ValueError:
            label = {int: "integer", float: "number", bool: "boolean", "floats": "comma-separated numbers"}.get(kind, "value")
            raise self.fail(section, key, f"expected {label}, got {raw!r}") from None

    def check_keys(self, section: str, allowed: Sequence[str]) -> None:
        for key in self.parser.options(section):
            if key not in allowed:
                raise self.fail(section, key, f"unknown key (allowed: {', '.join(allowed)})")


def _load(path) -> _Source:
    p = Path(path)
    try:
        text = p.read_text("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8: {exc}", path=str(p)) from exc
    return _Source(text, str(p))


_GEN_KEYS = ("n_scenes", "max_objects", "seed", "resolution", "container", "max_retries_per_object", "yaw_range_deg", "allow_tilt")
_ASSET_KEYS = ("shape", "dims", "radius", "height", "path", "roles")


def gen_config_from(src: Optional[_Source], overrides: Optional[Dict[str, object]] = None) -> GenConfig:
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    kw: Dict[str, object] = {}
    container_kind = "shelf"
    interiors = dict(CONTAINER_PRESETS)
    assets: List[ObjectAsset] = []
    if src is not None:
        p = src.parser
        for section in p.sections():
            if section == "generate":
                src.check_keys(section, _GEN_KEYS)
            elif section.startswith("container."):
                kind = section.split(".", 1)[1]
                if kind not in CONTAINER_KINDS:
                    raise src.fail(section, "", f"unknown container kind {kind!r}")
                src.check_keys(section, ("interior",))
                interior = src.get(section, "interior", "floats")
                if interior is None or len(interior) != 3 or min(interior) <= 0:
                    raise src.fail(section, "interior", "expected three positive numbers")
                interiors[kind] = interior
            elif section.startswith("asset."):
                assets.append(_asset_from(src, section))
        if p.has_section("generate"):
            g = "generate"
            for key, kind in (("n_scenes", int), ("max_objects", int), ("seed", int),
                              ("resolution", float), ("max_retries_per_object", int)):
                val = src.get(g, key, kind)
                if val is not None:
                    kw[key] = val
            yaw = src.get(g, "yaw_range_deg", float)
            if yaw is not None:
                kw["yaw_range"] = math.radians(yaw)
            tilt = src.get(g, "allow_tilt", bool)
            if tilt is not None:
                kw["allow_tilt"] = tilt
            container_kind = src.get(g, "container", str, "shelf").strip()
            if container_kind not in CONTAINER_KINDS:
                raise src.fail(g, "container", f"unknown container {container_kind!r}")
    if "container" in overrides:
        container_kind = str(overrides.pop("container"))
        if container_kind not in CONTAINER_KINDS:
            raise ConfigError(f"--container: unknown container {container_kind!r}", "container")
    kw.update(overrides)
    kw["container"] = Container(container_kind, interiors[container_kind])
    kw["assets"] = tuple(assets) if assets else DEFAULT_ASSETS
    try:
        return GenConfig(**kw)
    except ValueError as exc:
        key = next((k for k in ("n_scenes", "max_objects", "max_retries_per_object", "resolution") if k in str(exc)), "")
        line = src.line_of("generate", key) if (src is not None and key) else None
        raise ConfigError(f"[generate] {key or 'config'}: {exc}", f"generate.{key}" if key else "", line,
                          src.path if src else "") from exc


def _asset_from(src: _Source, section: str) -> ObjectAsset:
    asset_id = section.split(".", 1)[1]
    src.check_keys(section, _ASSET_KEYS)
    shape = src.get(section, "shape", str)
    if shape is None:
        raise src.fail(section, "shape", "missing")
    roles = src.get(section, "roles", "names", ("target", "obstacle"))
    try:
        if shape == "box":
            dims = src.get(section, "dims", "floats")
            if dims is None:
                raise src.fail(section, "dims", "missing")
            return ObjectAsset(asset_id, "box", dims, roles=roles)
        if shape == "cylinder":
            r = src.get(section, "radius", float)
            h = src.get(section, "height", float)
            if r is None or h is None:
                raise src.fail(section, "radius" if r is None else "height", "missing")
            return ObjectAsset(asset_id, "cylinder", (r, h), roles=roles)
        if shape == "mesh":
            path = src.get(section, "path", str)
            if path is None:
                raise src.fail(section, "path", "missing")
            full = Path(path)
            if not full.is_absolute():
                full = Path(src.path).parent / full
            return ObjectAsset(asset_id, "mesh", (), mesh_path=str(full), roles=roles)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise src.fail(section, "shape", str(exc)) from exc
    raise src.fail(section, "shape", f"unknown shape {shape!r}")


def load_gen_config(path=None, **overrides) -> GenConfig:
    return gen_config_from(_load(path) if path else None, overrides)


def load_cameras(path, scene_frame) -> List[CameraModel]:
    """Cameras from ``[camera.*]`` sections, or the default front pair."""
    from .view_render import default_cameras

    if path is None:
        return default_cameras(scene_frame)
    src = _load(path)
    cams = []
    for section in src.parser.sections():
        if not section.startswith("camera."):
            continue
        src.check_keys(section, ("eye", "look_at", "up", "width", "height", "fov_deg"))
        eye = src.get(section, "eye", "floats")
        at = src.get(section, "look_at", "floats")
        if eye is None or len(eye) != 3:
            raise src.fail(section, "eye", "expected three numbers")
        if at is None or len(at) != 3:
            raise src.fail(section, "look_at", "expected three numbers")
        try:
            cams.append(
                CameraModel.look_at(
                    eye,
                    at,
                    up=src.get(section, "up", "floats", (0.0, 0.0, 1.0)),
                    width=src.get(section, "width", int, 128),
                    height=src.get(section, "height", int, 96),
                    fov_deg=src.get(section, "fov_deg", float, 60.0),
                )
            )
        except ValueError as exc:
            raise src.fail(section, "eye", str(exc)) from exc
    return cams or default_cameras(scene_frame)


def load_roi_extents(path) -> Tuple[float, float, float]:
    if path is None:
        return DEFAULT_ROI
    src = _load(path)
    if not src.parser.has_section("roi"):
        return DEFAULT_ROI
    src.check_keys("roi", ("extents",))
    ext = src.get("roi", "extents", "floats", DEFAULT_ROI)
    if len(ext) != 3 or min(ext) <= 0:
        raise src.fail("roi", "extents", "expected three positive numbers")
    return ext


def load_reward_config(path=None) -> RewardConfig:
    if path is None:
        return RewardConfig()
    src = _load(path)
    if not src.parser.has_section("reward"):
        return RewardConfig()
    kinds = {f.name: f.type for f in fields(RewardConfig)}
    src.check_keys("reward", tuple(kinds))
    kw: Dict[str, object] = {}
    for key in src.parser.options("reward"):
        t = kinds[key]
        if "Tuple" in str(t):
            kw[key] = src.get("reward", key, "floats")
        elif t in ("int", int):
            kw[key] = src.get("reward", key, int)
        elif t in ("bool", bool):
            kw[key] = src.get("reward", key, bool)
        else:
            kw[key] = src.get("reward", key, float)
    try:
        return replace(RewardConfig(), **kw)
    except ValueError as exc:
        raise ConfigError(f"[reward] {exc}", "reward", src.line_of("reward"), src.path) from exc


def default_output_root() -> Path:
    return Path(os.environ.get("CLUTTERBENCH_OUT", "clutterbench_out"))
