"""Flat `key = value` run configuration files.

Every key has a documented default; unknown keys are rejected outright
so a config file is always a complete, auditable record of a run.
`#` starts a comment; blank lines are ignored.
"""

from __future__ import annotations

from pathlib import Path

from .train import TrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, str] = {
    "seed": "0",
    "batch_size": "16",
    "lr": "1e-4",
    "phase1_iters": "20000",
    "phase2_iters": "22000",
    "gamma": "1.0",
    "alpha": "0.1",
    "beta": "1e-3",
    "use_lc": "true",
    "crop_policy": "celeba_178",
    "canny_mode": "adaptive",
    "canny_kh": "1.6",
    "checkpoint_interval": "1000",
    "base_channels": "512",
    "edge_scales": "2,4,8",
    "element_type": "float32",
    "out_dir": "out",
    "manifest": "",
    "embedder_checkpoint": "",
}


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _parse_bool(value: str, key: str) -> bool:
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"key {key!r}: expected a boolean, got {value!r}")


def _parse_scales(value: str) -> tuple[int, ...]:
    if not value.strip():
        return ()
    return tuple(int(v) for v in value.split(","))


def load_config(path) -> dict:
    """Read, validate, and type a config file; fills in defaults."""
    path = Path(path)
    raw = parse_kv_text(path.read_text(encoding="utf-8"), str(path))
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    merged = {**DEFAULTS, **raw}
    try:
        return {
            "seed": int(merged["seed"]),
            "batch_size": int(merged["batch_size"]),
            "lr": float(merged["lr"]),
            "phase1_iters": int(merged["phase1_iters"]),
            "phase2_iters": int(merged["phase2_iters"]),
            "gamma": float(merged["gamma"]),
            "alpha": float(merged["alpha"]),
            "beta": float(merged["beta"]),
            "use_lc": _parse_bool(merged["use_lc"], "use_lc"),
            "crop_policy": merged["crop_policy"],
            "canny_mode": merged["canny_mode"],
            "canny_kh": float(merged["canny_kh"]),
            "checkpoint_interval": int(merged["checkpoint_interval"]),
            "base_channels": int(merged["base_channels"]),
            "edge_scales": _parse_scales(merged["edge_scales"]),
            "element_type": merged["element_type"],
            "out_dir": merged["out_dir"],
            "manifest": merged["manifest"],
            "embedder_checkpoint": merged["embedder_checkpoint"],
        }
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def to_train_config(cfg: dict) -> TrainConfig:
    fields = {k: v for k, v in cfg.items()
              if k not in ("out_dir", "manifest", "embedder_checkpoint")}
    return TrainConfig(**fields)
