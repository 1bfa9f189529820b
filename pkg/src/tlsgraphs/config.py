"""Plain-text configuration files: one `key = value` per line.

Schemas are declared per subcommand; unknown keys are rejected and parse
errors name the offending line.  Command-line overrides always win.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping


class ConfigError(ValueError):
    """Malformed config file or unknown/invalid key."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS: dict[type, Callable[[str], Any]] = {
    int: lambda s: int(s, 0),
    float: float,
    str: str,
    bool: _parse_bool,
}


@dataclass(frozen=True)
class ConfigField:
    name: str
    type: type
    default: Any
    help: str = ""


class ConfigSchema:
    """Field declarations plus parsing of files and override mappings."""

    def __init__(self, fields: list[ConfigField]):
        self.fields = {f.name: f for f in fields}

    def defaults(self) -> dict[str, Any]:
        return {name: f.default for name, f in self.fields.items()}

    def parse_value(self, key: str, raw: str, where: str) -> Any:
        if key not in self.fields:
            raise ConfigError(f"{where}: unknown key {key!r}")
        spec = self.fields[key]
        try:
            return _PARSERS[spec.type](raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: invalid value for {key!r}: {raw!r} ({exc})") from exc

    def load(
        self, path: str | Path | None, overrides: Mapping[str, str] | None = None
    ) -> dict[str, Any]:
        """Defaults, then file values, then overrides; later layers win."""
        values = self.defaults()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise FileNotFoundError(f"config file not found: {path}")
            for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, raw = stripped.partition("=")
                key = key.strip()
                values[key] = self.parse_value(key, raw.strip(), f"{path}:{lineno}")
        for key, raw in (overrides or {}).items():
            values[key] = self.parse_value(key, raw, "command line")
        return values


SIMULATE_SCHEMA = ConfigSchema(
    [
        ConfigField("field_width", float, 600.0, "field extent in um"),
        ConfigField("field_height", float, 600.0, "field extent in um"),
        ConfigField("n_tls_seeds", int, 3, "TLS foci per field"),
        ConfigField("cluster_radius", float, 18.0, "B-cell disc radius (um)"),
        ConfigField("bcells_per_cluster", int, 12),
        ConfigField("tcells_per_cluster", int, 16),
        ConfigField("annulus_inner", float, 20.0),
        ConfigField("annulus_outer", float, 40.0),
        ConfigField("background_density", float, 1.6e-4, "cells/um^2 per type"),
        ConfigField("n_decoy_seeds", int, 0),
        ConfigField("n_fields", int, 8),
        ConfigField("min_nodes", int, 20),
        ConfigField("max_nodes", int, 103),
        ConfigField("edge_threshold", float, 30.0),
        ConfigField("subgraph_stride", int, 1),
    ]
)

TRAIN_SCHEMA = ConfigSchema(
    [
        ConfigField("T", int, 50, "diffusion steps"),
        ConfigField("cosine_offset", float, 0.008),
        ConfigField("steps", int, 3000, "optimizer steps"),
        ConfigField("batch_size", int, 2),
        ConfigField("learning_rate", float, 2e-4),
        ConfigField("lambda_e", float, 5.0),
        ConfigField("layers", int, 4),
        ConfigField("node_width", int, 64),
        ConfigField("edge_width", int, 16),
        ConfigField("global_width", int, 32),
        ConfigField("heads", int, 4),
        ConfigField("checkpoint_every", int, 500),
    ]
)

SAMPLE_SCHEMA = ConfigSchema(
    [
        ConfigField("n_graphs", int, 100),
    ]
)

EVAL_SCHEMA = ConfigSchema(
    [
        ConfigField("js_bins", int, 32),
        ConfigField("include_degenerate", bool, False),
        ConfigField("histogram_bins", int, 32),
    ]
)

AUGMENT_SCHEMA = ConfigSchema(
    [
        ConfigField("magnitudes", str, "1,2,3,5,10,20,40", "comma-separated"),
        ConfigField("learning_rates", str, "0.01,0.001,0.0001"),
        ConfigField("hidden_dims", str, "8,16"),
        ConfigField("dropouts", str, "0.2,0.5"),
        ConfigField("max_epochs", int, 5000),
        ConfigField("patience", int, 100),
        ConfigField("folds", int, 5),
    ]
)
