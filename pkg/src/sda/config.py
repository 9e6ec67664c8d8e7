"""Pipeline configuration: flat ``key = value`` files plus CLI overrides.

Every run echoes its fully-resolved configuration into an
``effective-config.txt`` artifact so any output can be reproduced from the
echo alone.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError

MODES = ("paper-faithful", "strict-folds")

# keys whose values are comma-separated lists
_LIST_KEYS = {"k_range", "svm_c", "svm_gamma"}


@dataclass
class PipelineConfig:
    association_path: str = ""
    feature_path: str = ""
    dag_path: str = ""
    disease_similarity_path: str = ""
    dataset_name: str = "dataset"
    output_dir: str = "sda_out"
    prepared_dir: str = ""  # reuse MSFS/MDSS/balanced_pairs from this prepare run
    delta: float = 0.5
    gamma_prime_snorna: float = 1.0
    gamma_prime_disease: float = 1.0
    k: int = 20
    k_range: tuple = ()
    n_trees: int = 10
    learning_rate: float = 0.1
    max_depth: int = 4
    min_samples_leaf: int = 5
    svm_c: tuple = (0.1, 1.0, 10.0, 100.0)
    svm_gamma: tuple = ("1/d", 0.01, 0.1, 1.0)
    svm_tol: float = 1e-3
    svm_max_passes: int = 100
    n_folds: int = 5
    seed: int = 0
    mode: str = "paper-faithful"
    top_k: int = 10
    holdout_fraction: float = 0.1
    strict: bool = False
    # resolved at runtime (grid search / singleton grids); not config keys
    chosen_c: float | None = field(default=None, repr=False)
    chosen_gamma: object = field(default=None, repr=False)

    def validate(self, explicit: set[str] | None = None) -> None:
        explicit = explicit or set()
        if not 0.0 < self.delta <= 1.0:
            raise ConfigError(f"delta must be in (0, 1], got {self.delta}")
        if self.gamma_prime_snorna <= 0 or self.gamma_prime_disease <= 0:
            raise ConfigError("gamma_prime values must be positive")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if "k" in explicit and "k_range" in explicit and self.k_range:
            raise ConfigError("k and k_range are mutually exclusive")
        if any(k < 1 for k in self.k_range):
            raise ConfigError("k_range entries must be >= 1")
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if not self.svm_c or any(c <= 0 for c in self.svm_c):
            raise ConfigError("svm_c entries must be positive")
        if not self.svm_gamma:
            raise ConfigError("svm_gamma must be nonempty")
        for g in self.svm_gamma:
            if g == "1/d":
                continue
            if not isinstance(g, float) or g <= 0:
                raise ConfigError(f"svm_gamma entry must be positive or '1/d', got {g!r}")
        if self.n_folds < 2:
            raise ConfigError("n_folds must be >= 2")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got '{self.mode}'")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if not 0.0 < self.holdout_fraction <= 0.5:
            raise ConfigError("holdout_fraction must be in (0, 0.5]")

    # -- SVM hyperparameter resolution -------------------------------------

    @property
    def needs_grid_search(self) -> bool:
        return (self.chosen_c is None or self.chosen_gamma is None) and (
            len(self.svm_c) > 1 or len(self.svm_gamma) > 1
        )

    @property
    def resolved_c(self) -> float:
        if self.chosen_c is not None:
            return self.chosen_c
        if len(self.svm_c) == 1:
            return float(self.svm_c[0])
        raise ConfigError("svm_c grid not resolved; run grid search first")

    @property
    def gamma_setting(self):
        if self.chosen_gamma is not None:
            return self.chosen_gamma
        if len(self.svm_gamma) == 1:
            return self.svm_gamma[0]
        raise ConfigError("svm_gamma grid not resolved; run grid search first")

    @property
    def resolved_gamma(self):
        """Raw setting for reporting: a float, or the literal '1/d'."""
        g = self.gamma_setting
        return g if g == "1/d" else float(g)

    def resolve_gamma(self, encoding_dim: int) -> float:
        g = self.gamma_setting
        return 1.0 / encoding_dim if g == "1/d" else float(g)


CONFIG_KEYS = [
    f.name for f in fields(PipelineConfig) if f.name not in ("chosen_c", "chosen_gamma")
]


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _LIST_KEYS:
        items = [p.strip() for p in raw.split(",") if p.strip()]
        if key == "k_range":
            return tuple(int(p) for p in items)
        out = []
        for p in items:
            out.append("1/d" if p == "1/d" else float(p))
        return tuple(out)
    default = getattr(PipelineConfig(), key)
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected true/false, got '{raw}'")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        try:
            values[key] = _parse_value(key, raw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for '{key}': {exc}") from None
    return values


def load_config(path: str | None, overrides: dict | None = None) -> PipelineConfig:
    """Build a config from an optional file plus override values (flags win)."""
    values: dict[str, object] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read(), source=path))
    if overrides:
        for key, val in overrides.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key '{key}'")
            values[key] = _parse_value(key, val) if isinstance(val, str) else val
    cfg = PipelineConfig(**values)
    cfg.validate(explicit=set(values))
    return cfg


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def effective_config_text(cfg: PipelineConfig) -> str:
    """Every key echoed, defaults included, reloadable as a config file."""
    lines = [f"{key} = {_format_value(getattr(cfg, key))}" for key in CONFIG_KEYS]
    return "\n".join(lines) + "\n"
