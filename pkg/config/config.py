import json
from pathlib import Path

CONFIG_DIR = Path(__file__).parent

# Global configuration instance
_global_config = None


def shipped_configs() -> list[str]:
    """Names of the experiment configs that ship next to this module."""
    return sorted(p.name for p in CONFIG_DIR.glob("*.json"))


def resolve_config_path(path: str | Path) -> Path:
    # bare names fall back to the shipped configs
    config_path = Path(path)
    if not config_path.is_absolute() and not config_path.exists():
        config_path = CONFIG_DIR / config_path
    return config_path


class BaseConfig:
    """Read-only view of one experiment config; sections are attributes (``cfg.skew``)."""

    def __init__(self, path: str | Path = "reference.json", data: dict | None = None):
        object.__setattr__(self, "_path", resolve_config_path(path))
        if data is None:
            with self._path.open(encoding="utf-8") as f:
                data = json.load(f)
        object.__setattr__(self, "_data", data)

    # Read-only
    def __getattr__(self, name):
        try:
            return self._data[name]
        except KeyError as e:
            raise AttributeError(name) from e

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is read-only")

    def with_data(self, data: dict) -> "BaseConfig":
        """A config with the same origin and replaced contents (used once overrides are applied)."""
        return BaseConfig(self._path, data=data)

    @property
    def path(self) -> Path:
        return self._path

    @property
    def data(self):
        """Return the complete config data"""
        return self._data


def set_global_config(config: BaseConfig):
    """Set the global configuration instance."""
    global _global_config
    _global_config = config


def get_global_config() -> BaseConfig:
    """Get the global configuration instance, or the reference config if none is set."""
    global _global_config
    if _global_config is None:
        _global_config = BaseConfig()
    return _global_config
