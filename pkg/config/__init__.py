from .config import BaseConfig, get_global_config, set_global_config, shipped_configs
