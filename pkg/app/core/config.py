from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict
from pathlib import Path
from typing import Any, List, Optional, Union
import hashlib
import json
import logging

from app.core.exceptions import ConfigError
from app.schemas.config import RigConfig


class Settings(BaseSettings):
    """Process-level settings; session parameters live in the rig config file"""

    model_config = SettingsConfigDict(env_prefix="GAITRIG_", env_file=".env", extra="ignore")

    # Environment configuration
    environment: str = "development"
    log_level: str = "INFO"

    # Tracking server endpoint (frames + sync share one stream connection)
    server_host: str = "127.0.0.1"
    server_port: int = 7070

    # Optional HTTP status surface for a running server
    http_host: str = "127.0.0.1"
    http_port: Optional[int] = None
    dashboard_origins: List[str] = []

    # Outputs
    output_dir: str = "./runs/latest"

    # Session plumbing
    ready_timeout_s: float = 30.0
    connect_retries: int = 20
    connect_retry_delay_s: float = 0.25


settings = Settings()


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format='%(levelname)s - %(name)s - %(message)s',
        handlers=[logging.StreamHandler()],
        force=True,
    )


def load_rig_config(path: Optional[Union[str, Path]] = None) -> RigConfig:
    """Load and validate a rig config file; no path means the built-in defaults"""
    if path is None:
        return RigConfig()
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"Config file not found: {config_path}")
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"Config file is not valid JSON: {e}")
    return validate_rig_config(data)


def validate_rig_config(data: Any, source: str = "config") -> RigConfig:
    """Validate a parsed rig config document; errors name the offending dotted key"""
    try:
        return RigConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"Invalid {source} key '{key}': {first['msg']}", key=key)


def config_digest(config: RigConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
