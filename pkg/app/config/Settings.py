import os
from typing import Optional
from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """Process-wide settings read from the environment (and `.env`)."""

    model_config = SettingsConfigDict(env_prefix="LAB_", extra="ignore")

    workers: Optional[int] = Field(default=None, ge=1)
    log_level: str = "INFO"
    output_dir: str = "reports"

    def resolved_workers(self) -> int:
        """Worker count; absence of LAB_WORKERS means auto."""
        return self.workers or os.cpu_count() or 1

    @staticmethod
    def version() -> str:
        return os.getenv("VERSION", "1.0.0")

    @staticmethod
    def build() -> str:
        return os.getenv("BUILD", "dev")


def get_settings() -> Settings:
    return Settings()
