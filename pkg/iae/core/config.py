from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    log_level: str = "INFO"
    # default parent for run directories when --out is not given
    output_dir: str = "runs"
    ledger_path: str = "runs_ledger.csv"

    model_config = SettingsConfigDict(
        env_prefix="IAE_", env_file=".env", extra="ignore"
    )


def get_settings() -> Settings:
    return Settings()
