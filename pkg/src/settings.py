"""
Settings Module - Runtime configuration for every sparseforge command

Values come from (highest priority first) explicit overrides, a YAML config
file, SPARSEFORGE_* environment variables / .env, then the defaults below.
"""

from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from errors import InvalidInputError


class SparseForgeSettings(BaseSettings):
    """Tunables for vocabulary building, masking, encoding, training and stats"""

    model_config = SettingsConfigDict(
        env_prefix="SPARSEFORGE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Vocabulary construction
    case_fold: bool = False
    vocab_size: int = Field(default=100_000, ge=1)
    max_chars_per_word: int = Field(default=100, ge=1)

    # Masking data generation
    mask_ratio: float = Field(default=0.15, gt=0.0, le=1.0)
    mask_token_prob: float = Field(default=0.8, ge=0.0, le=1.0)
    random_token_prob: float = Field(default=0.1, ge=0.0, le=1.0)
    keep_token_prob: float = Field(default=0.1, ge=0.0, le=1.0)
    max_length: int = Field(default=64, ge=1)
    seed: int = Field(default=0, ge=0)

    # Encoding (training-time top-K masking budgets)
    query_top_k: int = Field(default=1000, ge=1)
    doc_top_k: int = Field(default=2000, ge=1)
    weight_digits: int = Field(default=6, ge=1, le=17)

    # Training kernels
    lambda_j: float = Field(default=5.0, ge=0.0)
    gradcheck_step: float = Field(default=1e-5, gt=0.0)
    gradcheck_tolerance: float = Field(default=1e-4, gt=0.0)
    # relative errors use max(|analytic|, |numeric|, floor) as denominator
    gradcheck_error_floor: float = Field(default=1e-3, gt=0.0)

    # Statistics
    std_convention: Literal["population", "sample"] = "population"

    # Execution and logging
    workers: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    log_json: bool = False
    log_file: Optional[Path] = None

    @model_validator(mode="after")
    def _check_action_probabilities(self) -> "SparseForgeSettings":
        total = self.mask_token_prob + self.random_token_prob + self.keep_token_prob
        if abs(total - 1.0) > 1e-9:
            raise ValueError(
                f"mask/random/keep probabilities must sum to 1, got {total}"
            )
        return self


def load_settings(config_path: Optional[Union[str, Path]] = None,
                  **overrides: Any) -> SparseForgeSettings:
    """
    Build settings from an optional YAML file plus explicit overrides

    Args:
        config_path: YAML mapping of setting names to values
        overrides: values that win over both the file and the environment;
            None values are ignored so argparse defaults can be passed through

    Returns:
        SparseForgeSettings instance
    """
    data: dict = {}
    if config_path is not None:
        path = Path(config_path)
        try:
            with path.open("r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f) or {}
        except OSError as e:
            raise InvalidInputError(f"cannot read config file {path}: {e}") from e
        if not isinstance(loaded, dict):
            raise InvalidInputError(f"config file {path} must contain a mapping")
        data.update(loaded)

    data.update({key: value for key, value in overrides.items() if value is not None})
    return SparseForgeSettings(**data)
