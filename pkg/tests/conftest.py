"""
Shared fixtures.
"""

import json
import os
from pathlib import Path
from typing import Any, Callable, Dict

import numpy as np
import pytest

from src.config.settings import get_settings
from src.models import AdcBank, AdcSpec, Constellation, SeConfig, SystemConfig

REPO_ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = REPO_ROOT / "configs"


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch: pytest.MonkeyPatch):
    """Settings are cached per process; isolate every test from the host env."""
    for name in list(os.environ):
        if name.startswith("MIXEDADC_"):
            monkeypatch.delenv(name)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def qpsk() -> Constellation:
    return Constellation.qpsk()


@pytest.fixture
def gaussian() -> Constellation:
    return Constellation.gaussian()


@pytest.fixture
def se_cfg() -> SeConfig:
    return SeConfig()


@pytest.fixture
def small_system(qpsk: Constellation) -> SystemConfig:
    return SystemConfig(num_users=8, num_antennas=32, constellation=qpsk)


@pytest.fixture
def two_bit_bank(small_system: SystemConfig) -> AdcBank:
    return AdcBank.uniform(AdcSpec.uniform(2, 0.5), small_system.num_antennas)


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[str, Dict[str, Any]], Path]:
    """Write a JSON config (pretty-printed, one key per line) under tmp_path."""

    def write(name: str, payload: Dict[str, Any]) -> Path:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        return path

    return write
