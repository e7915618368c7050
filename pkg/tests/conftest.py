"""Shared fixtures: small framings and synthetic sources."""

import numpy as np
import pytest
from app.models import BandNoiseSpec, HarmonicSpec, StftConfig
from app.services.signal_core import TimeSignal, synth_source
from tests.helpers import tiny_config, write_yaml


@pytest.fixture
def small_stft():
    """64-sample Hamming frames at 50% overlap, 33 bins."""
    return StftConfig(window_len=64, hop=32, fft_len=64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def disjoint_sources():
    """Harmonic tone below 1 kHz and band noise above 2 kHz, one second at 8 kHz."""
    return [
        synth_source(HarmonicSpec(f0=250.0, n_partials=3), 1, 1.0, 8000),
        synth_source(BandNoiseSpec(low_hz=2000.0, high_hz=3200.0), 2, 1.0, 8000),
    ]


@pytest.fixture
def noise_signal(rng):
    return TimeSignal(rng.standard_normal(4096), 8000)


@pytest.fixture
def tiny_config_path(tmp_path):
    return write_yaml(tmp_path / "tiny.yaml", tiny_config(output_dir=str(tmp_path / "runs")))
