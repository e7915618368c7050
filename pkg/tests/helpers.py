"""Config builders shared by the integration tests."""

from pathlib import Path
from typing import Any, Dict
import yaml


def tiny_config(**overrides: Any) -> Dict[str, Any]:
    """Two half-second synthetic sources with a schedule that trains in milliseconds."""
    config: Dict[str, Any] = {
        "preset": "desk",
        "base_seed": 7,
        "sources": [
            {"name": "harmonic", "synth": {
                "params": {"kind": "harmonic", "f0": 250.0, "n_partials": 3},
                "seed": 1, "duration": 0.5, "sample_rate": 8000}},
            {"name": "bandnoise", "synth": {
                "params": {"kind": "bandnoise", "low_hz": 2000.0, "high_hz": 3200.0,
                           "num_taps": 65},
                "seed": 2, "duration": 0.5, "sample_rate": 8000}},
        ],
        "stft": {"window_len": 64, "hop": 32, "fft_len": 64},
        "arch": {"h1": 8, "h2": 8},
        "train": {"epochs": 2, "learning_rate": 1e-3, "batch_frames": 64},
        "hyper": {"gamma_min": 0.1, "gamma_max": 0.2, "gamma_step": 0.1,
                  "mu_set": [0.5, 1.0]},
    }
    config.update(overrides)
    return config


def write_yaml(path: Path, data: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path
