"""Named experiment presets and the bundled synthetic fixture."""

import copy
from typing import Any, Dict, List

PRESETS: Dict[str, Dict[str, Any]] = {
    # scaled down so the acceptance experiments finish in minutes
    "desk": {
        "stft": {"window_len": 256, "hop": 128, "fft_len": 256},
        "arch": {"h1": 64, "h2": 64},
        "train": {
            "batch_frames": 10000,
            "epochs": 150,
            "learning_rate": 1e-2,
            "standardize_inputs": True,
            "restarts": 4,
        },
    },
    "timit-like": {
        "stft": {"window_len": 512, "hop": 256, "fft_len": 512},
        "arch": {"h1": 150, "h2": 150},
        "train": {"batch_frames": 10000, "epochs": 100, "learning_rate": 1e-3},
    },
    "tsp-like": {
        "stft": {"window_len": 1024, "hop": 512, "fft_len": 1024},
        "arch": {"h1": 300, "h2": 300},
        "train": {"batch_frames": 10000, "epochs": 100, "learning_rate": 1e-3},
    },
}


def merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; values in `override` win."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def apply_preset(raw: Dict[str, Any], name: str) -> Dict[str, Any]:
    """Preset values underneath the explicit config keys."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset '{name}', choose from {sorted(PRESETS)}")
    return merge(PRESETS[name], raw)


def two_source_fixture(sample_rate: int = 8000, duration: float = 4.0) -> List[Dict[str, Any]]:
    """Spectrally disjoint pair: a 200 Hz harmonic tone and 1.5-3 kHz band noise."""
    return [
        {
            "name": "harmonic",
            "synth": {
                "params": {"kind": "harmonic", "f0": 200.0, "n_partials": 4},
                "seed": 1,
                "duration": duration,
                "sample_rate": sample_rate,
            },
        },
        {
            "name": "bandnoise",
            "synth": {
                "params": {"kind": "bandnoise", "low_hz": 1500.0, "high_hz": 3000.0},
                "seed": 2,
                "duration": duration,
                "sample_rate": sample_rate,
            },
        },
    ]
