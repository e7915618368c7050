"""Waveforms, STFT analysis/synthesis, 0 dB mixing and synthetic sources."""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile
from scipy.signal import chirp, fftconvolve, firwin, get_window
from app.errors import SignalError
from app.models import BandNoiseSpec, ChirpSpec, HarmonicSpec, StftConfig, SynthSpec

logger = logging.getLogger(__name__)

PCM_SCALE = 32768.0
WINDOW_SUM_FLOOR = 1e-12


@dataclass(frozen=True)
class TimeSignal:
    """A mono sampled waveform."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise SignalError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise SignalError("samples must be finite")
        if int(self.sample_rate) <= 0:
            raise SignalError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self) / self.sample_rate

    def energy(self) -> float:
        """Squared L2 norm of the samples."""
        return float(np.dot(self.samples, self.samples))

    def scaled(self, factor: float) -> "TimeSignal":
        return TimeSignal(self.samples * factor, self.sample_rate)

    def segment(self, start: int, stop: int) -> "TimeSignal":
        return TimeSignal(self.samples[start:stop], self.sample_rate)


@dataclass(frozen=True)
class Spectrogram:
    """One-sided STFT of a signal, bins x frames."""

    complex_bins: np.ndarray
    magnitude: np.ndarray
    phase: np.ndarray
    config: StftConfig

    @classmethod
    def from_complex(cls, complex_bins: np.ndarray, config: StftConfig) -> "Spectrogram":
        if complex_bins.shape[0] != config.bins:
            raise SignalError(
                f"expected {config.bins} bins, got {complex_bins.shape[0]}"
            )
        return cls(
            complex_bins=complex_bins,
            magnitude=np.abs(complex_bins),
            phase=np.angle(complex_bins),
            config=config,
        )

    @classmethod
    def from_polar(
        cls, magnitude: np.ndarray, phase: np.ndarray, config: StftConfig
    ) -> "Spectrogram":
        _check_polar(magnitude, phase, config)
        return cls(
            complex_bins=magnitude * np.exp(1j * phase),
            magnitude=magnitude,
            phase=phase,
            config=config,
        )

    @property
    def num_frames(self) -> int:
        return int(self.complex_bins.shape[1])

    @property
    def bins(self) -> int:
        return int(self.complex_bins.shape[0])


def analysis_window(config: StftConfig) -> np.ndarray:
    """Symmetric Hamming window, 0.54 - 0.46 cos(2 pi n / (N - 1))."""
    return get_window(config.window_kind, config.window_len, fftbins=False)


def stft(signal: TimeSignal, config: StftConfig) -> Spectrogram:
    """Hamming-windowed one-sided STFT; a trailing partial frame is dropped."""
    if len(signal) < config.window_len:
        raise SignalError(
            f"signal too short: {len(signal)} samples < window of {config.window_len}"
        )
    frames = sliding_window_view(signal.samples, config.window_len)[:: config.hop]
    spectra = np.fft.rfft(frames * analysis_window(config), n=config.fft_len, axis=1)
    return Spectrogram.from_complex(spectra.T, config)


def _check_polar(magnitude: np.ndarray, phase: np.ndarray, config: StftConfig) -> None:
    if magnitude.shape != phase.shape:
        raise SignalError(
            f"magnitude shape {magnitude.shape} does not match phase shape {phase.shape}"
        )
    if magnitude.ndim != 2 or magnitude.shape[0] != config.bins:
        raise SignalError(
            f"expected a ({config.bins}, frames) matrix, got {magnitude.shape}"
        )


def istft(
    magnitude: np.ndarray, phase: np.ndarray, config: StftConfig, sample_rate: int
) -> TimeSignal:
    """Overlap-add synthesis normalized by the squared-window sum."""
    magnitude = np.asarray(magnitude, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    _check_polar(magnitude, phase, config)

    window = analysis_window(config)
    frames = np.fft.irfft(magnitude.T * np.exp(1j * phase.T), n=config.fft_len, axis=1)
    frames = frames[:, : config.window_len] * window

    num_frames = magnitude.shape[1]
    length = (num_frames - 1) * config.hop + config.window_len
    output = np.zeros(length)
    window_sum = np.zeros(length)
    for t in range(num_frames):
        start = t * config.hop
        output[start : start + config.window_len] += frames[t]
        window_sum[start : start + config.window_len] += window**2
    output /= np.maximum(window_sum, WINDOW_SUM_FLOOR)
    return TimeSignal(output, sample_rate)


def mix_at_zero_db(
    sources: Sequence[TimeSignal],
) -> Tuple[TimeSignal, List[TimeSignal]]:
    """Scale every source to the first source's energy and sum them."""
    if len(sources) < 2:
        raise SignalError(f"at least 2 sources are required, got {len(sources)}")
    rates = {source.sample_rate for source in sources}
    if len(rates) != 1:
        raise SignalError(f"sample rates differ: {sorted(rates)}")

    length = min(len(source) for source in sources)
    truncated = [source.segment(0, length) for source in sources]
    energies = [source.energy() for source in truncated]
    for index, energy in enumerate(energies):
        if energy <= 0.0:
            raise SignalError(f"source {index} has zero energy")

    reference = energies[0]
    scaled = [
        source.scaled(np.sqrt(reference / energy))
        for source, energy in zip(truncated, energies)
    ]
    mixture = TimeSignal(np.sum([s.samples for s in scaled], axis=0), rates.pop())
    return mixture, scaled


def peak_normalize(signal: TimeSignal, peak: float = 0.9) -> TimeSignal:
    """Scale so the largest absolute sample equals `peak`; silence is returned as is."""
    current = float(np.max(np.abs(signal.samples)))
    if current == 0.0:
        return signal
    return signal.scaled(peak / current)


def load_wav(path: Union[str, Path]) -> TimeSignal:
    """Read a mono 16-bit PCM WAV file, samples scaled to [-1, 1)."""
    try:
        sample_rate, data = wavfile.read(str(path))
    except (ValueError, EOFError, struct.error) as e:
        raise SignalError(f"corrupt or unsupported WAV file {path}: {e}") from e

    if data.ndim != 1:
        raise SignalError(f"mono required: {path} has {data.shape[1]} channels")
    if data.dtype != np.int16:
        raise SignalError(f"16-bit PCM required: {path} stores {data.dtype} samples")
    logger.debug(f"Loaded {path}: {data.size} samples at {sample_rate} Hz")
    return TimeSignal(data.astype(np.float64) / PCM_SCALE, sample_rate)


def save_wav(signal: TimeSignal, path: Union[str, Path]) -> Path:
    """Write a mono 16-bit PCM WAV file, clipping at full scale."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(signal.samples * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1)
    wavfile.write(str(path), signal.sample_rate, pcm.astype(np.int16))
    return path


def synth_source(
    params: Union[HarmonicSpec, ChirpSpec, BandNoiseSpec],
    seed: int,
    duration: float,
    sample_rate: int,
    amplitude: float = 0.3,
) -> TimeSignal:
    """Deterministic synthetic source of the kind named by `params.kind`."""
    if duration <= 0:
        raise SignalError(f"duration must be positive, got {duration}")
    nyquist = sample_rate / 2.0
    num_samples = int(round(duration * sample_rate))
    t = np.arange(num_samples) / sample_rate
    rng = np.random.default_rng(seed)

    if params.kind == "harmonic":
        if params.f0 >= nyquist:
            raise SignalError(f"fundamental {params.f0} Hz exceeds Nyquist {nyquist} Hz")
        phases = rng.uniform(0.0, 2.0 * np.pi, size=params.n_partials)
        samples = np.zeros(num_samples)
        for k in range(params.n_partials):
            frequency = (k + 1) * params.f0
            if frequency >= nyquist:
                logger.debug(f"Dropping partial {k + 1} at {frequency} Hz (>= Nyquist)")
                break
            samples += params.decay**k * np.sin(2 * np.pi * frequency * t + phases[k])
    elif params.kind == "chirp":
        if max(params.f_start, params.f_end) >= nyquist:
            raise SignalError(
                f"invalid band edges: sweep {params.f_start}-{params.f_end} Hz "
                f"reaches Nyquist {nyquist} Hz"
            )
        phase_deg = rng.uniform(0.0, 360.0)
        samples = chirp(
            t, f0=params.f_start, t1=duration, f1=params.f_end,
            method="linear", phi=phase_deg,
        )
    elif params.kind == "bandnoise":
        if not 0.0 < params.low_hz < params.high_hz < nyquist:
            raise SignalError(
                f"invalid band edges: [{params.low_hz}, {params.high_hz}] Hz "
                f"with Nyquist {nyquist} Hz"
            )
        if params.num_taps % 2 == 0:
            raise SignalError(f"num_taps must be odd, got {params.num_taps}")
        taps = firwin(
            params.num_taps, [params.low_hz, params.high_hz],
            pass_zero=False, fs=sample_rate,
        )
        noise = rng.standard_normal(num_samples + params.num_taps - 1)
        samples = fftconvolve(noise, taps, mode="valid")
    else:
        raise SignalError(f"unknown synthetic source kind: {params.kind}")

    return peak_normalize(TimeSignal(samples, sample_rate), amplitude)


def synthesize(spec: SynthSpec) -> TimeSignal:
    """Render a `SynthSpec`."""
    return synth_source(
        spec.params, spec.seed, spec.duration, spec.sample_rate, spec.amplitude
    )
