"""Data models for the source separation toolkit."""

from typing import Annotated, Dict, List, Literal, Optional, Union
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class StftConfig(BaseModel):
    """Framing and FFT parameters shared by analysis and synthesis."""

    model_config = ConfigDict(frozen=True)

    window_len: int = Field(256, gt=0, description="Analysis window length (samples)")
    hop: int = Field(128, gt=0, description="Frame advance (samples)")
    fft_len: int = Field(256, gt=0, description="FFT size (samples)")
    window_kind: Literal["hamming"] = Field("hamming", description="Window family")

    @model_validator(mode="after")
    def _check_framing(self) -> "StftConfig":
        if self.window_len % 2:
            raise ValueError("window_len must be even")
        if self.hop * 2 != self.window_len:
            raise ValueError("hop must equal window_len / 2 (50% overlap)")
        if self.fft_len < self.window_len:
            raise ValueError("fft_len must be >= window_len")
        return self

    @property
    def bins(self) -> int:
        """Number of one-sided frequency bins."""
        return self.fft_len // 2 + 1


class ArchConfig(BaseModel):
    """Hidden layer widths of the masking network."""

    h1: int = Field(64, ge=1, description="First hidden layer width")
    h2: int = Field(64, ge=1, description="Second hidden layer width")


class TrainConfig(BaseModel):
    """Mini-batch training schedule."""

    batch_frames: int = Field(10000, ge=1, description="Frames per mini-batch")
    epochs: int = Field(100, ge=0, description="Maximum number of epochs")
    learning_rate: float = Field(1e-3, gt=0, description="Step size")
    optimizer: Literal["plain-sgd", "momentum-sgd", "adaptive-moments"] = Field(
        "adaptive-moments", description="First-order update rule"
    )
    momentum: float = Field(0.9, ge=0, lt=1, description="Momentum for momentum-sgd")
    beta1: float = Field(0.9, ge=0, lt=1, description="First-moment decay")
    beta2: float = Field(0.999, ge=0, lt=1, description="Second-moment decay")
    eps: float = Field(1e-8, gt=0, description="Adaptive-moments denominator guard")
    seed: int = Field(0, ge=0, description="Shuffle seed")
    shuffle: bool = Field(True, description="Shuffle frames every epoch")
    patience: int = Field(10, ge=1, description="Plateau epochs before early exit")
    min_improvement: float = Field(
        1e-7, ge=0, description="Relative loss improvement counted as progress"
    )
    standardize_inputs: bool = Field(
        False, description="Per-bin standardization of network inputs"
    )
    restarts: int = Field(
        1, ge=1, description="Independent initializations; the lowest final loss is kept"
    )


class HyperParams(BaseModel):
    """Discrimination weights and the search space used to tune them."""

    gamma: float = Field(0.1, ge=0, description="Discrimination weight")
    mu: float = Field(0.0, ge=0, description="Interferer reconstruction weight")
    gamma_min: float = Field(0.1, ge=0)
    gamma_max: float = Field(0.5, ge=0)
    gamma_step: float = Field(0.1, gt=0)
    mu_set: List[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0, 5.0, 10.0])
    rs_min: float = Field(8.0, ge=0, description="Minimum source energy ratio")
    energy_fraction: float = Field(0.95, gt=0, le=1, description="Subspace energy")
    full_mu_sweep: bool = Field(
        False, description="Diagnostic: keep training through the whole mu_set"
    )

    @field_validator("mu_set")
    @classmethod
    def _ascending(cls, value: List[float]) -> List[float]:
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("mu_set must be strictly ascending")
        return value

    @model_validator(mode="after")
    def _check_range(self) -> "HyperParams":
        if self.gamma_min > self.gamma_max:
            raise ValueError("gamma_min must not exceed gamma_max")
        return self

    def gamma_grid(self) -> List[float]:
        """gamma_min, gamma_min + step, ... up to gamma_max inclusive."""
        grid = []
        k = 0
        while True:
            value = round(self.gamma_min + k * self.gamma_step, 10)
            if value > self.gamma_max + 1e-9:
                break
            grid.append(value)
            k += 1
        return grid


class HarmonicSpec(BaseModel):
    """Sum of partials of a fundamental."""

    kind: Literal["harmonic"] = "harmonic"
    f0: float = Field(200.0, gt=0, description="Fundamental (Hz)")
    n_partials: int = Field(4, ge=1, description="Number of partials")
    decay: float = Field(0.7, gt=0, le=1, description="Amplitude ratio between partials")


class ChirpSpec(BaseModel):
    """Linear frequency sweep."""

    kind: Literal["chirp"] = "chirp"
    f_start: float = Field(300.0, gt=0, description="Start frequency (Hz)")
    f_end: float = Field(900.0, gt=0, description="End frequency (Hz)")


class BandNoiseSpec(BaseModel):
    """Seeded noise band-limited by a windowed-sinc filter."""

    kind: Literal["bandnoise"] = "bandnoise"
    low_hz: float = Field(1000.0, gt=0, description="Lower band edge (Hz)")
    high_hz: float = Field(2000.0, gt=0, description="Upper band edge (Hz)")
    num_taps: int = Field(257, ge=3, description="FIR length (odd)")


SynthParams = Annotated[
    Union[HarmonicSpec, ChirpSpec, BandNoiseSpec], Field(discriminator="kind")
]


class SynthSpec(BaseModel):
    """A deterministic synthetic source."""

    params: SynthParams = Field(..., description="Kind-specific parameters")
    seed: int = Field(0, ge=0)
    duration: float = Field(4.0, gt=0, description="Seconds")
    sample_rate: int = Field(8000, gt=0, description="Hz")
    amplitude: float = Field(0.3, gt=0, le=1, description="Peak amplitude")


class SourceSpec(BaseModel):
    """One input source, read from disk or synthesized."""

    name: Optional[str] = Field(None, description="Label used in reports")
    wav: Optional[str] = Field(None, description="Path to a mono 16-bit PCM WAV")
    synth: Optional[SynthSpec] = Field(None, description="Synthetic source")
    train_fraction: float = Field(
        0.75, gt=0, lt=1, description="Leading fraction used for training"
    )

    @model_validator(mode="after")
    def _one_origin(self) -> "SourceSpec":
        if (self.wav is None) == (self.synth is None):
            raise ValueError("exactly one of 'wav' or 'synth' must be given")
        return self


class SynthFile(BaseModel):
    """Document read by the synth subcommand."""

    sources: List[SynthSpec] = Field(..., min_length=1)


class ExperimentConfig(BaseModel):
    """Every knob of one experiment."""

    preset: Optional[Literal["desk", "timit-like", "tsp-like"]] = None
    sources: List[SourceSpec] = Field(..., description="Source specs, one per source")
    stft: StftConfig = Field(default_factory=StftConfig)
    arch: ArchConfig = Field(default_factory=ArchConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    hyper: HyperParams = Field(default_factory=HyperParams)
    mode: Literal["df-dnn", "joint"] = "df-dnn"
    joint_gamma: float = Field(0.1, ge=0, description="Fixed gamma of joint mode")
    base_seed: int = Field(42, ge=0)
    output_dir: str = "runs"
    signal_normalization: Literal["none", "peak"] = "none"

    @model_validator(mode="after")
    def _check_sources(self) -> "ExperimentConfig":
        if len(self.sources) < 2:
            raise ValueError("at least 2 sources are required")
        if self.mode == "joint" and len(self.sources) != 2:
            raise ValueError("joint mode requires exactly 2 sources")
        return self

    @property
    def num_sources(self) -> int:
        """L, the number of sources in the mixture."""
        return len(self.sources)


class BssEnergies(BaseModel):
    """Energies of the projector decomposition of one estimate."""

    target: float = Field(..., description="||s_target||^2")
    interference: float = Field(..., description="||e_interf||^2")
    artifacts: float = Field(..., description="||e_artif||^2")
    projection: float = Field(..., description="||P_all y_hat||^2")


class BssScore(BaseModel):
    """SDR/SIR/SAR of one estimated source (dB, sentinels clamp to +-300)."""

    source_index: Optional[int] = None
    sdr_db: float
    sir_db: float
    sar_db: float
    energies: Optional[BssEnergies] = None


class ScoreSummary(BaseModel):
    """Per-source scores and their arithmetic means."""

    per_source: List[BssScore]
    average: BssScore


class CandidateRecord(BaseModel):
    """One trained gamma candidate."""

    gamma: float
    r_e: float
    epochs_run: int
    final_loss: float


class MuStep(BaseModel):
    """One trained mu candidate."""

    mu: float
    r_s: float
    r_n: float
    epochs_run: int
    final_loss: float
    stop_fired: bool = False


class ProbeNorms(BaseModel):
    """Frobenius norms of the four probe outputs."""

    ss: float = Field(..., description="||y~_ss||, source head on Ys")
    sn: float = Field(..., description="||y~_sn||, interferer head on Ys")
    ns: float = Field(..., description="||y~_ns||, source head on Yn")
    nn: float = Field(..., description="||y~_nn||, interferer head on Yn")


class RatioTrend(BaseModel):
    """Rank correlation of mu against the energy ratios."""

    visited: int
    rho_mu_rs: Optional[float] = None
    rho_mu_rn: Optional[float] = None


class TuneTrace(BaseModel):
    """Complete record of the gamma sweep and the mu search for one source."""

    source_index: Optional[int] = None
    gamma_grid: List[float] = Field(default_factory=list)
    re_values: List[float] = Field(default_factory=list)
    gamma_candidates: List[CandidateRecord] = Field(default_factory=list)
    mu_steps: List[MuStep] = Field(default_factory=list)
    chosen_gamma: Optional[float] = None
    chosen_mu: Optional[float] = None
    mu_exhausted: bool = False
    probe_norms: Optional[ProbeNorms] = None
    trend: Optional[RatioTrend] = None


class ExperimentReport(BaseModel):
    """Outcome of one experiment run."""

    mode: Literal["df-dnn", "joint"]
    base_seed: int
    sample_rate: int
    num_sources: int
    scores: List[BssScore]
    average: BssScore
    tuned: List[HyperParams] = Field(default_factory=list)
    traces: List[TuneTrace] = Field(default_factory=list)
    artifacts: List[str] = Field(default_factory=list)
    stage_seconds: Dict[str, float] = Field(default_factory=dict)


class ComparisonReport(BaseModel):
    """Side-by-side average scores of the two training modes."""

    base_seed: int
    df_dnn: ExperimentReport
    joint: ExperimentReport
