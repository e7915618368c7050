"""Automatic gamma/mu search, one-vs-rest training and mask-based separation."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Literal, Optional, Sequence, Tuple, TypeVar
import numpy as np
from scipy.stats import spearmanr
from app.config import settings
from app.errors import ModelError, TuningError
from app.models import (
    ArchConfig,
    CandidateRecord,
    HyperParams,
    MuStep,
    ProbeNorms,
    RatioTrend,
    StftConfig,
    TrainConfig,
    TuneTrace,
)
from app.services.mask_net import (
    MaskNetModel,
    ObjectiveSpec,
    Targets,
    forward,
    train_restarts,
)
from app.services.signal_core import TimeSignal, istft, mix_at_zero_db, stft
from app.services.subspace import find_orth

logger = logging.getLogger(__name__)

RATIO_EPS = 1e-12
RATIO_CAP = 1e12

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class ProbeResult:
    """Ratios measured by feeding the isolated source and interferer through a model."""

    r_e: float
    r_s: float
    r_n: float
    norms: ProbeNorms


@dataclass
class FitResult:
    """A trained candidate network."""

    model: MaskNetModel
    epochs_run: int
    final_loss: float


def _ratio(numerator: float, denominator: float) -> float:
    return min(numerator / (denominator + RATIO_EPS), RATIO_CAP)


def _fro(matrix: np.ndarray) -> float:
    return float(np.linalg.norm(matrix))


def ratios_from_probes(
    Ys: np.ndarray,
    Yn: np.ndarray,
    y_ss: np.ndarray,
    y_sn: np.ndarray,
    y_ns: np.ndarray,
    y_nn: np.ndarray,
) -> ProbeResult:
    """r_e, r_s and r_n from the four probe outputs.

    y_ss/y_sn: source/interferer head on input Ys; y_ns/y_nn: on input Yn.
    """
    norms = ProbeNorms(ss=_fro(y_ss), sn=_fro(y_sn), ns=_fro(y_ns), nn=_fro(y_nn))
    return ProbeResult(
        r_e=_ratio(_fro(Yn - y_ns), _fro(Ys - y_ss)),
        r_s=_ratio(norms.ss, norms.sn),
        r_n=_ratio(norms.nn, norms.ns),
        norms=norms,
    )


def probe(model: MaskNetModel, Ys: np.ndarray, Yn: np.ndarray) -> ProbeResult:
    """Run the isolated source and interferer through `model`."""
    if Ys.shape[0] != model.bins or Yn.shape[0] != model.bins:
        raise ModelError(
            f"model expects {model.bins} bins, got {Ys.shape[0]} and {Yn.shape[0]}"
        )
    on_source = forward(model, Ys)
    on_interferer = forward(model, Yn)
    return ratios_from_probes(
        Ys,
        Yn,
        on_source.y_tilde_s,
        on_source.y_tilde_n,
        on_interferer.y_tilde_s,
        on_interferer.y_tilde_n,
    )


def error_ratio(model: MaskNetModel, Ys: np.ndarray, Yn: np.ndarray) -> float:
    """||Yn - y~_ns|| / ||Ys - y~_ss||; higher means less interference leakage."""
    return probe(model, Ys, Yn).r_e


def energy_ratios(
    model: MaskNetModel, Ys: np.ndarray, Yn: np.ndarray
) -> Tuple[float, float]:
    """(r_s, r_n): correct-head over wrong-head energy for each isolated input."""
    result = probe(model, Ys, Yn)
    return result.r_s, result.r_n


class CandidateTrainer:
    """Trains and probes the candidate networks of the hyper-parameter search."""

    def __init__(self, arch: ArchConfig, cfg: TrainConfig) -> None:
        self.arch = arch
        self.cfg = cfg

    def fit(
        self,
        features: np.ndarray,
        targets: Targets,
        spec: ObjectiveSpec,
        seed: int,
    ) -> FitResult:
        cfg = self.cfg.model_copy(update={"seed": seed})
        trained, losses = train_restarts(
            features, targets, spec, self.arch.h1, self.arch.h2, cfg
        )
        final_loss = losses[-1] if losses else float("nan")
        return FitResult(model=trained, epochs_run=len(losses), final_loss=final_loss)

    def probe(self, model: MaskNetModel, Ys: np.ndarray, Yn: np.ndarray) -> ProbeResult:
        return probe(model, Ys, Yn)


def map_ordered(
    fn: Callable[[T], R], items: Sequence[T], max_workers: Optional[int]
) -> List[R]:
    """map() that may fan out to threads; results keep the input order."""
    workers = settings.max_workers if max_workers is None else max_workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def sweep_gamma(
    Ys: np.ndarray,
    Yn: np.ndarray,
    Yn_o: np.ndarray,
    arch: ArchConfig,
    hp: HyperParams,
    cfg: TrainConfig,
    base_seed: int = 0,
    trainer: Optional[CandidateTrainer] = None,
    max_workers: Optional[int] = None,
) -> Tuple[float, TuneTrace]:
    """Train one network per gamma on the grid (mu = 0, Ys as input); keep max r_e."""
    grid = hp.gamma_grid()
    if not grid:
        raise TuningError("empty gamma grid")
    trainer = trainer or CandidateTrainer(arch, cfg)
    targets = Targets(ys=Ys, yn=Yn, yn_o=Yn_o)

    def run(item: Tuple[int, float]) -> CandidateRecord:
        index, gamma = item
        spec = ObjectiveSpec(kind="df", gamma=gamma, mu=0.0)
        fit = trainer.fit(Ys, targets, spec, base_seed + index)
        r_e = trainer.probe(fit.model, Ys, Yn).r_e
        logger.info(f"gamma={gamma:g}: r_e={r_e:.4f} ({fit.epochs_run} epochs)")
        return CandidateRecord(
            gamma=gamma, r_e=r_e, epochs_run=fit.epochs_run, final_loss=fit.final_loss
        )

    candidates = map_ordered(run, list(enumerate(grid)), max_workers)
    re_values = [c.r_e for c in candidates]
    chosen = grid[int(np.argmax(re_values))]
    trace = TuneTrace(
        gamma_grid=grid,
        re_values=re_values,
        gamma_candidates=candidates,
        chosen_gamma=chosen,
    )
    return chosen, trace


def mu_stop_rule(
    r_s: float, r_n: float, num_sources: int, rs_min: float, is_last: bool
) -> bool:
    """(L - 1) r_s <= r_n  or  r_s <= rs_min  or  the mu set is exhausted."""
    return (num_sources - 1) * r_s <= r_n or r_s <= rs_min or is_last


def _search_mu(
    X: np.ndarray,
    Ys: np.ndarray,
    Yn: np.ndarray,
    Yn_o: np.ndarray,
    gamma: float,
    num_sources: int,
    hp: HyperParams,
    trainer: CandidateTrainer,
    base_seed: int,
) -> Tuple[float, TuneTrace, FitResult, ProbeResult]:
    if not hp.mu_set:
        raise TuningError("empty mu_set")
    if num_sources < 2:
        raise TuningError(f"at least 2 sources are required, got L={num_sources}")
    targets = Targets(ys=Ys, yn=Yn, yn_o=Yn_o)
    steps: List[MuStep] = []
    chosen: Optional[Tuple[float, FitResult, ProbeResult]] = None
    exhausted = False
    last = len(hp.mu_set) - 1

    for index, mu in enumerate(hp.mu_set):
        spec = ObjectiveSpec(kind="df", gamma=gamma, mu=mu)
        fit = trainer.fit(X, targets, spec, base_seed + index)
        result = trainer.probe(fit.model, Ys, Yn)
        fired = chosen is None and mu_stop_rule(
            result.r_s, result.r_n, num_sources, hp.rs_min, index == last
        )
        logger.info(
            f"mu={mu:g}: r_s={result.r_s:.4f} r_n={result.r_n:.4f}"
            f"{' (stop)' if fired else ''}"
        )
        steps.append(
            MuStep(
                mu=mu,
                r_s=result.r_s,
                r_n=result.r_n,
                epochs_run=fit.epochs_run,
                final_loss=fit.final_loss,
                stop_fired=fired,
            )
        )
        if fired:
            chosen = (mu, fit, result)
            exhausted = index == last and not mu_stop_rule(
                result.r_s, result.r_n, num_sources, hp.rs_min, False
            )
            if not hp.full_mu_sweep:
                break

    mu, fit, result = chosen
    trace = TuneTrace(
        mu_steps=steps,
        chosen_gamma=gamma,
        chosen_mu=mu,
        mu_exhausted=exhausted,
        probe_norms=result.norms,
    )
    return mu, trace, fit, result


def find_mu(
    Ys: np.ndarray,
    Yn: np.ndarray,
    Yn_o: np.ndarray,
    gamma: float,
    num_sources: int,
    arch: ArchConfig,
    hp: HyperParams,
    cfg: TrainConfig,
    X: np.ndarray,
    base_seed: int = 0,
    trainer: Optional[CandidateTrainer] = None,
) -> Tuple[float, TuneTrace]:
    """Walk mu_set upwards, training on the mixture X, until the stop rule fires."""
    trainer = trainer or CandidateTrainer(arch, cfg)
    mu, trace, _, _ = _search_mu(
        X, Ys, Yn, Yn_o, gamma, num_sources, hp, trainer, base_seed
    )
    return mu, trace


def ratio_trend(trace: TuneTrace) -> RatioTrend:
    """Spearman correlation of mu with r_s and r_n over the visited mu values."""
    visited = len(trace.mu_steps)
    if visited < 3:
        return RatioTrend(visited=visited)
    mus = [step.mu for step in trace.mu_steps]
    rho_s = spearmanr(mus, [step.r_s for step in trace.mu_steps]).correlation
    rho_n = spearmanr(mus, [step.r_n for step in trace.mu_steps]).correlation
    return RatioTrend(
        visited=visited,
        rho_mu_rs=None if np.isnan(rho_s) else float(rho_s),
        rho_mu_rn=None if np.isnan(rho_n) else float(rho_n),
    )


@dataclass(frozen=True)
class TrainingSpectra:
    """Frame-aligned magnitudes of one one-vs-rest training problem."""

    X: np.ndarray
    Ys: np.ndarray
    Yn: np.ndarray


def one_vs_rest_spectra(
    sources_train: Sequence[TimeSignal], target_index: int, stft_cfg: StftConfig
) -> TrainingSpectra:
    """Mixture, target and summed-interferer magnitudes of the 0 dB training mix."""
    if len(sources_train) < 2:
        raise TuningError(f"at least 2 sources are required, got {len(sources_train)}")
    if not 0 <= target_index < len(sources_train):
        raise TuningError(
            f"target index {target_index} out of range for {len(sources_train)} sources"
        )
    mixture, scaled = mix_at_zero_db(sources_train)
    interferer = TimeSignal(
        np.sum([s.samples for i, s in enumerate(scaled) if i != target_index], axis=0),
        mixture.sample_rate,
    )
    return TrainingSpectra(
        X=stft(mixture, stft_cfg).magnitude,
        Ys=stft(scaled[target_index], stft_cfg).magnitude,
        Yn=stft(interferer, stft_cfg).magnitude,
    )


def train_df_dnn(
    sources_train: Sequence[TimeSignal],
    target_index: int,
    stft_cfg: StftConfig,
    arch: ArchConfig,
    hp: HyperParams,
    cfg: TrainConfig,
    base_seed: int = 0,
    trainer: Optional[CandidateTrainer] = None,
    max_workers: Optional[int] = None,
) -> Tuple[MaskNetModel, HyperParams, TuneTrace]:
    """Auto-tuned one-vs-rest network for source `target_index`."""
    spectra = one_vs_rest_spectra(sources_train, target_index, stft_cfg)
    trainer = trainer or CandidateTrainer(arch, cfg)
    Yn_o = find_orth(spectra.Ys, spectra.Yn, hp.energy_fraction)

    gamma, gamma_trace = sweep_gamma(
        spectra.Ys, spectra.Yn, Yn_o, arch, hp, cfg,
        base_seed=base_seed, trainer=trainer, max_workers=max_workers,
    )
    mu, mu_trace, fit, _ = _search_mu(
        spectra.X, spectra.Ys, spectra.Yn, Yn_o, gamma,
        len(sources_train), hp, trainer, base_seed,
    )
    trace = gamma_trace.model_copy(
        update={
            "source_index": target_index,
            "mu_steps": mu_trace.mu_steps,
            "chosen_mu": mu,
            "mu_exhausted": mu_trace.mu_exhausted,
            "probe_norms": mu_trace.probe_norms,
        }
    )
    trace = trace.model_copy(update={"trend": ratio_trend(trace)})
    tuned = hp.model_copy(update={"gamma": gamma, "mu": mu})
    logger.info(f"Source {target_index}: gamma*={gamma:g}, mu*={mu:g}")
    return fit.model, tuned, trace


def train_joint(
    sources_train: Sequence[TimeSignal],
    stft_cfg: StftConfig,
    arch: ArchConfig,
    gamma: float,
    cfg: TrainConfig,
    seed: int = 0,
) -> Tuple[MaskNetModel, List[float]]:
    """Single two-head network trained on the mixture with the joint objective."""
    if len(sources_train) != 2:
        raise TuningError(f"joint training needs exactly 2 sources, got {len(sources_train)}")
    spectra = one_vs_rest_spectra(sources_train, 0, stft_cfg)
    spec = ObjectiveSpec(kind="joint", gamma=gamma)
    return train_restarts(
        spectra.X,
        Targets(ys=spectra.Ys, yn=spectra.Yn),
        spec,
        arch.h1,
        arch.h2,
        cfg.model_copy(update={"seed": seed}),
    )


def separate_one(
    model: MaskNetModel,
    mixture: TimeSignal,
    stft_cfg: StftConfig,
    head: Literal["source", "interferer"] = "source",
) -> TimeSignal:
    """Masked mixture magnitude of one head, resynthesized with the mixture phase."""
    spectrogram = stft(mixture, stft_cfg)
    if spectrogram.bins != model.bins:
        raise ModelError(f"model expects {model.bins} bins, STFT has {spectrogram.bins}")
    outputs = forward(model, spectrogram.magnitude)
    magnitude = outputs.y_tilde_s if head == "source" else outputs.y_tilde_n
    return istft(magnitude, spectrogram.phase, stft_cfg, mixture.sample_rate)


def separate_all(
    models: Sequence[MaskNetModel],
    mixture: TimeSignal,
    stft_cfg: StftConfig,
    max_workers: Optional[int] = None,
) -> List[TimeSignal]:
    """One estimate per one-vs-rest model; estimates need not sum to the mixture."""
    if len(models) < 2:
        raise TuningError(f"at least 2 models are required (L >= 2), got {len(models)}")
    return map_ordered(
        lambda model: separate_one(model, mixture, stft_cfg), list(models), max_workers
    )
