"""Experiment service: configuration loading, orchestration and artifacts."""

import logging
import time
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union
import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ValidationError
from app.config import settings
from app.errors import ConfigError, StageError
from app.models import (
    ComparisonReport,
    ExperimentConfig,
    ExperimentReport,
    HyperParams,
    ScoreSummary,
    SynthFile,
    TuneTrace,
)
from app.presets import apply_preset
from app.services.auto_tune import (
    map_ordered,
    mu_stop_rule,
    separate_all,
    separate_one,
    train_df_dnn,
    train_joint,
)
from app.services.bss_metrics import evaluate_all
from app.services.mask_net import MaskNetModel
from app.services.signal_core import (
    TimeSignal,
    load_wav,
    mix_at_zero_db,
    peak_normalize,
    save_wav,
    stft,
    synthesize,
)
from app.storage.checkpoint_store import checkpoint_store
from app.storage.report_store import report_store, trace_table
from app.storage.spectrogram_store import spectrogram_store

logger = logging.getLogger(__name__)

# seed offset between one-vs-rest problems so their candidates never share a seed
SOURCE_SEED_STRIDE = 1000


def _format_validation(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def _read_yaml(path: Union[str, Path]) -> Any:
    try:
        with open(path) as f:
            return yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: invalid YAML{where}: {e}") from e


def _validate(model: type, data: Any, path: Union[str, Path]) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_format_validation(e)}") from e


@contextmanager
def _stage(name: str, timings: Dict[str, float]) -> Iterator[None]:
    """Time a stage and re-raise its failures as StageError(name)."""
    start = time.perf_counter()
    logger.info(f"Stage '{name}' started")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Stage '{name}' failed: {e}")
        raise StageError(name, e) from e
    finally:
        timings[name] = round(time.perf_counter() - start, 6)


class ExperimentRunner:
    """Runs separation experiments end to end."""

    def load_config(
        self,
        path: Union[str, Path],
        preset: Optional[str] = None,
        seed: Optional[int] = None,
        out: Optional[str] = None,
    ) -> ExperimentConfig:
        """Parse and validate an experiment YAML file; CLI flags override its keys."""
        raw = _read_yaml(path)
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a mapping at the top level")
        name = preset or raw.get("preset") or settings.default_preset
        try:
            raw = apply_preset(raw, name)
        except KeyError as e:
            raise ConfigError(f"{path}: preset: {e.args[0]}") from e
        raw["preset"] = name
        if seed is not None:
            raw["base_seed"] = seed
        if out is not None:
            raw["output_dir"] = out

        base = Path(path).parent
        for source in raw.get("sources") or []:
            if isinstance(source, dict) and source.get("wav"):
                wav = Path(source["wav"])
                if not wav.is_absolute() and (base / wav).exists():
                    source["wav"] = str(base / wav)
        return _validate(ExperimentConfig, raw, path)

    def load_sources(self, cfg: ExperimentConfig) -> List[TimeSignal]:
        """Read or synthesize every source."""
        signals = []
        for spec in cfg.sources:
            signal = load_wav(spec.wav) if spec.wav else synthesize(spec.synth)
            if cfg.signal_normalization == "peak":
                signal = peak_normalize(signal)
            signals.append(signal)
        return signals

    def split_sources(
        self, cfg: ExperimentConfig, signals: Sequence[TimeSignal]
    ) -> Tuple[List[TimeSignal], List[TimeSignal], TimeSignal]:
        """Time-wise train/test split per source, then 0 dB scaling of each part."""
        train, test = [], []
        for spec, signal in zip(cfg.sources, signals):
            cut = int(len(signal) * spec.train_fraction)
            train.append(signal.segment(0, cut))
            test.append(signal.segment(cut, len(signal)))
        _, train = mix_at_zero_db(train)
        mixture, test = mix_at_zero_db(test)
        return train, test, mixture

    def _run_dir(self, cfg: ExperimentConfig, label: str) -> Path:
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        run_dir = Path(cfg.output_dir) / f"{label}-seed{cfg.base_seed}-{stamp}"
        run_dir.mkdir(parents=True, exist_ok=False)
        return run_dir

    def _train_df_dnn(
        self, cfg: ExperimentConfig, train: Sequence[TimeSignal], timings: Dict[str, float]
    ) -> Tuple[List[MaskNetModel], List[HyperParams], List[TuneTrace]]:
        inner_workers = 1 if settings.max_workers > 1 else None

        def run(j: int) -> Tuple[MaskNetModel, HyperParams, TuneTrace]:
            with _stage(f"train[{j}]", timings):
                return train_df_dnn(
                    train, j, cfg.stft, cfg.arch, cfg.hyper, cfg.train,
                    base_seed=cfg.base_seed + SOURCE_SEED_STRIDE * j,
                    max_workers=inner_workers,
                )

        results = map_ordered(run, list(range(cfg.num_sources)), None)
        models, tuned, traces = (list(column) for column in zip(*results))
        return models, tuned, traces

    def run(
        self, cfg: ExperimentConfig, run_dir: Optional[Path] = None
    ) -> Tuple[ExperimentReport, Path]:
        """Train, separate the test mixture, score and write every artifact."""
        timings: Dict[str, float] = {}
        run_dir = run_dir or self._run_dir(cfg, cfg.mode)
        run_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Running {cfg.mode} with L={cfg.num_sources} into {run_dir}")

        with _stage("load", timings):
            signals = self.load_sources(cfg)
        with _stage("mix", timings):
            train, test, mixture = self.split_sources(cfg, signals)

        tuned: List[HyperParams] = []
        traces: List[TuneTrace] = []
        if cfg.mode == "df-dnn":
            models, tuned, traces = self._train_df_dnn(cfg, train, timings)
            with _stage("separate", timings):
                estimates = separate_all(models, mixture, cfg.stft)
            checkpoints = {f"model_{j}.mnet": m for j, m in enumerate(models)}
        else:
            with _stage("train[joint]", timings):
                model, _ = train_joint(
                    train, cfg.stft, cfg.arch, cfg.joint_gamma, cfg.train, cfg.base_seed
                )
            with _stage("separate", timings):
                estimates = [
                    separate_one(model, mixture, cfg.stft, head="source"),
                    separate_one(model, mixture, cfg.stft, head="interferer"),
                ]
            checkpoints = {"model_joint.mnet": model}

        with _stage("score", timings):
            summary = evaluate_all(estimates, test)

        with _stage("write", timings):
            artifacts = []
            for name, model in checkpoints.items():
                checkpoint_store.save(model, run_dir / name)
                artifacts.append(name)
            for j, estimate in enumerate(estimates):
                save_wav(estimate, run_dir / f"estimate_{j}.wav")
                artifacts.append(f"estimate_{j}.wav")
            save_wav(mixture, run_dir / "mixture_test.wav")
            spectrogram_store.save(stft(mixture, cfg.stft), run_dir / "mixture_test.spec")
            artifacts.extend(["mixture_test.wav", "mixture_test.spec"])
            for j, trace in enumerate(traces):
                report_store.write_trace(trace, run_dir, j)
                artifacts.extend([f"trace_{j}.yaml", f"trace_{j}.csv"])

            report = ExperimentReport(
                mode=cfg.mode,
                base_seed=cfg.base_seed,
                sample_rate=mixture.sample_rate,
                num_sources=cfg.num_sources,
                scores=summary.per_source,
                average=summary.average,
                tuned=tuned,
                traces=traces,
                artifacts=artifacts,
            )
        report.stage_seconds.update(timings)
        report_store.write_report(report, run_dir)
        return report, run_dir

    def compare(self, cfg: ExperimentConfig) -> Tuple[ComparisonReport, Path]:
        """Both modes on identical data and seeds, side by side."""
        if cfg.num_sources != 2:
            raise ConfigError(f"compare requires exactly 2 sources, got {cfg.num_sources}")
        out_dir = self._run_dir(cfg, "compare")
        df_report, _ = self.run(cfg.model_copy(update={"mode": "df-dnn"}), out_dir / "df-dnn")
        joint_report, _ = self.run(cfg.model_copy(update={"mode": "joint"}), out_dir / "joint")
        comparison = ComparisonReport(
            base_seed=cfg.base_seed, df_dnn=df_report, joint=joint_report
        )
        report_store.write_comparison(comparison, out_dir)
        return comparison, out_dir

    def synth(self, spec_path: Union[str, Path], out_dir: Union[str, Path]) -> List[Path]:
        """One WAV per synthetic source spec."""
        data = _read_yaml(spec_path)
        if isinstance(data, list):
            data = {"sources": data}
        spec_file = _validate(SynthFile, data, spec_path)
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            return [
                save_wav(synthesize(spec), out_dir / f"source_{i}.wav")
                for i, spec in enumerate(spec_file.sources)
            ]
        except OSError as e:
            raise StageError("write", e) from e

    def evaluate(
        self,
        estimate_paths: Sequence[Union[str, Path]],
        reference_paths: Sequence[Union[str, Path]],
    ) -> ScoreSummary:
        """Score pre-existing estimate WAVs against reference WAVs, index-aligned."""
        with _stage("load", {}):
            estimates = [load_wav(p) for p in estimate_paths]
            references = [load_wav(p) for p in reference_paths]
        with _stage("score", {}):
            return evaluate_all(estimates, references)

    def inspect_trace(
        self,
        path: Union[str, Path],
        num_sources: Optional[int] = None,
        rs_min: float = 8.0,
    ) -> Tuple[TuneTrace, pd.DataFrame, Dict[str, bool]]:
        """Load a trace and re-verify its argmax and stop-rule bookkeeping."""
        trace = report_store.read_trace(path)
        checks: Dict[str, bool] = {}
        if trace.re_values:
            best = trace.gamma_grid[int(np.argmax(trace.re_values))]
            checks["gamma_argmax"] = best == trace.chosen_gamma
        if num_sources is not None and trace.mu_steps:
            last = len(trace.mu_steps) - 1
            fired = [
                mu_stop_rule(s.r_s, s.r_n, num_sources, rs_min, False) for s in trace.mu_steps
            ]
            first = next((i for i, f in enumerate(fired) if f), last)
            checks["mu_stop_rule"] = trace.mu_steps[first].mu == trace.chosen_mu
        return trace, trace_table(trace), checks


def dump_model(model: BaseModel) -> str:
    """YAML text of a pydantic model."""
    return yaml.safe_dump(model.model_dump(mode="json"), sort_keys=False)


experiment_runner = ExperimentRunner()


