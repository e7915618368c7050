"""Projector-based BSS evaluation: target/interference/artifact split and SDR/SIR/SAR."""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Union
import numpy as np
from app.errors import MetricsError
from app.models import BssEnergies, BssScore, ScoreSummary
from app.services.signal_core import TimeSignal
from app.services.subspace import project_onto_span

logger = logging.getLogger(__name__)

ENERGY_EPS = 1e-30
SENTINEL_DB = 300.0
CEILING_DB = 250.0
# s_target below this fraction of the estimate's energy counts as absent
ABSENT_TARGET = 1e-20

SignalLike = Union[TimeSignal, np.ndarray]


@dataclass(frozen=True)
class BssDecomposition:
    """estimate = s_target + e_interf + e_artif."""

    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray

    @property
    def estimate(self) -> np.ndarray:
        return self.s_target + self.e_interf + self.e_artif


def _samples(signal: SignalLike) -> np.ndarray:
    if isinstance(signal, TimeSignal):
        return signal.samples
    return np.asarray(signal, dtype=np.float64)


def decompose(
    estimate: SignalLike, references: Sequence[SignalLike], j: int
) -> BssDecomposition:
    """Split `estimate` against the span of reference j and of all references."""
    if not 0 <= j < len(references):
        raise MetricsError(f"reference index {j} out of range for {len(references)}")
    y_hat = _samples(estimate)
    refs = [_samples(r) for r in references]
    lengths = {y_hat.size} | {r.size for r in refs}
    if len(lengths) != 1:
        raise MetricsError(f"length mismatch: {sorted(lengths)}")
    if y_hat.size < len(refs):
        raise MetricsError(f"signals of {y_hat.size} samples cannot span {len(refs)} refs")
    if not np.any(refs[j]):
        raise MetricsError(f"reference {j} is all zero")

    s_target = project_onto_span([refs[j]], y_hat)
    p_all = project_onto_span(refs, y_hat)
    return BssDecomposition(
        s_target=s_target, e_interf=p_all - s_target, e_artif=y_hat - p_all
    )


def _db(numerator: float, denominator: float) -> float:
    value = 10.0 * np.log10(numerator / (denominator + ENERGY_EPS))
    if value > CEILING_DB:
        return SENTINEL_DB
    return float(max(value, -SENTINEL_DB))


def _sq(vector: np.ndarray) -> float:
    return float(np.dot(vector, vector))


def score(d: BssDecomposition) -> BssScore:
    """SIR, SAR and SDR in dB; +-300 dB stand in for +-infinity."""
    energies = BssEnergies(
        target=_sq(d.s_target),
        interference=_sq(d.e_interf),
        artifacts=_sq(d.e_artif),
        projection=_sq(d.s_target + d.e_interf),
    )
    if energies.target <= ABSENT_TARGET * _sq(d.estimate) or energies.target == 0.0:
        logger.warning("Estimate has no component along its reference")
        return BssScore(
            sdr_db=-SENTINEL_DB,
            sir_db=-SENTINEL_DB,
            sar_db=-SENTINEL_DB,
            energies=energies,
        )
    return BssScore(
        sdr_db=_db(energies.target, _sq(d.e_interf + d.e_artif)),
        sir_db=_db(energies.target, energies.interference),
        sar_db=_db(energies.projection, energies.artifacts),
        energies=energies,
    )


def average_score(scores: Sequence[BssScore]) -> BssScore:
    """Arithmetic means of the per-source scores."""
    return BssScore(
        sdr_db=float(np.mean([s.sdr_db for s in scores])),
        sir_db=float(np.mean([s.sir_db for s in scores])),
        sar_db=float(np.mean([s.sar_db for s in scores])),
    )


def evaluate_all(
    estimates: Sequence[SignalLike], references: Sequence[SignalLike]
) -> ScoreSummary:
    """Score estimate j against reference j for every j, plus the averages."""
    if len(estimates) != len(references) or not references:
        raise MetricsError(
            f"{len(estimates)} estimates for {len(references)} references"
        )
    rates = {
        s.sample_rate for s in list(estimates) + list(references)
        if isinstance(s, TimeSignal)
    }
    if len(rates) > 1:
        raise MetricsError(f"sample rates differ: {sorted(rates)}")

    length = min(_samples(s).size for s in list(estimates) + list(references))
    refs = [_samples(r)[:length] for r in references]
    per_source: List[BssScore] = []
    for j, estimate in enumerate(estimates):
        result = score(decompose(_samples(estimate)[:length], refs, j))
        per_source.append(result.model_copy(update={"source_index": j}))
    return ScoreSummary(per_source=per_source, average=average_score(per_source))
