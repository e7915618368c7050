"""Unit tests for the gamma/mu search, one-vs-rest training and separation."""

import numpy as np
import pytest
from app.errors import ModelError, TuningError
from app.models import ArchConfig, HyperParams, MuStep, ProbeNorms, TrainConfig, TuneTrace
from app.services.auto_tune import (
    RATIO_CAP,
    CandidateTrainer,
    FitResult,
    ProbeResult,
    energy_ratios,
    error_ratio,
    find_mu,
    map_ordered,
    mu_stop_rule,
    one_vs_rest_spectra,
    probe,
    ratio_trend,
    ratios_from_probes,
    separate_all,
    separate_one,
    sweep_gamma,
    train_df_dnn,
    train_joint,
)
from app.services.mask_net import forward, init_model
from app.services.signal_core import TimeSignal, stft

ARCH = ArchConfig(h1=4, h2=4)
TRAIN = TrainConfig(epochs=1)


def scripted(r_e=1.0, r_s=1.0, r_n=1.0):
    return ProbeResult(r_e=r_e, r_s=r_s, r_n=r_n, norms=ProbeNorms(ss=1.0, sn=1.0, ns=1.0, nn=1.0))


class FakeTrainer(CandidateTrainer):
    """Returns scripted probe results in call order and records every fit."""

    def __init__(self, results):
        super().__init__(ARCH, TRAIN)
        self.results = list(results)
        self.fits = []
        self.probes = 0

    def fit(self, features, targets, spec, seed):
        model = init_model(features.shape[0], 2, 2, seed)
        self.fits.append({"features": features, "spec": spec, "seed": seed, "model": model})
        return FitResult(model=model, epochs_run=1, final_loss=0.0)

    def probe(self, model, Ys, Yn):
        result = self.results[self.probes]
        self.probes += 1
        return result


def constant_mask_model(bins, source_value, interferer_value):
    model = init_model(bins, 2, 2, seed=0)
    model.weights[2][:] = 0.0
    model.biases[2][:] = np.concatenate(
        [np.full(bins, float(source_value)), np.full(bins, float(interferer_value))]
    )
    return model


def band_mask_model(freqs, low_hz, high_hz):
    """Passes bins in [low_hz, high_hz) and routes every other bin to the interferer."""
    inside = ((freqs >= low_hz) & (freqs < high_hz)).astype(float)
    model = init_model(len(freqs), 2, 2, seed=0)
    model.weights[2][:] = 0.0
    model.biases[2][:] = np.concatenate([inside, 1.0 - inside])
    return model


def interior(signal, margin):
    return signal[margin:-margin]


@pytest.fixture
def spectra(rng):
    Ys = rng.uniform(0, 1, (3, 10))
    Yn = rng.uniform(0, 1, (3, 10))
    return Ys, Yn, rng.uniform(-0.1, 0.1, (3, 10))


class TestSweepGamma:
    """Grid search on the error ratio."""

    def test_argmax(self, spectra):
        trainer = FakeTrainer([scripted(r_e=v) for v in (1.2, 1.5, 1.4, 1.1, 1.0)])
        gamma, trace = sweep_gamma(*spectra, ARCH, HyperParams(), TRAIN, trainer=trainer, max_workers=1)
        assert gamma == 0.2
        assert trace.gamma_grid == [0.1, 0.2, 0.3, 0.4, 0.5]
        assert trace.re_values == [1.2, 1.5, 1.4, 1.1, 1.0]
        assert trace.chosen_gamma == 0.2

    def test_ties_keep_first_index(self, spectra):
        trainer = FakeTrainer([scripted(r_e=3.0)] * 5)
        gamma, _ = sweep_gamma(*spectra, ARCH, HyperParams(), TRAIN, trainer=trainer, max_workers=1)
        assert gamma == 0.1

    def test_single_point_grid(self, spectra):
        hp = HyperParams(gamma_min=0.3, gamma_max=0.3)
        trainer = FakeTrainer([scripted(r_e=0.7)])
        gamma, trace = sweep_gamma(*spectra, ARCH, hp, TRAIN, trainer=trainer, max_workers=1)
        assert gamma == 0.3
        assert len(trace.gamma_candidates) == 1

    def test_trains_on_source_with_fresh_seeds(self, spectra):
        trainer = FakeTrainer([scripted(r_e=1.0)] * 5)
        sweep_gamma(*spectra, ARCH, HyperParams(), TRAIN, base_seed=100, trainer=trainer, max_workers=1)
        assert [f["seed"] for f in trainer.fits] == [100, 101, 102, 103, 104]
        for fit, gamma in zip(trainer.fits, [0.1, 0.2, 0.3, 0.4, 0.5]):
            assert fit["features"] is spectra[0]
            assert fit["spec"].kind == "df"
            assert fit["spec"].mu == 0.0
            assert fit["spec"].gamma == gamma

    def test_randomized_traces_choose_first_argmax(self, spectra):
        generator = np.random.default_rng(0)
        for _ in range(200):
            values = list(generator.integers(0, 4, 5).astype(float))
            trainer = FakeTrainer([scripted(r_e=v) for v in values])
            gamma, trace = sweep_gamma(*spectra, ARCH, HyperParams(), TRAIN, trainer=trainer, max_workers=1)
            assert gamma == trace.gamma_grid[values.index(max(values))]

    def test_concurrent_sweep_keeps_grid_order(self, spectra):
        class OrderedFake(FakeTrainer):
            def probe(self, model, Ys, Yn):
                return scripted(r_e=float(model.seed))

        gamma, trace = sweep_gamma(
            *spectra, ARCH, HyperParams(), TRAIN, trainer=OrderedFake([]), max_workers=3
        )
        assert trace.re_values == [0.0, 1.0, 2.0, 3.0, 4.0]
        assert gamma == 0.5


class TestFindMu:
    """Stop rule on the energy ratios."""

    def run(self, spectra, results, num_sources, **hyper):
        trainer = FakeTrainer(results)
        X = spectra[0] + spectra[1]
        mu, trace = find_mu(
            *spectra, 0.2, num_sources, ARCH, HyperParams(**hyper), TRAIN, X, trainer=trainer
        )
        return mu, trace, trainer

    def test_both_clauses_fire_together(self, spectra):
        results = [scripted(r_s=12, r_n=3), scripted(r_s=9, r_n=6), scripted(r_s=7.5, r_n=8)]
        mu, trace, trainer = self.run(spectra, results, 2)
        assert mu == 1.0
        assert [s.mu for s in trace.mu_steps] == [0.1, 0.5, 1.0]
        assert [s.stop_fired for s in trace.mu_steps] == [False, False, True]
        assert not trace.mu_exhausted
        assert len(trainer.fits) == 3

    def test_clauses_are_ored(self, spectra):
        mu, trace, _ = self.run(spectra, [scripted(r_s=5, r_n=9)], 3)
        assert mu == 0.1
        assert len(trace.mu_steps) == 1

    def test_exhaustion(self, spectra):
        mu, trace, trainer = self.run(spectra, [scripted(r_s=100, r_n=1)] * 6, 2)
        assert mu == 10.0
        assert trace.mu_exhausted
        assert len(trainer.fits) == 6

    def test_trains_on_mixture_with_chosen_gamma(self, spectra):
        _, _, trainer = self.run(spectra, [scripted(r_s=1, r_n=9)], 2)
        fit = trainer.fits[0]
        np.testing.assert_array_equal(fit["features"], spectra[0] + spectra[1])
        assert fit["spec"].gamma == 0.2
        assert fit["spec"].mu == 0.1

    def test_full_sweep_keeps_first_fired(self, spectra):
        results = [scripted(r_s=12, r_n=3), scripted(r_s=4, r_n=6)] + [scripted(r_s=1, r_n=9)] * 4
        mu, trace, trainer = self.run(spectra, results, 2, full_mu_sweep=True)
        assert mu == 0.5
        assert len(trace.mu_steps) == 6
        assert [s.stop_fired for s in trace.mu_steps] == [False, True, False, False, False, False]

    def test_randomized_traces(self, spectra):
        generator = np.random.default_rng(2024)
        mu_set = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0]
        for _ in range(1000):
            L = int(generator.integers(2, 5))
            pairs = generator.uniform(0, 20, (6, 2))
            expected = next(
                (i for i, (rs, rn) in enumerate(pairs) if (L - 1) * rs <= rn or rs <= 8.0), 5
            )
            results = [scripted(r_s=rs, r_n=rn) for rs, rn in pairs]
            mu, trace, _ = self.run(spectra, results, L)
            assert mu == mu_set[expected]
            assert len(trace.mu_steps) == expected + 1
            rule_fired = (L - 1) * pairs[expected][0] <= pairs[expected][1] or pairs[expected][0] <= 8.0
            assert trace.mu_exhausted == (not rule_fired)

    def test_empty_mu_set(self, spectra):
        with pytest.raises(TuningError):
            self.run(spectra, [], 2, mu_set=[])

    def test_needs_two_sources(self, spectra):
        with pytest.raises(TuningError):
            self.run(spectra, [scripted()], 1)

    def test_stop_rule(self):
        assert mu_stop_rule(7.5, 8.0, 2, 8.0, False)
        assert not mu_stop_rule(9.0, 6.0, 2, 8.0, False)
        assert mu_stop_rule(9.0, 6.0, 2, 8.0, True)
        assert mu_stop_rule(9.0, 18.0, 3, 8.0, False)


class TestRatios:
    """Error and energy ratios."""

    def test_error_ratio_plug_in(self):
        result = ratios_from_probes(
            np.array([[1.0]]), np.array([[2.0]]),
            np.array([[0.0]]), np.array([[1.0]]), np.array([[0.0]]), np.array([[2.0]]),
        )
        assert result.r_e == pytest.approx(2.0, rel=1e-9)

    def test_pass_through_source_head_gives_zero_error_ratio(self, spectra):
        Ys, Yn, _ = spectra
        # a head far above eps makes m_s round to exactly 1
        assert error_ratio(constant_mask_model(3, 1e6, 0.0), Ys, Yn) == 0.0

    def test_half_masks_give_unit_energy_ratios(self, spectra):
        Ys, Yn, _ = spectra
        r_s, r_n = energy_ratios(constant_mask_model(3, 1.0, 1.0), Ys, Yn)
        assert r_s == pytest.approx(1.0, rel=1e-9)
        assert r_n == pytest.approx(1.0, rel=1e-9)

    def test_perfect_routing_is_capped(self):
        Ys, Yn = np.array([[5.0]]), np.array([[3.0]])
        zero = np.array([[0.0]])
        result = ratios_from_probes(Ys, Yn, Ys, zero, zero, Yn)
        assert result.r_s == RATIO_CAP
        assert result.r_n == RATIO_CAP

    def test_composition_oracle(self, rng):
        model = init_model(6, 5, 4, seed=3)
        Ys, Yn = rng.uniform(0, 1, (6, 9)), rng.uniform(0, 1, (6, 9))
        on_s, on_n = forward(model, Ys), forward(model, Yn)
        result = probe(model, Ys, Yn)
        fro = np.linalg.norm
        assert result.r_e == pytest.approx(fro(Yn - on_n.y_tilde_s) / (fro(Ys - on_s.y_tilde_s) + 1e-12), abs=1e-12)
        assert result.r_s == pytest.approx(fro(on_s.y_tilde_s) / (fro(on_s.y_tilde_n) + 1e-12), abs=1e-12)
        assert result.r_n == pytest.approx(fro(on_n.y_tilde_n) / (fro(on_n.y_tilde_s) + 1e-12), abs=1e-12)
        assert result.norms.ss == pytest.approx(fro(on_s.y_tilde_s), abs=1e-12)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ModelError):
            probe(init_model(4, 2, 2, seed=0), rng.uniform(0, 1, (3, 2)), rng.uniform(0, 1, (3, 2)))


class TestRatioTrend:
    """Rank correlation of the visited mu values."""

    def trace(self, pairs):
        return TuneTrace(mu_steps=[
            MuStep(mu=mu, r_s=rs, r_n=rn, epochs_run=1, final_loss=0.0)
            for mu, (rs, rn) in zip([0.1, 0.5, 1.0, 2.0, 5.0, 10.0], pairs)
        ])

    def test_monotone_trends(self):
        trend = ratio_trend(self.trace([(20, 1), (15, 2), (12, 4), (9, 8)]))
        assert trend.visited == 4
        assert trend.rho_mu_rs == pytest.approx(-1.0)
        assert trend.rho_mu_rn == pytest.approx(1.0)

    def test_too_few_points(self):
        trend = ratio_trend(self.trace([(20, 1), (15, 2)]))
        assert trend.rho_mu_rs is None and trend.rho_mu_rn is None


class TestOneVsRest:
    """Training problem construction and the full per-source search."""

    def test_spectra_shapes_and_interferer_sum(self, disjoint_sources, small_stft):
        spectra = one_vs_rest_spectra(disjoint_sources, 1, small_stft)
        assert spectra.X.shape == spectra.Ys.shape == spectra.Yn.shape
        assert spectra.X.shape[0] == small_stft.bins

    @pytest.mark.parametrize("index", [-1, 2])
    def test_index_out_of_range(self, disjoint_sources, small_stft, index):
        with pytest.raises(TuningError):
            one_vs_rest_spectra(disjoint_sources, index, small_stft)

    def test_needs_two_sources(self, disjoint_sources, small_stft):
        with pytest.raises(TuningError):
            one_vs_rest_spectra(disjoint_sources[:1], 0, small_stft)

    def test_train_df_dnn_closes_search(self, disjoint_sources, small_stft):
        results = [scripted(r_e=v) for v in (1.0, 3.0, 2.0, 1.0, 1.0)]
        results += [scripted(r_s=20, r_n=2), scripted(r_s=6, r_n=3)]
        trainer = FakeTrainer(results)
        hp = HyperParams()
        model, tuned, trace = train_df_dnn(
            disjoint_sources, 0, small_stft, ARCH, hp, TRAIN, base_seed=5, trainer=trainer, max_workers=1
        )
        assert tuned.gamma == 0.2 and tuned.gamma in hp.gamma_grid()
        assert tuned.mu == 0.5 and tuned.mu in hp.mu_set
        assert trace.source_index == 0
        assert trace.chosen_gamma == 0.2 and trace.chosen_mu == 0.5
        assert len(trace.gamma_candidates) == 5 and len(trace.mu_steps) == 2
        assert model is trainer.fits[-1]["model"]
        assert trainer.fits[-1]["spec"].gamma == 0.2

    def test_train_df_dnn_trained_model_separates_disjoint_pair(self, disjoint_sources, small_stft):
        arch = ArchConfig(h1=16, h2=16)
        cfg = TrainConfig(epochs=60, learning_rate=1e-2, standardize_inputs=True, restarts=3)
        hp = HyperParams()
        model, tuned, trace = train_df_dnn(
            disjoint_sources, 0, small_stft, arch, hp, cfg, base_seed=42, max_workers=1
        )
        spectra = one_vs_rest_spectra(disjoint_sources, 0, small_stft)
        result = probe(model, spectra.Ys, spectra.Yn)
        assert result.r_s > hp.rs_min
        assert result.r_e > 1.0
        assert tuned.mu in hp.mu_set

    def test_train_df_dnn_index_error(self, disjoint_sources, small_stft):
        with pytest.raises(TuningError):
            train_df_dnn(disjoint_sources, 5, small_stft, ARCH, HyperParams(), TRAIN, trainer=FakeTrainer([]))

    def test_train_joint_needs_two_sources(self, disjoint_sources, small_stft):
        with pytest.raises(TuningError):
            train_joint(disjoint_sources * 2, small_stft, ARCH, 0.1, TRAIN)

    def test_train_joint_runs(self, disjoint_sources, small_stft):
        model, losses = train_joint(disjoint_sources, small_stft, ARCH, 0.1, TRAIN, seed=3)
        assert model.bins == small_stft.bins
        assert len(losses) == 1


class TestSeparation:
    """Mask application and resynthesis."""

    @pytest.fixture
    def mixture(self, disjoint_sources):
        return TimeSignal(disjoint_sources[0].samples + disjoint_sources[1].samples, 8000)

    def test_identity_mask(self, mixture, small_stft):
        out = separate_one(constant_mask_model(small_stft.bins, 1.0, 0.0), mixture, small_stft)
        ref = mixture.samples[: len(out)]
        err = np.linalg.norm(interior(out.samples - ref, 64)) / np.linalg.norm(interior(ref, 64))
        assert err < 1e-6

    def test_zero_mask(self, mixture, small_stft):
        out = separate_one(constant_mask_model(small_stft.bins, 0.0, 1.0), mixture, small_stft)
        assert np.linalg.norm(out.samples) < 1e-9 * np.linalg.norm(mixture.samples)

    def test_half_mask(self, mixture, small_stft):
        out = separate_one(constant_mask_model(small_stft.bins, 1.0, 1.0), mixture, small_stft)
        ref = mixture.samples[: len(out)] / 2
        err = np.linalg.norm(interior(out.samples - ref, 64)) / np.linalg.norm(interior(ref, 64))
        assert err < 1e-6

    def test_interferer_head(self, mixture, small_stft):
        out = separate_one(constant_mask_model(small_stft.bins, 0.0, 1.0), mixture, small_stft, head="interferer")
        ref = mixture.samples[: len(out)]
        err = np.linalg.norm(interior(out.samples - ref, 64)) / np.linalg.norm(interior(ref, 64))
        assert err < 1e-6

    def test_complementary_models_sum_to_mixture(self, mixture, small_stft):
        models = [constant_mask_model(small_stft.bins, 1.0, 0.0), constant_mask_model(small_stft.bins, 0.0, 1.0)]
        estimates = separate_all(models, mixture, small_stft)
        total = estimates[0].samples + estimates[1].samples
        ref = mixture.samples[: len(total)]
        assert np.linalg.norm(interior(total - ref, 64)) < 1e-6 * np.linalg.norm(interior(ref, 64))

    def test_three_band_models_route_each_band(self, small_stft):
        t = np.arange(8000) / 8000.0
        tones = [np.sin(2 * np.pi * f * t) for f in (300.0, 1500.0, 3000.0)]
        mixture = TimeSignal(np.sum(tones, axis=0), 8000)
        freqs = np.arange(small_stft.bins) * 8000.0 / small_stft.fft_len
        edges = [(0.0, 1000.0), (1000.0, 2500.0), (2500.0, 4001.0)]
        models = [band_mask_model(freqs, lo, hi) for lo, hi in edges]
        estimates = separate_all(models, mixture, small_stft)
        assert len(estimates) == 3
        for estimate, (lo, hi) in zip(estimates, edges):
            power = np.abs(np.fft.rfft(interior(estimate.samples, 64))) ** 2
            bin_hz = np.fft.rfftfreq(len(interior(estimate.samples, 64)), 1 / 8000.0)
            in_band = power[(bin_hz >= lo) & (bin_hz < hi)].sum()
            assert in_band / power.sum() > 0.95

    def test_needs_two_models(self, mixture, small_stft):
        with pytest.raises(TuningError):
            separate_all([constant_mask_model(small_stft.bins, 1.0, 0.0)], mixture, small_stft)

    def test_bin_mismatch(self, mixture, small_stft):
        with pytest.raises(ModelError):
            separate_one(constant_mask_model(10, 1.0, 0.0), mixture, small_stft)

    def test_map_ordered_preserves_order(self):
        assert map_ordered(lambda x: x * x, list(range(20)), 4) == [x * x for x in range(20)]

    def test_spectrogram_of_estimate_follows_mask(self, mixture, small_stft):
        out = separate_one(constant_mask_model(small_stft.bins, 1.0, 1.0), mixture, small_stft)
        half = stft(out, small_stft).magnitude[:, 2:-2]
        full = stft(mixture, small_stft).magnitude[:, 2 : half.shape[1] + 2]
        np.testing.assert_allclose(half, full / 2, atol=1e-6)
