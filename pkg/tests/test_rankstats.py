"""Simulation, MLE round-trips, goodness metrics, and the SNR curve."""

import numpy as np
import pytest

from zipfls.numerics import InvalidInputError, SeededRng
from zipfls.rankstats import (
    EmpiricalRankDistribution,
    FitReport,
    exponential_model_pmf,
    fit_exponential_mle,
    fit_lognormal_mle,
    fit_params,
    fit_report,
    fit_zipf_mle,
    golden_section_max,
    goodness_battery,
    lognormal_model_pmf,
    model_pmf,
    simulate_gaussian_softmax,
    snr_curve,
    zipf_model_pmf,
)


class TestEmpiricalRankDistribution:
    def test_accepts_interior_mode(self):
        # fitting inputs may rise then fall (e.g. a lognormal with mode > 1)
        emp = EmpiricalRankDistribution(mean_probs=np.array([0.1, 0.5, 0.4]))
        assert emp.top_k == 3

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            EmpiricalRankDistribution(mean_probs=np.array([0.2, 0.0]))

    def test_weights_normalized(self):
        emp = EmpiricalRankDistribution(mean_probs=np.array([0.3, 0.2, 0.1]))
        assert abs(emp.weights().sum() - 1.0) < 1e-15

    def test_csv_round_trip(self, tmp_path):
        emp = EmpiricalRankDistribution(mean_probs=np.array([0.31, 0.17, 0.052]))
        path = tmp_path / "r.csv"
        emp.to_csv(path)
        back = EmpiricalRankDistribution.from_csv(path)
        assert np.array_equal(back.mean_probs, emp.mean_probs)

    def test_csv_with_std_column(self, tmp_path):
        per_sample = np.array([[0.3, 0.2], [0.4, 0.1]])
        emp = EmpiricalRankDistribution(
            mean_probs=per_sample.mean(axis=0), per_sample_probs=per_sample
        )
        path = tmp_path / "r.csv"
        emp.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "rank,mean_prob,std"
        assert np.array_equal(
            EmpiricalRankDistribution.from_csv(path).mean_probs, emp.mean_probs
        )

    def test_malformed_csv(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("rank,mean_prob\n1,abc\n")
        with pytest.raises(InvalidInputError):
            EmpiricalRankDistribution.from_csv(path)
        path.write_text("")
        with pytest.raises(InvalidInputError):
            EmpiricalRankDistribution.from_csv(path)
        path.write_text("wrong,header\n1,0.5\n")
        with pytest.raises(InvalidInputError):
            EmpiricalRankDistribution.from_csv(path)


class TestSimulation:
    def test_shapes_and_order(self):
        emp = simulate_gaussian_softmax(SeededRng(0), 50, 100, 32)
        assert emp.top_k == 32
        assert emp.per_sample_probs.shape == (50, 32)
        assert np.all(np.diff(emp.mean_probs) < 0)

    def test_same_seed_identical(self):
        a = simulate_gaussian_softmax(SeededRng(1), 20, 30, 10)
        b = simulate_gaussian_softmax(SeededRng(1), 20, 30, 10)
        assert np.array_equal(a.mean_probs, b.mean_probs)

    def test_two_classes_sum_preserved(self):
        emp = simulate_gaussian_softmax(SeededRng(2), 500, 2, 2)
        assert abs(emp.mean_probs.sum() - 1.0) < 1e-12
        assert emp.mean_probs[0] > 0.5 > emp.mean_probs[1]

    def test_top_k_bounds(self):
        with pytest.raises(InvalidInputError):
            simulate_gaussian_softmax(SeededRng(0), 10, 5, 6)


class TestGoldenSection:
    def test_quadratic_peak(self):
        x = golden_section_max(lambda t: -((t - 2.7) ** 2), 0.0, 10.0)
        assert abs(x - 2.7) < 1e-7

    def test_boundary_maximum(self):
        x = golden_section_max(lambda t: -t, 0.0, 10.0)
        assert x < 1e-7

    def test_bad_bracket(self):
        with pytest.raises(InvalidInputError):
            golden_section_max(lambda t: t, 1.0, 1.0)


class TestModelPmfs:
    def test_zipf_matches_label_module(self):
        from zipfls.zipf_label import ZipfParams, zipf_pmf

        assert np.allclose(
            zipf_model_pmf(1.3, 20), zipf_pmf(ZipfParams(1.3, 20)), atol=1e-15
        )

    def test_all_valid_distributions(self):
        for pmf in (
            zipf_model_pmf(0.7, 50),
            exponential_model_pmf(0.3, 50),
            lognormal_model_pmf(1.0, 0.5, 50),
        ):
            assert abs(pmf.sum() - 1.0) < 1e-12
            assert np.all(pmf > 0)

    def test_exponential_large_rate_no_overflow(self):
        pmf = exponential_model_pmf(10.0, 100)
        assert np.all(np.isfinite(pmf))

    def test_dispatch(self):
        assert np.array_equal(model_pmf("zipf", {"alpha": 1.0}, 5), zipf_model_pmf(1.0, 5))
        with pytest.raises(InvalidInputError):
            model_pmf("weibull", {}, 5)


class TestMleRoundTrips:
    def test_zipf_exact_recovery(self):
        emp = EmpiricalRankDistribution(mean_probs=zipf_model_pmf(1.3, 40))
        assert abs(fit_zipf_mle(emp) - 1.3) < 1e-6

    def test_zipf_uniform_gives_zero(self):
        emp = EmpiricalRankDistribution(mean_probs=np.full(30, 1 / 30))
        assert abs(fit_zipf_mle(emp)) < 1e-6

    def test_exponential_recovery(self):
        emp = EmpiricalRankDistribution(mean_probs=exponential_model_pmf(0.7, 50))
        assert abs(fit_exponential_mle(emp) - 0.7) < 1e-5

    def test_lognormal_recovery(self):
        emp = EmpiricalRankDistribution(mean_probs=lognormal_model_pmf(1.0, 0.5, 50))
        mu, sigma = fit_lognormal_mle(emp)
        assert abs(mu - 1.0) < 1e-4
        assert abs(sigma - 0.5) < 1e-4

    def test_mle_close_to_loglog_slope_on_simulation(self):
        emp = simulate_gaussian_softmax(SeededRng(0), 1000, 1000, 32)
        alpha = fit_zipf_mle(emp)
        x = np.log(np.arange(1, 33))
        y = np.log(emp.mean_probs)
        design = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert abs(alpha - (-coef[0])) < 0.1

    def test_all_families_on_simulation(self):
        emp = simulate_gaussian_softmax(SeededRng(3), 200, 300, 40)
        for family in ("zipf", "exponential", "lognormal"):
            params = fit_params(emp, family)
            assert all(np.isfinite(v) for v in params.values())

    def test_too_few_ranks(self):
        emp = EmpiricalRankDistribution(mean_probs=np.array([0.6]))
        with pytest.raises(InvalidInputError):
            fit_zipf_mle(emp)
        two = EmpiricalRankDistribution(mean_probs=np.array([0.6, 0.4]))
        with pytest.raises(InvalidInputError):
            fit_lognormal_mle(two)


class TestGoodnessBattery:
    def test_identity_model_perfect_scores(self):
        pmf = zipf_model_pmf(1.1, 30)
        emp = EmpiricalRankDistribution(mean_probs=pmf)
        report = goodness_battery(emp, "zipf", {"alpha": 1.1}, SeededRng(0), 50_000)
        assert report.r_squared == pytest.approx(1.0, abs=1e-12)
        assert report.kl == pytest.approx(0.0, abs=1e-12)
        assert report.js == pytest.approx(0.0, abs=1e-12)
        assert report.ks_d < 0.01  # sampling noise only

    def test_ks_d_shrinks_with_samples(self):
        pmf = zipf_model_pmf(1.0, 20)
        emp = EmpiricalRankDistribution(mean_probs=pmf)
        d_small = goodness_battery(emp, "zipf", {"alpha": 1.0}, SeededRng(1), 1_000).ks_d
        d_large = goodness_battery(emp, "zipf", {"alpha": 1.0}, SeededRng(1), 200_000).ks_d
        assert d_large < d_small

    def test_chi_square_near_dof_for_true_model(self):
        pmf = zipf_model_pmf(0.9, 25)
        emp = EmpiricalRankDistribution(mean_probs=pmf)
        chis = []
        dof = None
        for seed in range(8):
            rep = goodness_battery(emp, "zipf", {"alpha": 0.9}, SeededRng(seed), 100_000)
            chis.append(rep.chi_square)
            dof = rep.chi_square_dof
        # chi-square mean = dof, sd = sqrt(2 dof); allow 3 sigma on the average
        assert abs(np.mean(chis) - dof) < 3 * np.sqrt(2 * dof / len(chis))

    def test_tail_merge_note(self):
        # steep exponential: expected counts far below 5 in the tail
        pmf = exponential_model_pmf(1.5, 30)
        emp = EmpiricalRankDistribution(mean_probs=pmf)
        report = goodness_battery(emp, "exponential", {"lam": 1.5}, SeededRng(2), 10_000)
        assert any("merged" in n for n in report.notes)
        assert report.chi_square_dof < 29

    def test_deterministic_given_seed(self):
        emp = simulate_gaussian_softmax(SeededRng(4), 100, 200, 20)
        a = fit_report(emp, "zipf", SeededRng(7), 5_000)
        b = fit_report(emp, "zipf", SeededRng(7), 5_000)
        assert a == b

    def test_report_serializes(self):
        emp = simulate_gaussian_softmax(SeededRng(5), 100, 200, 20)
        report = fit_report(emp, "zipf", SeededRng(8), 5_000)
        d = report.to_dict()
        assert d["family"] == "zipf"
        assert "alpha" in d["params"]
        assert isinstance(d["notes"], list)
        assert isinstance(report, FitReport)
        assert report.r_squared <= 1.0


class TestSnrCurve:
    def test_hand_computed(self):
        m = np.array([[0.6, 0.4], [0.8, 0.2]])
        curve = snr_curve(m)
        assert np.allclose(curve.mean, [0.7, 0.3], atol=1e-15)
        expect_std = np.std([0.6, 0.8], ddof=1)
        assert curve.std[0] == pytest.approx(expect_std, abs=1e-15)
        assert curve.snr[0] == pytest.approx(0.7 / expect_std, abs=1e-12)

    def test_identical_samples_infinite(self):
        m = np.tile(np.array([0.5, 0.3, 0.2]), (4, 1))
        curve = snr_curve(m)
        assert np.all(curve.std == 0.0)
        assert np.all(np.isinf(curve.snr))

    def test_scale_invariance(self):
        rng = SeededRng(6)
        m = rng.uniform_open((50, 8))
        a = snr_curve(m)
        b = snr_curve(3.7 * m)
        assert np.allclose(a.snr, b.snr, atol=1e-10)

    def test_needs_two_samples(self):
        with pytest.raises(InvalidInputError):
            snr_curve(np.array([[0.5, 0.5]]))

    def test_prefix_helper(self):
        curve = snr_curve(
            np.array([[10.0, 5.0, 0.02, 0.25], [11.0, 5.5, 0.30, 0.01]])
        )
        crossing, is_prefix = curve.above_unity_prefix()
        assert crossing == 2
        assert is_prefix

    def test_prefix_helper_detects_gap(self):
        # high, low, high: {SNR > 1} is not a contiguous prefix
        curve = snr_curve(
            np.array([[10.0, 0.02, 5.0], [11.0, 0.30, 5.5]])
        )
        crossing, is_prefix = curve.above_unity_prefix()
        assert crossing == 1
        assert not is_prefix

    def test_csv_inf_marker(self, tmp_path):
        m = np.tile(np.array([0.7, 0.3]), (3, 1))
        path = tmp_path / "snr.csv"
        snr_curve(m).to_csv(path)
        assert ",inf" in path.read_text()


class TestCollectFromModel:
    def test_untrained_and_trained_pipeline(self):
        from zipfls.rankstats import collect_model_rank_distribution
        from zipfls.training import TrainConfig, train_model

        cfg = TrainConfig(
            num_classes=6, image_size=8, channels=(8,), epochs=4, batch_size=32,
            n_per_class=60, n_test_per_class=15, num_groups=3, seed=0, method="ce",
        )
        net, ds, _ = train_model(cfg)
        emp = collect_model_rank_distribution(net, ds)
        assert emp.top_k == 6
        assert np.all(np.diff(emp.mean_probs) <= 0)
        assert emp.per_sample_probs.shape == (90, 6)
        top3 = collect_model_rank_distribution(net, ds, top_k=3)
        assert top3.top_k == 3
        with pytest.raises(InvalidInputError):
            collect_model_rank_distribution(net, ds, top_k=7)
