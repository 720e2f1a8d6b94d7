import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from incipient import theory
from incipient.theory import BetaPair, BetaParams, FitError, TheoryGrid

B28, B46 = BetaParams(2, 8), BetaParams(4, 6)
PAIR = BetaPair(B28, B46)


class TestClosedForm:
    def test_moments(self):
        assert theory.beta_moments(BetaParams(1, 1)) == pytest.approx((0.5, 1 / 12))
        assert theory.beta_moments(B28) == pytest.approx((0.2, 0.16 / 11))
        for a in (0.5, 2.0, 7.5):
            assert theory.beta_moments(BetaParams(a, a))[0] == 0.5

    def test_deltas(self):
        assert theory.delta_mean(PAIR) == pytest.approx(0.2)
        assert theory.delta_var(PAIR) == pytest.approx((0.24 - 0.16) / 11)
        assert theory.delta_var(PAIR) == pytest.approx(0.007273, abs=1e-6)
        assert 0 < theory.delta_var(PAIR) < theory.delta_mean(PAIR)
        same = BetaPair(B28, B28)
        assert theory.delta_mean(same) == 0 and theory.delta_var(same) == 0

    def test_pair_validation(self):
        with pytest.raises(ValueError):
            BetaPair(BetaParams(2, 8), BetaParams(2, 2))
        with pytest.raises(ValueError):
            BetaParams(0, 1)
        assert PAIR.in_regime and not PAIR.swapped().in_regime

    @given(c=st.sampled_from([4, 10, 20]), data=st.data())
    def test_regime_ordering(self, c, data):
        ai = data.draw(st.floats(0.01, c / 2 - 0.02))
        aj = data.draw(st.floats(ai + 0.01, c / 2))
        pair = BetaPair.from_alphas(ai, aj, c)
        assert pair.in_regime
        assert theory.delta_mean(pair) > theory.delta_var(pair) > 0

    @given(c=st.floats(1, 30), f1=st.floats(0.01, 0.99), f2=st.floats(0.01, 0.99))
    def test_swap_negates(self, c, f1, f2):
        pair = BetaPair.from_alphas(f1 * c, f2 * c, c)
        assert theory.delta_mean(pair.swapped()) == pytest.approx(-theory.delta_mean(pair))
        assert theory.delta_var(pair.swapped()) == pytest.approx(-theory.delta_var(pair))

    def test_half_step_grid(self):
        rows = theory.delta_grid()
        assert rows and all(r["ordered"] for r in rows)
        # alphas 0.5..c/2 in half steps: C(c, 2) pairs per c
        assert len(rows) == sum(math.comb(c, 2) for c in (4, 10, 20))


class TestSampling:
    def test_law_of_large_numbers(self):
        x = theory.sample_row(B28, 1_000_000, seed=1)
        mu, var = theory.beta_moments(B28)
        assert abs(x.mean() - 0.2) <= 0.001
        se_mean = math.sqrt(var / x.size)
        assert abs(x.mean() - mu) <= 5 * se_mean
        # se of the sample variance: sqrt((m4 - var^2) / n)
        m4 = np.mean((x - mu) ** 4)
        assert abs(x.var(ddof=1) - var) <= 5 * math.sqrt((m4 - var**2) / x.size)

    def test_uniform_ks(self):
        x = theory.sample_row(BetaParams(1, 1), 100_000, seed=2)
        assert stats.kstest(x, "uniform").statistic < 0.01

    @pytest.mark.parametrize("a,b", [(0.3, 0.7), (0.5, 5.0), (3.0, 2.0)])
    def test_matches_beta_cdf(self, a, b):
        x = theory.sample_row(BetaParams(a, b), 100_000, seed=3)
        assert stats.kstest(x, stats.beta(a, b).cdf).statistic < 0.01

    def test_support_and_determinism(self):
        x = theory.sample_row(BetaParams(0.2, 0.2), 10_000, seed=4)
        assert ((x >= 0) & (x <= 1)).all()
        assert np.array_equal(x, theory.sample_row(BetaParams(0.2, 0.2), 10_000, seed=4))

    def test_gamma_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            theory.sample_gamma(0.0, 5, np.random.default_rng(0))


class TestMisrank:
    def test_identical_pair_is_coin_flip(self):
        for metric in ("MEAN", "VAR"):
            est = theory.misrank_probability(BetaPair(B46, B46), metric, 10, 50_000, seed=0)
            assert abs(est.p_hat - 0.5) <= 3 * est.se

    def test_se_formula(self):
        est = theory.misrank_probability(PAIR, "VAR", 5, 10_000, seed=1)
        assert est.se == pytest.approx(math.sqrt(est.p_hat * (1 - est.p_hat) / 10_000))
        assert est.in_regime

    def test_mean_beats_var_at_25(self):
        m = theory.misrank_probability(PAIR, "MEAN", 25, 100_000, seed=5)
        v = theory.misrank_probability(PAIR, "VAR", 25, 100_000, seed=5)
        assert m.p_hat < 0.5
        assert m.p_hat <= v.p_hat + 3 * math.hypot(m.se, v.se)

    def test_var_needs_two(self):
        with pytest.raises(ValueError):
            theory.misrank_probability(PAIR, "VAR", 1, 10, seed=0)

    def test_outside_regime_warns(self, caplog):
        theory.misrank_probability(PAIR.swapped(), "MEAN", 5, 100, seed=0)
        assert "outside" in caplog.text

    def test_expected_statistic_gaps(self):
        # E[row mean] and E[row sample variance] equal the Beta moments, so
        # their differences reproduce the closed-form deltas
        rng = np.random.default_rng(0)
        n, K = 40_000, 5
        gaps = {}
        for metric in ("MEAN", "VAR"):
            si = theory.row_statistic(theory.sample_beta(B28, (n, K), rng), metric)
            sj = theory.row_statistic(theory.sample_beta(B46, (n, K), rng), metric)
            se = math.sqrt(si.var() / n + sj.var() / n)
            gaps[metric] = (sj.mean() - si.mean(), se)
        assert abs(gaps["MEAN"][0] - theory.delta_mean(PAIR)) <= 3 * gaps["MEAN"][1]
        assert abs(gaps["VAR"][0] - theory.delta_var(PAIR)) <= 3 * gaps["VAR"][1]


class TestFit:
    def test_closed_form(self):
        fit = theory.fit_beta_moments(0.5, 0.05)
        assert (fit.alpha, fit.beta) == pytest.approx((2.0, 2.0))

    def test_recovers_parameters(self):
        x = theory.sample_row(BetaParams(2, 2), 10_000, seed=6)
        fit = theory.fit_beta_mom(x)
        assert abs(fit.alpha - 2) <= 0.3 and abs(fit.beta - 2) <= 0.3

    @pytest.mark.parametrize("samples", [[0.4] * 5, [0.0, 0.0], [1.0, 1.0], [0.5], [0.0, 1.0, 0.0, 1.0]])
    def test_degenerate(self, samples):
        with pytest.raises(FitError):
            theory.fit_beta_mom(samples)

    def test_histogram(self):
        out = theory.prediction_histogram([0.1, 0.15, 0.3, 0.8])
        assert sum(out["counts"]) == 4 and len(out["edges"]) == 11
        assert out["alpha"] > 0 and out["beta"] > 0
        assert theory.prediction_histogram([0.0, 0.0])["alpha"] is None


class TestGrid:
    def test_small_grid(self):
        grid = TheoryGrid(c_values=(4, 10), mean_fractions=(0.2, 0.5), K_values=(5, 25), trials=2000, seed=1)
        rows, summary = theory.verify_theorem_grid(grid)
        assert len(rows) == len(grid.pairs()) * 2 == summary["n_rows"]
        assert summary["delta_ordering"] and summary["mean_le_var"] and summary["vanishing_in_k"]

    def test_seed_change_keeps_flags(self):
        base = TheoryGrid(c_values=(10,), mean_fractions=(0.2, 0.4), K_values=(5, 100), trials=5000)
        rows_a, sum_a = theory.verify_theorem_grid(base)
        rows_b, sum_b = theory.verify_theorem_grid(TheoryGrid(**{**base.__dict__, "seed": 9}))
        assert sum_a == sum_b
        for a, b in zip(rows_a, rows_b):
            for t in ("mean", "var"):
                band = 3 * math.hypot(a[f"se_{t}"], b[f"se_{t}"]) + 1e-12
                assert abs(a[f"p_{t}"] - b[f"p_{t}"]) <= band

    def test_zero_trials(self):
        with pytest.raises(ValueError):
            theory.verify_theorem_grid(TheoryGrid(trials=0))

    def test_report_files(self, tmp_path):
        grid = TheoryGrid(c_values=(4,), mean_fractions=(0.25, 0.5), K_values=(5,), trials=100)
        rows, summary = theory.verify_theorem_grid(grid)
        csv_path, json_path = theory.write_theory_report(rows, summary, tmp_path)
        assert csv_path.read_text().count("\n") == len(rows) + 1
        assert '"delta_ordering": true' in json_path.read_text()
