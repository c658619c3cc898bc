import numpy as np
import pytest

import mvlme.simulation as sim
from mvlme.diagnostics import ParameterSummary, PosteriorSummary
from mvlme.model import McmcConfig
from mvlme.sampler import NumericalError
from mvlme.simulation import (BiasTable, SimulationScenario, generate_dataset, run_sensitivity,
                              structure_spec, true_parameters)

ZERO_D = tuple(tuple(0.0 for _ in range(4)) for _ in range(4))
TINY = McmcConfig(n_chains=2, n_iter=300, burn_in=100, thin=2, adapt=0, seed=1)


class TestGenerator:
    def test_noise_free_matches_closed_form(self):
        sc = SimulationScenario(sigma1=0.0, sigma2=0.0, D=ZERO_D, n_subjects=20)
        data, truth = generate_dataset(sc, 0)
        for s in data.subjects:
            t, x = s.times, s.covariates[0, 0]
            m2 = 0.5 + 0.1 * t
            np.testing.assert_allclose(s.outcomes[:, 1], m2, rtol=1e-14)
            # normalized area of a line over [0, t] is its midpoint value
            m1 = 80 - 5 * t + 2 * x - 10 * (0.5 + 0.1 * t / 2)
            np.testing.assert_allclose(s.outcomes[:, 0], m1, rtol=1e-13)

    def test_source_noise_variance(self):
        sc = SimulationScenario(D=ZERO_D, n_subjects=10000, n_encounters=(10, 10))
        data, _ = generate_dataset(sc, 0)
        resid = np.concatenate([s.outcomes[:, 1] - (0.5 + 0.1 * s.times) for s in data.subjects])
        assert resid.size == 100_000
        assert resid.var() == pytest.approx(0.0025, rel=0.02)

    def test_alpha_enters_only_through_functional(self):
        base = SimulationScenario(n_subjects=30)
        d1, t1 = generate_dataset(base, 3)
        d0, _ = generate_dataset(SimulationScenario(n_subjects=30, alpha=0.0), 3)
        for s1, s0, g in zip(d1.subjects, d0.subjects, t1["functional"]):
            np.testing.assert_array_equal(s1.outcomes[:, 1], s0.outcomes[:, 1])
            np.testing.assert_allclose(s1.outcomes[:, 0] - s0.outcomes[:, 0], -10.0 * g, atol=1e-10)

    def test_value_truth_uses_instantaneous_source(self):
        sc = SimulationScenario(true_kind="value", n_subjects=10)
        _, truth = generate_dataset(sc, 0)
        data, _ = generate_dataset(SimulationScenario(true_kind="value", n_subjects=10, sigma2=0.0), 0)
        for s, g in zip(data.subjects, truth["functional"]):
            np.testing.assert_allclose(g, s.outcomes[:, 1], rtol=1e-13)

    def test_deterministic_per_replicate(self):
        sc = SimulationScenario(n_subjects=15)
        a, _ = generate_dataset(sc, 2)
        b, _ = generate_dataset(sc, 2)
        c, _ = generate_dataset(sc, 3)
        assert all(x.outcomes.tobytes() == y.outcomes.tobytes() for x, y in zip(a.subjects, b.subjects))
        assert a.subjects[0].outcomes.tobytes() != c.subjects[0].outcomes.tobytes()

    def test_shapes_and_ranges(self):
        sc = SimulationScenario(n_subjects=50)
        data, truth = generate_dataset(sc, 0)
        assert len(data.subjects) == 50 and truth["b"].shape == (50, 4)
        for s in data.subjects:
            assert 4 <= s.n_encounters <= 12
            assert s.times.min() >= 6 and s.times.max() <= 20
            assert s.covariates[0, 0] in (0.0, 1.0)

    @pytest.mark.parametrize("kw", [{"true_kind": "mean"}, {"n_subjects": 1}, {"sigma1": -1.0},
                                    {"n_encounters": (5, 2)}, {"beta1": (1.0, 2.0)},
                                    {"D": ((1.0, 2.0, 0, 0), (2.0, 1.0, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1))}])
    def test_invalid_scenarios(self, kw):
        with pytest.raises(ValueError):
            SimulationScenario(**kw)

    def test_true_parameter_names(self):
        truth = true_parameters(SimulationScenario())
        assert truth["alpha"] == -10.0 and truth["beta.y1.intercept"] == 80.0
        assert truth["sigma.y2"] == 0.05


class TestStructures:
    def test_re_only_has_no_alpha_and_correlated_effects(self):
        spec = structure_spec("re_only", "auc", TINY)
        assert not spec.association.active and spec.re_cross_outcome_correlation

    def test_assoc_only_blocks_independent(self):
        spec = structure_spec("assoc_only", "slope", TINY)
        assert spec.association.kind == "slope" and not spec.re_cross_outcome_correlation

    def test_window_dropped_for_non_auc(self):
        assert structure_spec("assoc_and_re", "value", TINY, window_d=5.0).association.window_d is None

    def test_unknown_structure(self):
        with pytest.raises(ValueError):
            structure_spec("joint", "auc", TINY)


def fake_summary(alpha_mean, lo, hi):
    row = ParameterSummary("alpha", alpha_mean, 1.0, lo, hi, 1.0, 100.0, 0.0, 100)
    return PosteriorSummary({"alpha": row})


class TestBiasTable:
    def test_cells_and_order_independence(self):
        entries = [("auc", "assoc_only", 0, {"alpha": -10.0}, fake_summary(-9.0, -11.0, -8.0)),
                   ("auc", "assoc_only", 1, {"alpha": -10.0}, fake_summary(-12.0, -13.0, -11.0)),
                   ("auc", "re_only", 0, {"alpha": -10.0}, PosteriorSummary({})),
                   ("value", "assoc_only", 0, {"alpha": -10.0}, None)]
        a, b = BiasTable(), BiasTable()
        for e in entries:
            a.add(*e)
        for e in reversed(entries):
            b.add(*e)
        assert repr(a.rows()) == repr(b.rows())
        assert a.replicate_rows() == b.replicate_rows()
        cell = a.cell("auc", "assoc_only", "alpha")
        assert cell.bias == pytest.approx(-0.5)
        assert cell.mean_abs_error == pytest.approx(1.5)
        assert cell.coverage == 0.5
        assert a.cell("auc", "re_only", "alpha").n == 0
        assert a.cell("value", "assoc_only", "alpha").failed == 1
        assert [r["status"] for r in a.replicate_rows()] == ["ok", "ok", "absent", "failed"]

    def test_block_abs_bias(self):
        t = BiasTable()
        t.add("s", "x", 0, {"beta.y1.a": 1.0, "beta.y1.b": 2.0, "alpha": 0.0},
              PosteriorSummary({n: ParameterSummary(n, m, 1, 0, 3, 1, 1, 0, 1)
                                for n, m in (("beta.y1.a", 1.5), ("beta.y1.b", 1.0), ("alpha", 9.0))}))
        assert t.block_abs_bias("s", "x", "beta.y1.") == pytest.approx(0.75)


class TestRunSensitivity:
    def test_small_study(self):
        sc = SimulationScenario(n_subjects=30)
        table = run_sensitivity([sc], 2, ("assoc_only", "re_only"), TINY)
        rows = table.rows()
        assert {(r["structure"], r["parameter"]) for r in rows} >= {("assoc_only", "alpha"),
                                                                    ("re_only", "alpha")}
        assert table.cell("auc", "re_only", "alpha").n == 0
        assert table.cell("auc", "assoc_only", "alpha").n == 2
        assert len(table.replicate_rows()) == 2 * 2 * len(true_parameters(sc))

    def test_failures_are_counted(self, monkeypatch):
        def boom(design, spec, workers=1):
            raise NumericalError("forced", 0)
        monkeypatch.setattr(sim, "run_chains", boom)
        table = run_sensitivity([SimulationScenario(n_subjects=10)], 1, ("assoc_only",), TINY)
        assert table.cell("auc", "assoc_only", "alpha").failed == 1
        assert all(r["flagged"] for r in table.rows())

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            run_sensitivity([SimulationScenario(), SimulationScenario()], 1)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            run_sensitivity([SimulationScenario()], 0)
        with pytest.raises(ValueError):
            run_sensitivity([SimulationScenario()], 1, ("both",))
