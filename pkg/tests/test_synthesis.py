import tempfile

import numpy as np
import pytest

from fairbound.bounds import bound_effects
from fairbound.core import EFFECTS, SensitivityParams
from fairbound.errors import ValidationError
from fairbound.estimation import fit_frequency_tables
from fairbound.synthesis import (
    CONTINUOUS_Z_DIM,
    ScmSpec,
    Setting,
    generate,
    load_generated,
    oracle_effects,
    realized_probabilities,
    replay,
    split_indices,
)


@pytest.mark.unit
class TestScmSpec:
    def test_unknown_coefficient(self):
        with pytest.raises(ValidationError):
            ScmSpec(coefficients={"y_w": 1.0})

    def test_phi_zero_accepted(self):
        gen = generate(ScmSpec(phi=0.0, n=10))
        assert gen.data.n == 10

    @pytest.mark.parametrize("kwargs", [{"phi": -1.0}, {"n": 0}, {"overlap_clip": (0.5, 0.4)}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            ScmSpec(**kwargs)

    def test_dict_round_trip(self):
        spec = ScmSpec(setting="u_ie", phi=1.5, n=7, seed=4, coefficients={"m_a": 1.0})
        assert ScmSpec.from_dict(spec.to_dict()) == spec

    def test_continuous_coefficient_width(self):
        spec = ScmSpec(setting=Setting.CONTINUOUS, coefficients={"a_z": (1.0, 2.0)})
        with pytest.raises(ValidationError):
            spec.resolved_coefficients()


@pytest.mark.unit
class TestGenerate:
    """Structural draws and their replay."""

    def test_same_seed_same_data(self):
        first = generate(ScmSpec(n=200, seed=9)).data
        second = generate(ScmSpec(n=200, seed=9)).data
        for column in ("a", "z", "m", "y"):
            np.testing.assert_array_equal(getattr(first, column), getattr(second, column))

    def test_different_seed_differs(self):
        first = generate(ScmSpec(n=200, seed=1)).data
        second = generate(ScmSpec(n=200, seed=2)).data
        assert not np.array_equal(first.y, second.y)

    def test_replay_reproduces_observed(self):
        gen = generate(ScmSpec(setting="u_ie", n=300, seed=5))
        replayed = replay(gen)
        np.testing.assert_array_equal(replayed.y, gen.data.y)
        np.testing.assert_array_equal(replayed.m, gen.data.m)

    def test_continuous_setting_shapes(self):
        gen = generate(ScmSpec(setting="continuous", n=50))
        assert gen.data.z.shape == (50, CONTINUOUS_Z_DIM)
        assert gen.data.z_is_continuous
        assert set(np.unique(gen.data.y)) <= {0, 1}

    def test_probabilities_respect_clip(self):
        gen = generate(ScmSpec(n=500, overlap_clip=(0.1, 0.9)))
        for p in realized_probabilities(gen).values():
            assert np.all((p >= 0.1) & (p <= 0.9))

    def test_saved_draws_replay(self):
        gen = generate(ScmSpec(n=120, seed=8))
        with tempfile.TemporaryDirectory() as temp_dir:
            loaded = load_generated(gen.save(temp_dir))
        assert loaded.spec == gen.spec
        replayed = replay(loaded)
        for column in ("a", "z", "m", "y"):
            np.testing.assert_array_equal(getattr(replayed, column), getattr(gen.data, column))

    def test_load_missing_directory(self):
        with pytest.raises(ValidationError):
            load_generated("/nonexistent/run")


@pytest.mark.unit
class TestOracleEffects:
    def test_total_variation_identity(self, small_generated):
        data = small_generated.data
        effects = oracle_effects(small_generated)
        expected = data.y[data.a == 1].mean() - data.y[data.a == 0].mean()
        assert effects.tv == pytest.approx(expected, abs=1e-12)
        assert effects.de - effects.ie_rev - effects.se_rev == pytest.approx(effects.tv)

    def test_no_treatment_paths(self):
        """With A absent from the M and Y equations DE and IE vanish."""
        gen = generate(ScmSpec(n=2000, seed=1, coefficients={"m_a": 0.0, "y_a": 0.0}))
        effects = oracle_effects(gen)
        assert abs(effects.de) < 0.01
        assert abs(effects.ie) < 0.01

    def test_non_binary_target(self, small_generated):
        with pytest.raises(ValidationError):
            oracle_effects(small_generated, y=2)


@pytest.mark.unit
class TestSplits:
    def test_disjoint_and_covering(self):
        splits = split_indices(101, seed=3)
        joined = np.concatenate(list(splits.values()))
        assert len(joined) == 101
        assert set(joined.tolist()) == set(range(101))
        assert len(splits["train"]) == 61

    def test_deterministic(self):
        first, second = split_indices(50, 2), split_indices(50, 2)
        for key in first:
            np.testing.assert_array_equal(first[key], second[key])

    def test_bad_fractions(self):
        with pytest.raises(ValidationError):
            split_indices(10, 0, (0.5, 0.5, 0.5))


@pytest.mark.integration
class TestLargeSamples:
    def test_confounder_marginal(self):
        z = generate(ScmSpec(n=100000, seed=0)).data.z[:, 0]
        assert 0.49 <= z.mean() <= 0.51


@pytest.mark.e2e
class TestBoundsContainOracle:
    """Data bounds at a generous sensitivity level contain the generator's true effects."""

    @pytest.mark.parametrize("phi", [1.0, 2.0, 3.0, 4.0])
    @pytest.mark.parametrize("setting", ["u_de", "u_ie"])
    def test_containment(self, setting, phi):
        gen = generate(ScmSpec(setting=setting, phi=phi, n=20000, seed=0))
        truth = oracle_effects(gen)
        bounds = bound_effects(fit_frequency_tables(gen.data), SensitivityParams(5.0, 5.0), ordering="value")
        for effect in EFFECTS:
            assert bounds.interval(effect).contains(truth.value(effect), tol=0.02), effect
