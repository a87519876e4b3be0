import numpy as np
import pytest

from fairbound.bounds import bound_effects
from fairbound.core import EFFECTS, SensitivityParams
from fairbound.errors import SearchError, ValidationError
from fairbound.oracle import (
    CompatSearchConfig,
    DiscreteScm,
    evaluate_scm_effects,
    random_tables,
    search_effect_range,
)

K = 2


def unconfounded_scm(tables) -> DiscreteScm:
    """SCM whose latents are uniform and ignored by every mechanism."""
    nz, km, ky = tables.nz, tables.km, tables.p_y_given_mza.shape[-1]
    return DiscreteScm(
        p_z=tables.p_z.copy(),
        p_ie=np.full((nz, K), 1.0 / K),
        p_de=np.full((nz, K), 1.0 / K),
        p_a=np.broadcast_to(tables.p_a_given_z[:, None, None, :], (nz, K, K, 2)).copy(),
        p_m=np.broadcast_to(tables.p_m_given_za[:, :, None, :], (nz, 2, K, km)).copy(),
        p_y=np.broadcast_to(tables.p_y_given_mza[:, :, :, None, :], (nz, 2, km, K, ky)).copy(),
    )


@pytest.mark.unit
class TestScmEffects:
    """Exact effects of a single discrete SCM."""

    def test_observational_tables(self, random_obs_tables):
        p_z, p_a, p_m, p_y = unconfounded_scm(random_obs_tables).observational()
        np.testing.assert_allclose(p_a, random_obs_tables.p_a_given_z)
        np.testing.assert_allclose(p_m, random_obs_tables.p_m_given_za)
        np.testing.assert_allclose(p_y, random_obs_tables.p_y_given_mza)

    @pytest.mark.parametrize("mode", ["counterfactual", "unnested"])
    def test_unconfounded_matches_naive(self, random_obs_tables, mode):
        effects = evaluate_scm_effects(unconfounded_scm(random_obs_tables), mode=mode)
        naive = bound_effects(random_obs_tables, SensitivityParams())
        for e in EFFECTS:
            assert effects.value(e) == pytest.approx(naive.naive(e), abs=1e-12)

    def test_no_attribute_paths(self, random_obs_tables):
        """Mechanisms of M and Y that ignore A give zero DE and IE."""
        scm = unconfounded_scm(random_obs_tables)
        scm.p_m[:, 1] = scm.p_m[:, 0]
        scm.p_y[:, 1] = scm.p_y[:, 0]
        effects = evaluate_scm_effects(scm)
        assert effects.de == pytest.approx(0.0, abs=1e-12)
        assert effects.ie == pytest.approx(0.0, abs=1e-12)
        assert effects.tv == pytest.approx(effects.de - effects.ie_rev - effects.se_rev)

    def test_unknown_mode(self, random_obs_tables):
        with pytest.raises(ValidationError):
            evaluate_scm_effects(unconfounded_scm(random_obs_tables), mode="nested")

    def test_unnormalized_table(self, random_obs_tables):
        scm = unconfounded_scm(random_obs_tables)
        scm.p_y[0, 0, 0, 0] = [0.9, 0.9]
        with pytest.raises(ValidationError):
            scm.check()


@pytest.mark.unit
class TestSearchConfig:
    def test_zero_budget(self):
        with pytest.raises(ValidationError):
            CompatSearchConfig(budget=0)

    def test_default_mode_is_exact_counterfactual(self):
        """The search checks exact nested counterfactuals unless told otherwise."""
        assert CompatSearchConfig().effect_mode == "counterfactual"

    @pytest.mark.parametrize("kwargs", [
        {"latent_cardinality": 1}, {"tolerance": -1.0}, {"gamma_cap": 0.5}, {"effect_mode": "nested"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            CompatSearchConfig(**kwargs)

    def test_same_attribute_values(self, random_obs_tables):
        with pytest.raises(ValidationError):
            search_effect_range(random_obs_tables, SensitivityParams(), a_i=1, a_j=1,
                                config=CompatSearchConfig(budget=10))


@pytest.mark.integration
class TestSearch:
    """Sampled SCMs compatible with the data stay inside the closed-form bounds."""

    def test_no_confounding_collapses(self, random_obs_tables):
        report = search_effect_range(random_obs_tables, SensitivityParams(1.0, 1.0),
                                     config=CompatSearchConfig(budget=512, batch_size=256))
        assert report.accepted_count > 0
        for e in EFFECTS:
            assert report.achieved[e].width < 1e-5

    @pytest.mark.parametrize("mode", ["counterfactual", "unnested"])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_contained_in_bounds(self, seed, mode):
        """Sampled compatible models stay inside the closed-form intervals in both effect modes."""
        tables = random_tables(np.random.default_rng(seed))
        report = search_effect_range(tables, SensitivityParams(2.0, 2.0),
                                     config=CompatSearchConfig(budget=4096, seed=seed, effect_mode=mode))
        assert report.accepted_count > 0
        assert report.effect_mode == mode
        assert report.contained, report.gaps

    def test_report_serializes_witnesses(self, random_obs_tables):
        report = search_effect_range(random_obs_tables, SensitivityParams(2.0, 2.0),
                                     config=CompatSearchConfig(budget=512))
        out = report.to_dict(include_witnesses=True)
        assert set(out["achieved"]) == set(EFFECTS)
        assert set(out["witnesses"]) <= {f"{e}_{side}" for e in EFFECTS for side in ("lo", "hi")}
        assert "witnesses" not in report.to_dict()

    def test_nothing_accepted(self, random_obs_tables, mocker):
        mocker.patch(
            "fairbound.oracle._accept",
            side_effect=lambda scm, *args: (np.zeros(scm.p_z.shape[0], dtype=bool), None),
        )
        with pytest.raises(SearchError):
            search_effect_range(random_obs_tables, SensitivityParams(2.0, 2.0),
                                config=CompatSearchConfig(budget=64))
