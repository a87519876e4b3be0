import tempfile
from pathlib import Path

import numpy as np
import pytest

from fairbound.core import ColumnSpec, Dataset, VariableDomain, validate_dataset
from fairbound.errors import OverlapError, ValidationError
from fairbound.estimation import (
    DensityTarget,
    FrequencyDensity,
    ObsTables,
    ZGrid,
    fit_densities,
    fit_frequency_tables,
    fit_neural_density,
    load_density,
    query_density,
    save_density,
)


def _mediator_records(binary_schema):
    rows = [(1, 0, 1, 1)] * 3 + [(1, 0, 0, 0), (0, 0, 0, 0), (0, 0, 1, 1)]
    return validate_dataset(rows, binary_schema)


def _synthetic(n: int, seed: int, m_equals_a: bool) -> Dataset:
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n)
    z = rng.integers(0, 2, n)
    m = a.copy() if m_equals_a else rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    binary = VariableDomain.binary()
    return Dataset(a=a, z=z, m=m, y=y, a_domain=binary, z_domains=(binary,), m_domain=binary, y_domain=binary)


@pytest.mark.unit
class TestFrequencyTables:
    """Relative-frequency estimation of the observational tables."""

    def test_uniform_records(self, uniform_dataset):
        """Every conditional of the balanced dataset equals one half."""
        tables = fit_frequency_tables(uniform_dataset, smoothing=0.0)
        np.testing.assert_allclose(tables.p_z, 0.5)
        np.testing.assert_allclose(tables.p_a_given_z, 0.5)
        np.testing.assert_allclose(tables.p_m_given_za, 0.5)
        np.testing.assert_allclose(tables.p_y_given_mza, 0.5)

    def test_hand_count(self, binary_schema):
        """Three of four a=1, z=0 records have m=1."""
        tables = fit_frequency_tables(_mediator_records(binary_schema), smoothing=0.0)
        assert tables.p_m_given_za[0, 1, 1] == pytest.approx(0.75)

    def test_additive_smoothing(self, binary_schema):
        """One pseudo-count per category gives (3+1)/(4+2)."""
        tables = fit_frequency_tables(_mediator_records(binary_schema), smoothing=1.0)
        assert tables.p_m_given_za[0, 1, 1] == pytest.approx(2 / 3)

    def test_overlap_violation(self, binary_schema):
        """Without smoothing, a confounder value seen with only one attribute value is an error."""
        data = validate_dataset([(1, 0, 1, 1), (1, 0, 0, 0)], binary_schema)
        with pytest.raises(OverlapError) as exc:
            fit_frequency_tables(data, smoothing=0.0)
        assert exc.value.cell is not None

    def test_negative_smoothing(self, uniform_dataset):
        with pytest.raises(ValidationError):
            fit_frequency_tables(uniform_dataset, smoothing=-1.0)

    def test_continuous_confounder_rejected(self):
        cont, binary = VariableDomain.continuous(), VariableDomain.binary()
        schema = [ColumnSpec("a", "a", binary), ColumnSpec("z", "z", cont),
                  ColumnSpec("m", "m", binary), ColumnSpec("y", "y", binary)]
        data = validate_dataset([(0, 0.3, 0, 0), (1, 0.7, 1, 1)], schema)
        with pytest.raises(ValidationError):
            fit_frequency_tables(data)

    def test_continuous_outcome_samples(self, binary_schema):
        """A continuous outcome keeps sorted per-cell samples instead of a pmf."""
        schema = binary_schema[:3] + [ColumnSpec("y", "y", VariableDomain.continuous())]
        rows = [(a, z, m, float(10 * a + 5 * z + m) + s) for a in (0, 1) for z in (0, 1) for m in (0, 1) for s in (0.5, 0.1)]
        tables = fit_frequency_tables(validate_dataset(rows, schema), smoothing=0.0)
        assert tables.p_y_given_mza is None
        np.testing.assert_allclose(tables.sorted_samples(0, 1, 1), [11.1, 11.5])

    def test_tables_file_restores_values(self, random_obs_tables):
        """Saved tables load back with the same conditionals."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = random_obs_tables.save(Path(temp_dir) / "tables.json")
            loaded = ObsTables.load(path)
        np.testing.assert_allclose(loaded.p_m_given_za, random_obs_tables.p_m_given_za)
        np.testing.assert_allclose(loaded.p_y_given_mza, random_obs_tables.p_y_given_mza)

    def test_unnormalized_table_rejected(self, random_obs_tables):
        with pytest.raises(ValidationError):
            ObsTables(
                z_values=random_obs_tables.z_values, p_z=random_obs_tables.p_z * 2,
                p_a_given_z=random_obs_tables.p_a_given_z, p_m_given_za=random_obs_tables.p_m_given_za,
                y_domain=random_obs_tables.y_domain, p_y_given_mza=random_obs_tables.p_y_given_mza,
            )


@pytest.mark.unit
class TestDensityQueries:
    """The DensityEstimator interface over the frequency backend."""

    def test_frequency_lookup_matches_tables(self, binary_schema):
        tables = fit_frequency_tables(_mediator_records(binary_schema), smoothing=0.0)
        g_m = FrequencyDensity(tables, DensityTarget.M_GIVEN_ZA)
        probs = query_density(g_m, np.array([0.0]), np.array([1]))
        np.testing.assert_allclose(probs[0], tables.p_m_given_za[0, 1])

    def test_uniform_query(self, uniform_dataset):
        """P(m=1 | z=0, a=1) is one half on the balanced dataset."""
        g_a, g_m = fit_densities(uniform_dataset, smoothing=0.0)
        assert query_density(g_m, np.array([0.0]), np.array([1]))[0, 1] == pytest.approx(0.5)
        assert query_density(g_a, np.array([[1.0]]))[0, 0] == pytest.approx(0.5)

    def test_mediator_query_needs_attribute(self, uniform_dataset):
        _, g_m = fit_densities(uniform_dataset)
        with pytest.raises(ValidationError):
            g_m.predict_proba(np.array([0.0]))

    def test_unseen_confounder(self, uniform_dataset):
        g_a, _ = fit_densities(uniform_dataset)
        with pytest.raises(ValidationError):
            g_a.predict_proba(np.array([7.0]))

    def test_saved_density_answers_alike(self, uniform_dataset):
        g_a, _ = fit_densities(uniform_dataset, smoothing=0.5)
        with tempfile.TemporaryDirectory() as temp_dir:
            loaded = load_density(save_density(g_a, Path(temp_dir) / "g_a.json"))
        np.testing.assert_allclose(loaded.predict_proba(np.array([0.0, 1.0])), g_a.predict_proba(np.array([0.0, 1.0])))

    def test_unknown_backend(self, uniform_dataset):
        with pytest.raises(ValidationError):
            fit_densities(uniform_dataset, backend="kernel")

    def test_continuous_confounders_switch_to_neural(self, mocker):
        """Frequency tables cannot serve continuous confounders, so both estimators are neural."""
        fake = mocker.patch("fairbound.estimation.fit_neural_density", return_value="neural")
        cont, binary = VariableDomain.continuous(), VariableDomain.binary()
        data = Dataset(a=[0, 1], z=[0.1, 0.9], m=[0, 1], y=[0, 1], a_domain=binary,
                       z_domains=(cont,), m_domain=binary, y_domain=binary)
        assert fit_densities(data, backend="frequency") == ("neural", "neural")
        assert fake.call_count == 2


@pytest.mark.unit
class TestZGrid:
    def test_from_dataset_weights(self, binary_schema):
        """Discrete confounders become unique support points weighted by frequency."""
        data = validate_dataset([(0, 0, 0, 0), (1, 0, 0, 0), (1, 1, 0, 0), (0, 0, 1, 1)], binary_schema)
        grid = ZGrid.from_dataset(data)
        np.testing.assert_allclose(grid.values[:, 0], [0.0, 1.0])
        np.testing.assert_allclose(grid.weights, [0.75, 0.25])

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            ZGrid(np.array([0.0, 1.0]), np.array([0.5, 0.6]))

    def test_from_tables(self, random_obs_tables):
        grid = ZGrid.from_tables(random_obs_tables)
        assert len(grid) == random_obs_tables.nz


@pytest.mark.integration
class TestNeuralDensity:
    """Cross-entropy classifiers for P(a|z) and P(m|z,a)."""

    def test_learns_deterministic_mediator(self):
        """With M = A the estimator puts almost all mass on m = a."""
        data = _synthetic(5000, seed=1, m_equals_a=True)
        g_m = fit_neural_density(data, DensityTarget.M_GIVEN_ZA, seed=0, epochs=40)
        z = np.array([0.0, 1.0, 0.0, 1.0])
        a = np.array([0, 0, 1, 1])
        probs = query_density(g_m, z, a)
        assert np.all(probs[np.arange(4), a] >= 0.95)

    def test_independent_mediator(self):
        """An independent fair-coin mediator is estimated near one half."""
        data = _synthetic(5000, seed=2, m_equals_a=False)
        g_m = fit_neural_density(data, DensityTarget.M_GIVEN_ZA, seed=0, epochs=20)
        probs = query_density(g_m, np.array([0.0, 1.0]), np.array([1, 0]))
        assert np.all((probs[:, 1] >= 0.45) & (probs[:, 1] <= 0.55))

    def test_rows_are_distributions(self):
        data = _synthetic(500, seed=3, m_equals_a=False)
        g_a = fit_neural_density(data, DensityTarget.A_GIVEN_Z, seed=0, epochs=2)
        probs = g_a.predict_proba(np.linspace(-3, 3, 7))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)
