import tempfile
from pathlib import Path

import numpy as np
import pytest

from fairbound.core import (
    ColumnSpec,
    CounterfactualEffects,
    Interval,
    SensitivityParams,
    VariableDomain,
    read_dataset_csv,
    validate_dataset,
    write_dataset_csv,
)
from fairbound.errors import DatasetError, NumericalError, ValidationError


@pytest.mark.unit
class TestVariableDomain:
    """Parsing and membership of variable domains."""

    def test_parse_categorical(self):
        """'categorical(3)' parses to a three-valued domain with dense labels."""
        dom = VariableDomain.parse("categorical(3)")
        assert dom.cardinality == 3
        assert dom.labels == (0, 1, 2)

    def test_categorical_needs_two_values(self):
        """A categorical domain with one value is rejected."""
        with pytest.raises(ValidationError):
            VariableDomain.categorical(1)

    def test_contains(self):
        """Discrete domains accept only integral in-range values."""
        dom = VariableDomain.binary()
        assert dom.contains(1)
        assert not dom.contains(2)
        assert not dom.contains(0.5)
        assert VariableDomain.continuous().contains(0.5)

    def test_unknown_domain(self):
        with pytest.raises(ValidationError):
            VariableDomain.parse("ordinal")


@pytest.mark.unit
class TestValidateDataset:
    """Record validation against a column schema."""

    def test_four_binary_rows(self, binary_schema):
        """Four in-domain rows give a dataset with n=4 and a 2-D confounder array."""
        rows = [(0, 0, 0, 0), (1, 0, 1, 1), (0, 1, 1, 0), (1, 1, 0, 1)]
        data = validate_dataset(rows, binary_schema)
        assert data.n == 4
        assert data.z.shape == (4, 1)
        assert not data.z_is_continuous

    def test_out_of_domain_mediator(self, binary_schema):
        """m=3 under a binary mediator names the row and column."""
        rows = [(0, 0, 0, 0), (1, 0, 3, 1)]
        with pytest.raises(DatasetError) as exc:
            validate_dataset(rows, binary_schema)
        assert exc.value.row == 1
        assert exc.value.column == "m"

    def test_continuous_vector_confounder(self):
        """Four continuous confounder columns are stacked into a vector z."""
        cont = VariableDomain.continuous()
        schema = [ColumnSpec("a", "a", VariableDomain.binary())]
        schema += [ColumnSpec(f"z{j}", "z", cont) for j in range(1, 5)]
        schema += [ColumnSpec("m", "m", VariableDomain.binary()), ColumnSpec("y", "y", VariableDomain.binary())]
        rows = [(0, 0.1, 0.2, 0.3, 0.4, 1, 0), (1, 1.1, 1.2, 1.3, 1.4, 0, 1)]
        data = validate_dataset(rows, schema)
        assert data.z.shape == (2, 4)
        assert data.z_is_continuous
        assert data.z_names == ("z1", "z2", "z3", "z4")

    def test_empty_records(self, binary_schema):
        with pytest.raises(DatasetError):
            validate_dataset([], binary_schema)

    def test_ragged_rows(self, binary_schema):
        """A short row is reported with its index."""
        with pytest.raises(DatasetError) as exc:
            validate_dataset([(0, 0, 0, 0), (1, 0, 1)], binary_schema)
        assert exc.value.row == 1

    def test_missing_value(self, binary_schema):
        with pytest.raises(DatasetError):
            validate_dataset([(0, 0, None, 0)], binary_schema)

    def test_deterministic(self, binary_schema):
        """The same rows validate to identical datasets."""
        rows = [(0, 0, 0, 0), (1, 1, 1, 1)]
        first, second = validate_dataset(rows, binary_schema), validate_dataset(rows, binary_schema)
        for col in ("a", "z", "m", "y"):
            np.testing.assert_array_equal(getattr(first, col), getattr(second, col))

    def test_dataset_is_immutable(self, binary_schema):
        data = validate_dataset([(0, 0, 0, 0)], binary_schema)
        with pytest.raises(ValueError):
            data.a[0] = 1

    def test_subset(self, uniform_dataset):
        """subset keeps domains and selects the given rows."""
        part = uniform_dataset.subset([0, 15])
        assert part.n == 2
        assert part.y_domain == uniform_dataset.y_domain
        assert part.a.tolist() == [0, 1]


@pytest.mark.unit
class TestCsvIngestion:
    """Reading datasets from CSV files."""

    def test_infers_domains(self, write_csv):
        """Integer columns become discrete, decimal confounders continuous."""
        path = write_csv("a,z1,z2,m,y\n0,0.5,1,0,2\n1,1.5,0,2,0\n1,0.25,1,1,1\n")
        data = read_dataset_csv(path)
        assert data.m_domain.cardinality == 3
        assert data.y_domain.cardinality == 3
        assert not data.z_domains[0].is_discrete
        assert data.z_domains[1].is_discrete

    def test_malformed_csv_names_line(self, write_csv):
        """A ragged CSV line surfaces the parser's line number."""
        path = write_csv("a,z,m,y\n0,0,0,0\n1,1,1,1,1\n")
        with pytest.raises(DatasetError) as exc:
            read_dataset_csv(path)
        assert "line 3" in str(exc.value)

    def test_missing_role_column(self, write_csv):
        path = write_csv("a,z,y\n0,0,0\n")
        with pytest.raises(DatasetError, match="missing 'm' column"):
            read_dataset_csv(path)

    def test_missing_file(self):
        with pytest.raises(DatasetError, match="file not found"):
            read_dataset_csv("/nonexistent/data.csv")

    def test_write_then_read(self, uniform_dataset):
        """A written dataset reads back with the same values."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = write_dataset_csv(uniform_dataset, Path(temp_dir) / "out" / "data.csv")
            loaded = read_dataset_csv(path)
        np.testing.assert_array_equal(loaded.y, uniform_dataset.y)
        np.testing.assert_array_equal(loaded.z, uniform_dataset.z)


@pytest.mark.unit
class TestIntervals:
    """Interval construction never yields lo > hi."""

    def test_rejects_inverted(self):
        with pytest.raises(ValidationError):
            Interval(1.0, 0.0)

    def test_ordered_snaps_roundoff(self):
        """An inversion within tolerance collapses to the midpoint."""
        iv = Interval.ordered(0.5 + 1e-14, 0.5)
        assert iv.lo == iv.hi

    def test_ordered_raises_on_real_inversion(self):
        with pytest.raises(NumericalError):
            Interval.ordered(0.6, 0.5)

    def test_hull_and_helpers(self):
        iv = Interval.hull(0.3, -0.2)
        assert (iv.lo, iv.hi) == (-0.2, 0.3)
        assert iv.max_abs == 0.3
        assert iv.width == pytest.approx(0.5)
        assert iv.contains(0.0)
        assert Interval(-0.1, 0.1).issubset(iv)

    def test_non_finite(self):
        with pytest.raises(NumericalError):
            Interval(0.0, float("inf"))


@pytest.mark.unit
class TestSensitivityParams:
    def test_rejects_gamma_below_one(self):
        """Budgets below 1 are invalid."""
        with pytest.raises(ValidationError):
            SensitivityParams(0.5, 1.0)

    def test_uniform(self):
        params = SensitivityParams.uniform(2.0)
        assert params.gamma_m == params.gamma_y == 2.0


@pytest.mark.unit
class TestCounterfactualEffects:
    """Effects assembled from nested counterfactual probabilities."""

    def test_total_variation_identity(self):
        """DE - IE_rev - SE_rev telescopes to P(y|a_j) - P(y|a_i)."""
        q = np.random.default_rng(5).uniform(size=(2, 2, 2))
        effects = CounterfactualEffects.from_nested(q, 1, a_i=0, a_j=1)
        assert effects.tv == pytest.approx(q[1, 1, 1] - q[0, 0, 0])

    def test_effect_definitions(self):
        """DE, IE and SE read the documented entries of q[a, a_y, a_m]."""
        q = np.arange(8, dtype=float).reshape(2, 2, 2) / 10
        effects = CounterfactualEffects.from_nested(q, 1)
        assert effects.de == pytest.approx(q[0, 1, 0] - q[0, 0, 0])
        assert effects.ie == pytest.approx(q[1, 0, 1] - q[1, 0, 0])
        assert effects.se == pytest.approx(q[1, 0, 0] - q[0, 0, 0])

    def test_bad_shape(self):
        with pytest.raises(ValidationError):
            CounterfactualEffects.from_nested(np.zeros((2, 2)), 1)

    def test_dict_restores_effects(self):
        effects = CounterfactualEffects.from_nested(np.full((2, 2, 2), 0.3), 1)
        assert CounterfactualEffects.from_dict(effects.to_dict()) == effects
