""" Tests for the PersistenceUnit"""
import os
from unittest.mock import MagicMock

import pandas as pd
import pytest
from pandas.testing import assert_frame_equal

from mkdistance.distances import DistanceKind
from mkdistance.exceptions import ExperimentError
from mkdistance.experiment import AccuracyRecord
from mkdistance.experiment import PersistenceUnit
from mkdistance.experiment import emit_outputs
from mkdistance.experiment import format_table
from mkdistance.experiment import summarise
from mkdistance.experiment import summary_frame
from mkdistance.utils_for_testing import str_to_df

EUCLIDEAN = DistanceKind.EUCLIDEAN
KANTOROVICH = DistanceKind.KANTOROVICH


@pytest.fixture
def records():
    # deliberately out of order
    return [
        AccuracyRecord(KANTOROVICH, 1, 1, 0.9),
        AccuracyRecord(EUCLIDEAN, 5, 1, 0.8),
        AccuracyRecord(EUCLIDEAN, 1, 0, 0.5),
        AccuracyRecord(KANTOROVICH, 1, 0, 0.9),
        AccuracyRecord(EUCLIDEAN, 1, 1, 0.7),
        AccuracyRecord(EUCLIDEAN, 5, 0, 0.8),
    ]


def test_save_results(tmp_path, records):
    diagnostics = pd.DataFrame()
    diagnostics.to_csv = MagicMock()
    output_dir = str(tmp_path / 'out')

    persistence_unit = PersistenceUnit(output_dir)
    actual = persistence_unit.save_results(records, summarise(records), diagnostics)

    diagnostics.to_csv.assert_called_once_with(os.path.join(output_dir, 'diagnostics.csv'), index=False)
    assert actual == [os.path.join(output_dir, name) for name in
                      ('records.csv', 'summary.csv', 'table1.txt', 'curves.csv', 'diagnostics.csv')]

    expected = str_to_df("""
distance_____  training_size  set_index  accuracy
euclidean      1              0          0.5
euclidean      1              1          0.7
euclidean      5              0          0.8
euclidean      5              1          0.8
kantorovich    1              0          0.9
kantorovich    1              1          0.9
    """)
    assert_frame_equal(pd.read_csv(os.path.join(output_dir, 'records.csv')), expected)


def test_summary_uses_the_population_standard_deviation(records):
    expected = str_to_df("""
distance_____  training_size  mean  std_dev
euclidean      1              0.6   0.1
euclidean      5              0.8   0.0
kantorovich    1              0.9   0.0
    """)
    assert_frame_equal(summary_frame(summarise(records)), expected)


def test_curves_carry_the_deviation_band(tmp_path, records):
    emit_outputs(records, summarise(records), tmp_path)
    curves = pd.read_csv(tmp_path / 'curves.csv')
    assert list(curves.columns) == ['distance', 'training_size', 'mean', 'std_dev', 'lower', 'upper']
    assert curves.loc[0, 'lower'] == pytest.approx(0.5)
    assert curves.loc[0, 'upper'] == pytest.approx(0.7)
    assert not (tmp_path / 'diagnostics.csv').exists()


def test_table(records):
    lines = format_table(summary_frame(summarise(records))).splitlines()
    assert lines == [
        "Number of training digits with accuracy (%)",
        "Distance           1       5",
        "Euclidean       60.0    80.0",
        "Kantorovich     90.0       -",
    ]


def test_table_falls_back_to_the_sizes_run():
    summary = summarise([AccuracyRecord(EUCLIDEAN, 3, 0, 0.25)])
    assert format_table(summary_frame(summary)).splitlines()[1:] == [
        "Distance           3",
        "Euclidean       25.0",
    ]


def test_nothing_to_save(tmp_path):
    with pytest.raises(ExperimentError):
        PersistenceUnit(str(tmp_path)).save_results([], [])
