# tests/unit/test_leibovich.py
from itertools import product
from pathlib import Path

import pandas as pd
import pytest

import survfusion

from survfusion.core.cohort_io import load_manifest
from survfusion.core.leibovich import (
    DEFAULT_TABLE_PATH,
    LeibovichFeatures,
    NStage,
    TStage,
    adjusted_leibovich,
    component_points,
    leibovich_cohort_scores,
    load_point_table,
    parse_grade,
    parse_n_stage,
    parse_t_stage,
)
from survfusion.errors import FileFormatError, MissingFileError, NoCompleteFeaturesError, UnknownLevelError


def test_worked_example(point_table):
    f = LeibovichFeatures(TStage.T3, NStage.N0, 11.0, 4)
    assert component_points(f, point_table) == {"t_stage": 4, "n_stage": 0, "size": 1, "grade": 3}
    assert adjusted_leibovich(f, point_table) == 8


def test_table_shape(point_table):
    assert point_table.size_threshold_cm == 10.0
    assert point_table.max_score == 4 + 2 + 1 + 3
    assert len(point_table.sha256) == 64


def test_default_table_ships_with_the_package():
    package_dir = Path(survfusion.__file__).parent
    assert DEFAULT_TABLE_PATH.is_file()
    assert DEFAULT_TABLE_PATH.resolve().is_relative_to(package_dir.resolve())
    setup_text = (package_dir.parent / "setup.py").read_text(encoding="utf-8")
    assert '"survfusion": ["data/*.csv"]' in setup_text
    assert load_point_table().sha256 == load_point_table(DEFAULT_TABLE_PATH).sha256


def test_every_combination_against_table_rows(point_table):
    rows = pd.read_csv(DEFAULT_TABLE_PATH, dtype=str, keep_default_na=False)
    points = {(r.component, r.level): int(float(r.points)) for r in rows.itertuples()}
    for t, n, size, grade in product(TStage, NStage, (0.5, 9.99, 10.0, 25.0), (1, 2, 3, 4)):
        size_level = "ge_threshold" if size >= 10.0 else "lt_threshold"
        expected = (points[("t_stage", t.value)] + points[("n_stage", n.value)]
                    + points[("size", size_level)] + points[("grade", str(grade))])
        score = adjusted_leibovich(LeibovichFeatures(t, n, size, grade), point_table)
        assert score == expected
        assert 0 <= score <= point_table.max_score


def test_unknown_grade(point_table):
    with pytest.raises(UnknownLevelError):
        adjusted_leibovich(LeibovichFeatures(TStage.T2, NStage.N0, 3.0, 5), point_table)


@pytest.mark.parametrize("text,expected", [("1", 1), (" 4 ", 4), ("3.0", 3)])
def test_parse_grade(text, expected):
    assert parse_grade(text) == expected


@pytest.mark.parametrize("text", ["inf", "-inf", "nan", "3.7", "0", "5", "", "G3"])
def test_parse_grade_rejects(text):
    with pytest.raises(ValueError, match="grade must be an integer in 1-4"):
        parse_grade(text)


@pytest.mark.parametrize("text,expected", [
    ("T1a", TStage.T1a), ("pT1b", TStage.T1b), ("t2a", TStage.T2), ("pT3b", TStage.T3),
    ("T3c", TStage.T3), ("T4", TStage.T4),
])
def test_parse_t_stage(text, expected):
    assert parse_t_stage(text) is expected


@pytest.mark.parametrize("text,expected", [
    ("N0", NStage.N0), ("pNx", NStage.Nx), ("NX", NStage.Nx), ("N1", NStage.N1plus), ("N2", NStage.N1plus),
])
def test_parse_n_stage(text, expected):
    assert parse_n_stage(text) is expected


def test_parse_rejects_unknown_levels():
    with pytest.raises(UnknownLevelError):
        parse_t_stage("T1")
    with pytest.raises(UnknownLevelError):
        parse_n_stage("N9")
    with pytest.raises(ValueError):
        LeibovichFeatures(TStage.T1a, NStage.N0, 0.0, 1)


def test_point_table_errors(tmp_path):
    with pytest.raises(MissingFileError):
        load_point_table(tmp_path / "nope.csv")
    broken = tmp_path / "broken.csv"
    broken.write_text(DEFAULT_TABLE_PATH.read_text().replace("size_threshold_cm,,10\n", ""))
    with pytest.raises(FileFormatError):
        load_point_table(broken)
    broken.write_text("component,level,points\nnecrosis,present,2\n")
    with pytest.raises(FileFormatError):
        load_point_table(broken)


def test_custom_threshold(tmp_path):
    custom = tmp_path / "custom.csv"
    custom.write_text(DEFAULT_TABLE_PATH.read_text().replace("size_threshold_cm,,10", "size_threshold_cm,,5"))
    table = load_point_table(custom)
    assert adjusted_leibovich(LeibovichFeatures(TStage.T1a, NStage.N0, 6.0, 1), table) == 1


def test_cohort_coverage(three_patient_manifest, point_table):
    cohort = load_manifest(three_patient_manifest)
    scores, scored, coverage = leibovich_cohort_scores(cohort, point_table)
    # P001: T3 N0 11cm grade 4; P002: T1a Nx 3.5cm grade 2
    assert scores.tolist() == [8.0, 0.0]
    assert scored == [0, 1]
    assert coverage.scored_ids == ["P001", "P002"]
    assert coverage.excluded_ids == ["P003"]
    assert coverage.histogram == {8: 1, 0: 1}
    assert coverage.fraction_below_3 == 0.5
    report = coverage.to_dict()
    assert report["n_scored"] == 2
    assert report["table_sha256"] == point_table.sha256

    with pytest.raises(NoCompleteFeaturesError):
        leibovich_cohort_scores(cohort, point_table, [2])
