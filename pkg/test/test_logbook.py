"""
Tests de la lecture des carnets, de l'agrégation par session et de la pagination
"""
import json
from datetime import date

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import record
from src.errors import InputError, MalformedRow, RecordOutOfWindow, UnknownTick
from src.grades import GradeSystem
from src.logbook import (
    GameMode,
    InputFormat,
    PreparationReport,
    TickPolicy,
    aggregate_sessions,
    cap_climbers,
    default_tick_policy,
    failure_statistics,
    filter_climbers,
    ingest,
    load_prepared,
    paginate,
    write_logbook,
    write_prepared,
)

CSV = """climber_id,route_id,date,grade,tick,style
alice,r1,2016-08-15,7a,hangdog,Sport
alice,r1,2016-08-15,7a,redpoint,Sport
alice,r2,2016-09-01,7b,onsight,Trad
bob,r3,2016-09-03,6c+,topRope,Sport
bob,r4,2016-10-20,7a+,dyno,Sport
"""


@pytest.fixture
def logbook_csv(tmp_path):
    path = tmp_path / "logbook.csv"
    path.write_text(CSV, encoding="utf-8")
    return path


def test_ingest_classifies_ticks(logbook_csv):
    """hangdog -> échec, onsight -> réussite, topRope écarté, type inconnu signalé"""
    result = ingest(logbook_csv, None, GradeSystem.FRENCH, default_tick_policy())
    assert result.rows_read == 5
    assert [r.success for r in result.records] == [False, True, True]
    assert result.ignored == 1
    assert result.unknown == {"dyno": 1}
    assert result.records[0].grade.value == 23.0
    assert result.records[2].style == "Trad"


def test_ingest_unknown_tick_can_fail(logbook_csv):
    with pytest.raises(UnknownTick) as excinfo:
        ingest(logbook_csv, None, GradeSystem.FRENCH, default_tick_policy(), on_unknown="fail")
    assert excinfo.value.row == 6


def test_ingest_style_filter(logbook_csv):
    result = ingest(logbook_csv, None, GradeSystem.FRENCH, default_tick_policy(), styles=["sport"])
    assert len(result.records) == 2
    assert result.style_excluded == 1


def test_ingest_tab_separated(tmp_path):
    path = tmp_path / "logbook.tsv"
    path.write_text(CSV.replace(",", "\t"), encoding="utf-8")
    result = ingest(path, InputFormat.DELIMITED, GradeSystem.FRENCH, default_tick_policy())
    assert len(result.records) == 3


def test_ingest_json_records(tmp_path):
    path = tmp_path / "logbook.json"
    path.write_text(json.dumps([
        {"climber_id": "a", "route_id": "x", "date": "2016-08-15", "grade": "23", "tick": "flash"},
        {"climber_id": "a", "route_id": "y", "date": "2016-08-16", "grade": "24", "tick": "retreat"},
    ]), encoding="utf-8")
    result = ingest(path, None, GradeSystem.EWBANK, default_tick_policy())
    assert [r.success for r in result.records] == [True, False]


def test_ingest_reports_row_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("climber_id,route_id,date,grade,tick\n"
                    "a,x,2016-08-15,23,flash\n"
                    "a,y,2016-13-45,24,flash\n", encoding="utf-8")
    with pytest.raises(MalformedRow) as excinfo:
        ingest(path, None, GradeSystem.EWBANK, default_tick_policy())
    assert excinfo.value.row == 3


def test_ingest_ragged_row_reports_its_line(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("climber_id,route_id,date,grade,tick\n"
                    "a,x,2016-08-15,23,flash\n"
                    "a,y,2016-08-16,24,flash,extra,fields\n", encoding="utf-8")
    with pytest.raises(MalformedRow) as excinfo:
        ingest(path, None, GradeSystem.EWBANK, default_tick_policy())
    assert excinfo.value.row == 3


@pytest.mark.parametrize("name", ["latin.csv", "latin.json"])
def test_ingest_invalid_encoding_is_input_error(tmp_path, name):
    path = tmp_path / name
    path.write_bytes(b"\xff\xfeclimber_id,route_id,date,grade,tick\na,\xe9,2016-08-15,23,flash\n")
    with pytest.raises(MalformedRow) as excinfo:
        ingest(path, None, GradeSystem.EWBANK, default_tick_policy())
    assert isinstance(excinfo.value, InputError)
    assert "UTF-8" in str(excinfo.value)


def test_ingest_wrong_grade_system_is_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("climber_id,route_id,date,grade,tick\na,x,2016-08-15,7a,flash\n", encoding="utf-8")
    with pytest.raises(MalformedRow):
        ingest(path, None, GradeSystem.EWBANK, default_tick_policy())


def test_tick_policy_sets_must_be_disjoint():
    with pytest.raises(ValidationError):
        TickPolicy(success_ticks={"redpoint"}, failure_ticks={"Redpoint"})


def test_bouldering_policy():
    policy = default_tick_policy(bouldering=True)
    assert policy.classify("send") == "success"
    assert default_tick_policy().classify("send") is None


# --- Agrégation par session ---

def test_aggregate_any_success():
    d1 = date(2016, 8, 1)
    records = [record(day=d1, success=False), record(day=d1, success=False), record(day=d1, success=True)]
    out = aggregate_sessions(records)
    assert len(out) == 1
    assert out[0].success and out[0].tick == "redpoint"


def test_aggregate_keeps_different_days():
    records = [record(day=date(2016, 8, 1), success=False), record(day=date(2016, 8, 2), success=True)]
    assert len(aggregate_sessions(records)) == 2


def test_aggregate_conflicting_grades_keeps_first(caplog):
    d1 = date(2016, 8, 1)
    out = aggregate_sessions([record(day=d1, grade=20, success=False), record(day=d1, grade=21)])
    assert out[0].grade.value == 20 and out[0].success
    assert "contradictoires" in caplog.text


def _random_logbook(rng):
    n = int(rng.integers(1, 40))
    return [record(climber=f"c{rng.integers(3)}", route=f"r{rng.integers(4)}",
                   day=date(2016, 8, int(rng.integers(1, 4))), grade=20.0,
                   success=bool(rng.integers(2))) for _ in range(n)]


def test_aggregate_properties_on_random_logbooks(rng):
    """Idempotence, règle « une réussite suffit », unicité par (grimpeur, voie, jour)"""
    for _ in range(1000):
        records = _random_logbook(rng)
        once = aggregate_sessions(records)
        assert aggregate_sessions(once) == once
        keys = [(r.climber_id, r.route_id, r.date) for r in once]
        assert len(keys) == len(set(keys))
        groups_with_success = {(r.climber_id, r.route_id, r.date) for r in records if r.success}
        assert {(r.climber_id, r.route_id, r.date) for r in once if r.success} == groups_with_success
        assert len(once) <= len(records)


# --- Sélection ---

def _climber(name, n, failures):
    return [record(climber=name, route=f"{name}{i}", success=i >= failures) for i in range(n)]


def test_filter_thresholds():
    records = _climber("a", 29, 5) + _climber("b", 40, 0) + _climber("c", 30, 1)
    kept = filter_climbers(records, 30, 1)
    assert {r.climber_id for r in kept} == {"c"}
    assert filter_climbers(kept, 30, 1) == kept


def test_filter_rejects_bad_thresholds():
    with pytest.raises(InputError):
        filter_climbers([], 0, 1)


def test_cap_climbers_keeps_most_active():
    records = _climber("a", 3, 1) + _climber("b", 5, 1) + _climber("c", 5, 1)
    assert {r.climber_id for r in cap_climbers(records, 2)} == {"b", "c"}
    assert cap_climbers(records, None) == records


def test_failure_statistics():
    stats = failure_statistics(_climber("a", 10, 2) + _climber("b", 10, 6))
    assert stats["median_failures"] == 4.0
    assert stats["min_failures"] == 2 and stats["max_failures"] == 6
    assert stats["failure_fraction_median"] == pytest.approx(0.4)


# --- Pagination ---

def test_paginate_calendar_months():
    records = [record(day=date(2016, 8, 15)), record(day=date(2016, 9, 1)),
               record(climber="bob", day=date(2021, 7, 31))]
    data = paginate(records, date(2016, 8, 1), date(2021, 8, 1))
    assert data.n_pages == 60
    assert list(data.page) == [1, 2, 60]
    assert list(data.min_page) == [1, 60] and list(data.max_page) == [2, 60]
    assert data.climbers == ["alice", "bob"]


def test_paginate_rejects_out_of_window():
    with pytest.raises(RecordOutOfWindow):
        paginate([record(day=date(2021, 8, 1))], date(2016, 8, 1), date(2021, 8, 1))


def test_session_pipeline_satisfies_invariants(rng):
    """agrégation puis sélection puis pagination : invariants de structure respectés"""
    records = [record(climber=f"c{rng.integers(5)}", route=f"r{rng.integers(30)}",
                      day=date(2016, int(rng.integers(1, 13)), int(rng.integers(1, 28))),
                      grade=float(rng.integers(15, 25)), success=bool(rng.integers(2)))
               for _ in range(400)]
    prepared = filter_climbers(aggregate_sessions(records), 10, 1)
    data = paginate(prepared, date(2016, 1, 1), date(2017, 1, 1), game_mode=GameMode.SESSION)
    data.validate()
    keys = [(r.climber_id, r.route_id, r.date) for r in prepared]
    assert len(keys) == len(set(keys))
    assert np.all(data.page >= data.min_page[data.climber_index])
    assert np.all(data.page <= data.max_page[data.climber_index])


# --- Fichiers ---

def test_prepared_file_round_trip(tmp_path):
    records = [record(day=date(2016, 8, 15), grade=23.5, style="Sport"), record(day=date(2016, 9, 2), success=False)]
    path = tmp_path / "prepared.csv"
    write_prepared(records, date(2016, 8, 1), path)
    assert load_prepared(path, GradeSystem.EWBANK) == records


def test_load_prepared_missing(tmp_path):
    with pytest.raises(InputError):
        load_prepared(tmp_path / "absent.csv", GradeSystem.EWBANK)


def test_written_logbook_is_ingestible(tmp_path):
    records = [record(day=date(2016, 8, 15), grade=23.25), record(day=date(2016, 8, 16), success=False)]
    path = tmp_path / "logbook.csv"
    write_logbook(records, path)
    result = ingest(path, None, GradeSystem.EWBANK, default_tick_policy())
    assert result.records == records


def test_preparation_report_header(tmp_path):
    report = PreparationReport({"min_ascents": 30, "min_failures": 1})
    report.add("filter", 10, 8)
    path = tmp_path / "report.csv"
    report.write(path)
    text = path.read_text(encoding="utf-8")
    assert text.startswith("# min_ascents: 30\n# min_failures: 1\n")
    frame = PreparationReport.read(path)
    assert frame.loc[0, "rows_out"] == 8
