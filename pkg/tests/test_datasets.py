"""Dataset converters, canonical IO, and the situation label filter."""
from __future__ import annotations

import csv
import json

import pytest

from conftest import SITUATION_ROWS, SITUATION_SURVIVOR_IDS, make_instance
from mindseye import datasets, jsonutil
from mindseye.datasets import DatasetManifest
from mindseye.errors import DatasetError
from mindseye.types import TaskInstance, TaskKind


# -- canonical form ------------------------------------------------------


def test_write_read_round_trip(tmp_path, sciq_instances):
    path = tmp_path / "data.jsonl"
    count = datasets.write_canonical(sciq_instances, path)
    assert count == len(sciq_instances)
    assert datasets.read_canonical(path) == sciq_instances


def test_write_creates_parent_directories(tmp_path, sciq_instances):
    path = tmp_path / "deep" / "nested" / "data.jsonl"
    datasets.write_canonical(sciq_instances[:1], path)
    assert path.exists()


def test_read_skips_blank_lines(tmp_path, sciq_instances):
    path = tmp_path / "data.jsonl"
    datasets.write_canonical(sciq_instances[:2], path)
    text = path.read_text("utf-8")
    path.write_text("\n" + text.replace("\n", "\n\n", 1), "utf-8")
    assert datasets.read_canonical(path) == sciq_instances[:2]


def test_read_reports_bad_json_line(tmp_path, sciq_instances):
    path = tmp_path / "data.jsonl"
    datasets.write_canonical(sciq_instances[:1], path)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("{not json\n")
    with pytest.raises(DatasetError) as excinfo:
        datasets.read_canonical(path)
    assert excinfo.value.line == 2
    assert excinfo.value.path == str(path)


def test_read_reports_invalid_instance_line(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"schema": "zlavi/1", "id": "x"}\n', "utf-8")
    with pytest.raises(DatasetError) as excinfo:
        datasets.read_canonical(path)
    assert excinfo.value.line == 1


# -- manifests and load --------------------------------------------------


def test_manifest_rejects_unknown_dataset(tmp_path):
    with pytest.raises(DatasetError):
        DatasetManifest("imagenet", "test", str(tmp_path / "x"))


def test_manifest_rejects_empty_split(tmp_path):
    with pytest.raises(DatasetError):
        DatasetManifest("sciq", "", str(tmp_path / "x"))


def test_manifest_task_kind():
    assert DatasetManifest("sciq", "test", "x").task_kind is TaskKind.SCIENCE_QA
    assert DatasetManifest("agnews", "test", "x").task_kind is TaskKind.TOPIC
    assert DatasetManifest("coarsewsd20", "test", "x").task_kind is TaskKind.WSD
    assert DatasetManifest("vicomte_color", "test", "x").task_kind is TaskKind.PROBE


def test_load_missing_file(tmp_path):
    manifest = DatasetManifest("sciq", "test", str(tmp_path / "absent.jsonl"))
    with pytest.raises(DatasetError, match="not found"):
        datasets.load(manifest)


def test_load_checks_expected_count(tmp_path, sciq_instances):
    path = tmp_path / "data.jsonl"
    datasets.write_canonical(sciq_instances, path)
    manifest = DatasetManifest("sciq", "test", str(path),
                               expected_count=len(sciq_instances))
    assert len(datasets.load(manifest)) == len(sciq_instances)
    wrong = DatasetManifest("sciq", "test", str(path), expected_count=5)
    with pytest.raises(DatasetError, match="expected 5"):
        datasets.load(wrong)


def test_load_checks_task_kind(tmp_path):
    path = tmp_path / "data.jsonl"
    wsd = make_instance(0, "the bank was steep", ("bank financial", "bank river"),
                        kind=TaskKind.WSD, name="coarsewsd20")
    datasets.write_canonical([wsd], path)
    manifest = DatasetManifest("sciq", "test", str(path))
    with pytest.raises(DatasetError, match="kind"):
        datasets.load(manifest)


def test_expected_test_counts_frozen():
    assert datasets.EXPECTED_TEST_COUNTS == {
        "qasc": 926, "sciq": 1000, "arc_easy": 570, "arc_challenge": 299,
        "agnews": 7600, "situation": 1789,
    }


# -- word sense disambiguation ------------------------------------------


def _write_wsd_root(tmp_path):
    root = tmp_path / "cwsd"
    bank = root / "bank"
    bank.mkdir(parents=True)
    (bank / "classes_map.txt").write_text(
        json.dumps({"0": "bank_financial", "1": "bank_river"}), "utf-8")
    (bank / "test.data.txt").write_text(
        "5\tshe walked along the river bank at dawn\n"
        "3\tthe central bank raised interest rates\n", "utf-8")
    (bank / "test.gold.txt").write_text("1\n0\n", "utf-8")
    crane = root / "crane"
    crane.mkdir()
    (crane / "classes_map.txt").write_text(
        json.dumps({"0": "crane_machine", "1": "crane_bird"}), "utf-8")
    (crane / "test.data.txt").write_text("1\tthe crane lifted the beam\n", "utf-8")
    (crane / "test.gold.txt").write_text("0\n", "utf-8")
    return root


def test_wsd_conversion(tmp_path):
    root = _write_wsd_root(tmp_path)
    instances = datasets.convert_coarsewsd20(root)
    assert [inst.id for inst in instances] == [
        "coarsewsd20.bank.test.1", "coarsewsd20.bank.test.2",
        "coarsewsd20.crane.test.1",
    ]
    first = instances[0]
    assert first.task_kind is TaskKind.WSD
    assert first.query_text == "she walked along the river bank at dawn"
    assert [c.surface for c in first.candidates] == ["bank financial", "bank river"]
    assert first.gold == 1
    assert first.metadata == {"target_word": "bank", "target_index": "5"}
    assert instances[1].gold == 0
    assert instances[1].metadata["target_index"] == "3"
    assert instances[2].metadata["target_word"] == "crane"


def test_wsd_definitions_become_imagination_texts(tmp_path):
    root = _write_wsd_root(tmp_path)
    glosses = {"bank_river": "sloping land beside a body of water"}
    instances = datasets.convert_coarsewsd20(root, definitions=glosses)
    bank = instances[0]
    assert bank.candidates[1].imagination_text == glosses["bank_river"]
    # Senses without a gloss imagine their humanized name.
    assert bank.candidates[0].imagination_text == "bank financial"


def test_wsd_word_subset(tmp_path):
    root = _write_wsd_root(tmp_path)
    instances = datasets.convert_coarsewsd20(root, words=["crane"])
    assert [inst.id for inst in instances] == ["coarsewsd20.crane.test.1"]


def test_wsd_empty_root(tmp_path):
    root = tmp_path / "empty"
    root.mkdir()
    with pytest.raises(DatasetError, match="no word directories"):
        datasets.convert_coarsewsd20(root)


def test_wsd_count_mismatch(tmp_path):
    root = _write_wsd_root(tmp_path)
    (root / "bank" / "test.gold.txt").write_text("1\n", "utf-8")
    with pytest.raises(DatasetError, match="2 sentences but 1 labels"):
        datasets.convert_coarsewsd20(root)


def test_wsd_malformed_data_line(tmp_path):
    root = _write_wsd_root(tmp_path)
    (root / "crane" / "test.data.txt").write_text("no tab here\n", "utf-8")
    with pytest.raises(DatasetError) as excinfo:
        datasets.convert_coarsewsd20(root)
    assert excinfo.value.line == 1
    assert "crane" in str(excinfo.value.path)


def test_wsd_gold_out_of_range(tmp_path):
    root = _write_wsd_root(tmp_path)
    (root / "crane" / "test.gold.txt").write_text("7\n", "utf-8")
    with pytest.raises(DatasetError, match="out of range"):
        datasets.convert_coarsewsd20(root)


def test_wsd_missing_sense_map(tmp_path):
    root = _write_wsd_root(tmp_path)
    (root / "bank" / "classes_map.txt").unlink()
    with pytest.raises(DatasetError, match="sense map"):
        datasets.convert_coarsewsd20(root)


# -- science QA ----------------------------------------------------------


def test_arc_style_conversion(tmp_path):
    path = tmp_path / "qasc.jsonl"
    rows = [
        {"id": "q17", "answerKey": "B",
         "question": {"stem": "Which gas do plants absorb?",
                      "choices": [{"label": "A", "text": "oxygen"},
                                  {"label": "B", "text": "carbon dioxide"}]}},
        {"answerKey": "A",
         "question": {"stem": "What falls from rain clouds?",
                      "choices": [{"label": "A", "text": "water"},
                                  {"label": "B", "text": "sand"}]}},
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(rows[0]) + "\n\n" + json.dumps(rows[1]) + "\n")
    instances = datasets.convert_arc_style(path, "qasc")
    assert [inst.id for inst in instances] == ["qasc.test.q17", "qasc.test.3"]
    assert instances[0].gold == 1
    assert [c.surface for c in instances[0].candidates] == [
        "oxygen", "carbon dioxide"]
    assert instances[1].gold == 0
    assert instances[1].query_text == "What falls from rain clouds?"
    assert all(inst.task_kind is TaskKind.SCIENCE_QA for inst in instances)


def test_arc_style_unknown_answer_key(tmp_path):
    path = tmp_path / "bad.jsonl"
    row = {"id": "q1", "answerKey": "D",
           "question": {"stem": "s", "choices": [{"label": "A", "text": "x"}]}}
    path.write_text(json.dumps(row) + "\n", "utf-8")
    with pytest.raises(DatasetError) as excinfo:
        datasets.convert_arc_style(path, "arc_easy")
    assert excinfo.value.line == 1


def test_sciq_conversion_sorts_options(tmp_path):
    path = tmp_path / "sciq.json"
    rows = [{"question": "What do bees collect from flowers?",
             "correct_answer": "nectar", "distractor1": "wood",
             "distractor2": "iron", "distractor3": "glass"}]
    path.write_text(json.dumps(rows), "utf-8")
    instances = datasets.convert_sciq(path)
    assert len(instances) == 1
    inst = instances[0]
    assert inst.id == "sciq.test.1"
    assert [c.surface for c in inst.candidates] == [
        "glass", "iron", "nectar", "wood"]
    assert inst.gold == 2


def test_sciq_malformed_row(tmp_path):
    path = tmp_path / "sciq.json"
    path.write_text(json.dumps([{"question": "q"}]), "utf-8")
    with pytest.raises(DatasetError) as excinfo:
        datasets.convert_sciq(path)
    assert excinfo.value.line == 1


# -- topic classification ------------------------------------------------


def test_agnews_conversion(tmp_path):
    path = tmp_path / "agnews.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["3", "Markets rally", "Stocks rose, led by banks."])
        writer.writerow(["1", "Summit opens", "Leaders met in Geneva."])
    instances = datasets.convert_agnews(path)
    assert [inst.id for inst in instances] == ["agnews.test.1", "agnews.test.2"]
    assert instances[0].query_text == "Markets rally Stocks rose, led by banks."
    assert instances[0].gold == 2
    assert instances[1].gold == 0
    surfaces = tuple(c.surface for c in instances[0].candidates)
    assert surfaces == datasets.AGNEWS_CLASSES
    assert surfaces == ("world", "sports", "business", "technology")


def test_agnews_class_out_of_range(tmp_path):
    path = tmp_path / "agnews.csv"
    path.write_text('5,"Title","Body"\n', "utf-8")
    with pytest.raises(DatasetError, match="out of range") as excinfo:
        datasets.convert_agnews(path)
    assert excinfo.value.line == 1


def test_agnews_malformed_row(tmp_path):
    path = tmp_path / "agnews.csv"
    path.write_text('"only one field"\n', "utf-8")
    with pytest.raises(DatasetError, match="malformed"):
        datasets.convert_agnews(path)


# -- situation frames ----------------------------------------------------


def test_situation_filter_survivor_set():
    kept, dropped = datasets.filter_situation_rows(SITUATION_ROWS)
    assert tuple(row["id"] for row in kept) == SITUATION_SURVIVOR_IDS
    assert [row["id"] for row in dropped] == ["sit.3", "sit.4", "sit.6", "sit.8"]


def _write_situation_file(tmp_path):
    path = tmp_path / "situation.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in SITUATION_ROWS:
            fh.write(json.dumps(row) + "\n")
    return path


def test_situation_conversion(tmp_path):
    path = _write_situation_file(tmp_path)
    instances = datasets.convert_situation(path)
    assert tuple(inst.id for inst in instances) == SITUATION_SURVIVOR_IDS
    surfaces = [c.surface for c in instances[0].candidates]
    assert surfaces == [s for _, s in datasets.SITUATION_CLASSES]
    assert len(surfaces) == 11
    # infra, med, water, evac in canonical candidate order.
    assert [inst.gold for inst in instances] == [3, 4, 10, 1]
    assert all(inst.task_kind is TaskKind.TOPIC for inst in instances)


def test_situation_default_ids(tmp_path):
    path = tmp_path / "situation.jsonl"
    path.write_text(json.dumps({"text": "aid convoys arrived",
                                "labels": ["food"]}) + "\n", "utf-8")
    instances = datasets.convert_situation(path, split="dev")
    assert instances[0].id == "situation.dev.1"
    assert instances[0].gold == 2


def test_situation_unknown_label(tmp_path):
    path = tmp_path / "situation.jsonl"
    path.write_text(json.dumps({"text": "x", "labels": ["flood"]}) + "\n", "utf-8")
    with pytest.raises(DatasetError, match="unknown situation label") as excinfo:
        datasets.convert_situation(path)
    assert excinfo.value.line == 1


def test_situation_ood_label_is_known_but_dropped(tmp_path):
    path = tmp_path / "situation.jsonl"
    path.write_text(json.dumps({"text": "x", "labels": ["out-of-domain"]}) + "\n",
                    "utf-8")
    assert datasets.convert_situation(path) == []


# -- property probes -----------------------------------------------------

PROBE_ROWS = (
    {"subject": "sky", "distribution": {"blue": 6, "gray": 3, "white": 1}},
    {"subject": "grass", "distribution": {"green": 5, "yellow": 1, "brown": 1}},
    {"subject": "coal", "distribution": {"black": 4, "silver": 1}},
    {"subject": "flamingo",
     "distribution": {"pink": 3, "orange": 1, "red": 1, "purple": 1}},
    {"subject": "zebra", "distribution": {"black": 2, "white": 2}},
)

PROBE_VOCAB = ("black", "blue", "brown", "gray", "green", "orange",
               "pink", "purple", "red", "silver", "white", "yellow")


def _write_probe_file(tmp_path, rows=PROBE_ROWS):
    path = tmp_path / "color.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def test_probe_expansion(tmp_path):
    path = _write_probe_file(tmp_path)
    manifest = DatasetManifest("vicomte_color", "test", str(path))
    instances = datasets.load_probe(manifest)
    # One instance per subject per prompt pattern.
    assert len(instances) == len(PROBE_ROWS) * 7
    sky = [inst for inst in instances if inst.query_text == "sky"]
    assert [inst.id for inst in sky] == [
        f"vicomte_color.sky.{i}" for i in range(7)]
    assert [inst.metadata["template_index"] for inst in sky] == [
        str(i) for i in range(7)]
    first = sky[0]
    assert first.metadata["relation"] == "color"
    assert tuple(c.surface for c in first.candidates) == PROBE_VOCAB
    assert first.gold == PROBE_VOCAB.index("blue")
    expected = [0.0] * 12
    expected[PROBE_VOCAB.index("blue")] = 0.6
    expected[PROBE_VOCAB.index("gray")] = 0.3
    expected[PROBE_VOCAB.index("white")] = 0.1
    assert first.gold_distribution == pytest.approx(expected, abs=1e-12)


def test_probe_gold_tie_breaks_low(tmp_path):
    path = _write_probe_file(tmp_path)
    manifest = DatasetManifest("vicomte_color", "test", str(path))
    instances = datasets.load_probe(manifest)
    zebra = next(inst for inst in instances if inst.query_text == "zebra")
    # black and white tie at 0.5; the earlier vocabulary index wins.
    assert zebra.gold == PROBE_VOCAB.index("black")


def test_probe_vocabulary_size_enforced(tmp_path):
    path = _write_probe_file(tmp_path, rows=PROBE_ROWS[:1])
    manifest = DatasetManifest("vicomte_color", "test", str(path))
    with pytest.raises(DatasetError, match="3 objects, expected 12"):
        datasets.load_probe(manifest)


def test_probe_rejects_empty_distribution(tmp_path):
    path = _write_probe_file(tmp_path,
                             rows=({"subject": "sky", "distribution": {}},))
    manifest = DatasetManifest("vicomte_color", "test", str(path))
    with pytest.raises(DatasetError, match="empty distribution") as excinfo:
        datasets.load_probe(manifest)
    assert excinfo.value.line == 1


def test_probe_rejects_negative_weight(tmp_path):
    rows = PROBE_ROWS[:2] + (
        {"subject": "coal", "distribution": {"black": -4, "silver": 1}},
    ) + PROBE_ROWS[3:]
    path = _write_probe_file(tmp_path, rows=rows)
    manifest = DatasetManifest("vicomte_color", "test", str(path))
    with pytest.raises(DatasetError, match="negative weight"):
        datasets.load_probe(manifest)


def test_probe_rejects_zero_total(tmp_path):
    rows = PROBE_ROWS[:2] + (
        {"subject": "coal", "distribution": {"black": 0, "silver": 0}},
    ) + PROBE_ROWS[3:]
    path = _write_probe_file(tmp_path, rows=rows)
    manifest = DatasetManifest("vicomte_color", "test", str(path))
    with pytest.raises(DatasetError, match="zero total weight"):
        datasets.load_probe(manifest)


def test_probe_requires_probe_dataset(tmp_path):
    path = _write_probe_file(tmp_path)
    manifest = DatasetManifest("sciq", "test", str(path))
    with pytest.raises(DatasetError, match="not a probe dataset"):
        datasets.load_probe(manifest)


def test_load_detects_raw_probe_file(tmp_path):
    path = _write_probe_file(tmp_path)
    manifest = DatasetManifest("vicomte_color", "test", str(path),
                               expected_count=35)
    instances = datasets.load(manifest)
    assert len(instances) == 35
    assert all(inst.task_kind is TaskKind.PROBE for inst in instances)


def test_load_accepts_canonical_probe_file(tmp_path):
    raw = _write_probe_file(tmp_path)
    expanded = datasets.load_probe(DatasetManifest("vicomte_color", "test",
                                                   str(raw)))
    canonical = tmp_path / "canonical.jsonl"
    datasets.write_canonical(expanded, canonical)
    manifest = DatasetManifest("vicomte_color", "test", str(canonical),
                               expected_count=35)
    # Reloading returns the wire form: distribution weights rounded to
    # nine significant digits by canonical serialization.
    stored = [TaskInstance.from_json_dict(jsonutil.round_floats(inst.to_json_dict()))
              for inst in expanded]
    assert datasets.load(manifest) == stored
