"""Sample records, JSONL persistence, and the answer vocabulary."""

import logging

import pytest

from kvqa.data.datasets import (
    MAX_DETECTIONS,
    AnswerVocab,
    Detection,
    Sample,
    load_samples,
    sample_from_record,
    sample_to_record,
    save_samples,
)


def det(label="cat", box=(0.0, 0.0, 10.0, 10.0), score=1.0):
    return Detection(label=label, box=box, score=score)


def test_detection_geometry_accessors():
    d = det(box=(2.0, 4.0, 6.0, 10.0))
    assert d.center == (4.0, 7.0)
    assert d.width == 4.0
    assert d.height == 6.0


def test_detection_rejects_degenerate_boxes():
    with pytest.raises(ValueError, match="degenerate"):
        det(box=(5.0, 0.0, 5.0, 10.0))
    with pytest.raises(ValueError, match="degenerate"):
        det(box=(0.0, 10.0, 10.0, 4.0))


def test_detection_rejects_blank_label():
    with pytest.raises(ValueError, match="label"):
        det(label="  ")


def test_sample_rejects_empty_question():
    with pytest.raises(ValueError, match="question"):
        Sample(question="  ", detections=[det()], answer="cat")


def test_sample_caps_detections_keeping_most_confident():
    dets = [det(label=f"obj{i}", score=float(i)) for i in range(1, MAX_DETECTIONS + 5)]
    sample = Sample(question="what", detections=dets, answer="x")
    assert len(sample.detections) == MAX_DETECTIONS
    # the lowest-score detections were dropped, original order preserved
    labels = [d.label for d in sample.detections]
    assert labels == [f"obj{i}" for i in range(5, MAX_DETECTIONS + 5)]


def test_record_round_trip_preserves_everything():
    sample = Sample(
        question="what is on the mat",
        detections=[det(), det(label="mat", box=(1, 1, 9, 9), score=0.5)],
        answer="cat",
        kb_id="img-3",
        question_type="object",
        steps=2,
        split="val",
        meta={"scene": 7},
    )
    back = sample_from_record(sample_to_record(sample))
    assert back == sample


def test_record_missing_fields_names_the_record():
    with pytest.raises(ValueError, match="record 4.*answer"):
        sample_from_record({"question": "q", "detections": []}, recno=4)


def test_record_accepts_box_as_alias_for_bbox():
    rec = {"question": "q", "answer": "a",
           "detections": [{"label": "cat", "box": [0, 0, 5, 5]}]}
    sample = sample_from_record(rec)
    assert sample.detections[0].box == (0, 0, 5, 5)
    assert sample.detections[0].score == 1.0


def test_record_detection_without_box_raises():
    rec = {"question": "q", "answer": "a", "detections": [{"label": "cat"}]}
    with pytest.raises(ValueError, match="bbox"):
        sample_from_record(rec)


def test_save_then_load_samples_round_trips(tmp_path):
    samples = [
        Sample(question="what is this", detections=[det()], answer="cat",
               kb_id="img-1", steps=1),
        Sample(question="who owns it", detections=[det(label="dog")],
               answer="dog", kb_id="img-2", question_type="subject", steps=2),
    ]
    path = tmp_path / "data.jsonl"
    save_samples(path, samples)
    assert load_samples(path) == samples


def test_load_samples_bad_json_names_the_record(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"question": "q", "answer": "a", "detections": []}\n{oops\n')
    with pytest.raises(ValueError, match="record 2.*JSON"):
        load_samples(path)


def test_load_samples_empty_file_warns(tmp_path, caplog):
    path = tmp_path / "data.jsonl"
    path.write_text("\n")
    with caplog.at_level(logging.WARNING):
        assert load_samples(path) == []
    assert any("empty" in rec.message for rec in caplog.records)


def test_vocab_indices_follow_sorted_answers():
    vocab = AnswerVocab(["mat", "cat", "mat", "dog"])
    assert len(vocab) == 3
    assert vocab.index("cat") == 0
    assert vocab.index("dog") == 1
    assert vocab.index("mat") == 2
    assert vocab.answer(1) == "dog"


def test_vocab_unknown_answer_maps_to_minus_one():
    vocab = AnswerVocab(["cat"])
    assert vocab.index("zebra") == -1


def test_vocab_from_samples_uses_gold_answers():
    samples = [Sample(question="q", detections=[det()], answer=a)
               for a in ("b", "a", "b")]
    vocab = AnswerVocab.from_samples(samples)
    assert vocab.to_list() == ["a", "b"]


def test_vocab_list_round_trip_preserves_order():
    # from_list must not re-sort: checkpoint order defines the class indices
    vocab = AnswerVocab.from_list(["zebra", "apple"])
    assert vocab.index("zebra") == 0
    assert vocab.to_list() == ["zebra", "apple"]


def test_vocab_rejects_empty():
    with pytest.raises(ValueError, match="non-empty"):
        AnswerVocab([])
