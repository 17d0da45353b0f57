"""Dataset records: detections, samples, JSONL I/O, answer vocabulary.

A sample couples a question with the image's object detections, the id of the
knowledge pool it draws on, the gold answer, and bookkeeping metadata (question
type, number of reasoning steps) used for evaluation breakdowns.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

MAX_DETECTIONS = 36


@dataclass
class Detection:
    """One detected object: a labelled axis-aligned box with a confidence."""

    label: str
    box: tuple[float, float, float, float]  # (x1, y1, x2, y2)
    score: float = 1.0

    def __post_init__(self) -> None:
        x1, y1, x2, y2 = self.box
        if not (x2 > x1 and y2 > y1):
            raise ValueError(f"degenerate box {self.box!r} for label {self.label!r}")
        if not self.label.strip():
            raise ValueError("detection label must be non-empty")

    @property
    def center(self) -> tuple[float, float]:
        x1, y1, x2, y2 = self.box
        return ((x1 + x2) / 2.0, (y1 + y2) / 2.0)

    @property
    def width(self) -> float:
        return self.box[2] - self.box[0]

    @property
    def height(self) -> float:
        return self.box[3] - self.box[1]


@dataclass
class Sample:
    """One question with its detections, knowledge pool id, and gold answer."""

    question: str
    detections: list[Detection]
    answer: str
    kb_id: str = "default"
    question_type: str = "other"
    steps: int = 1
    split: str = "train"
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise ValueError("sample question must be non-empty")
        if len(self.detections) > MAX_DETECTIONS:
            # keep the most confident detections, preserving original order
            order = sorted(range(len(self.detections)),
                           key=lambda i: (-self.detections[i].score, i))
            keep = sorted(order[:MAX_DETECTIONS])
            self.detections = [self.detections[i] for i in keep]


def sample_to_record(sample: Sample) -> dict:
    return {
        "question": sample.question,
        "answer": sample.answer,
        "kb_id": sample.kb_id,
        "question_type": sample.question_type,
        "steps": sample.steps,
        "split": sample.split,
        "detections": [
            {"label": d.label, "bbox": list(d.box), "score": d.score}
            for d in sample.detections
        ],
        "meta": sample.meta,
    }


def sample_from_record(rec: dict, recno: int = 0) -> Sample:
    missing = [k for k in ("question", "answer", "detections") if k not in rec]
    if missing:
        raise ValueError(f"record {recno}: missing fields {missing}")
    dets = []
    for d in rec["detections"]:
        box = d.get("bbox", d.get("box"))
        if box is None:
            raise ValueError(f"record {recno}: detection without bbox")
        dets.append(Detection(label=d["label"], box=tuple(box),
                              score=d.get("score", 1.0)))
    return Sample(
        question=rec["question"],
        detections=dets,
        answer=rec["answer"],
        kb_id=rec.get("kb_id", "default"),
        question_type=rec.get("question_type", "other"),
        steps=rec.get("steps", 1),
        split=rec.get("split", "train"),
        meta=rec.get("meta", {}),
    )


def load_samples(path) -> list[Sample]:
    """Load a JSONL file of sample records."""
    path = str(path)
    samples: list[Sample] = []
    with open(path, encoding="utf-8") as fh:
        for recno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: record {recno}: bad JSON ({exc})") from None
            samples.append(sample_from_record(rec, recno))
    if not samples:
        log.warning("%s: empty dataset", path)
    return samples


def save_samples(path, samples: list[Sample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_record(sample)) + "\n")


class AnswerVocab:
    """Closed answer set built from the training split.

    Indices are assigned by sorted answer string so the mapping is independent
    of sample order. Unknown answers at eval time map to -1 (always wrong).
    """

    def __init__(self, answers: list[str]):
        self.answers = sorted(set(answers))
        if not self.answers:
            raise ValueError("answer vocabulary must be non-empty")
        self._index = {a: i for i, a in enumerate(self.answers)}

    def __len__(self) -> int:
        return len(self.answers)

    def index(self, answer: str) -> int:
        return self._index.get(answer, -1)

    def answer(self, idx: int) -> str:
        return self.answers[idx]

    @classmethod
    def from_samples(cls, samples: list[Sample]) -> "AnswerVocab":
        return cls([s.answer for s in samples])

    def to_list(self) -> list[str]:
        return list(self.answers)

    @classmethod
    def from_list(cls, answers: list[str]) -> "AnswerVocab":
        vocab = cls.__new__(cls)
        vocab.answers = list(answers)
        vocab._index = {a: i for i, a in enumerate(vocab.answers)}
        return vocab
