"""Agreement and throughput statistics over a double-labeled store.

Because several raters label the same annotation entities, pairwise
comparison is a join on annotation id: every annotation labeled by both
raters contributes one confusion-matrix count. Cohen's kappa then
corrects the observed agreement for chance. Annotation pace is the
stream of inter-event gaps between a person's consecutive labels,
with long gaps discarded as session breaks.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

import numpy as np

from .annostore import Annotation, AnnotationStore

DEFAULT_GAP_CUTOFF_S = 60.0

FIRST_PASS = "first"  # labels on annotations the person created
SECOND_PASS = "second"  # labels on annotations created by someone else


class KappaUndefinedError(ValueError):
    """Chance agreement is 1, leaving kappa with a zero denominator."""


@dataclass
class ConfusionMatrix:
    """Pairwise rater counts; rows = rater A's class, columns = rater B's."""

    class_ids: tuple[int, ...]
    counts: np.ndarray  # (K, K) int64
    person_a: int
    person_b: int

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def to_json_dict(self) -> dict:
        return {
            "class_ids": list(self.class_ids),
            "counts": self.counts.tolist(),
            "n": self.n,
            "person_a": self.person_a,
            "person_b": self.person_b,
        }


@dataclass(frozen=True)
class KappaResult:
    p_o: float
    p_e: float
    kappa: float


@dataclass(frozen=True)
class TimingStats:
    person_id: int
    which: str  # FIRST_PASS or SECOND_PASS
    n_events: int  # retained inter-event deltas
    mean_s: float | None
    median_s: float | None
    gap_cutoff_s: float


def annotation_creator(annotation: Annotation) -> int | None:
    """Person who created the annotation, derived from its labels.

    Creation attaches the creator's label atomically, so the earliest
    label marks the creator (ties go to the smallest person id).
    """
    if not annotation.labels:
        return None
    return min(annotation.labels, key=lambda l: (l.ts_ms, l.person_id)).person_id


def confusion_matrix(
    store: AnnotationStore,
    person_a: int,
    person_b: int,
    class_ids=None,
    slide_id: int | None = None,
) -> ConfusionMatrix:
    """Counts over annotations labeled by both raters (joined by id).

    Annotations labeled by only one of the two contribute nothing. An
    empty intersection yields n = 0 and kappa stays undefined downstream.
    """
    if person_a == person_b:
        raise ValueError("raters must be distinct")
    for pid in (person_a, person_b):
        if pid not in store.persons:
            raise KeyError(f"unknown person id {pid}")
    if class_ids is None:
        class_ids = sorted(store.classes)
    class_ids = tuple(class_ids)
    index = {cid: i for i, cid in enumerate(class_ids)}
    counts = np.zeros((len(class_ids), len(class_ids)), dtype=np.int64)

    if slide_id is None:
        annotations = list(store.annotations.values())
    else:
        annotations = store.annotations_on(slide_id)
    for ann in annotations:
        label_a = ann.label_by(person_a)
        label_b = ann.label_by(person_b)
        if label_a is None or label_b is None:
            continue
        i = index.get(label_a.class_id)
        j = index.get(label_b.class_id)
        if i is None or j is None:
            continue
        counts[i, j] += 1
    return ConfusionMatrix(class_ids=class_ids, counts=counts, person_a=person_a, person_b=person_b)


def cohens_kappa(matrix: ConfusionMatrix) -> KappaResult:
    """kappa = (p_o - p_e) / (1 - p_e), in double precision.

    p_o is the diagonal fraction, p_e the chance agreement implied by
    the row/column marginals.
    """
    counts = matrix.counts
    n = int(counts.sum())
    if n <= 0:
        raise ValueError("confusion matrix is empty; kappa undefined")
    p_o = float(np.trace(counts)) / n
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    p_e = float(np.dot(row, col)) / (float(n) * float(n))
    if p_e >= 1.0:
        raise KappaUndefinedError("chance agreement is 1; kappa undefined")
    return KappaResult(p_o=p_o, p_e=p_e, kappa=(p_o - p_e) / (1.0 - p_e))


def annotation_timing(
    store: AnnotationStore,
    person_id: int,
    gap_cutoff_s: float = DEFAULT_GAP_CUTOFF_S,
    which: str = FIRST_PASS,
) -> TimingStats:
    """Mean/median seconds between a person's consecutive label events.

    Timestamps are sorted ascending per slide; only positive deltas no
    larger than ``gap_cutoff_s`` count (longer ones are session breaks).
    ``which`` selects labels on the person's own annotations (first
    pass) or on annotations created by others (second pass).
    """
    if gap_cutoff_s <= 0:
        raise ValueError("gap_cutoff_s must be positive")
    if which not in (FIRST_PASS, SECOND_PASS):
        raise ValueError(f"which must be '{FIRST_PASS}' or '{SECOND_PASS}'")
    if person_id not in store.persons:
        raise KeyError(f"unknown person id {person_id}")

    per_slide: dict[int, list[int]] = {}
    for ann in store.annotations.values():
        label = ann.label_by(person_id)
        if label is None:
            continue
        created_by_me = annotation_creator(ann) == person_id
        if (which == FIRST_PASS) != created_by_me:
            continue
        per_slide.setdefault(ann.slide_id, []).append(label.ts_ms)

    deltas = []
    for ts_list in per_slide.values():
        ts_list.sort()
        for earlier, later in zip(ts_list, ts_list[1:]):
            delta = (later - earlier) / 1000.0
            if 0 < delta <= gap_cutoff_s:
                deltas.append(delta)

    if not deltas:
        return TimingStats(person_id, which, 0, None, None, gap_cutoff_s)
    return TimingStats(
        person_id=person_id,
        which=which,
        n_events=len(deltas),
        mean_s=sum(deltas) / len(deltas),
        median_s=statistics.median(deltas),
        gap_cutoff_s=gap_cutoff_s,
    )
