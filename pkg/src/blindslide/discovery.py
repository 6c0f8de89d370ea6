"""Discovery mode: jump a rater to objects they have not classified yet.

Every issued view is productive by construction: one still-unlabeled
annotation is drawn uniformly at random (seeded, so sessions replay),
and the viewport is centered on it with a bounded jitter so the object
does not always sit dead center. Views keep coming until the rater has
labeled every annotation on the slide.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .annostore import AnnotationStore, rects_intersect

DEFAULT_JITTER_FRAC = 0.25  # max viewport-relative offset per axis

Rect = tuple[int, int, int, int]


@dataclass
class DiscoveryState:
    """Per-(person, slide) iterator state; owned by a single session."""

    person_id: int
    slide_id: int
    seed: int
    viewport_size: tuple[int, int]
    jitter_frac: float = DEFAULT_JITTER_FRAC
    current_view: Rect | None = None
    rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.jitter_frac <= 0.25:
            raise ValueError("jitter_frac must be within [0, 0.25]")
        self.rng = random.Random(self.seed)


def unlabeled_for(store: AnnotationStore, person_id: int, slide_id: int) -> list[int]:
    """Ids of annotations on the slide carrying no label by this person."""
    if person_id not in store.persons:
        raise KeyError(f"unknown person id {person_id}")
    return [
        ann.id
        for ann in store.annotations_on(slide_id)
        if ann.label_by(person_id) is None
    ]


def remaining(state: DiscoveryState, store: AnnotationStore) -> int:
    return len(unlabeled_for(store, state.person_id, state.slide_id))


def view_complete(state: DiscoveryState, store: AnnotationStore) -> bool:
    """True when nothing inside the current view still needs this person."""
    if state.current_view is None:
        return True
    for ann in store.query_viewport(state.slide_id, state.current_view):
        if ann.label_by(state.person_id) is None:
            return False
    return True


def _clamp(value: int, lo: int, hi: int) -> int:
    return max(lo, min(value, hi))


def next_discovery_view(state: DiscoveryState, store: AnnotationStore) -> Rect | None:
    """Pick the next random section holding unlabeled work, or None when done.

    Annotations inside the just-completed view are excluded from the
    draw so the same section is not re-presented (unless they are all
    that is left). The viewport is clamped to the slide, keeping the
    chosen annotation's anchor in view.
    """
    candidates = unlabeled_for(store, state.person_id, state.slide_id)
    if not candidates:
        state.current_view = None
        return None
    if state.current_view is not None:
        outside = [
            ann_id
            for ann_id in candidates
            if not rects_intersect(store.get_annotation(ann_id).bbox(), state.current_view)
        ]
        if outside:
            candidates = outside

    ann = store.get_annotation(candidates[state.rng.randrange(len(candidates))])
    ax, ay = ann.anchor()
    w, h = state.viewport_size
    jx = state.rng.randint(-int(w * state.jitter_frac), int(w * state.jitter_frac))
    jy = state.rng.randint(-int(h * state.jitter_frac), int(h * state.jitter_frac))

    slide = store.slides[state.slide_id]
    x = _clamp(ax + jx - w // 2, 0, max(slide.width - w, 0))
    y = _clamp(ay + jy - h // 2, 0, max(slide.height - h, 0))
    # jitter <= 25% guarantees this, but never issue a view missing its anchor
    x = _clamp(x, ax - w + 1, ax)
    y = _clamp(y, ay - h + 1, ay)

    state.current_view = (x, y, w, h)
    return state.current_view
