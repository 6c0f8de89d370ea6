"""Annotation store: objects with ordered coordinates and per-person labels.

The central entity is the annotation. A center annotation is one click,
one coordinate; a polygon annotation is an ordered, implicitly closed
vertex list. Every annotation carries at most one label per person, so
several raters can classify the same object independently. Rendering
descriptors implement blinding: only the viewer's own labels expose a
class, everything else is an unknown black marker.

Persistence is a single JSON document (schema version 1) which doubles
as the import/export exchange format.
"""

from __future__ import annotations

import copy
import gc
import json
import math
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

SCHEMA_VERSION = 1
DEFAULT_HIT_RADIUS = 25  # level-0 px, roughly a cell radius at high power
UNKNOWN_COLOR = (0, 0, 0)  # reserved for blinded markers

CENTER = "center"
POLYGON = "polygon"


class StoreError(Exception):
    """Base class for annotation store failures."""


class UnknownIdError(StoreError):
    """A referenced person/class/slide/annotation id does not exist."""


class OutOfBoundsError(StoreError):
    """A coordinate falls outside the slide extent [0,w) x [0,h)."""


class GeometryError(StoreError):
    """Invalid annotation geometry (e.g. polygon with < 3 points)."""


class SchemaVersionError(StoreError):
    """Persisted file has an unsupported schema version."""


@dataclass(frozen=True)
class Person:
    id: int
    name: str


@dataclass(frozen=True)
class ClassDef:
    id: int
    name: str
    color: tuple[int, int, int]


@dataclass(frozen=True)
class SlideRecord:
    id: int
    name: str
    container_path: str
    width: int
    height: int


# Coordinate is a NamedTuple and Label/Annotation carry __slots__: bulk
# database loads construct hundreds of thousands of these.
class Coordinate(NamedTuple):
    x: int
    y: int
    order: int


@dataclass(slots=True)
class Label:
    person_id: int
    class_id: int
    ts_ms: int


@dataclass(slots=True)
class Annotation:
    id: int
    slide_id: int
    kind: str  # CENTER or POLYGON
    coordinates: list[Coordinate]
    labels: list[Label] = field(default_factory=list)

    def bbox(self) -> tuple[int, int, int, int]:
        """(min_x, min_y, max_x, max_y); degenerate for center points."""
        xs = [c.x for c in self.coordinates]
        ys = [c.y for c in self.coordinates]
        return min(xs), min(ys), max(xs), max(ys)

    def anchor(self) -> tuple[int, int]:
        """Point a viewport should center on: the click, or the bbox middle."""
        if self.kind == CENTER:
            c = self.coordinates[0]
            return c.x, c.y
        min_x, min_y, max_x, max_y = self.bbox()
        return (min_x + max_x) // 2, (min_y + max_y) // 2

    def label_by(self, person_id: int) -> Label | None:
        for label in self.labels:
            if label.person_id == person_id:
                return label
        return None


@dataclass(frozen=True)
class RenderDescriptor:
    """What one viewer is allowed to see of one annotation."""

    annotation_id: int
    kind: str
    geometry: tuple[tuple[int, int], ...]
    display_color: tuple[int, int, int]
    blinded: bool
    class_id: int | None  # the viewer's own class, never anyone else's
    labeled_by_others: bool

    def to_wire(self) -> dict:
        """JSON-safe dict; blinded descriptors carry no class identity."""
        item = {
            "id": self.annotation_id,
            "kind": self.kind,
            "coordinates": [{"x": x, "y": y} for x, y in self.geometry],
            "color": "#%02x%02x%02x" % self.display_color,
            "blinded": self.blinded,
            "labeled_by_others": self.labeled_by_others,
        }
        if not self.blinded and self.class_id is not None:
            item["class_id"] = self.class_id
        return item


def point_in_polygon(x: float, y: float, vertices) -> bool:
    """Even-odd (crossing number) containment test; closed implicitly."""
    inside = False
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def rects_intersect(
    bbox: tuple[int, int, int, int], rect: tuple[int, int, int, int]
) -> bool:
    """Closed bbox vs half-open (x, y, w, h) rectangle."""
    min_x, min_y, max_x, max_y = bbox
    x, y, w, h = rect
    return min_x < x + w and max_x >= x and min_y < y + h and max_y >= y


def blinded_render(
    annotations, viewer_person_id: int, classes: dict[int, ClassDef]
) -> list[RenderDescriptor]:
    """Map annotations to what ``viewer_person_id`` may see.

    Annotations the viewer has labeled show that class's color; anything
    labeled only by others (or not at all) renders as an unknown black
    marker with no class identity attached.
    """
    descriptors = []
    for ann in annotations:
        own = ann.label_by(viewer_person_id)
        others = any(l.person_id != viewer_person_id for l in ann.labels)
        geometry = tuple((c.x, c.y) for c in sorted(ann.coordinates, key=lambda c: c.order))
        if own is not None:
            descriptors.append(
                RenderDescriptor(
                    annotation_id=ann.id,
                    kind=ann.kind,
                    geometry=geometry,
                    display_color=classes[own.class_id].color,
                    blinded=False,
                    class_id=own.class_id,
                    labeled_by_others=others,
                )
            )
        else:
            descriptors.append(
                RenderDescriptor(
                    annotation_id=ann.id,
                    kind=ann.kind,
                    geometry=geometry,
                    display_color=UNKNOWN_COLOR,
                    blinded=True,
                    class_id=None,
                    labeled_by_others=others,
                )
            )
    return descriptors


class AnnotationStore:
    """In-memory store with single-writer/multi-reader locking.

    All mutations funnel through one re-entrant lock; readers take the
    same lock briefly and hand out snapshots, so a handle can be shared
    across threads (e.g. by a request-handling pool).
    """

    def __init__(self):
        self.persons: dict[int, Person] = {}
        self.classes: dict[int, ClassDef] = {}
        self.slides: dict[int, SlideRecord] = {}
        self.annotations: dict[int, Annotation] = {}
        self._by_slide: dict[int, list[int]] = {}
        self._lock = threading.RLock()
        self._next_person = 1
        self._next_class = 1
        self._next_slide = 1
        self._next_annotation = 1

    # -- registry -----------------------------------------------------------

    def add_person(self, name: str, person_id: int | None = None) -> Person:
        if not name:
            raise ValueError("person name must be non-empty")
        with self._lock:
            pid = self._take_id("_next_person", person_id, self.persons)
            person = Person(pid, name)
            self.persons[pid] = person
            return person

    def add_class(
        self, name: str, color: tuple[int, int, int], class_id: int | None = None
    ) -> ClassDef:
        color = tuple(int(c) for c in color)
        if color == UNKNOWN_COLOR:
            raise ValueError("class color (0,0,0) is reserved for blinded markers")
        with self._lock:
            cid = self._take_id("_next_class", class_id, self.classes)
            cdef = ClassDef(cid, name, color)
            self.classes[cid] = cdef
            return cdef

    def add_slide(
        self,
        name: str,
        container_path: str,
        width: int,
        height: int,
        slide_id: int | None = None,
    ) -> SlideRecord:
        if width <= 0 or height <= 0:
            raise ValueError("slide extent must be positive")
        with self._lock:
            sid = self._take_id("_next_slide", slide_id, self.slides)
            record = SlideRecord(sid, name, str(container_path), width, height)
            self.slides[sid] = record
            self._by_slide.setdefault(sid, [])
            return record

    def _take_id(self, counter: str, wanted: int | None, table: dict) -> int:
        if wanted is None:
            wanted = getattr(self, counter)
        if wanted in table:
            raise ValueError(f"id {wanted} already in use")
        setattr(self, counter, max(getattr(self, counter), wanted + 1))
        return wanted

    # -- mutation -----------------------------------------------------------

    def _check_point(self, slide: SlideRecord, x: int, y: int) -> None:
        if not (0 <= x < slide.width and 0 <= y < slide.height):
            raise OutOfBoundsError(
                f"({x},{y}) outside slide extent [0,{slide.width})x[0,{slide.height})"
            )

    def _require(self, table: dict, key: int, what: str):
        entry = table.get(key)
        if entry is None:
            raise UnknownIdError(f"unknown {what} id {key}")
        return entry

    def add_center_annotation(
        self, slide_id: int, x: int, y: int, person_id: int, class_id: int, ts_ms: int
    ) -> int:
        """One click: creates the annotation and the creator's label atomically."""
        with self._lock:
            slide = self._require(self.slides, slide_id, "slide")
            self._require(self.persons, person_id, "person")
            self._require(self.classes, class_id, "class")
            self._check_point(slide, x, y)
            ann_id = self._next_annotation
            self._next_annotation += 1
            ann = Annotation(
                id=ann_id,
                slide_id=slide_id,
                kind=CENTER,
                coordinates=[Coordinate(int(x), int(y), 0)],
                labels=[Label(person_id, class_id, int(ts_ms))],
            )
            self.annotations[ann_id] = ann
            self._by_slide.setdefault(slide_id, []).append(ann_id)
            return ann_id

    def add_polygon_annotation(
        self, slide_id: int, points, person_id: int, class_id: int, ts_ms: int
    ) -> int:
        """Ordered outline, implicitly closed; self-intersection is allowed."""
        with self._lock:
            slide = self._require(self.slides, slide_id, "slide")
            self._require(self.persons, person_id, "person")
            self._require(self.classes, class_id, "class")
            points = [(int(px), int(py)) for px, py in points]
            if len(points) < 3:
                raise GeometryError("polygon needs at least 3 points")
            for px, py in points:
                self._check_point(slide, px, py)
            ann_id = self._next_annotation
            self._next_annotation += 1
            ann = Annotation(
                id=ann_id,
                slide_id=slide_id,
                kind=POLYGON,
                coordinates=[Coordinate(px, py, i) for i, (px, py) in enumerate(points)],
                labels=[Label(person_id, class_id, int(ts_ms))],
            )
            self.annotations[ann_id] = ann
            self._by_slide.setdefault(slide_id, []).append(ann_id)
            return ann_id

    def set_label(self, annotation_id: int, person_id: int, class_id: int, ts_ms: int) -> None:
        """Upsert: a person has exactly one label per annotation."""
        with self._lock:
            ann = self._require(self.annotations, annotation_id, "annotation")
            self._require(self.persons, person_id, "person")
            self._require(self.classes, class_id, "class")
            existing = ann.label_by(person_id)
            if existing is not None:
                existing.class_id = class_id
                existing.ts_ms = int(ts_ms)
            else:
                ann.labels.append(Label(person_id, class_id, int(ts_ms)))

    # -- queries ------------------------------------------------------------

    def get_annotation(self, annotation_id: int) -> Annotation:
        with self._lock:
            return self._require(self.annotations, annotation_id, "annotation")

    def annotations_on(self, slide_id: int) -> list[Annotation]:
        with self._lock:
            self._require(self.slides, slide_id, "slide")
            return [self.annotations[i] for i in sorted(self._by_slide.get(slide_id, []))]

    def query_viewport(self, slide_id: int, rect: tuple[int, int, int, int]) -> list[Annotation]:
        """Annotations whose bounding box intersects the (x, y, w, h) rect."""
        x, y, w, h = rect
        if w <= 0 or h <= 0:
            raise ValueError("viewport must have positive size")
        with self._lock:
            ids = sorted(self._by_slide.get(slide_id, []))
            return [
                self.annotations[i]
                for i in ids
                if rects_intersect(self.annotations[i].bbox(), rect)
            ]

    def hit_test(
        self, slide_id: int, x: int, y: int, radius: int = DEFAULT_HIT_RADIUS
    ) -> int | None:
        """Closest selectable annotation at (x, y), if any.

        Center annotations hit within ``radius``; polygons hit when the
        point is inside (even-odd rule) and count as distance 0. Ties go
        to the smallest annotation id.
        """
        if radius <= 0:
            raise ValueError("hit radius must be positive")
        best: tuple[float, int] | None = None
        with self._lock:
            for ann_id in sorted(self._by_slide.get(slide_id, [])):
                ann = self.annotations[ann_id]
                if ann.kind == CENTER:
                    c = ann.coordinates[0]
                    dist = math.hypot(c.x - x, c.y - y)
                    if dist > radius:
                        continue
                else:
                    vertices = [(c.x, c.y) for c in ann.coordinates]
                    if not point_in_polygon(x, y, vertices):
                        continue
                    dist = 0.0
                if best is None or dist < best[0]:
                    best = (dist, ann_id)
        return None if best is None else best[1]

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "version": SCHEMA_VERSION,
                "persons": [
                    {"id": p.id, "name": p.name} for p in sorted(self.persons.values(), key=lambda p: p.id)
                ],
                "classes": [
                    {"id": c.id, "name": c.name, "color": list(c.color)}
                    for c in sorted(self.classes.values(), key=lambda c: c.id)
                ],
                "slides": [
                    {
                        "id": s.id,
                        "name": s.name,
                        "container_path": s.container_path,
                        "width": s.width,
                        "height": s.height,
                    }
                    for s in sorted(self.slides.values(), key=lambda s: s.id)
                ],
                "annotations": [
                    {
                        "id": a.id,
                        "slide_id": a.slide_id,
                        "kind": a.kind,
                        "coordinates": [
                            {"x": c.x, "y": c.y, "order": c.order} for c in a.coordinates
                        ],
                        "labels": [
                            {"person_id": l.person_id, "class_id": l.class_id, "ts_ms": l.ts_ms}
                            for l in a.labels
                        ],
                    }
                    for a in sorted(self.annotations.values(), key=lambda a: a.id)
                ],
            }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationStore":
        version = data.get("version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(f"unsupported schema version {version!r}")
        store = cls()
        for p in data.get("persons", []):
            store.add_person(p["name"], person_id=int(p["id"]))
        for c in data.get("classes", []):
            store.add_class(c["name"], tuple(c["color"]), class_id=int(c["id"]))
        for s in data.get("slides", []):
            store.add_slide(
                s["name"],
                s["container_path"],
                int(s["width"]),
                int(s["height"]),
                slide_id=int(s["id"]),
            )
        # bulk path: build annotations directly, with existence checks only
        persons, classes, slides = store.persons, store.classes, store.slides
        annotations = store.annotations
        by_slide = store._by_slide
        next_id = store._next_annotation
        for a in data.get("annotations", []):
            slide_id = a["slide_id"]
            if slide_id not in slides:
                raise UnknownIdError(f"annotation {a['id']} references unknown slide {slide_id}")
            kind = a["kind"]
            coords = [Coordinate(c["x"], c["y"], c["order"]) for c in a["coordinates"]]
            if kind == CENTER and len(coords) != 1:
                raise GeometryError(f"center annotation {a['id']} must have 1 coordinate")
            if kind == POLYGON and len(coords) < 3:
                raise GeometryError(f"polygon annotation {a['id']} needs >= 3 coordinates")
            labels = [Label(l["person_id"], l["class_id"], l["ts_ms"]) for l in a.get("labels", [])]
            seen = {label.person_id for label in labels}
            if len(seen) != len(labels):
                raise StoreError(f"annotation {a['id']} has duplicate label person")
            if not (seen <= persons.keys()):
                raise UnknownIdError(f"annotation {a['id']} has label with unknown person")
            for label in labels:
                if label.class_id not in classes:
                    raise UnknownIdError(f"annotation {a['id']} has label with unknown class")
            ann_id = int(a["id"])
            if ann_id in annotations:
                raise StoreError(f"duplicate annotation id {ann_id}")
            annotations[ann_id] = Annotation(ann_id, slide_id, kind, coords, labels)
            by_slide.setdefault(slide_id, []).append(ann_id)
            if ann_id >= next_id:
                next_id = ann_id + 1
        store._next_annotation = next_id
        return store

    def save(self, path) -> None:
        """Atomic write: temp file in the target directory, then rename."""
        path = Path(path)
        payload = json.dumps(self.to_dict(), separators=(",", ":"))
        fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(payload)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    @classmethod
    def load(cls, path) -> "AnnotationStore":
        # pause the cycle collector: bulk loads allocate a few hundred
        # thousand objects and none of them are garbage yet
        was_enabled = gc.isenabled()
        gc.disable()
        try:
            with open(path, encoding="utf-8") as handle:
                return cls.from_dict(json.load(handle))
        finally:
            if was_enabled:
                gc.enable()

    # -- merge (import --merge) ----------------------------------------------

    def merge_from(self, incoming: "AnnotationStore") -> None:
        """Union annotations by id; conflicting labels keep the newer timestamp.

        Registry entries (persons, classes, slides) are added when their
        id is new; on id conflicts the existing entry wins.
        """
        with self._lock:
            for pid, person in incoming.persons.items():
                if pid not in self.persons:
                    self.add_person(person.name, person_id=pid)
            for cid, cdef in incoming.classes.items():
                if cid not in self.classes:
                    self.add_class(cdef.name, cdef.color, class_id=cid)
            for sid, slide in incoming.slides.items():
                if sid not in self.slides:
                    self.add_slide(
                        slide.name, slide.container_path, slide.width, slide.height, slide_id=sid
                    )
            for ann_id, ann in incoming.annotations.items():
                mine = self.annotations.get(ann_id)
                if mine is None:
                    clone = copy.deepcopy(ann)
                    self.annotations[ann_id] = clone
                    self._by_slide.setdefault(clone.slide_id, []).append(ann_id)
                    self._next_annotation = max(self._next_annotation, ann_id + 1)
                    continue
                for label in ann.labels:
                    current = mine.label_by(label.person_id)
                    if current is None:
                        mine.labels.append(copy.deepcopy(label))
                    elif label.ts_ms > current.ts_ms:
                        current.class_id = label.class_id
                        current.ts_ms = label.ts_ms

    def render_viewport(
        self, slide_id: int, rect: tuple[int, int, int, int], viewer_person_id: int
    ) -> list[RenderDescriptor]:
        """query_viewport + blinded_render in one snapshot."""
        with self._lock:
            self._require(self.persons, viewer_person_id, "person")
            annotations = self.query_viewport(slide_id, rect)
            return blinded_render(annotations, viewer_person_id, self.classes)
