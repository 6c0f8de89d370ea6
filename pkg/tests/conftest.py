import random

import pytest

from blindslide import pyramid
from blindslide.annostore import AnnotationStore


@pytest.fixture(scope="session")
def demo_spec():
    return pyramid.random_synthetic_spec(seed=7, width=512, height=512, tile_size=128)


@pytest.fixture(scope="session")
def demo_slide_dir(tmp_path_factory, demo_spec):
    out = tmp_path_factory.mktemp("slides") / "demo"
    pyramid.generate_synthetic_slide(demo_spec, out)
    return out


@pytest.fixture(scope="session")
def demo_level0(demo_spec):
    return pyramid.render_level0(demo_spec)


def build_random_store(
    seed: int,
    n_annotations: int = 20,
    n_persons: int = 3,
    n_classes: int = 4,
    extent: tuple[int, int] = (4096, 4096),
    label_prob: float = 0.6,
    class_id_base: int = 1,
) -> AnnotationStore:
    """Store with random center/polygon annotations and partial multi-labels.

    Every annotation gets its creator's label; every other person labels
    it independently with probability ``label_prob``.
    """
    rng = random.Random(seed)
    store = AnnotationStore()
    persons = [store.add_person(f"rater-{i}") for i in range(n_persons)]
    classes = [
        store.add_class(f"class-{i}", (50 + 40 * i % 200, 80, 120 + 30 * i % 130),
                        class_id=class_id_base + i)
        for i in range(n_classes)
    ]
    width, height = extent
    slide = store.add_slide("synthetic", "unused", width, height)
    ts = 1_000_000
    for _ in range(n_annotations):
        creator = rng.choice(persons)
        cls = rng.choice(classes)
        ts += rng.randint(1, 20_000)
        if rng.random() < 0.7:
            x, y = rng.randrange(width), rng.randrange(height)
            ann_id = store.add_center_annotation(slide.id, x, y, creator.id, cls.id, ts)
        else:
            cx = rng.randrange(60, width - 60)
            cy = rng.randrange(60, height - 60)
            pts = []
            for k in range(rng.randint(3, 8)):
                pts.append((cx + rng.randint(-50, 50), cy + rng.randint(-50, 50)))
            ann_id = store.add_polygon_annotation(slide.id, pts, creator.id, cls.id, ts)
        for person in persons:
            if person.id != creator.id and rng.random() < label_prob:
                ts += rng.randint(1, 20_000)
                store.set_label(ann_id, person.id, rng.choice(classes).id, ts)
    return store


@pytest.fixture
def make_store():
    return build_random_store


# Published two-pathologist confusion matrix over four cell classes;
# recomputing kappa directly from these printed counts gives ~0.8057.
PATHOLOGIST_COUNTS = [
    [10318, 395, 327, 2249],
    [147, 30623, 202, 458],
    [27, 546, 18445, 387],
    [257, 2949, 1331, 2420],
]
PATHOLOGIST_CLASSES = ["granulocytes", "mitotic cells", "normal tumor cells", "ambiguous"]


def build_confusion_fixture(counts, class_names=None) -> AnnotationStore:
    """Store in which two raters double-labeled annotations per a count matrix."""
    k = len(counts)
    class_names = class_names or [f"class-{i}" for i in range(k)]
    store = AnnotationStore()
    rater_a = store.add_person("rater-a")
    rater_b = store.add_person("rater-b")
    classes = [store.add_class(name, (10 + 9 * i, 60, 90)) for i, name in enumerate(class_names)]
    total = sum(sum(row) for row in counts)
    side = int(total**0.5) + 2
    slide = store.add_slide("fixture", "unused", side, side)
    ts = 0
    ann_id = 0
    for i, row in enumerate(counts):
        for j, count in enumerate(row):
            for _ in range(count):
                ann_id += 1
                ts += 2
                store.add_center_annotation(
                    slide.id, ann_id % side, ann_id // side, rater_a.id, classes[i].id, ts
                )
                store.set_label(ann_id, rater_b.id, classes[j].id, ts + 1)
    return store


@pytest.fixture(scope="session")
def pathologist_store():
    return build_confusion_fixture(PATHOLOGIST_COUNTS, PATHOLOGIST_CLASSES)
