"""
Discovery mode
==============

A second rater is jumped from one random unlabeled object to the next
until nothing on the slide is missing their label.
"""

import random

from blindslide.annostore import AnnotationStore
from blindslide.discovery import (
    DiscoveryState,
    next_discovery_view,
    remaining,
    view_complete,
)

store = AnnotationStore()
creator = store.add_person("ada")
rater = store.add_person("grace")
cell = store.add_class("cell", (200, 60, 60))
slide = store.add_slide("tumor-03", "unused", 20000, 20000)

rng = random.Random(4)
for i in range(40):
    store.add_center_annotation(
        slide.id, rng.randrange(20000), rng.randrange(20000), creator.id, cell.id, i
    )

state = DiscoveryState(
    person_id=rater.id, slide_id=slide.id, seed=99, viewport_size=(1024, 1024)
)
print(f"{remaining(state, store)} objects await {store.persons[rater.id].name}")

fetches = 0
while True:
    view = next_discovery_view(state, store)
    if view is None:
        break
    fetches += 1
    todo = [a for a in store.query_viewport(slide.id, view) if a.label_by(rater.id) is None]
    for ann in todo:
        store.set_label(ann.id, rater.id, cell.id, ts_ms=fetches)
    print(f"view {fetches:>2} at ({view[0]:>5},{view[1]:>5}): labeled {len(todo)}, "
          f"{remaining(state, store):>2} to go, complete={view_complete(state, store)}")

print(f"\ndone after {fetches} views for 40 objects (views holding several objects save jumps)")
