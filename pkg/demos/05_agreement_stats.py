"""
Inter-rater agreement and annotation pace
=========================================

Because both raters label the same annotation entities, the pairwise
confusion matrix is a join on annotation id, and Cohen's kappa follows
directly.
"""

import random

from blindslide.annostore import AnnotationStore
from blindslide.stats import annotation_timing, cohens_kappa, confusion_matrix

store = AnnotationStore()
ada = store.add_person("ada")
grace = store.add_person("grace")
classes = [
    store.add_class("granulocyte", (40, 180, 80)),
    store.add_class("mitotic figure", (220, 40, 40)),
    store.add_class("tumor cell", (90, 90, 220)),
    store.add_class("ambiguous", (180, 180, 40)),
]
slide = store.add_slide("tumor-03", "unused", 4096, 4096)

# Simulate two raters who mostly agree; disagreements drift toward the
# "ambiguous" class, the usual pattern on hard cells.
rng = random.Random(7)
ts = 0
for i in range(2000):
    true_class = rng.choice(classes)
    ts += rng.randint(1200, 9000)
    ann_id = store.add_center_annotation(
        slide.id, rng.randrange(4096), rng.randrange(4096), ada.id, true_class.id, ts
    )
    if rng.random() < 0.9:
        grace_class = true_class
    else:
        grace_class = classes[-1] if rng.random() < 0.7 else rng.choice(classes)
    store.set_label(ann_id, grace.id, grace_class.id, ts + rng.randint(600, 2500))

matrix = confusion_matrix(store, ada.id, grace.id)
names = [store.classes[cid].name for cid in matrix.class_ids]
width = max(len(n) for n in names) + 2
print("confusion matrix (rows: ada, cols: grace)")
print(" " * width + "".join(f"{n:>{width}}" for n in names))
for name, row in zip(names, matrix.counts.tolist()):
    print(f"{name:>{width}}" + "".join(f"{c:>{width}}" for c in row))

result = cohens_kappa(matrix)
print(f"\nn = {matrix.n}")
print(f"observed agreement p_o = {result.p_o:.4f}")
print(f"chance agreement  p_e = {result.p_e:.4f}")
print(f"cohen's kappa         = {result.kappa:.4f}")

# Pace: gaps between consecutive label events, long breaks discarded.
for person, which in ((ada, "first"), (grace, "second")):
    timing = annotation_timing(store, person.id, gap_cutoff_s=60, which=which)
    print(f"\n{person.name} ({which} pass): {timing.n_events} gaps, "
          f"mean {timing.mean_s:.2f} s, median {timing.median_s:.2f} s")
