"""
Blinded multi-rater annotation
==============================

Two raters label the same objects. Each sees their own classes in
color; everything else is an unknown black marker.
"""

from blindslide.annostore import AnnotationStore, blinded_render

store = AnnotationStore()
ada = store.add_person("ada")
grace = store.add_person("grace")
mitosis = store.add_class("mitotic figure", (220, 40, 40))
granulocyte = store.add_class("granulocyte", (40, 180, 80))
slide = store.add_slide("tumor-03", "demo_output/slide", 2048, 1536)

# One click = one annotation + the creator's label, atomically.
first = store.add_center_annotation(slide.id, 400, 300, ada.id, mitosis.id, ts_ms=1_000)
second = store.add_center_annotation(slide.id, 900, 700, ada.id, granulocyte.id, ts_ms=7_000)

# An outline annotation: ordered vertices, implicitly closed.
outline = store.add_polygon_annotation(
    slide.id,
    [(1200, 400), (1400, 420), (1380, 600), (1180, 560)],
    grace.id,
    mitosis.id,
    ts_ms=9_000,
)

# Grace classifies ada's first object too; labels are per-person upserts.
store.set_label(first, grace.id, granulocyte.id, ts_ms=12_000)

for viewer in (ada, grace):
    print(f"\nviewport as seen by {viewer.name}:")
    annotations = store.query_viewport(slide.id, (0, 0, 2048, 1536))
    for desc in blinded_render(annotations, viewer.id, store.classes):
        status = "BLINDED" if desc.blinded else store.classes[desc.class_id].name
        extra = " (labeled by others)" if desc.labeled_by_others else ""
        print(f"  #{desc.annotation_id} {desc.kind:>7} color={desc.display_color} {status}{extra}")

# Selection: nearest center within a radius, or a containing polygon.
print("\nhit at (1300, 500):", store.hit_test(slide.id, 1300, 500))
print("hit at (402, 302): ", store.hit_test(slide.id, 402, 302))
print("hit in empty space:", store.hit_test(slide.id, 30, 30))

store.save("demo_output/annotations.json")
print("\nstore saved to demo_output/annotations.json")
