"""
Serving the annotation API
==========================

Build a ready-to-serve workspace (slide container, database, config)
and exercise the HTTP API in-process: region tiles, blinded annotation
listings, discovery and screening navigation, statistics.

For a real deployment run:  blindslide serve --config demo_output/config.json
and point the web client (frontend/) at it.
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from blindslide import pyramid
from blindslide.annostore import AnnotationStore
from blindslide.service import ServiceConfig, create_app

workspace = Path("demo_output")
workspace.mkdir(exist_ok=True)

slide_dir = workspace / "slide"
if not (slide_dir / "manifest.json").is_file():
    spec = pyramid.random_synthetic_spec(seed=11, width=2048, height=1536, n_blobs=3, n_dots=40)
    pyramid.generate_synthetic_slide(spec, slide_dir)

store = AnnotationStore()
store.add_person("ada", person_id=1)
store.add_person("grace", person_id=2)
store.add_class("mitotic figure", (220, 40, 40))
store.add_class("granulocyte", (40, 180, 80))
store.add_class("tumor cell", (90, 90, 220))
store.add_class("ambiguous", (180, 180, 40))
store.save(workspace / "db.json")

config_data = {
    "listen_addr": "127.0.0.1:8077",
    "database_path": str(workspace / "db.json"),
    "slides": [{"id": 1, "container_path": str(slide_dir)}],
    "tokens": {"ada-token": 1, "grace-token": 2},
    "screening": {"cell_size": 512, "occupancy_min": 0.05, "se_radius": 2},
    "discovery": {"viewport_w": 512, "viewport_h": 512, "seed": 7},
    "hit_radius": 25,
}
(workspace / "config.json").write_text(json.dumps(config_data, indent=2), "utf-8")
print(f"workspace ready under {workspace}/")

client = TestClient(create_app(ServiceConfig.from_dict(config_data)))
ada = {"X-Auth-Token": "ada-token"}
grace = {"X-Auth-Token": "grace-token"}

print("\nhealth:", client.get("/health").json())
print("slides:", client.get("/slides", headers=ada).json()[0]["name"])

# ada clicks two cells; one gesture, one mutation
for x, y, class_id in ((400, 300, 1), (900, 700, 2)):
    created = client.post(
        "/slides/1/annotations",
        json={"kind": "center", "x": x, "y": y, "class_id": class_id},
        headers=ada,
    )
    print("created annotation", created.json())

# tiles come back as lossless PNG with immutable cache headers
region = client.get("/slides/1/region?level=0&x=352&y=252&w=96&h=96", headers=ada)
print(f"region: {len(region.content)} bytes, cache-control: {region.headers['cache-control']}")

# grace sees ada's objects only as unknown black markers
listing = client.get("/slides/1/annotations?x=0&y=0&w=2048&h=1536", headers=grace)
for item in listing.json()["annotations"]:
    print("grace sees:", item)

# discovery drives grace to the unlabeled objects
step = client.get("/slides/1/discovery/next", headers=grace).json()
print("discovery:", step)

# guided screening walks tissue-bearing fields in reading order
for _ in range(3):
    print("screening:", client.get("/slides/1/screening/next", headers=ada).json())

print("progress:", client.get("/slides/1/progress", headers=ada).json())
