import io
import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from blindslide import pyramid
from blindslide.annostore import AnnotationStore
from blindslide.service import ConfigError, ServiceConfig, create_app

ADA, GRACE = "ada-token", "grace-token"


def write_db(path, store=None):
    (store or AnnotationStore()).save(path)
    return path


def base_store():
    store = AnnotationStore()
    store.add_person("ada")
    store.add_person("grace")
    store.add_class("mitosis", (220, 30, 30))
    store.add_class("granulocyte", (30, 180, 60))
    return store


@pytest.fixture
def config(tmp_path, demo_slide_dir):
    db = tmp_path / "db.json"
    write_db(db, base_store())
    return ServiceConfig.from_dict(
        {
            "database_path": str(db),
            "slides": [{"id": 1, "container_path": str(demo_slide_dir)}],
            "tokens": {ADA: 1, GRACE: 2},
            "screening": {"cell_size": 128, "occupancy_min": 0.05, "se_radius": 2},
            "discovery": {"viewport_w": 200, "viewport_h": 200, "seed": 42},
        }
    )


@pytest.fixture
def client(config):
    return TestClient(create_app(config))


def ada(client, method, url, **kw):
    kw.setdefault("headers", {})["X-Auth-Token"] = ADA
    return getattr(client, method)(url, **kw)


def grace(client, method, url, **kw):
    kw.setdefault("headers", {})["X-Auth-Token"] = GRACE
    return getattr(client, method)(url, **kw)


class TestStartup:
    def test_health_is_open(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json() == {"status": "ok"}

    def test_bad_container_path_fails_startup(self, tmp_path):
        db = write_db(tmp_path / "db.json")
        config = ServiceConfig.from_dict(
            {
                "database_path": str(db),
                "slides": [{"id": 1, "container_path": str(tmp_path / "nope")}],
                "tokens": {ADA: 1},
            }
        )
        with pytest.raises(ConfigError):
            create_app(config)

    def test_slides_required(self, tmp_path):
        db = write_db(tmp_path / "db.json")
        config = ServiceConfig.from_dict(
            {"database_path": str(db), "slides": [], "tokens": {ADA: 1}}
        )
        with pytest.raises(ConfigError):
            create_app(config)

    def test_token_persons_are_created(self, client):
        response = ada(client, "get", "/me")
        assert response.status_code == 200
        assert response.json()["person_id"] == 1

    def test_unknown_token_is_401(self, client):
        assert client.get("/me").status_code == 401
        assert client.get("/me", headers={"X-Auth-Token": "wrong"}).status_code == 401

    def test_shutdown_flushes_store(self, config):
        with TestClient(create_app(config)) as running:
            response = ada(
                running,
                "post",
                "/slides/1/annotations",
                json={"kind": "center", "x": 10, "y": 20, "class_id": 1},
            )
            assert response.status_code == 201
        saved = AnnotationStore.load(config.database_path)
        assert len(saved.annotations) == 1


class TestRegionEndpoint:
    def test_full_extent_decodes_to_generator_output(self, client, demo_level0):
        response = ada(client, "get", "/slides/1/region?level=0&x=0&y=0&w=512&h=512")
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        decoded = np.asarray(Image.open(io.BytesIO(response.content)).convert("RGBA"))
        assert np.array_equal(decoded, demo_level0)

    def test_repeated_request_is_byte_identical_and_cacheable(self, client):
        first = ada(client, "get", "/slides/1/region?level=1&x=64&y=64&w=32&h=32")
        second = ada(client, "get", "/slides/1/region?level=1&x=64&y=64&w=32&h=32")
        assert first.content == second.content
        assert "immutable" in first.headers["cache-control"]
        etag = first.headers["etag"]
        revalidated = ada(
            client,
            "get",
            "/slides/1/region?level=1&x=64&y=64&w=32&h=32",
            headers={"If-None-Match": etag},
        )
        assert revalidated.status_code == 304

    def test_invalid_level_is_400(self, client):
        assert ada(client, "get", "/slides/1/region?level=7&x=0&y=0&w=8&h=8").status_code == 400

    def test_unknown_slide_is_404(self, client):
        assert ada(client, "get", "/slides/9/region?level=0&x=0&y=0&w=8&h=8").status_code == 404

    def test_bad_params_are_400(self, client):
        assert ada(client, "get", "/slides/1/region?level=0&x=0&y=0&w=0&h=8").status_code == 400
        assert ada(client, "get", "/slides/1/region?level=0&x=a&y=0&w=8&h=8").status_code == 400

    def test_concurrent_fetches_match_direct_read(self, client, demo_slide_dir):
        slide = pyramid.open_slide(demo_slide_dir)
        results: dict[int, bytes] = {}

        def fetch(i):
            x = (i * 37) % 400
            response = ada(client, "get", f"/slides/1/region?level=0&x={x}&y=96&w=64&h=64")
            results[i] = (x, response.content)

        threads = [threading.Thread(target=fetch, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for x, body in results.values():
            direct = slide.read_region(0, (x, 96), (64, 64))
            decoded = np.asarray(Image.open(io.BytesIO(body)).convert("RGBA"))
            assert np.array_equal(decoded, direct)


class TestAnnotationEndpoints:
    def test_post_center_creates_annotation(self, client):
        response = ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "center", "x": 100, "y": 120, "class_id": 1},
        )
        assert response.status_code == 201
        ann_id = response.json()["id"]
        listing = ada(client, "get", "/slides/1/annotations?x=0&y=0&w=512&h=512").json()
        assert [a["id"] for a in listing["annotations"]] == [ann_id]

    def test_post_polygon_too_few_points_is_400(self, client):
        response = ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "polygon", "points": [{"x": 0, "y": 0}, {"x": 5, "y": 5}], "class_id": 1},
        )
        assert response.status_code == 400

    def test_out_of_bounds_point_is_400(self, client):
        response = ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "center", "x": 512, "y": 0, "class_id": 1},
        )
        assert response.status_code == 400

    def test_unknown_class_is_404(self, client):
        response = ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "center", "x": 1, "y": 1, "class_id": 99},
        )
        assert response.status_code == 404

    def test_foreign_person_id_is_403(self, client):
        response = ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "center", "x": 1, "y": 1, "class_id": 1, "person_id": 2},
        )
        assert response.status_code == 403
        created = ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "center", "x": 1, "y": 1, "class_id": 1},
        ).json()["id"]
        response = grace(
            client, "put", f"/annotations/{created}/label", json={"class_id": 1, "person_id": 1}
        )
        assert response.status_code == 403

    def test_put_label_upserts_for_session_person(self, client):
        ann_id = ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "center", "x": 50, "y": 50, "class_id": 1},
        ).json()["id"]
        assert (
            grace(client, "put", f"/annotations/{ann_id}/label", json={"class_id": 2}).status_code
            == 200
        )
        listing = grace(client, "get", "/slides/1/annotations?x=0&y=0&w=512&h=512").json()
        assert listing["annotations"][0]["class_id"] == 2
        assert not listing["annotations"][0]["blinded"]

    def test_unknown_annotation_404(self, client):
        assert (
            ada(client, "put", "/annotations/31337/label", json={"class_id": 1}).status_code == 404
        )


class TestBlindedWire:
    def test_foreign_labels_are_black_and_classless(self, client):
        ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "center", "x": 10, "y": 10, "class_id": 1},
        )
        listing = grace(client, "get", "/slides/1/annotations?x=0&y=0&w=512&h=512").json()
        item = listing["annotations"][0]
        assert item["blinded"] is True
        assert item["color"] == "#000000"
        assert item["labeled_by_others"] is True
        assert "class_id" not in item
        assert "person" not in json.dumps(listing)

    def test_own_labels_show_class_color(self, client):
        ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "center", "x": 10, "y": 10, "class_id": 1},
        )
        listing = ada(client, "get", "/slides/1/annotations?x=0&y=0&w=512&h=512").json()
        item = listing["annotations"][0]
        assert item["blinded"] is False
        assert item["color"] == "#dc1e1e"
        assert item["class_id"] == 1

    def test_annotation_responses_not_cacheable(self, client):
        response = ada(client, "get", "/slides/1/annotations?x=0&y=0&w=16&h=16")
        assert response.headers["cache-control"] == "no-store"


class TestGuidedEndpoints:
    def seed_annotations(self, client, n=5):
        ids = []
        for i in range(n):
            ids.append(
                ada(
                    client,
                    "post",
                    "/slides/1/annotations",
                    json={"kind": "center", "x": 40 + 90 * i, "y": 300, "class_id": 1},
                ).json()["id"]
            )
        return ids

    def test_discovery_walks_to_done(self, client):
        self.seed_annotations(client, 4)
        fetched = 0
        while True:
            step = grace(client, "get", "/slides/1/discovery/next").json()
            if step.get("done"):
                assert step["remaining"] == 0
                break
            fetched += 1
            assert fetched <= 4
            x, y, w, h = (step["viewport"][k] for k in ("x", "y", "w", "h"))
            listing = grace(
                client, "get", f"/slides/1/annotations?x={x}&y={y}&w={w}&h={h}"
            ).json()
            blinded = [a for a in listing["annotations"] if a["blinded"]]
            assert blinded
            for item in blinded:
                grace(client, "put", f"/annotations/{item['id']}/label", json={"class_id": 2})

    def test_discovery_done_when_all_labeled_by_self(self, client):
        self.seed_annotations(client, 3)
        step = ada(client, "get", "/slides/1/discovery/next").json()
        assert step == {"done": True, "remaining": 0}

    def test_screening_walks_plan_then_done(self, client):
        moves = 0
        while True:
            step = ada(client, "get", "/slides/1/screening/next").json()
            if step.get("done"):
                assert step["progress"] == 1.0
                break
            moves += 1
            assert moves <= 16  # 512/128 grid upper bound
        assert moves >= 1

    def test_screening_prev_restores_cell(self, client):
        first = ada(client, "get", "/slides/1/screening/next").json()["viewport"]
        ada(client, "get", "/slides/1/screening/next")
        back = ada(client, "get", "/slides/1/screening/prev").json()["viewport"]
        assert back == first

    def test_sessions_have_independent_cursors(self, client):
        a1 = ada(client, "get", "/slides/1/screening/next").json()
        a2 = ada(client, "get", "/slides/1/screening/next").json()
        g1 = grace(client, "get", "/slides/1/screening/next").json()
        assert g1["viewport"] == a1["viewport"]
        assert a2["viewport"] != a1["viewport"]

    def test_progress_reports_both_modes(self, client):
        self.seed_annotations(client, 2)
        report = grace(client, "get", "/slides/1/progress").json()
        assert report["discovery_remaining"] == 2
        assert report["screening_progress"] == 0.0


class TestStatsEndpoints:
    def test_kappa_roundtrip(self, client):
        for i, class_id in enumerate((1, 1, 2)):
            ann_id = ada(
                client,
                "post",
                "/slides/1/annotations",
                json={"kind": "center", "x": 10 + i, "y": 10, "class_id": class_id},
            ).json()["id"]
            grace(client, "put", f"/annotations/{ann_id}/label", json={"class_id": class_id})
        result = ada(client, "get", "/stats/kappa?person_a=1&person_b=2").json()
        assert result["n"] == 3
        assert result["kappa"] == 1.0

    def test_kappa_null_when_chance_agreement_is_total(self, client):
        # both raters always pick the same single class: p_e = 1, kappa undefined
        for i in range(2):
            ann_id = ada(
                client,
                "post",
                "/slides/1/annotations",
                json={"kind": "center", "x": 20 + i, "y": 10, "class_id": 1},
            ).json()["id"]
            grace(client, "put", f"/annotations/{ann_id}/label", json={"class_id": 1})
        result = ada(client, "get", "/stats/kappa?person_a=1&person_b=2").json()
        assert result["n"] == 2
        assert result["kappa"] is None

    def test_same_person_twice_is_400(self, client):
        assert ada(client, "get", "/stats/kappa?person_a=1&person_b=1").status_code == 400

    def test_no_overlap_yields_null_kappa(self, client):
        ada(
            client,
            "post",
            "/slides/1/annotations",
            json={"kind": "center", "x": 1, "y": 1, "class_id": 1},
        )
        result = ada(client, "get", "/stats/kappa?person_a=1&person_b=2").json()
        assert result["n"] == 0
        assert result["kappa"] is None

    def test_timing_endpoint(self, client):
        for _ in range(3):
            ada(
                client,
                "post",
                "/slides/1/annotations",
                json={"kind": "center", "x": 5, "y": 5, "class_id": 1},
            )
        result = ada(client, "get", "/stats/timing?person=1").json()
        assert result["person_id"] == 1
        assert result["n_events"] >= 0

    def test_unknown_person_404(self, client):
        assert ada(client, "get", "/stats/kappa?person_a=1&person_b=9").status_code == 404
        assert ada(client, "get", "/stats/timing?person=9").status_code == 404
