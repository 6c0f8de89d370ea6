"""Multi-user HTTP API with blinding enforced at the wire boundary.

Every request carries a static token (``X-Auth-Token``) mapping to one
person; all mutations are attributed to that person and annotation
listings are blinded server-side, so a client can never receive another
rater's class assignments, let alone display them. Region responses are
immutable and cache-friendly; annotation responses are not cacheable.
"""

from __future__ import annotations

import hashlib
import io
import json
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

from fastapi import Body, Depends, FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from . import discovery, screening, stats
from .annostore import DEFAULT_HIT_RADIUS, AnnotationStore, StoreError, UnknownIdError
from .pyramid import FormatError, LevelError, PyramidError, PyramidSlide, open_slide

MAX_REGION_PIXELS = 4096 * 4096


class ConfigError(Exception):
    """Service configuration is unusable."""


@dataclass
class ScreeningParams:
    cell_size: int = screening.DEFAULT_CELL_SIZE
    occupancy_min: float = screening.DEFAULT_OCCUPANCY_MIN
    se_radius: int = screening.DEFAULT_SE_RADIUS
    overview_downsample: int = screening.DEFAULT_OVERVIEW_DOWNSAMPLE


@dataclass
class DiscoveryParams:
    viewport_w: int = 1024
    viewport_h: int = 1024
    seed: int = 0
    jitter_frac: float = discovery.DEFAULT_JITTER_FRAC


@dataclass
class ServiceConfig:
    database_path: str
    slides: list[dict]  # [{"id": int, "container_path": str}]
    tokens: dict[str, int]  # token -> person id
    listen_addr: str = "127.0.0.1:8077"
    screening: ScreeningParams = dataclass_field(default_factory=ScreeningParams)
    discovery: DiscoveryParams = dataclass_field(default_factory=DiscoveryParams)
    hit_radius: int = DEFAULT_HIT_RADIUS

    @classmethod
    def from_dict(cls, data: dict) -> "ServiceConfig":
        try:
            return cls(
                database_path=data["database_path"],
                slides=[
                    {"id": int(s["id"]), "container_path": s["container_path"]}
                    for s in data["slides"]
                ],
                tokens={str(t): int(p) for t, p in data.get("tokens", {}).items()},
                listen_addr=data.get("listen_addr", "127.0.0.1:8077"),
                screening=ScreeningParams(**data.get("screening", {})),
                discovery=DiscoveryParams(**data.get("discovery", {})),
                hit_radius=int(data.get("hit_radius", DEFAULT_HIT_RADIUS)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad service config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ServiceConfig":
        try:
            data = json.loads(Path(path).read_text("utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class Session:
    """One authenticated client: a person plus their private iterator state."""

    token: str
    person_id: int
    discovery_states: dict[int, discovery.DiscoveryState] = dataclass_field(default_factory=dict)
    screening_plans: dict[int, screening.ScreeningPlan] = dataclass_field(default_factory=dict)


def _load_store(config: ServiceConfig) -> AnnotationStore:
    db_path = Path(config.database_path)
    store = AnnotationStore.load(db_path) if db_path.is_file() else AnnotationStore()
    for person_id in set(config.tokens.values()):
        if person_id not in store.persons:
            store.add_person(f"person-{person_id}", person_id=person_id)
    return store


def _open_slides(config: ServiceConfig, store: AnnotationStore) -> dict[int, PyramidSlide]:
    if not config.slides:
        raise ConfigError("config must name at least one slide container")
    slides: dict[int, PyramidSlide] = {}
    for entry in config.slides:
        slide_id, path = entry["id"], entry["container_path"]
        try:
            slide = open_slide(path)
        except PyramidError as exc:
            raise ConfigError(f"slide {slide_id}: cannot open container {path}: {exc}") from exc
        record = store.slides.get(slide_id)
        if record is None:
            store.add_slide(
                Path(path).name or str(slide_id), str(path), slide.width, slide.height,
                slide_id=slide_id,
            )
        elif (record.width, record.height) != (slide.width, slide.height):
            raise ConfigError(
                f"slide {slide_id}: container extent {slide.dimensions} does not match "
                f"database record {(record.width, record.height)}"
            )
        slides[slide_id] = slide
    return slides


def create_app(config: ServiceConfig) -> FastAPI:
    store = _load_store(config)
    slides = _open_slides(config, store)
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()
    plan_templates: dict[int, list] = {}
    plans_lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        store.save(config.database_path)

    app = FastAPI(title="blindslide", lifespan=lifespan)
    # the browser client is served from another origin; auth is the token
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["X-Auth-Token", "Content-Type", "If-None-Match"],
    )
    app.state.store = store
    app.state.slides = slides
    app.state.config = config

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"detail": message})

    class ApiError(Exception):
        def __init__(self, status: int, message: str):
            self.status, self.message = status, message

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return error(exc.status, exc.message)

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return error(400, "invalid request parameters")

    @app.exception_handler(StoreError)
    async def handle_store_error(request: Request, exc: StoreError):
        status = 404 if isinstance(exc, UnknownIdError) else 400
        return error(status, str(exc))

    def session_for(request: Request) -> Session:
        token = request.headers.get("x-auth-token")
        if not token or token not in config.tokens:
            raise ApiError(401, "missing or unknown token")
        with sessions_lock:
            session = sessions.get(token)
            if session is None:
                session = Session(token=token, person_id=config.tokens[token])
                sessions[token] = session
            return session

    def slide_or_404(slide_id: int) -> PyramidSlide:
        slide = slides.get(slide_id)
        if slide is None:
            raise ApiError(404, f"unknown slide {slide_id}")
        return slide

    def now_ms() -> int:
        return int(time.time() * 1000)

    # -- meta ----------------------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/me")
    def me(session: Session = Depends(session_for)):
        person = store.persons[session.person_id]
        return {"person_id": person.id, "name": person.name, "hit_radius": config.hit_radius}

    @app.get("/classes")
    def classes(session: Session = Depends(session_for)):
        return [
            {"id": c.id, "name": c.name, "color": "#%02x%02x%02x" % c.color}
            for c in sorted(store.classes.values(), key=lambda c: c.id)
        ]

    @app.get("/slides")
    def list_slides(session: Session = Depends(session_for)):
        out = []
        for slide_id in sorted(slides):
            slide = slides[slide_id]
            record = store.slides[slide_id]
            out.append(
                {
                    "id": slide_id,
                    "name": record.name,
                    "width": slide.width,
                    "height": slide.height,
                    "tile_size": slide.tile_size,
                    "levels": [
                        {"downsample": l.downsample, "width": l.width, "height": l.height}
                        for l in slide.levels
                    ],
                }
            )
        return out

    # -- pixels ----------------------------------------------------------------

    @app.get("/slides/{slide_id}/region")
    def region(
        slide_id: int,
        request: Request,
        level: int,
        x: int,
        y: int,
        w: int,
        h: int,
        session: Session = Depends(session_for),
    ):
        slide = slide_or_404(slide_id)
        if w <= 0 or h <= 0 or w * h > MAX_REGION_PIXELS:
            raise ApiError(400, "bad region size")
        try:
            buf = slide.read_region(level, (x, y), (w, h))
        except LevelError as exc:
            raise ApiError(400, str(exc))
        except FormatError as exc:
            raise ApiError(500, str(exc))
        png = io.BytesIO()
        Image.fromarray(buf, "RGBA").save(png, "PNG")
        body = png.getvalue()
        etag = '"' + hashlib.sha256(body).hexdigest()[:32] + '"'
        headers = {
            "ETag": etag,
            "Cache-Control": "public, max-age=31536000, immutable",
        }
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304, headers=headers)
        return Response(content=body, media_type="image/png", headers=headers)

    # -- annotations -------------------------------------------------------------

    @app.get("/slides/{slide_id}/annotations")
    def annotations(
        slide_id: int,
        x: int,
        y: int,
        w: int,
        h: int,
        session: Session = Depends(session_for),
    ):
        slide_or_404(slide_id)
        if w <= 0 or h <= 0:
            raise ApiError(400, "bad viewport size")
        descriptors = store.render_viewport(slide_id, (x, y, w, h), session.person_id)
        return JSONResponse(
            content={"annotations": [d.to_wire() for d in descriptors]},
            headers={"Cache-Control": "no-store"},
        )

    @app.post("/slides/{slide_id}/annotations", status_code=201)
    def create_annotation(
        slide_id: int,
        payload: dict = Body(...),
        session: Session = Depends(session_for),
    ):
        slide_or_404(slide_id)
        if payload.get("person_id") not in (None, session.person_id):
            raise ApiError(403, "labels are attributed to the session person")
        kind = payload.get("kind")
        class_id = payload.get("class_id")
        if not isinstance(class_id, int):
            raise ApiError(400, "class_id required")
        if kind == "center":
            x, y = payload.get("x"), payload.get("y")
            if not isinstance(x, int) or not isinstance(y, int):
                raise ApiError(400, "center annotation needs integer x, y")
            ann_id = store.add_center_annotation(
                slide_id, x, y, session.person_id, class_id, now_ms()
            )
        elif kind == "polygon":
            raw = payload.get("points")
            if not isinstance(raw, list):
                raise ApiError(400, "polygon annotation needs points")
            try:
                points = [(int(p["x"]), int(p["y"])) for p in raw]
            except (KeyError, TypeError, ValueError):
                raise ApiError(400, "points must be {x, y} objects")
            ann_id = store.add_polygon_annotation(
                slide_id, points, session.person_id, class_id, now_ms()
            )
        else:
            raise ApiError(400, "kind must be 'center' or 'polygon'")
        return {"id": ann_id}

    @app.put("/annotations/{annotation_id}/label")
    def put_label(
        annotation_id: int,
        payload: dict = Body(...),
        session: Session = Depends(session_for),
    ):
        if payload.get("person_id") not in (None, session.person_id):
            raise ApiError(403, "labels are attributed to the session person")
        class_id = payload.get("class_id")
        if not isinstance(class_id, int):
            raise ApiError(400, "class_id required")
        store.set_label(annotation_id, session.person_id, class_id, now_ms())
        return {"id": annotation_id, "class_id": class_id}

    # -- guided navigation --------------------------------------------------------

    def discovery_state(session: Session, slide_id: int) -> discovery.DiscoveryState:
        state = session.discovery_states.get(slide_id)
        if state is None:
            params = config.discovery
            seed = params.seed * 1_000_003 + session.person_id * 8191 + slide_id
            state = discovery.DiscoveryState(
                person_id=session.person_id,
                slide_id=slide_id,
                seed=seed,
                viewport_size=(params.viewport_w, params.viewport_h),
                jitter_frac=params.jitter_frac,
            )
            session.discovery_states[slide_id] = state
        return state

    def screening_plan(session: Session, slide_id: int) -> screening.ScreeningPlan:
        plan = session.screening_plans.get(slide_id)
        if plan is None:
            with plans_lock:
                cells = plan_templates.get(slide_id)
                if cells is None:
                    params = config.screening
                    mask = screening.compute_tissue_mask(
                        slides[slide_id],
                        overview_downsample_target=params.overview_downsample,
                        se_radius=params.se_radius,
                    )
                    template = screening.build_screening_plan(
                        mask,
                        cell_size=params.cell_size,
                        occupancy_min=params.occupancy_min,
                        slide_id=slide_id,
                    )
                    cells = template.cells
                    plan_templates[slide_id] = cells
            plan = screening.ScreeningPlan(
                slide_id=slide_id,
                cell_size=config.screening.cell_size,
                occupancy_min=config.screening.occupancy_min,
                cells=list(cells),
            )
            session.screening_plans[slide_id] = plan
        return plan

    def viewport_json(rect) -> dict:
        x, y, w, h = rect
        return {"x": x, "y": y, "w": w, "h": h}

    @app.get("/slides/{slide_id}/discovery/next")
    def discovery_next(slide_id: int, session: Session = Depends(session_for)):
        slide_or_404(slide_id)
        state = discovery_state(session, slide_id)
        view = discovery.next_discovery_view(state, store)
        left = discovery.remaining(state, store)
        if view is None:
            return {"done": True, "remaining": left}
        return {"viewport": viewport_json(view), "remaining": left}

    @app.get("/slides/{slide_id}/screening/{direction}")
    def screening_step(slide_id: int, direction: str, session: Session = Depends(session_for)):
        slide_or_404(slide_id)
        if direction not in ("next", "prev", "current"):
            raise ApiError(400, "direction must be next, prev or current")
        plan = screening_plan(session, slide_id)
        cell = screening.navigate(plan, direction)
        fraction = screening.progress(plan)
        if cell is None:
            return {"done": True, "progress": fraction}
        return {"viewport": viewport_json(cell), "progress": fraction}

    @app.get("/slides/{slide_id}/progress")
    def progress_endpoint(slide_id: int, session: Session = Depends(session_for)):
        slide_or_404(slide_id)
        left = len(discovery.unlabeled_for(store, session.person_id, slide_id))
        plan = screening_plan(session, slide_id)
        return {
            "discovery_remaining": left,
            "screening_progress": screening.progress(plan),
        }

    # -- statistics ---------------------------------------------------------------

    @app.get("/stats/kappa")
    def stats_kappa(
        person_a: int,
        person_b: int,
        slide: int | None = Query(default=None),
        session: Session = Depends(session_for),
    ):
        if person_a == person_b:
            raise ApiError(400, "raters must be distinct")
        for pid in (person_a, person_b):
            if pid not in store.persons:
                raise ApiError(404, f"unknown person {pid}")
        if slide is not None and slide not in store.slides:
            raise ApiError(404, f"unknown slide {slide}")
        matrix = stats.confusion_matrix(store, person_a, person_b, slide_id=slide)
        out = matrix.to_json_dict()
        if matrix.n == 0:
            out.update({"p_o": None, "p_e": None, "kappa": None})
        else:
            try:
                result = stats.cohens_kappa(matrix)
                out.update({"p_o": result.p_o, "p_e": result.p_e, "kappa": result.kappa})
            except stats.KappaUndefinedError:
                out.update({"p_o": 1.0, "p_e": 1.0, "kappa": None})
        return out

    @app.get("/stats/timing")
    def stats_timing(
        person: int,
        gap_cutoff_s: float = stats.DEFAULT_GAP_CUTOFF_S,
        which: str = stats.FIRST_PASS,
        session: Session = Depends(session_for),
    ):
        if person not in store.persons:
            raise ApiError(404, f"unknown person {person}")
        if which not in (stats.FIRST_PASS, stats.SECOND_PASS):
            raise ApiError(400, "which must be 'first' or 'second'")
        if gap_cutoff_s <= 0:
            raise ApiError(400, "gap_cutoff_s must be positive")
        timing = stats.annotation_timing(store, person, gap_cutoff_s=gap_cutoff_s, which=which)
        return {
            "person_id": timing.person_id,
            "which": timing.which,
            "n_events": timing.n_events,
            "mean_s": timing.mean_s,
            "median_s": timing.median_s,
            "gap_cutoff_s": timing.gap_cutoff_s,
        }

    return app


def serve(config: ServiceConfig) -> None:
    """Run the API until interrupted; flushes the store on shutdown."""
    import uvicorn

    app = create_app(config)
    host, _, port = config.listen_addr.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
