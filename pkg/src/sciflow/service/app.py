"""The gateway's front door: HTTP JSON API under /api/v1.

Handler discipline: authenticate first, then the permission-matrix check,
then resource lookup, then the ownership check. Unauthenticated or
matrix-denied callers therefore see 401/403 before any 404/409. Every
non-2xx response carries the machine-readable envelope
``{"error": {"code", "message", "details"}}``.
"""

from __future__ import annotations

import base64
import binascii
import time
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from .. import archive as ar
from ..bridge import BackendDescriptor, BridgeRegistry
from ..engine import Engine
from ..errors import (
    AccountDisabled,
    AlreadyTerminal,
    AttemptCapExceeded,
    CorruptArchive,
    DuplicateId,
    Forbidden,
    GraphInvalid,
    IncompleteDefinition,
    IntegrityError,
    InvalidCapacity,
    InvalidCredentials,
    ManifestMissing,
    NotFound,
    NotInErrorState,
    PublishedImmutable,
    SciflowError,
    SequenceGap,
    SweepDepthExceeded,
    SweepModeConflict,
    TokenExpired,
    UnconfiguredNode,
    UnknownField,
    UnknownHandle,
    UnknownInstance,
    UnknownJob,
    UnknownNode,
    UnresolvableBackendSelector,
    UnsupportedVersion,
    FrozenFieldWrite,
    MissingRequiredFill,
    NoMatchingBackend,
    ZeroCount,
)
from ..model import Template, WorkflowDefinition, validate_graph
from ..repository import Repository
from .auth import PERMISSIONS, AuthService, SessionToken, TokenStore, UserStore
from .config import ServiceConfig

API = "/api/v1"

_STATUS_BY_ERROR: list[tuple[type, int]] = [
    (InvalidCredentials, 401), (AccountDisabled, 401), (TokenExpired, 401),
    (Forbidden, 403),
    (NotFound, 404), (UnknownInstance, 404), (UnknownJob, 404), (UnknownHandle, 404),
    (AlreadyTerminal, 409), (NotInErrorState, 409), (PublishedImmutable, 409),
    (SequenceGap, 409), (AttemptCapExceeded, 409), (DuplicateId, 409),
    (IntegrityError, 500),
    (GraphInvalid, 400), (UnconfiguredNode, 400), (UnknownNode, 400),
    (SweepModeConflict, 400), (IncompleteDefinition, 400), (CorruptArchive, 400),
    (UnsupportedVersion, 400), (ManifestMissing, 400), (SweepDepthExceeded, 400),
    (UnresolvableBackendSelector, 400), (InvalidCapacity, 400), (UnknownField, 400),
    (FrozenFieldWrite, 400), (MissingRequiredFill, 400), (NoMatchingBackend, 400),
    (ZeroCount, 400),
]


def _http_status(exc: SciflowError) -> int:
    for typ, status in _STATUS_BY_ERROR:
        if isinstance(exc, typ):
            return status
    return 500


def _envelope(code: str, message: str, details: Optional[dict] = None) -> dict:
    return {"error": {"code": code, "message": message, "details": details or {}}}


class Gateway:
    """Everything a request handler needs, wired once per process."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        store = Path(config.store_dir)
        store.mkdir(parents=True, exist_ok=True)
        self.repo = Repository(store)
        self.bridge = BridgeRegistry()
        for doc in config.backends:
            self.bridge.register_backend(BackendDescriptor.from_json(doc))
        self.engine = Engine(self.repo, self.bridge, sim_step=config.sim_step_s)
        self.users = UserStore(store / "users.json")
        self.users.bootstrap_admin(config.initial_admin_password)
        self.tokens = TokenStore(ttl_s=config.token_ttl_s)
        self.auth = AuthService(self.users, self.tokens)

    # -- auth helpers -----------------------------------------------------------

    def session(self, request: Request) -> SessionToken:
        header = request.headers.get("authorization", "")
        token = header.removeprefix("Bearer ").strip() if header.startswith("Bearer ") else None
        return self.tokens.validate(token)

    def require(self, request: Request, action: str, resource_owner: Optional[str] = None) -> SessionToken:
        session = self.session(request)
        self.auth.authorize(session, action, resource_owner)
        return session

    # -- item helpers ------------------------------------------------------------

    def item_owner(self, item_id: str) -> str:
        item, _ = self.repo.get_item(item_id)
        return item.owner

    def load_definition(self, item_id: str, caller) -> tuple[str, WorkflowDefinition]:
        item, data = self.repo.get_item(item_id, caller=caller)
        obj = ar.import_archive(data)
        if isinstance(obj, WorkflowDefinition):
            return item.kind, obj
        if hasattr(obj, "definition"):
            return item.kind, obj.definition
        raise IncompleteDefinition(f"item {item_id!r} of kind {item.kind!r} is not submittable", kind=item.kind)


def create_app(config: Optional[ServiceConfig] = None, gateway: Optional[Gateway] = None) -> FastAPI:
    config = config or ServiceConfig()
    gw = gateway or Gateway(config)
    app = FastAPI(title="sciflow portal", version="0.1.0", docs_url=None, redoc_url=None)
    app.state.gateway = gw

    @app.exception_handler(SciflowError)
    async def sciflow_error_handler(request: Request, exc: SciflowError):
        details = {k: v for k, v in exc.details.items() if isinstance(v, (str, int, float, bool, list, dict))}
        return JSONResponse(status_code=_http_status(exc), content=_envelope(exc.code, exc.message, details))

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content=_envelope("validation", "invalid request body",
                                                               {"errors": str(exc.errors())}))

    @app.exception_handler(StarletteHTTPException)
    async def http_error_handler(request: Request, exc: StarletteHTTPException):
        return JSONResponse(status_code=exc.status_code, content=_envelope("http_error", str(exc.detail)))

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content=_envelope("validation", str(exc)))

    # -- auth ------------------------------------------------------------------------

    @app.post(API + "/auth/login")
    def login(payload: dict = Body(...)):
        token = gw.auth.authenticate(str(payload.get("username", "")), str(payload.get("password", "")))
        return {"token": token.token, "expires_at": token.expires_at,
                "username": token.username, "role": token.role}

    @app.get(API + "/auth/me")
    def me(request: Request):
        session = gw.session(request)
        return {"username": session.username, "role": session.role,
                "permissions": sorted(PERMISSIONS[session.role])}

    # -- workflows (repository items) ---------------------------------------------------

    @app.get(API + "/workflows")
    def list_workflows(request: Request, kind: Optional[str] = None, visibility: Optional[str] = None):
        session = gw.session(request)
        items = gw.repo.list_items(kind=kind, visibility=visibility, caller=session.caller)
        return {"items": [i.to_json() for i in items]}

    @app.post(API + "/workflows", status_code=201)
    def create_workflow(request: Request, payload: dict = Body(...)):
        kind = payload.get("kind", "workflow")
        action = "create_graph" if kind == "graph" else "edit_workflow"
        session = gw.require(request, action)
        if kind == "graph":
            graph = ar.graph_from_json(payload["graph"])
            report = validate_graph(graph)
            if not report.ok:
                raise GraphInvalid("graph does not validate",
                                   issues=[f"{i.code}: {i.message}" for i in report.issues])
            item_obj = graph
            name = graph.name
        elif kind in ("workflow", "application"):
            defn = ar.definition_from_json(payload["definition"])
            report = validate_graph(defn.graph)
            if not report.ok:
                raise GraphInvalid("graph does not validate",
                                   issues=[f"{i.code}: {i.message}" for i in report.issues])
            name = payload.get("name", defn.graph.name)
            item_obj = ar.Application(name=name, definition=defn) if kind == "application" else defn
        elif kind == "template":
            defn = ar.definition_from_json(payload["definition"])
            item_obj = Template(
                base=defn,
                frozen_fields=frozenset(payload.get("frozen_fields", ())),
                free_fields=frozenset(payload.get("free_fields", ())),
            )
            name = payload.get("name", defn.graph.name)
        else:
            raise ValueError(f"unknown item kind {kind!r}")
        data = ar.export_archive(item_obj)
        item = gw.repo.put_item(kind, name, data, owner=session.username,
                                item_id=payload.get("id"), caller=session.caller,
                                new_version=bool(payload.get("new_version")))
        return item.to_json()

    @app.post(API + "/workflows/import", status_code=201)
    def import_workflow(request: Request, payload: dict = Body(...)):
        session = gw.require(request, "edit_workflow")
        try:
            data = base64.b64decode(payload["archive_b64"], validate=True)
        except (KeyError, binascii.Error) as exc:
            raise CorruptArchive(f"archive_b64 unreadable: {exc}")
        obj = ar.import_archive(data)  # validates before storing
        item = gw.repo.put_item(ar.kind_of(obj), ar.item_name(obj), data, owner=session.username)
        return item.to_json()

    @app.get(API + "/workflows/{item_id}")
    def workflow_detail(request: Request, item_id: str):
        session = gw.session(request)
        item, data = gw.repo.get_item(item_id, caller=session.caller)
        doc = item.to_json()
        obj = ar.import_archive(data)
        if isinstance(obj, Template):
            doc["free_fields"] = sorted(obj.free_fields)
            doc["frozen_fields"] = sorted(obj.frozen_fields)
            doc["required_fields"] = sorted(obj.required_fields())
        defn = obj.base if isinstance(obj, Template) else (
            obj.definition if hasattr(obj, "definition") else
            (obj if isinstance(obj, WorkflowDefinition) else None))
        graph = defn.graph if defn is not None else (obj if hasattr(obj, "nodes") else None)
        if graph is not None:
            doc["graph"] = ar.graph_to_json(graph)
        return doc

    @app.post(API + "/workflows/{item_id}/export")
    def export_workflow(request: Request, item_id: str):
        session = gw.session(request)
        item, data = gw.repo.get_item(item_id, caller=session.caller)
        return Response(content=data, media_type="application/zip",
                        headers={"content-disposition": f'attachment; filename="{item.name}.zip"'})

    @app.post(API + "/workflows/{item_id}/publish")
    def publish_workflow(request: Request, item_id: str):
        session = gw.require(request, "publish")
        return {"visibility": gw.repo.publish(item_id, caller=session.caller)}

    @app.delete(API + "/workflows/{item_id}")
    def delete_workflow(request: Request, item_id: str):
        session = gw.require(request, "edit_workflow", resource_owner=gw.item_owner(item_id))
        gw.repo.delete_item(item_id, caller=session.caller)
        return {"deleted": item_id}

    # -- templates ------------------------------------------------------------------------

    @app.post(API + "/templates/{item_id}/instantiate", status_code=201)
    def instantiate(request: Request, item_id: str, payload: dict = Body(...)):
        from ..model import instantiate_template

        session = gw.require(request, "submit")
        item, data = gw.repo.get_item(item_id, caller=session.caller)
        obj = ar.import_archive(data)
        if not isinstance(obj, Template):
            raise UnknownField(f"item {item_id!r} is {item.kind}, not a template", kind=item.kind)
        defn = instantiate_template(obj, payload.get("fills", {}))
        name = payload.get("name", f"{item.name}_run")
        new_item = gw.repo.put_item("workflow", name, ar.export_archive(defn), owner=session.username)
        return new_item.to_json()

    # -- instances ---------------------------------------------------------------------------

    @app.get(API + "/instances")
    def list_instances(request: Request):
        session = gw.session(request)
        out = []
        for iid in gw.engine.list_instances():
            snap = gw.engine.instance_snapshot(iid)
            if snap["owner"] == session.username or session.role == "admin":
                out.append({k: snap[k] for k in ("id", "owner", "status", "workflow", "created_at")})
        return {"items": out}

    @app.post(API + "/instances", status_code=201)
    def submit_instance(request: Request, payload: dict = Body(...)):
        session = gw.require(request, "submit")
        workflow_id = payload.get("workflow_id")
        if not workflow_id:
            raise ValueError("workflow_id required")
        kind, defn = gw.load_definition(workflow_id, session.caller)
        instance_id = gw.engine.submit_workflow(defn, owner=session.username)
        return {"id": instance_id, "status": gw.engine.refresh_status(instance_id)}

    @app.get(API + "/instances/{instance_id}")
    def instance_status(request: Request, instance_id: str,
                        wait: Optional[int] = Query(default=None, ge=0, le=30_000)):
        session = gw.session(request)
        snap = gw.engine.instance_snapshot(instance_id)
        gw.auth.authorize(session, "monitor_own", resource_owner=snap["owner"])
        if wait:
            deadline = time.monotonic() + wait / 1000.0
            seq0 = snap["seq"]
            while snap["seq"] == seq0 and time.monotonic() < deadline:
                time.sleep(0.05)
                snap = gw.engine.instance_snapshot(instance_id)
        return snap

    @app.get(API + "/instances/{instance_id}/events")
    def instance_events(request: Request, instance_id: str, since: int = 0):
        session = gw.session(request)
        snap = gw.engine.instance_snapshot(instance_id)
        gw.auth.authorize(session, "monitor_own", resource_owner=snap["owner"])
        events = [e for e in gw.repo.load_events(instance_id) if e["seq"] > since]
        for e in events:
            e.pop("definition", None)  # genesis payload is bulky and private
        return {"events": events}

    @app.post(API + "/instances/{instance_id}/abort")
    def abort_instance(request: Request, instance_id: str):
        session = gw.session(request)
        snap = gw.engine.instance_snapshot(instance_id)
        gw.auth.authorize(session, "abort_own", resource_owner=snap["owner"])
        gw.engine.abort(instance_id)
        return {"id": instance_id, "status": gw.engine.refresh_status(instance_id)}

    # -- jobs -------------------------------------------------------------------------------

    def _job_ref(job_id: str) -> tuple[str, str]:
        instance_id = job_id.split(".", 1)[0]
        return instance_id, job_id

    @app.get(API + "/jobs/{job_id}")
    def job_status(request: Request, job_id: str):
        session = gw.session(request)
        instance_id, job_id = _job_ref(job_id)
        snap = gw.engine.instance_snapshot(instance_id)
        gw.auth.authorize(session, "monitor_own", resource_owner=snap["owner"])
        return gw.engine.job_snapshot(instance_id, job_id)

    @app.get(API + "/jobs/{job_id}/stdout")
    def job_stdout(request: Request, job_id: str):
        return _stream(request, job_id, "stdout")

    @app.get(API + "/jobs/{job_id}/stderr")
    def job_stderr(request: Request, job_id: str):
        return _stream(request, job_id, "stderr")

    def _stream(request: Request, job_id: str, stream: str):
        session = gw.session(request)
        instance_id, job_id = _job_ref(job_id)
        snap = gw.engine.instance_snapshot(instance_id)
        gw.auth.authorize(session, "monitor_own", resource_owner=snap["owner"])
        data = gw.engine.stream_bytes(instance_id, job_id, stream)
        return Response(content=data, media_type="text/plain")

    @app.get(API + "/jobs/{job_id}/artifacts/{name}")
    def job_artifact(request: Request, job_id: str, name: str):
        session = gw.session(request)
        instance_id, job_id = _job_ref(job_id)
        snap = gw.engine.instance_snapshot(instance_id)
        gw.auth.authorize(session, "monitor_own", resource_owner=snap["owner"])
        data = gw.engine.artifact_bytes(instance_id, job_id, name)
        media = "text/plain" if name.endswith(("csv", "json", "table")) or name.endswith(".pgm") else "application/octet-stream"
        return Response(content=data, media_type=media)

    @app.post(API + "/jobs/{job_id}/resubmit")
    def job_resubmit(request: Request, job_id: str):
        session = gw.session(request)
        instance_id, job_id = _job_ref(job_id)
        snap = gw.engine.instance_snapshot(instance_id)
        gw.auth.authorize(session, "resubmit", resource_owner=snap["owner"])
        attempt = gw.engine.resubmit_failed(instance_id, job_id)
        return {"id": job_id, "attempt": attempt}

    # -- backends / users --------------------------------------------------------------------

    @app.get(API + "/backends")
    def list_backends(request: Request):
        gw.session(request)
        items = []
        for desc in gw.bridge.descriptors():
            doc = desc.to_json()
            doc["load"] = gw.bridge.get(desc.id).load()
            items.append(doc)
        return {"items": items}

    @app.post(API + "/backends", status_code=201)
    def register_backend(request: Request, payload: dict = Body(...)):
        gw.require(request, "manage_backends")
        desc = BackendDescriptor.from_json(payload)
        gw.bridge.register_backend(desc)
        return desc.to_json()

    @app.get(API + "/users")
    def list_users(request: Request):
        gw.require(request, "manage_users")
        return {"items": [
            {"username": u.username, "role": u.role, "active": u.active, "created_at": u.created_at}
            for u in gw.users.list_users()
        ]}

    @app.post(API + "/users", status_code=201)
    def create_user(request: Request, payload: dict = Body(...)):
        gw.require(request, "manage_users")
        account = gw.users.create_user(
            str(payload.get("username", "")), str(payload.get("password", "")),
            str(payload.get("role", "end_user")),
        )
        return {"username": account.username, "role": account.role}

    # -- static UI ------------------------------------------------------------------------------

    ui_dir = config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
