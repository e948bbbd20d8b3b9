import base64
import time

import pytest
from fastapi.testclient import TestClient

from conftest import chain_definition, sweep_definition
from sciflow.archive import export_archive
from sciflow.engine import fold_events
from sciflow.model import Template
from sciflow.service.app import Gateway, create_app
from sciflow.service.config import ServiceConfig


@pytest.fixture
def gateway(tmp_path):
    cfg = ServiceConfig(
        store_dir=str(tmp_path / "store"),
        token_ttl_s=3600,
        backends=(
            {"id": "local0", "kind": "local", "tags": ["local"], "slots": 2},
            {"id": "pbs0", "kind": "cluster_sim", "tags": ["cluster"], "slots": 2, "seed": 5},
        ),
    )
    return Gateway(cfg)


@pytest.fixture
def client(gateway):
    return TestClient(create_app(gateway.config, gateway))


def login(client, username, password="pw"):
    r = client.post("/api/v1/auth/login", json={"username": username, "password": password})
    assert r.status_code == 200, r.text
    return {"authorization": f"Bearer {r.json()['token']}"}


@pytest.fixture
def users(client, gateway):
    admin = login(client, "admin", "admin")
    for name, role in (("power", "power_user"), ("enduser", "end_user"), ("other", "end_user")):
        client.post("/api/v1/users", json={"username": name, "password": "pw", "role": role},
                    headers=admin)
    return {
        "admin": admin,
        "power": login(client, "power"),
        "enduser": login(client, "enduser"),
        "other": login(client, "other"),
    }


def upload_workflow(client, headers, defn=None):
    data = export_archive(defn or chain_definition(2))
    r = client.post("/api/v1/workflows/import",
                    json={"archive_b64": base64.b64encode(data).decode()}, headers=headers)
    assert r.status_code == 201, r.text
    return r.json()["id"]


def run_instance(client, gateway, headers, workflow_id):
    r = client.post("/api/v1/instances", json={"workflow_id": workflow_id}, headers=headers)
    assert r.status_code == 201, r.text
    iid = r.json()["id"]
    gateway.engine.run_to_quiescence(iid, max_ticks=30)
    return iid


class TestAuth:
    def test_login_and_me(self, client, users):
        r = client.get("/api/v1/auth/me", headers=users["power"])
        assert r.status_code == 200
        body = r.json()
        assert body["role"] == "power_user"
        assert "publish" in body["permissions"]

    def test_wrong_password(self, client):
        r = client.post("/api/v1/auth/login", json={"username": "admin", "password": "nope"})
        assert r.status_code == 401
        assert r.json()["error"]["code"] == "invalid_credentials"

    def test_disabled_account(self, client, gateway, users):
        gateway.users.set_active("enduser", False)
        r = client.post("/api/v1/auth/login", json={"username": "enduser", "password": "pw"})
        assert r.status_code == 401
        assert r.json()["error"]["code"] == "account_disabled"

    def test_token_expiry_everywhere(self, tmp_path):
        cfg = ServiceConfig(store_dir=str(tmp_path / "s2"), token_ttl_s=0.05,
                            backends=({"id": "local0", "kind": "local", "tags": ["local"], "slots": 1},))
        gw = Gateway(cfg)
        client = TestClient(create_app(cfg, gw))
        headers = login(client, "admin", "admin")
        time.sleep(0.1)
        for method, path in (("GET", "/api/v1/workflows"), ("GET", "/api/v1/instances"),
                             ("GET", "/api/v1/backends"), ("GET", "/api/v1/users")):
            r = client.request(method, path, headers=headers)
            assert r.status_code == 401, (path, r.status_code)

    def test_error_envelope_shape(self, client):
        r = client.get("/api/v1/workflows")
        body = r.json()
        assert set(body) == {"error"}
        assert set(body["error"]) == {"code", "message", "details"}


class TestAuthorizationMatrix:
    def test_end_user_denied_authoring_actions(self, client, users):
        graph_payload = {"kind": "graph", "graph": {"name": "g", "nodes": [
            {"name": "n", "input_ports": [], "output_ports": []}], "edges": []}}
        r = client.post("/api/v1/workflows", json=graph_payload, headers=users["enduser"])
        assert r.status_code == 403
        r = client.post("/api/v1/workflows/import", json={"archive_b64": ""}, headers=users["enduser"])
        assert r.status_code == 403  # authz precedes payload validation
        r = client.post("/api/v1/users", json={"username": "x", "password": "x", "role": "end_user"},
                        headers=users["enduser"])
        assert r.status_code == 403
        r = client.post("/api/v1/backends", json={"id": "b", "kind": "local", "slots": 1},
                        headers=users["enduser"])
        assert r.status_code == 403

    def test_power_user_denied_admin_actions(self, client, users):
        assert client.get("/api/v1/users", headers=users["power"]).status_code == 403
        r = client.post("/api/v1/backends", json={"id": "b", "kind": "local", "slots": 1},
                        headers=users["power"])
        assert r.status_code == 403

    def test_403_precedes_404_for_matrix_denials(self, client, users):
        # end user may never publish, even on a nonexistent item
        r = client.post("/api/v1/workflows/ghost/publish", headers=users["enduser"])
        assert r.status_code == 403
        r = client.post("/api/v1/workflows/ghost/publish", headers=users["power"])
        assert r.status_code == 404

    def test_401_precedes_404(self, client):
        assert client.get("/api/v1/instances/ghost").status_code == 401
        assert client.post("/api/v1/instances/ghost/abort").status_code == 401

    def test_end_user_submits_instantiated_template(self, client, gateway, users):
        defn = chain_definition(2)
        template = Template.from_definition(defn, free_fields={"n0.arguments[0]"}) \
            if defn.configs["n0"].arguments else Template.from_definition(defn, free_fields=set())
        data = export_archive(template)
        r = client.post("/api/v1/workflows/import",
                        json={"archive_b64": base64.b64encode(data).decode()},
                        headers=users["power"])
        template_id = r.json()["id"]
        r = client.post(f"/api/v1/workflows/{template_id}/publish", headers=users["power"])
        assert r.status_code == 200
        r = client.post(f"/api/v1/templates/{template_id}/instantiate", json={"fills": {}},
                        headers=users["enduser"])
        assert r.status_code == 201
        workflow_id = r.json()["id"]
        r = client.post("/api/v1/instances", json={"workflow_id": workflow_id},
                        headers=users["enduser"])
        assert r.status_code == 201

    def test_ownership_rules_on_instances(self, client, gateway, users):
        wf = upload_workflow(client, users["power"])
        client.post(f"/api/v1/workflows/{wf}/publish", headers=users["power"])
        r = client.post("/api/v1/instances", json={"workflow_id": wf}, headers=users["enduser"])
        iid = r.json()["id"]
        # another end user cannot monitor or abort it
        assert client.get(f"/api/v1/instances/{iid}", headers=users["other"]).status_code == 403
        assert client.post(f"/api/v1/instances/{iid}/abort", headers=users["other"]).status_code == 403
        # a power user cannot abort another user's instance either
        assert client.post(f"/api/v1/instances/{iid}/abort", headers=users["power"]).status_code == 403
        # the owner and the admin can
        assert client.get(f"/api/v1/instances/{iid}", headers=users["enduser"]).status_code == 200
        assert client.post(f"/api/v1/instances/{iid}/abort", headers=users["admin"]).status_code == 200

    def test_private_item_access(self, client, users):
        wf = upload_workflow(client, users["power"])
        assert client.post(f"/api/v1/workflows/{wf}/export", headers=users["enduser"]).status_code == 403
        assert client.post(f"/api/v1/workflows/{wf}/export", headers=users["admin"]).status_code == 200


class TestInstanceLifecycle:
    def test_submit_status_jobs(self, client, gateway, users):
        wf = upload_workflow(client, users["power"])
        iid = run_instance(client, gateway, users["power"], wf)
        r = client.get(f"/api/v1/instances/{iid}", headers=users["power"])
        body = r.json()
        assert body["status"] == "finished"
        assert {j["node"] for j in body["jobs"]} == {"n0", "n1"}
        assert all(j["state"] == "finished" for j in body["jobs"])

    def test_http_status_equals_engine_at_same_seq(self, client, gateway, users):
        wf = upload_workflow(client, users["power"], sweep_definition(3))
        r = client.post("/api/v1/instances", json={"workflow_id": wf}, headers=users["power"])
        iid = r.json()["id"]
        for _ in range(30):
            body = client.get(f"/api/v1/instances/{iid}", headers=users["power"]).json()
            events = gateway.repo.load_events(iid)
            prefix = [e for e in events if e["seq"] <= body["seq"]]
            assert fold_events(iid, prefix).status() == body["status"]
            if body["status"] in ("finished", "error", "aborted"):
                break
            gateway.engine.tick(iid)
        assert body["status"] == "finished"

    def test_stdout_bytes_roundtrip(self, client, gateway, users):
        wf = upload_workflow(client, users["power"])
        iid = run_instance(client, gateway, users["power"], wf)
        body = client.get(f"/api/v1/instances/{iid}", headers=users["power"]).json()
        job_id = body["jobs"][0]["id"]
        r = client.get(f"/api/v1/jobs/{job_id}", headers=users["power"])
        assert r.status_code == 200
        r = client.get(f"/api/v1/jobs/{job_id}/stdout", headers=users["power"])
        assert r.status_code == 200
        stderr = client.get(f"/api/v1/jobs/{job_id}/stderr", headers=users["power"])
        assert stderr.status_code == 200

    def test_abort_then_conflict(self, client, gateway, users):
        wf = upload_workflow(client, users["power"])
        r = client.post("/api/v1/instances", json={"workflow_id": wf}, headers=users["power"])
        iid = r.json()["id"]
        assert client.post(f"/api/v1/instances/{iid}/abort", headers=users["power"]).status_code == 200
        r = client.post(f"/api/v1/instances/{iid}/abort", headers=users["power"])
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "already_terminal"

    def test_resubmit_not_in_error_409(self, client, gateway, users):
        wf = upload_workflow(client, users["power"])
        iid = run_instance(client, gateway, users["power"], wf)
        job_id = client.get(f"/api/v1/instances/{iid}", headers=users["power"]).json()["jobs"][0]["id"]
        r = client.post(f"/api/v1/jobs/{job_id}/resubmit", headers=users["power"])
        assert r.status_code == 409

    def test_404s(self, client, users):
        assert client.get("/api/v1/instances/ghost", headers=users["admin"]).status_code == 404
        assert client.get("/api/v1/jobs/ghost.j0", headers=users["admin"]).status_code == 404
        assert client.post("/api/v1/workflows/ghost/export", headers=users["admin"]).status_code == 404

    def test_submitting_a_graph_item_400(self, client, users):
        g = chain_definition(2).graph
        data = export_archive(g)
        r = client.post("/api/v1/workflows/import",
                        json={"archive_b64": base64.b64encode(data).decode()},
                        headers=users["power"])
        gid = r.json()["id"]
        r = client.post("/api/v1/instances", json={"workflow_id": gid}, headers=users["power"])
        assert r.status_code == 400

    def test_validation_error_is_400(self, client, users):
        r = client.post("/api/v1/instances", json={}, headers=users["power"])
        assert r.status_code == 400

    def test_corrupt_archive_400(self, client, users):
        r = client.post("/api/v1/workflows/import",
                        json={"archive_b64": base64.b64encode(b"garbage").decode()},
                        headers=users["power"])
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "corrupt_archive"

    def test_instance_events_feed(self, client, gateway, users):
        wf = upload_workflow(client, users["power"])
        iid = run_instance(client, gateway, users["power"], wf)
        r = client.get(f"/api/v1/instances/{iid}/events", headers=users["power"])
        events = r.json()["events"]
        assert events, "event feed must not be empty"
        assert all("definition" not in e for e in events)
        seqs = [e["seq"] for e in events]
        assert seqs == sorted(seqs)
        since = seqs[len(seqs) // 2]
        r2 = client.get(f"/api/v1/instances/{iid}/events", params={"since": since},
                        headers=users["power"])
        assert all(e["seq"] > since for e in r2.json()["events"])

    def test_long_poll_returns_on_change(self, client, gateway, users):
        import threading

        wf = upload_workflow(client, users["power"])
        r = client.post("/api/v1/instances", json={"workflow_id": wf}, headers=users["power"])
        iid = r.json()["id"]
        ticker = threading.Timer(0.2, lambda: gateway.engine.tick(iid))
        ticker.start()
        t0 = time.monotonic()
        body = client.get(f"/api/v1/instances/{iid}", params={"wait": 5000},
                          headers=users["power"]).json()
        elapsed = time.monotonic() - t0
        ticker.join()
        assert elapsed < 4.0  # woke on the seq change, not the timeout


class TestWorkflowItems:
    def test_export_import_roundtrip_via_http(self, client, users):
        defn = chain_definition(3)
        wf = upload_workflow(client, users["power"], defn)
        r = client.post(f"/api/v1/workflows/{wf}/export", headers=users["power"])
        assert r.status_code == 200
        from sciflow.archive import import_archive

        assert import_archive(r.content) == defn

    def test_list_shows_published_to_everyone(self, client, users):
        wf = upload_workflow(client, users["power"])
        client.post(f"/api/v1/workflows/{wf}/publish", headers=users["power"])
        listed = client.get("/api/v1/workflows", headers=users["enduser"]).json()["items"]
        assert wf in {i["id"] for i in listed}

    def test_delete_own_workflow(self, client, users):
        wf = upload_workflow(client, users["power"])
        assert client.delete(f"/api/v1/workflows/{wf}", headers=users["power"]).status_code == 200
        assert client.post(f"/api/v1/workflows/{wf}/export",
                           headers=users["power"]).status_code == 404

    def test_backend_listing_shows_load(self, client, users):
        items = client.get("/api/v1/backends", headers=users["enduser"]).json()["items"]
        assert {b["id"] for b in items} == {"local0", "pbs0"}
        assert all("load" in b for b in items)

    def test_template_detail_exposes_field_lists(self, client, users):
        defn = chain_definition(2)
        template = Template.from_definition(defn, free_fields={"n1.resource_request.cpus"})
        data = export_archive(template)
        r = client.post("/api/v1/workflows/import",
                        json={"archive_b64": base64.b64encode(data).decode()},
                        headers=users["power"])
        detail = client.get(f"/api/v1/workflows/{r.json()['id']}", headers=users["power"]).json()
        assert detail["kind"] == "template"
        assert detail["free_fields"] == ["n1.resource_request.cpus"]
        assert "n0.executable_ref" in detail["frozen_fields"]
        assert "graph" in detail

    def test_job_artifact_download(self, client, gateway, users):
        wf = upload_workflow(client, users["power"])
        iid = run_instance(client, gateway, users["power"], wf)
        body = client.get(f"/api/v1/instances/{iid}", headers=users["power"]).json()
        job = next(j for j in body["jobs"] if j["node"] == "n1")
        r = client.get(f"/api/v1/jobs/{job['id']}/artifacts/out", headers=users["power"])
        assert r.status_code == 200
        assert r.content == b"seed\nlayer\n"
        r = client.get(f"/api/v1/jobs/{job['id']}/artifacts/nope", headers=users["power"])
        assert r.status_code == 404
        r = client.get(f"/api/v1/jobs/{job['id']}/artifacts/out", headers=users["other"])
        assert r.status_code == 403


class TestStaticUi:
    def test_ui_route_serves_built_assets(self, tmp_path):
        ui = tmp_path / "dist"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><title>portal</title>")
        (ui / "app.js").write_text("console.log('ok')")
        cfg = ServiceConfig(store_dir=str(tmp_path / "store"), ui_dir=str(ui),
                            backends=({"id": "local0", "kind": "local", "tags": ["local"], "slots": 1},))
        client = TestClient(create_app(cfg, Gateway(cfg)))
        r = client.get("/ui/")
        assert r.status_code == 200 and "portal" in r.text
        assert client.get("/ui/app.js").status_code == 200
