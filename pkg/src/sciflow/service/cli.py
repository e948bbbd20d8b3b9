"""Command-line client mapping 1:1 onto the portal API.

Address from --addr or SCIFLOW_ADDR; bearer token from --token or
SCIFLOW_TOKEN. Exit codes: 0 success, 1 API error (the server's error
envelope is echoed to stderr as single-line JSON), 2 usage error.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
import time
from pathlib import Path

import httpx

DEFAULT_ADDR = "http://127.0.0.1:8420"


class ApiError(Exception):
    def __init__(self, envelope: dict, status: int):
        super().__init__(envelope.get("error", {}).get("message", "api error"))
        self.envelope = envelope
        self.status = status


class Client:
    def __init__(self, addr: str, token: str | None):
        base = addr if addr.startswith("http") else f"http://{addr}"
        headers = {"authorization": f"Bearer {token}"} if token else {}
        self.http = httpx.Client(base_url=base + "/api/v1", headers=headers, timeout=60.0)

    def call(self, method: str, path: str, **kwargs):
        response = self.http.request(method, path, **kwargs)
        if response.status_code >= 400:
            try:
                envelope = response.json()
            except ValueError:
                envelope = {"error": {"code": "http_error", "message": response.text, "details": {}}}
            raise ApiError(envelope, response.status_code)
        return response


def _print_json(doc) -> None:
    print(json.dumps(doc, indent=1, sort_keys=True))


def cmd_login(client: Client, args) -> int:
    doc = client.call("POST", "/auth/login",
                      json={"username": args.username, "password": args.password}).json()
    print(doc["token"])
    print(f"export SCIFLOW_TOKEN={doc['token']}", file=sys.stderr)
    return 0


def cmd_wf_list(client: Client, args) -> int:
    doc = client.call("GET", "/workflows", params={k: v for k, v in
                      (("kind", args.kind), ("visibility", args.visibility)) if v}).json()
    for item in doc["items"]:
        print(f"{item['id']}  {item['kind']:<11} {item['visibility']:<9} {item['owner']:<12} {item['name']}")
    return 0


def cmd_wf_upload(client: Client, args) -> int:
    data = Path(args.archive).read_bytes()
    doc = client.call("POST", "/workflows/import",
                      json={"archive_b64": base64.b64encode(data).decode()}).json()
    print(doc["id"])
    return 0


def cmd_wf_download(client: Client, args) -> int:
    response = client.call("POST", f"/workflows/{args.id}/export")
    out = args.output or f"{args.id}.zip"
    Path(out).write_bytes(response.content)
    print(out)
    return 0


def cmd_wf_publish(client: Client, args) -> int:
    _print_json(client.call("POST", f"/workflows/{args.id}/publish").json())
    return 0


def cmd_instance_submit(client: Client, args) -> int:
    doc = client.call("POST", "/instances", json={"workflow_id": args.workflow_id}).json()
    print(doc["id"])
    return 0


def cmd_instance_status(client: Client, args) -> int:
    params = {"wait": args.wait} if args.wait else {}
    doc = client.call("GET", f"/instances/{args.id}", params=params).json()
    if args.verbose:
        _print_json(doc)
    else:
        print(doc["status"])
    if args.watch:
        while doc["status"] not in ("finished", "error", "aborted"):
            time.sleep(max(args.poll_interval, 0.05))
            doc = client.call("GET", f"/instances/{args.id}").json()
            print(doc["status"])
    return 0


def cmd_instance_list(client: Client, args) -> int:
    doc = client.call("GET", "/instances").json()
    for item in doc["items"]:
        print(f"{item['id']}  {item['status']:<10} {item['owner']:<12} {item['workflow']}")
    return 0


def cmd_instance_abort(client: Client, args) -> int:
    doc = client.call("POST", f"/instances/{args.id}/abort").json()
    print(doc["status"])
    return 0


def cmd_job_logs(client: Client, args) -> int:
    response = client.call("GET", f"/jobs/{args.id}/{args.stream}")
    sys.stdout.write(response.text)
    return 0


def cmd_job_resubmit(client: Client, args) -> int:
    doc = client.call("POST", f"/jobs/{args.id}/resubmit").json()
    print(doc["attempt"])
    return 0


def cmd_backend_list(client: Client, args) -> int:
    doc = client.call("GET", "/backends").json()
    for item in doc["items"]:
        cap = item.get("slots", item.get("workers", "-"))
        print(f"{item['id']}  {item['kind']:<17} cap={cap:<4} load={item['load']:<4} tags={','.join(item['tags'])}")
    return 0


def cmd_backend_add(client: Client, args) -> int:
    doc = client.call("POST", "/backends", json=json.loads(Path(args.descriptor).read_text())).json()
    print(doc["id"])
    return 0


def cmd_user_list(client: Client, args) -> int:
    doc = client.call("GET", "/users").json()
    for item in doc["items"]:
        state = "active" if item["active"] else "disabled"
        print(f"{item['username']:<16} {item['role']:<11} {state}")
    return 0


def cmd_user_create(client: Client, args) -> int:
    doc = client.call("POST", "/users", json={
        "username": args.username, "password": args.password, "role": args.role}).json()
    print(doc["username"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sciflow", description="Science gateway portal client.")
    parser.add_argument("--addr", default=os.environ.get("SCIFLOW_ADDR", DEFAULT_ADDR))
    parser.add_argument("--token", default=os.environ.get("SCIFLOW_TOKEN"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("login", help="obtain a bearer token")
    p.add_argument("--username", required=True)
    p.add_argument("--password", required=True)
    p.set_defaults(func=cmd_login)

    wf = sub.add_parser("wf", help="workflow repository operations").add_subparsers(
        dest="subcommand", required=True)
    p = wf.add_parser("list")
    p.add_argument("--kind")
    p.add_argument("--visibility")
    p.set_defaults(func=cmd_wf_list)
    p = wf.add_parser("upload")
    p.add_argument("archive")
    p.set_defaults(func=cmd_wf_upload)
    p = wf.add_parser("download")
    p.add_argument("id")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_wf_download)
    p = wf.add_parser("publish")
    p.add_argument("id")
    p.set_defaults(func=cmd_wf_publish)

    inst = sub.add_parser("instance", help="workflow instance operations").add_subparsers(
        dest="subcommand", required=True)
    p = inst.add_parser("submit")
    p.add_argument("workflow_id")
    p.set_defaults(func=cmd_instance_submit)
    p = inst.add_parser("status")
    p.add_argument("id")
    p.add_argument("--wait", type=int, help="long-poll milliseconds")
    p.add_argument("--watch", action="store_true")
    p.add_argument("--poll-interval", type=float, default=1.0)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_instance_status)
    p = inst.add_parser("list")
    p.set_defaults(func=cmd_instance_list)
    p = inst.add_parser("abort")
    p.add_argument("id")
    p.set_defaults(func=cmd_instance_abort)

    job = sub.add_parser("job", help="job operations").add_subparsers(dest="subcommand", required=True)
    p = job.add_parser("logs")
    p.add_argument("id")
    p.add_argument("--stream", choices=("stdout", "stderr"), default="stdout")
    p.set_defaults(func=cmd_job_logs)
    p = job.add_parser("resubmit")
    p.add_argument("id")
    p.set_defaults(func=cmd_job_resubmit)

    backend = sub.add_parser("backend", help="backend registry").add_subparsers(
        dest="subcommand", required=True)
    p = backend.add_parser("list")
    p.set_defaults(func=cmd_backend_list)
    p = backend.add_parser("add", help="register a backend from a descriptor JSON file (admin)")
    p.add_argument("descriptor")
    p.set_defaults(func=cmd_backend_add)

    user = sub.add_parser("user", help="account management (admin)").add_subparsers(
        dest="subcommand", required=True)
    p = user.add_parser("list")
    p.set_defaults(func=cmd_user_list)
    p = user.add_parser("create")
    p.add_argument("--username", required=True)
    p.add_argument("--password", required=True)
    p.add_argument("--role", choices=("admin", "power_user", "end_user"), default="end_user")
    p.set_defaults(func=cmd_user_create)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    client = Client(args.addr, args.token)
    try:
        return args.func(client, args)
    except ApiError as exc:
        print(json.dumps(exc.envelope, sort_keys=True), file=sys.stderr)
        return 1
    except httpx.HTTPError as exc:
        print(json.dumps({"error": {"code": "connection", "message": str(exc), "details": {}}}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
