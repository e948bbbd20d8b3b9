"""CLI client against a live server process: exit codes 0 / 1 / 2."""

import base64
import json
import os
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

from conftest import chain_definition
from sciflow.archive import export_archive
from sciflow.service.cli import main as cli_main


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def server(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("srv")
    port = free_port()
    addr = f"127.0.0.1:{port}"
    config = {
        "addr": addr,
        "store_dir": str(tmp / "store"),
        "tick_interval_ms": 50,
        "backends": [
            {"id": "local0", "kind": "local", "tags": ["local"], "slots": 2},
            {"id": "pbs0", "kind": "cluster_sim", "tags": ["cluster"], "slots": 2, "seed": 2},
        ],
    }
    cfg_path = tmp / "config.json"
    cfg_path.write_text(json.dumps(config))
    proc = subprocess.Popen(
        [sys.executable, "-m", "sciflow.service.server", "--config", str(cfg_path)],
        stdout=subprocess.DEVNULL, stderr=subprocess.PIPE,
    )
    base = f"http://{addr}"
    deadline = time.time() + 30
    while time.time() < deadline:
        if proc.poll() is not None:
            raise RuntimeError(f"server died: {proc.stderr.read().decode()}")
        try:
            httpx.get(base + "/api/v1/workflows", timeout=1.0)
            break
        except httpx.HTTPError:
            time.sleep(0.1)
    else:
        proc.kill()
        raise RuntimeError("server never came up")
    yield base
    proc.terminate()
    proc.wait(timeout=10)


@pytest.fixture(scope="module")
def token(server):
    r = httpx.post(server + "/api/v1/auth/login",
                   json={"username": "admin", "password": "admin"})
    return r.json()["token"]


def run_cli(server, token, *args):
    return cli_main(["--addr", server, "--token", token, *args])


class TestCli:
    def test_login_prints_token(self, server, capsys):
        assert cli_main(["--addr", server, "login", "--username", "admin",
                         "--password", "admin"]) == 0
        out = capsys.readouterr().out.strip()
        assert len(out.splitlines()[0]) == 40

    def test_full_workflow_lifecycle(self, server, token, tmp_path, capsys):
        archive = tmp_path / "wf.zip"
        archive.write_bytes(export_archive(chain_definition(2)))
        assert run_cli(server, token, "wf", "upload", str(archive)) == 0
        wf_id = capsys.readouterr().out.strip()

        assert run_cli(server, token, "wf", "list") == 0
        assert wf_id in capsys.readouterr().out

        assert run_cli(server, token, "instance", "submit", wf_id) == 0
        iid = capsys.readouterr().out.strip()

        # the server's background loop ticks it to completion
        deadline = time.time() + 30
        status = ""
        while time.time() < deadline:
            assert run_cli(server, token, "instance", "status", iid) == 0
            status = capsys.readouterr().out.strip().splitlines()[-1]
            if status in ("finished", "error", "aborted"):
                break
            time.sleep(0.2)
        assert status == "finished"

        assert run_cli(server, token, "instance", "list") == 0
        assert iid in capsys.readouterr().out

        assert run_cli(server, token, "backend", "list") == 0
        out = capsys.readouterr().out
        assert "pbs0" in out and "local0" in out

        # job logs of the first job
        r = httpx.get(f"{server}/api/v1/instances/{iid}",
                      headers={"authorization": f"Bearer {token}"})
        job_id = r.json()["jobs"][0]["id"]
        assert run_cli(server, token, "job", "logs", job_id, "--stream", "stderr") == 0

        # download round-trip
        out_zip = tmp_path / "back.zip"
        assert run_cli(server, token, "wf", "download", wf_id, "-o", str(out_zip)) == 0
        capsys.readouterr()
        from sciflow.archive import import_archive

        assert import_archive(out_zip.read_bytes()) == chain_definition(2)

    def test_api_error_exit_1_with_envelope(self, server, token, capsys):
        assert run_cli(server, token, "instance", "status", "ghost") == 1
        err = capsys.readouterr().err.strip()
        envelope = json.loads(err.splitlines()[-1])
        assert envelope["error"]["code"] == "unknown_instance"

    def test_unauthenticated_exit_1(self, server, capsys):
        assert cli_main(["--addr", server, "wf", "list"]) == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"]["code"] == "token_expired"

    def test_usage_error_exit_2(self, server, token):
        with pytest.raises(SystemExit) as exc:
            cli_main(["--addr", server, "--token", token, "instance"])
        assert exc.value.code == 2

    def test_missing_positional_exit_2(self, server, token):
        with pytest.raises(SystemExit) as exc:
            cli_main(["--addr", server, "--token", token, "instance", "submit"])
        assert exc.value.code == 2

    def test_user_management(self, server, token, capsys):
        assert run_cli(server, token, "user", "create", "--username", "carol",
                       "--password", "pw", "--role", "power_user") == 0
        assert capsys.readouterr().out.strip() == "carol"
        assert run_cli(server, token, "user", "list") == 0
        assert "carol" in capsys.readouterr().out
        # a non-admin gets a clean API error
        r = httpx.post(server + "/api/v1/auth/login",
                       json={"username": "carol", "password": "pw"})
        carol = r.json()["token"]
        assert run_cli(server, carol, "user", "list") == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"]["code"] == "forbidden"

    def test_abort_flow(self, server, token, tmp_path, capsys):
        archive = tmp_path / "wf2.zip"
        archive.write_bytes(export_archive(chain_definition(4)))
        run_cli(server, token, "wf", "upload", str(archive))
        wf_id = capsys.readouterr().out.strip()
        run_cli(server, token, "instance", "submit", wf_id)
        iid = capsys.readouterr().out.strip()
        rc = run_cli(server, token, "instance", "abort", iid)
        out = capsys.readouterr()
        if rc == 0:
            assert out.out.strip() == "aborted"
        else:  # lost the race with the background ticker
            assert json.loads(out.err.strip())["error"]["code"] == "already_terminal"
