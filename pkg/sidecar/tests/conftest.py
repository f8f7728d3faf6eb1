"""Shared fixtures: one checkpoint set, one app, one live server."""
from __future__ import annotations

import json
import threading
import time

import pytest
import uvicorn

from mindseye_sidecar import checkpoints, load_config
from mindseye_sidecar.clientfile import emit_backends
from mindseye_sidecar.server import build_app

BUILD_SEED = 7


@pytest.fixture(scope="session")
def checkpoint_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("checkpoints")
    checkpoints.build_all(root, seed=BUILD_SEED)
    return root


@pytest.fixture(scope="session")
def sidecar_config(checkpoint_root):
    return load_config(checkpoint_root / "sidecar.json")


@pytest.fixture(scope="session")
def app(sidecar_config):
    return build_app(sidecar_config)


@pytest.fixture(scope="session")
def base_url(app):
    """A real HTTP server on an ephemeral port, shared by the session."""
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30.0
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("sidecar server did not start in time")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10.0)


@pytest.fixture(scope="session")
def backends_path(checkpoint_root, base_url, tmp_path_factory):
    """A client backends file declaring the live server plus mock search."""
    payload = emit_backends(checkpoint_root, base_url, mock_search_seed=7)
    path = tmp_path_factory.mktemp("client") / "backends.json"
    path.write_text(json.dumps(payload, indent=2) + "\n", "utf-8")
    return path
