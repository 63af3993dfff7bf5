"""HTTP clients against a throwaway local server, plus stub lookup order."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from mapdigit.clients import (
    HttpDetectorClient,
    HttpMatcherClient,
    HttpModelClient,
    StubMatcherClient,
    StubModelClient,
    client_from_spec,
)
from mapdigit.cropper import PatchGrid, crop
from mapdigit.errors import ClientError
from mapdigit.model import RasterMap


class _Handler(BaseHTTPRequestHandler):
    responses: dict = {}
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.seen.append((self.path, self.headers.get("Authorization"), body))
        status, doc = self.responses.get(self.path, (404, {"error": "no route"}))
        raw = doc.encode() if isinstance(doc, str) else json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture()
def server():
    _Handler.responses = {}
    _Handler.seen = []
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}", _Handler
    srv.shutdown()
    srv.server_close()


def _raster(id="m"):
    return RasterMap(id, np.full((20, 30, 3), 200, np.uint8))


def test_model_client_round_trip(server, monkeypatch):
    url, h = server
    h.responses["/complete"] = (200, {"text": "hello"})
    monkeypatch.setenv("MAPDIGIT_API_KEY", "secret")
    client = client_from_spec(url + "/complete", "model")
    assert isinstance(client, HttpModelClient)
    assert client.complete("title", "read it", "", [_raster()]) == "hello"
    path, auth, body = h.seen[0]
    assert auth == "Bearer secret"
    assert body["task"] == "title" and len(body["images"]) == 1


def test_model_client_without_key_sends_no_auth(server, monkeypatch):
    url, h = server
    h.responses["/c"] = (200, {"text": "x"})
    monkeypatch.delenv("MAPDIGIT_API_KEY", raising=False)
    HttpModelClient(url + "/c").complete("t", "", "")
    assert h.seen[0][1] is None


@pytest.mark.parametrize("status,doc", [(500, {"text": "x"}), (200, {"nope": 1}), (200, "not json")])
def test_model_client_errors(server, status, doc):
    url, h = server
    h.responses["/c"] = (status, doc)
    with pytest.raises(ClientError):
        HttpModelClient(url + "/c").complete("t", "", "")


def test_unreachable_endpoint():
    with pytest.raises(ClientError):
        HttpModelClient("http://127.0.0.1:9/none", timeout=1).complete("t", "", "")


def test_matcher_client(server):
    url, h = server
    h.responses["/m"] = (200, {"matches": [{"qx": 1, "qy": 2, "cx": 3, "cy": 4, "confidence": 0.7}]})
    ms = HttpMatcherClient(url + "/m").match(_raster("q"), _raster("c"))
    assert len(ms) == 1 and ms[0].candidate_px.x == 3 and ms[0].confidence == 0.7
    h.responses["/bad"] = (200, {"matches": [{"qx": 1}]})
    with pytest.raises(ClientError):
        HttpMatcherClient(url + "/bad").match(_raster("q"), _raster("c"))


def test_detector_client(server):
    url, h = server
    h.responses["/d"] = (200, {"detections": [{"class": "mine_shaft", "bbox": [1, 2, 5, 6],
                                               "confidence": 0.9}]})
    patch = crop(_raster(), PatchGrid(16))[0]
    dets = HttpDetectorClient(url + "/d").detect(patch)
    assert dets[0].cls == "mine_shaft" and dets[0].bbox.xmax == 5
    assert "image" in h.seen[0][2]


def test_stub_model_lookup_order(tmp_path):
    (tmp_path / "title.txt").write_text("generic")
    (tmp_path / "m.title.txt").write_text("specific")
    stub = StubModelClient(tmp_path)
    assert stub.complete("title", "", "", [_raster("m")]) == "specific"
    assert stub.complete("title", "", "", [_raster("other")]) == "generic"
    with pytest.raises(ClientError):
        stub.complete("layout", "", "")
    assert [c["image"] for c in stub.calls] == ["m", "other", None]


def test_stub_matcher_missing_file_means_no_matches(tmp_path):
    assert StubMatcherClient(tmp_path).match(_raster("q"), _raster("absent")) == []


def test_bad_spec():
    with pytest.raises(ValueError):
        client_from_spec("ftp://x", "model")
    with pytest.raises(ValueError):
        client_from_spec("stub:x", "oracle")
