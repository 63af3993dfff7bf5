"""Pluggable clients for the learned components.

Three roles exist: a text-producing model (layout segmentation, legend pairs,
titles, coordinate labels), a keypoint matcher, and a point-symbol detector.
Each role has an offline stub that replays fixture files and an HTTP client
speaking a small JSON protocol.  ``client_from_spec`` builds either from a
``stub:<dir>`` / ``http:<url>`` string.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import os
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
from PIL import Image

from .errors import ClientError, ValidationError
from .geometry import PixelBBox, PixelPoint
from .model import RasterMap

logger = logging.getLogger(__name__)

API_KEY_ENV = "MAPDIGIT_API_KEY"


def encode_png(raster: RasterMap) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(raster.pixels)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _post_json(url: str, payload: dict, timeout: float, api_key_env: str) -> dict:
    body = json.dumps(payload).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise ClientError(f"request to {url} failed: {exc}") from exc


# --- text model ------------------------------------------------------------

class ModelClient(Protocol):
    def complete(self, task: str, instruction: str, prompt: str,
                 images: Sequence[RasterMap] = ()) -> str: ...


class StubModelClient:
    """Replays canned responses.  For a request with ``task`` T whose first
    image has id I, the first existing file among ``I.T.txt``, ``I.T.json``,
    ``T.txt``, ``T.json`` in ``fixture_dir`` is returned verbatim.

    Safe for concurrent calls (read-only)."""

    def __init__(self, fixture_dir):
        self.fixture_dir = Path(fixture_dir)
        self.calls: list[dict] = []
        self._lock = threading.Lock()

    def _find(self, task: str, image_id: Optional[str]) -> Path:
        names = []
        if image_id:
            names += [f"{image_id}.{task}.txt", f"{image_id}.{task}.json"]
        names += [f"{task}.txt", f"{task}.json"]
        for n in names:
            p = self.fixture_dir / n
            if p.exists():
                return p
        raise ClientError(f"stub has no response for task {task!r} in {self.fixture_dir}")

    def complete(self, task, instruction, prompt, images=()):
        image_id = images[0].id if images else None
        with self._lock:
            self.calls.append({"task": task, "image": image_id, "prompt": prompt})
        return self._find(task, image_id).read_text(encoding="utf-8")


class HttpModelClient:
    """POSTs ``{task, instruction, prompt, images: [base64 PNG]}`` and expects
    ``{"text": ...}`` back.  The bearer token comes from ``$MAPDIGIT_API_KEY``."""

    def __init__(self, endpoint: str, timeout: float = 120.0, api_key_env: str = API_KEY_ENV):
        self.endpoint = endpoint
        self.timeout = timeout
        self.api_key_env = api_key_env

    def complete(self, task, instruction, prompt, images=()):
        doc = _post_json(self.endpoint, {
            "task": task,
            "instruction": instruction,
            "prompt": prompt,
            "images": [encode_png(im) for im in images],
        }, self.timeout, self.api_key_env)
        if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
            raise ClientError("model response lacks a 'text' string")
        return doc["text"]


# --- keypoint matcher ------------------------------------------------------

@dataclass(frozen=True)
class KeypointMatch:
    query_px: PixelPoint
    candidate_px: PixelPoint
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"match confidence outside [0, 1]: {self.confidence}")


def matches_from_json(doc) -> list[KeypointMatch]:
    items = doc["matches"] if isinstance(doc, dict) else doc
    return [KeypointMatch(PixelPoint(m["qx"], m["qy"]), PixelPoint(m["cx"], m["cy"]),
                          float(m["confidence"])) for m in items]


def matches_to_json(matches: Sequence[KeypointMatch]) -> dict:
    return {"matches": [{"qx": m.query_px.x, "qy": m.query_px.y, "cx": m.candidate_px.x,
                         "cy": m.candidate_px.y, "confidence": m.confidence} for m in matches]}


class MatcherClient(Protocol):
    def match(self, query: RasterMap, candidate: RasterMap) -> list[KeypointMatch]: ...


class StubMatcherClient:
    """Reads planted matches from ``<fixture_dir>/<candidate id>.json``; a
    missing file means no matches.  Deterministic."""

    def __init__(self, fixture_dir):
        self.fixture_dir = Path(fixture_dir)

    def match(self, query, candidate):
        path = self.fixture_dir / f"{candidate.id}.json"
        if not path.exists():
            return []
        return matches_from_json(json.loads(path.read_text(encoding="utf-8")))


class HttpMatcherClient:
    """POSTs ``{query, candidate}`` base64 PNGs; expects ``{"matches": [...]}``."""

    def __init__(self, endpoint: str, timeout: float = 300.0, api_key_env: str = API_KEY_ENV):
        self.endpoint = endpoint
        self.timeout = timeout
        self.api_key_env = api_key_env

    def match(self, query, candidate):
        doc = _post_json(self.endpoint, {"query": encode_png(query), "candidate": encode_png(candidate)},
                         self.timeout, self.api_key_env)
        try:
            return matches_from_json(doc)
        except (KeyError, TypeError) as exc:
            raise ClientError(f"malformed matcher response: {exc}") from exc


# --- point detector --------------------------------------------------------

@dataclass(frozen=True)
class RawDetection:
    cls: str
    bbox: PixelBBox
    confidence: float


def detections_from_json(doc) -> list[RawDetection]:
    items = doc["detections"] if isinstance(doc, dict) else doc
    return [RawDetection(str(d["class"]), PixelBBox(*d["bbox"]), float(d["confidence"])) for d in items]


class DetectorClient(Protocol):
    def detect(self, patch) -> list[RawDetection]: ...


class StubDetectorClient:
    """Fixture-driven detector.

    ``detections.json`` may contain ``per_patch`` (detections in patch-local
    coordinates returned for every patch) and/or ``global`` (detections in
    map coordinates, reported in local coordinates by every patch whose
    extent contains the box centre).
    """

    def __init__(self, fixture_dir=None, per_patch=None, global_dets=None):
        if fixture_dir is not None:
            doc = json.loads((Path(fixture_dir) / "detections.json").read_text(encoding="utf-8"))
            per_patch = doc.get("per_patch", [])
            global_dets = doc.get("global", [])
        self.per_patch = detections_from_json(per_patch or [])
        self.global_dets = detections_from_json(global_dets or [])

    def detect(self, patch):
        out = list(self.per_patch)
        ox, oy = patch.origin.x, patch.origin.y
        for d in self.global_dets:
            c = d.bbox.center
            if patch.bbox.contains(c):
                out.append(RawDetection(d.cls, d.bbox.translate(-ox, -oy), d.confidence))
        return out


class HttpDetectorClient:
    """POSTs ``{image}``; expects ``{"detections": [{class, bbox, confidence}]}``
    with patch-local boxes."""

    def __init__(self, endpoint: str, timeout: float = 120.0, api_key_env: str = API_KEY_ENV):
        self.endpoint = endpoint
        self.timeout = timeout
        self.api_key_env = api_key_env

    def detect(self, patch):
        doc = _post_json(self.endpoint, {"image": encode_png(patch.image)}, self.timeout, self.api_key_env)
        try:
            return detections_from_json(doc)
        except (KeyError, TypeError) as exc:
            raise ClientError(f"malformed detector response: {exc}") from exc


_KINDS = {
    "model": (StubModelClient, HttpModelClient),
    "matcher": (StubMatcherClient, HttpMatcherClient),
    "detector": (StubDetectorClient, HttpDetectorClient),
}


def client_from_spec(spec: str, kind: str = "model", base_dir=None):
    """Build a client from ``stub:<fixture dir>`` or ``http:<endpoint url>``."""
    if kind not in _KINDS:
        raise ValueError(f"unknown client kind {kind!r}")
    scheme, _, rest = spec.partition(":")
    stub_cls, http_cls = _KINDS[kind]
    if scheme == "stub":
        path = Path(rest)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return stub_cls(path)
    if scheme == "http":
        url = rest if rest.startswith("http") else "http:" + rest
        return http_cls(url)
    if scheme == "https":
        return http_cls(spec)
    raise ValueError(f"client spec must start with 'stub:' or 'http:', got {spec!r}")
