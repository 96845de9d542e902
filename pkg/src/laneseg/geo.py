"""Acquisition pipeline: device location, street-view metadata and imagery,
and the composed locate-fetch-segment flow.

All HTTP goes through a Transport so the identical pipeline can run live,
replay recorded fixtures from a directory, record new fixtures, or prove
that no network contact happens at all. Fixture files are named by the
first 16 hex chars of sha256(method + "\n" + url) and hold a status line,
a blank line, and the raw body bytes.

API keys come from an explicit argument or the LANESEG_API_KEY environment
variable and are redacted from every error message.
"""

import hashlib
import io
import json
import os
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .data import image_to_tensor, resize_bilinear, tensor_to_image
from .errors import (
    ApiStatusError,
    AuthorizationError,
    ContentTypeError,
    ContractViolation,
    FixtureMissingError,
    LanesegError,
    NetworkContactError,
    PipelineStageError,
    ResponseParseError,
    ResponseSchemaError,
    TransportError,
)
from .model import forward
from .tensor import argmax_channel

API_KEY_ENV = "LANESEG_API_KEY"
GEOLOCATE_URL = "https://www.googleapis.com/geolocation/v1/geolocate?key={key}"
STREETVIEW_URL = "https://maps.googleapis.com/maps/api/streetview"
METADATA_URL = "https://maps.googleapis.com/maps/api/streetview/metadata"

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
JPEG_SIGNATURE = b"\xff\xd8\xff"


@dataclass
class GeoLocation:
    lat: float
    lng: float
    accuracy_m: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ContractViolation(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lng <= 180.0:
            raise ContractViolation(f"longitude {self.lng} outside [-180, 180]")
        if self.accuracy_m < 0:
            raise ContractViolation(f"accuracy {self.accuracy_m} must be >= 0 meters")


@dataclass
class StreetViewRequest:
    location: GeoLocation
    size: tuple = (640, 320)
    heading: float = 0.0
    fov: float = 90.0
    api_key: str = ""

    def __post_init__(self):
        w, h = self.size
        if not (1 <= w <= 640 and 1 <= h <= 640):
            raise ContractViolation(f"size {self.size} exceeds the 640x640 limit")
        if not 0.0 <= self.heading < 360.0:
            raise ContractViolation(f"heading {self.heading} outside [0, 360)")
        if not 0.0 < self.fov <= 120.0:
            raise ContractViolation(f"fov {self.fov} outside (0, 120]")


@dataclass
class MetadataResult:
    available: bool
    pano_id: str = None


@dataclass
class NoImagery:
    """Typed pipeline outcome: the location has no street-view coverage."""

    location: GeoLocation


@dataclass
class PredictionBundle:
    location: GeoLocation
    pano_id: str
    source: np.ndarray   # (h, w, 3) uint8, at model input dims
    mask: np.ndarray     # (h, w) uint8 in {0, 255}
    overlay: np.ndarray  # (h, w, 3) uint8


def resolve_api_key(explicit=None):
    """Key from the explicit argument, else the environment; None when absent."""
    if explicit:
        return explicit
    return os.environ.get(API_KEY_ENV) or None


def redact_key(text):
    """Strip API keys out of URLs before they reach logs or error messages."""
    return re.sub(r"(key=)[^&\s]+", r"\1REDACTED", text)


def request_digest(method, url):
    return hashlib.sha256(f"{method}\n{url}".encode("utf-8")).hexdigest()[:16]


class LiveTransport:
    """Real HTTP requests via httpx."""

    def __init__(self, timeout=30.0):
        import httpx

        self._client = httpx.Client(timeout=timeout, follow_redirects=True)

    def request(self, method, url, body=None):
        import httpx

        try:
            resp = self._client.request(method, url, content=body)
        except httpx.HTTPError as exc:
            raise TransportError(
                f"request to {redact_key(url)} failed: "
                f"{redact_key(str(exc))}") from exc
        return resp.status_code, dict(resp.headers), resp.content

    def close(self):
        self._client.close()


class FixtureTransport:
    """Replay recorded responses from a directory, keyed by request digest."""

    def __init__(self, directory):
        self.directory = str(directory)

    def request(self, method, url, body=None):
        path = os.path.join(self.directory, request_digest(method, url) + ".resp")
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except FileNotFoundError:
            raise FixtureMissingError(
                f"no fixture {os.path.basename(path)} for {method} "
                f"{redact_key(url)}") from None
        head, sep, payload = raw.partition(b"\n\n")
        if not sep:
            raise ResponseParseError(f"fixture {path} lacks the blank separator line")
        try:
            status = int(head.decode("ascii").strip())
        except ValueError:
            raise ResponseParseError(f"fixture {path} has a bad status line") from None
        return status, {}, payload


class RecordingTransport:
    """Pass requests to an inner transport and write each response as a fixture."""

    def __init__(self, inner, directory):
        self.inner = inner
        self.directory = str(directory)
        os.makedirs(self.directory, exist_ok=True)

    def request(self, method, url, body=None):
        status, headers, payload = self.inner.request(method, url, body)
        path = os.path.join(self.directory, request_digest(method, url) + ".resp")
        with open(path, "wb") as fh:
            fh.write(str(status).encode("ascii") + b"\n\n" + payload)
        return status, headers, payload


class FailOnContactTransport:
    """Asserts that the code under test never reaches for the network."""

    def request(self, method, url, body=None):
        raise NetworkContactError(
            f"unexpected network contact: {method} {redact_key(url)}")


def write_fixture(directory, method, url, status, payload):
    """Store one canned response where FixtureTransport will find it."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, request_digest(method, url) + ".resp")
    with open(path, "wb") as fh:
        fh.write(str(status).encode("ascii") + b"\n\n" + payload)
    return path


def _get_json(transport, method, url, body=None, what="response"):
    status, _, payload = transport.request(method, url, body)
    if status != 200:
        raise TransportError(
            f"{what} endpoint returned HTTP {status}", status=status)
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise ResponseParseError(f"{what} body is not valid JSON: {exc}") from exc
    return doc


def geolocate(transport, api_key):
    """Current device location from the geolocation endpoint."""
    url = GEOLOCATE_URL.format(key=api_key)
    doc = _get_json(transport, "POST", url, body=b"{}", what="geolocation")
    try:
        loc = doc["location"]
        lat, lng, acc = loc["lat"], loc["lng"], doc["accuracy"]
    except (KeyError, TypeError) as exc:
        raise ResponseSchemaError(
            f"geolocation response missing field: {exc}") from exc
    return GeoLocation(lat=float(lat), lng=float(lng), accuracy_m=float(acc))


def format_coord(v):
    return f"{v:.6f}"


def format_angle(v):
    """Shortest exact decimal: integral values lose the trailing .0."""
    f = float(v)
    if f == int(f):
        return str(int(f))
    return repr(f)


def _query(req):
    w, h = req.size
    return (f"size={w}x{h}"
            f"&location={format_coord(req.location.lat)},{format_coord(req.location.lng)}"
            f"&heading={format_angle(req.heading)}"
            f"&fov={format_angle(req.fov)}"
            f"&key={req.api_key}")


def build_streetview_url(req):
    return f"{STREETVIEW_URL}?{_query(req)}"


def build_metadata_url(req):
    return f"{METADATA_URL}?{_query(req)}"


def streetview_metadata(transport, req):
    """Availability (and pano id) of imagery for the requested view."""
    doc = _get_json(transport, "GET", build_metadata_url(req),
                    what="street-view metadata")
    status = doc.get("status")
    if status == "OK":
        pano = doc.get("pano_id")
        if not pano:
            raise ResponseSchemaError("metadata says OK but carries no pano_id")
        return MetadataResult(available=True, pano_id=pano)
    if status == "ZERO_RESULTS":
        return MetadataResult(available=False)
    if status == "REQUEST_DENIED":
        raise AuthorizationError("street-view metadata: request denied "
                                 "(check the API key)")
    raise ApiStatusError(f"street-view metadata returned status {status!r}")


def looks_like_image(payload):
    return payload.startswith(PNG_SIGNATURE) or payload.startswith(JPEG_SIGNATURE)


def fetch_streetview(transport, req, cache_dir=None):
    """Raw image bytes for the view; a digest-keyed cache skips repeat calls."""
    url = build_streetview_url(req)
    cache_path = None
    if cache_dir:
        cache_path = os.path.join(cache_dir, request_digest("GET", url) + ".bin")
        if os.path.exists(cache_path):
            with open(cache_path, "rb") as fh:
                return fh.read()
    status, _, payload = transport.request("GET", url)
    if status != 200:
        raise TransportError(f"street-view image endpoint returned HTTP {status}",
                             status=status)
    if not looks_like_image(payload):
        raise ContentTypeError("street-view response is neither PNG nor JPEG")
    if cache_path:
        os.makedirs(cache_dir, exist_ok=True)
        with open(cache_path, "wb") as fh:
            fh.write(payload)
    return payload


def overlay_lane(source, lane):
    """Tint lane pixels of an (h, w, 3) uint8 image with 50% pure red."""
    tinted = (source.astype(np.uint16) + np.array([255, 0, 0], dtype=np.uint16)) // 2
    out = source.copy()
    out[lane.astype(bool)] = tinted[lane.astype(bool)].astype(np.uint8)
    return out


def _stage(name, fn):
    try:
        return fn()
    except LanesegError as exc:
        raise PipelineStageError(name, exc) from exc


def predict_at_current_location(transport, api_key, net,
                                size=(640, 320), heading=0.0, fov=90.0,
                                cache_dir=None):
    """Locate, check coverage, fetch, and segment the street-view image.

    Returns a PredictionBundle, or NoImagery when the metadata call reports
    no coverage. Any stage failure re-raises tagged with the stage name.
    """
    location = _stage("geolocate", lambda: geolocate(transport, api_key))
    req = StreetViewRequest(location=location, size=size, heading=heading,
                            fov=fov, api_key=api_key)
    meta = _stage("metadata", lambda: streetview_metadata(transport, req))
    if not meta.available:
        return NoImagery(location=location)
    payload = _stage("fetch", lambda: fetch_streetview(transport, req, cache_dir))

    def decode():
        try:
            with Image.open(io.BytesIO(payload)) as img:
                return np.asarray(img.convert("RGB"), dtype=np.uint8)
        except Exception as exc:
            raise ContentTypeError(f"street-view image does not decode: {exc}") from exc

    pixels = _stage("decode", decode)
    _, h, w = net.config.input_dims
    resized = resize_bilinear(image_to_tensor(pixels), (h, w))
    probs, _ = _stage("forward", lambda: forward(net, resized))
    lane = argmax_channel(probs)[0, 0].astype(np.uint8)
    source = tensor_to_image(resized)
    return PredictionBundle(
        location=location,
        pano_id=meta.pano_id,
        source=source,
        mask=lane * np.uint8(255),
        overlay=overlay_lane(source, lane),
    )
