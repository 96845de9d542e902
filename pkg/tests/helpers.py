"""Shared helpers for the test suite."""

import io
import json

import numpy as np
from PIL import Image

from laneseg.geo import GeoLocation, StreetViewRequest, build_metadata_url, \
    build_streetview_url, write_fixture
from laneseg.model import NetworkConfig


def tiny_config(**overrides):
    """Smallest two-block architecture that exercises every layer kind."""
    kwargs = dict(input_dims=(2, 8, 16), encoder_filters=(4, 8))
    kwargs.update(overrides)
    return NetworkConfig(**kwargs)


def png_bytes(h=4, w=4, value=128):
    """A solid-color RGB PNG as raw bytes."""
    img = Image.fromarray(np.full((h, w, 3), value, dtype=np.uint8), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def seed_pipeline_fixtures(directory, key="test", metadata_doc=None,
                           size=(640, 320), heading=0.0, fov=90.0):
    """Write the three canned responses the full pipeline walks through."""
    geoloc_url = f"https://www.googleapis.com/geolocation/v1/geolocate?key={key}"
    write_fixture(directory, "POST", geoloc_url, 200, json.dumps(
        {"location": {"lat": 12.9876, "lng": 77.5432}, "accuracy": 20.0}).encode())
    loc = GeoLocation(lat=12.9876, lng=77.5432, accuracy_m=20.0)
    req = StreetViewRequest(location=loc, size=size, heading=heading,
                            fov=fov, api_key=key)
    doc = metadata_doc or {"status": "OK", "pano_id": "pano-test-1"}
    write_fixture(directory, "GET", build_metadata_url(req), 200,
                  json.dumps(doc).encode())
    if doc.get("status") == "OK":
        write_fixture(directory, "GET", build_streetview_url(req), 200,
                      png_bytes(h=size[1], w=size[0]))
