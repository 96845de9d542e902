"""Regenerate the bundled street-view fixtures under tests/fixtures/.

Two directories come out of this: a happy-path set whose image payload is a
synthetic lane scene rendered by the package's own generator, and a
zero-results set for the no-coverage exit path. Both replay byte-for-byte,
so the pipeline tests never touch the network.

Run from the repository root:

    python3 scripts/make_fixtures.py
"""

import io
import json
import os
import shutil
import sys

import numpy as np
from PIL import Image

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from laneseg.data import generate_synthetic_lane, tensor_to_image  # noqa: E402
from laneseg.geo import (  # noqa: E402
    GeoLocation,
    StreetViewRequest,
    build_metadata_url,
    build_streetview_url,
    write_fixture,
)
from laneseg.tensor import Rng  # noqa: E402

API_KEY = "test"
LOCATION = GeoLocation(lat=12.9876, lng=77.5432, accuracy_m=20.0)
PANO_ID = "fixture-pano-0001"
SIZE = (640, 320)  # WxH, the street-view request default
IMAGE_SEED = 2024


def lane_scene_png(seed, size):
    """Render a deterministic synthetic lane scene as PNG bytes."""
    w, h = size
    sample = generate_synthetic_lane(Rng(seed), (h, w))
    pixels = tensor_to_image(sample.image)
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def write_set(directory, metadata_doc, image_payload=None):
    shutil.rmtree(directory, ignore_errors=True)
    geolocate_url = ("https://www.googleapis.com/geolocation/v1/geolocate"
                     f"?key={API_KEY}")
    geolocate_doc = {
        "location": {"lat": LOCATION.lat, "lng": LOCATION.lng},
        "accuracy": LOCATION.accuracy_m,
    }
    write_fixture(directory, "POST", geolocate_url, 200,
                  json.dumps(geolocate_doc).encode())
    req = StreetViewRequest(location=LOCATION, size=SIZE, api_key=API_KEY)
    write_fixture(directory, "GET", build_metadata_url(req), 200,
                  json.dumps(metadata_doc).encode())
    if image_payload is not None:
        write_fixture(directory, "GET", build_streetview_url(req), 200,
                      image_payload)
    print(f"{directory}: {len(os.listdir(directory))} fixtures")


def main():
    root = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")
    write_set(
        os.path.join(root, "streetview"),
        {"status": "OK", "pano_id": PANO_ID,
         "location": {"lat": LOCATION.lat, "lng": LOCATION.lng}},
        image_payload=lane_scene_png(IMAGE_SEED, SIZE),
    )
    write_set(
        os.path.join(root, "streetview_zero_results"),
        {"status": "ZERO_RESULTS"},
    )


if __name__ == "__main__":
    main()
