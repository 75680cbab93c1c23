import json
import os

import numpy as np
import pytest

from qrclean.imgops import read_image
from qrclean.qrgeom import QrGeometry, infer_geometry, render_modules

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
CODES_DIR = os.path.join(DATA_DIR, "codes")
MODULES_DIR = os.path.join(DATA_DIR, "modules")

with open(os.path.join(DATA_DIR, "manifest.json"), encoding="utf-8") as fh:
    MANIFEST = json.load(fh)

CODE_IDS = sorted(MANIFEST)


def code_path(code_id: str) -> str:
    return os.path.join(CODES_DIR, code_id + ".png")


def load_code(code_id: str) -> np.ndarray:
    return read_image(code_path(code_id))


def load_modules(code_id: str) -> np.ndarray:
    """Boolean module grid (True = dark) of a fixture code."""
    raster = read_image(os.path.join(MODULES_DIR, code_id + ".png"))
    return raster == 0.0


def payload_of(code_id: str) -> str:
    return MANIFEST[code_id]["payload"]


@pytest.fixture(scope="session")
def code1():
    return load_code("code1")


@pytest.fixture(scope="session")
def code1_geometry(code1):
    return infer_geometry(code1)


@pytest.fixture(scope="session")
def small_code():
    """code1 re-rendered at 2px modules: 58x58, cheap enough for flow tests."""
    return render_modules(load_modules("code1"), module_px=2, quiet_px=8)


@pytest.fixture(scope="session")
def small_geometry(small_code):
    return infer_geometry(small_code)


@pytest.fixture(scope="session")
def code_128():
    """code1 rendered to exactly 128x128 (4px modules, 22px quiet margin)."""
    img = render_modules(load_modules("code1"), module_px=4, quiet_px=22)
    assert img.shape == (128, 128)
    return img


@pytest.fixture(scope="session")
def geometry_128():
    return QrGeometry(module_px=4, modules=21, quiet_px=22)
