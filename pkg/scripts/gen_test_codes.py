#!/usr/bin/env python3
"""Generate the committed clean QR test fixtures.

Encodes four payloads at versions 1-4, checks that (a) each rendered code
round-trips through an independent decoder, and (b) the package's
required-pattern mask is consistent with the encoder's output. Writes module
grids (1 px per module, no margin) and standard renders (8 px per module,
4-module quiet zone) plus a manifest. Run from the repository root:

    python3 scripts/gen_test_codes.py
"""

import json
import pathlib
import sys

import cv2
import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from qrclean.imgops import write_image
from qrclean.qrgeom import (
    QrGeometry,
    infer_geometry,
    reinsert_patterns,
    render_modules,
    required_pattern_mask,
)

# (name, version, error-correction level, payload); code5 carries the
# strongest correction level so heavily corrupted restorations stay decodable
CODES = [
    ("code1", 1, "L", "Code 1"),
    ("code2", 2, "L", "Code 2 extra pad"),
    ("code3", 3, "L", "Code 3 with longer payload text"),
    ("code4", 4, "L", "Code 4 with an even longer payload text here"),
    ("code5", 1, "H", "Code 5"),
]

EC_LEVELS = {
    "L": cv2.QRCODE_ENCODER_CORRECT_LEVEL_L,
    "M": cv2.QRCODE_ENCODER_CORRECT_LEVEL_M,
    "Q": cv2.QRCODE_ENCODER_CORRECT_LEVEL_Q,
    "H": cv2.QRCODE_ENCODER_CORRECT_LEVEL_H,
}


def encode(version: int, payload: str, ec: str) -> np.ndarray:
    params = cv2.QRCodeEncoder_Params()
    params.version = version
    params.correction_level = EC_LEVELS[ec]
    enc = cv2.QRCodeEncoder_create(params)
    grid = enc.encode(payload)
    # the encoder wraps the symbol in a fixed 2-module white border
    assert (grid[:2] == 255).all() and (grid[:, :2] == 255).all()
    grid = grid[2:-2, 2:-2]
    n = 17 + 4 * version
    assert grid.shape == (n, n), f"v{version}: got shape {grid.shape}"
    assert grid[0, 0] == 0, "finder corner should be dark"
    return grid == 0  # True = dark module


def decode_check(img01: np.ndarray, expected: str) -> None:
    img = (np.clip(img01, 0, 1) * 255).astype(np.uint8)
    for det in (cv2.QRCodeDetectorAruco(), cv2.QRCodeDetector()):
        got, _, _ = det.detectAndDecode(img)
        if got == expected:
            return
    raise SystemExit(f"fixture does not decode to {expected!r}")


def main() -> None:
    root = pathlib.Path(__file__).resolve().parents[1]
    mod_dir = root / "tests" / "data" / "modules"
    code_dir = root / "tests" / "data" / "codes"
    mod_dir.mkdir(parents=True, exist_ok=True)
    code_dir.mkdir(parents=True, exist_ok=True)

    manifest = {}
    for name, version, ec, payload in CODES:
        dark = encode(version, payload, ec)
        geom = QrGeometry.for_version(version, module_px=8, quiet_modules=4)
        img = render_modules(dark, geom.module_px, geom.quiet_px)
        decode_check(img, payload)

        # the fixed-pattern mask must reproduce the encoder's own pixels
        mask = required_pattern_mask(geom)
        assert np.array_equal(reinsert_patterns(img, mask), img), f"v{version}: mask mismatch"
        inferred = infer_geometry(img)
        assert inferred == geom, f"v{version}: inferred {inferred}"

        write_image(mod_dir / f"{name}.png", render_modules(dark, 1, 0))
        write_image(code_dir / f"{name}.png", img)
        manifest[name] = {"version": version, "modules": int(dark.shape[0]),
                          "ec": ec, "payload": payload}
        print(f"{name}: v{version}-{ec} {dark.shape[0]} modules, payload {payload!r}")

    with open(root / "tests" / "data" / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print("wrote", root / "tests" / "data" / "manifest.json")


if __name__ == "__main__":
    main()
