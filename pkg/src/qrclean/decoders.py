"""Reference QR decoder command for the benchmark harness.

Runs as ``python3 -m qrclean.decoders IMAGE`` and prints the decoded payload
on success (exit status 0). Any failure to decode exits nonzero with empty
stdout, which is the shape the harness's external-adapter contract expects.

OpenCV is an optional dependency of the package; any other decoder program
with the same exit/stdout convention can be plugged into the harness instead.
"""

from __future__ import annotations

import sys


def decode_file(path: str) -> str | None:
    """Decode one QR image file, returning the payload text or None."""
    try:
        import cv2
    except ImportError as exc:  # pragma: no cover - environment dependent
        raise RuntimeError(
            "the bundled decoder needs opencv-python-headless; "
            "install the [decoder] extra or plug in another decoder command"
        ) from exc

    img = cv2.imread(path, cv2.IMREAD_GRAYSCALE)
    if img is None:
        return None
    # The Aruco-based detector is markedly better on damaged codes; fall back
    # to the classic detector when it finds nothing.
    for det in (cv2.QRCodeDetectorAruco(), cv2.QRCodeDetector()):
        try:
            text, points, _ = det.detectAndDecode(img)
        except cv2.error:
            continue
        if points is not None and text:
            return text
    return None


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 1:
        print("usage: python3 -m qrclean.decoders IMAGE", file=sys.stderr)
        return 2
    payload = decode_file(args[0])
    if payload is None:
        return 1
    print(payload)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
