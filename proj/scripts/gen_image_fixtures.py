#!/usr/bin/env python3
"""Writes tests/fixtures/images/* and manifest.csv.

Expected values come from how each file is built. Pillow reopens every
well-formed file to confirm its size; broken files are assembled by hand.
"""

import csv
import io
import struct
from pathlib import Path

from PIL import Image

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "images"

rows = []


def pillow(name, fmt, mime, size, mode="RGB", color=(200, 30, 30), **save):
    img = Image.new(mode, size, color)
    buf = io.BytesIO()
    img.save(buf, fmt, **save)
    data = buf.getvalue()
    with Image.open(io.BytesIO(data)) as check:
        assert check.size == size, (name, check.size)
    emit(name, data, mime, size, error="")


def emit(name, data, mime, size, error):
    (OUT / name).write_bytes(data)
    w, h = ("", "") if size is None else size
    if size is None:
        invisible = 0
    elif mime == "image/svg+xml":
        invisible = int(w <= 1 and h <= 1)
    else:
        invisible = int(w == 1 and h == 1)
    rows.append({"filename": name, "mime": mime, "width": fmt_num(w), "height": fmt_num(h),
                 "invisible": invisible, "error": error})


def fmt_num(v):
    if v == "":
        return ""
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def svg(name, attrs, size, prolog=False, root="svg"):
    body = f'<{root} xmlns="http://www.w3.org/2000/svg" {attrs}><rect width="1" height="1"/></{root}>'
    if root != "svg":
        body = body.replace('xmlns=', 'xmlns:svg=')
    text = ('<?xml version="1.0" encoding="UTF-8"?>\n<!-- pixel -->\n' if prolog else "") + body
    emit(name, text.encode(), "image/svg+xml", size, error="")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for old in OUT.iterdir():
        old.unlink()

    pillow("gif_1x1.gif", "GIF", "image/gif", (1, 1), mode="P", color=0)
    pillow("gif_400x300.gif", "GIF", "image/gif", (400, 300), mode="P", color=3)
    pillow("gif_1x2.gif", "GIF", "image/gif", (1, 2), mode="P", color=1)
    pillow("png_1x1_rgba.png", "PNG", "image/png", (1, 1), mode="RGBA", color=(0, 0, 0, 0))
    pillow("png_640x480.png", "PNG", "image/png", (640, 480))
    pillow("png_1x1_gray16.png", "PNG", "image/png", (1, 1), mode="I;16", color=7)
    pillow("png_300x1.png", "PNG", "image/png", (300, 1))
    pillow("jpeg_1x1.jpg", "JPEG", "image/jpeg", (1, 1))
    pillow("jpeg_300x200.jpg", "JPEG", "image/jpeg", (300, 200), quality=80)
    pillow("jpeg_progressive_120x90.jpg", "JPEG", "image/jpeg", (120, 90), progressive=True)
    exif = Image.Exif()
    exif[0x010F] = "fixture-camera"
    pillow("jpeg_exif_50x40.jpg", "JPEG", "image/jpeg", (50, 40), exif=exif.tobytes())
    pillow("webp_lossy_1x1.webp", "WEBP", "image/webp", (1, 1), quality=50)
    pillow("webp_lossy_320x240.webp", "WEBP", "image/webp", (320, 240), quality=50)
    pillow("webp_lossless_64x32.webp", "WEBP", "image/webp", (64, 32), lossless=True)
    pillow("webp_alpha_20x10.webp", "WEBP", "image/webp", (20, 10), mode="RGBA", color=(9, 9, 9, 128),
           quality=50)
    pillow("bmp_2x3.bmp", "BMP", "image/bmp", (2, 3))
    pillow("bmp_1x1.bmp", "BMP", "image/bmp", (1, 1))

    svg("svg_1x1.svg", 'width="1" height="1"', (1, 1))
    svg("svg_1px_prolog.svg", 'width="1px" height="1px"', (1, 1), prolog=True)
    svg("svg_100x50.svg", 'width="100" height="50"', (100, 50))
    svg("svg_half_pixel.svg", 'width="0.5" height="0.5"', (0.5, 0.5))
    svg("svg_viewbox_only.svg", 'viewBox="0 0 1 1"', None)
    svg("svg_percent.svg", 'width="100%" height="1"', None)
    svg("svg_prefixed_1x1.svg", 'width="1" height="1"', (1, 1), root="svg:svg")

    # Hand-assembled failures.
    png_full = (OUT / "png_640x480.png").read_bytes()
    emit("png_truncated.png", png_full[:20], "image/png", None, error="truncated")
    emit("gif_truncated.gif", b"GIF89a\x01", "image/gif", None, error="truncated")
    emit("jpeg_truncated.jpg", b"\xff\xd8\xff\xe0\x00\x10JFIF", "image/jpeg", None, error="truncated")
    gif_zero = b"GIF89a" + struct.pack("<HH", 0, 0) + b"\x00\x00\x00" + b";"
    emit("gif_0x0.gif", gif_zero, "image/gif", None, error="zero_dimension")
    ihdr = struct.pack(">IIBBBBB", 0, 16, 8, 2, 0, 0, 0)
    png_zero = b"\x89PNG\r\n\x1a\n" + struct.pack(">I", 13) + b"IHDR" + ihdr + b"\x00\x00\x00\x00"
    emit("png_0x16.png", png_zero, "image/png", None, error="zero_dimension")
    # Scan data before any frame header.
    jpeg_sos_first = b"\xff\xd8" + b"\xff\xda\x00\x08\x01\x01\x00\x00\x3f\x00" + b"\x00" * 8 + b"\xff\xd9"
    emit("jpeg_no_sof.jpg", jpeg_sos_first, "image/jpeg", None, error="unsupported_variant")
    emit("html_not_image.png", b"<!doctype html><title>404</title>", "application/octet-stream", None,
         error="unsupported_variant")

    with open(OUT / "manifest.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["filename", "mime", "width", "height", "invisible", "error"],
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} fixtures to {OUT}")


if __name__ == "__main__":
    main()
