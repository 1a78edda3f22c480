"""Raster decoding (PNG, PPM P6) and corner-aligned bilinear resizing.

Images are float32 arrays of shape (3, h, w) with values in [0, 1]. PPM P6
is parsed by hand so malformed fixtures fail with exact byte offsets and
round-trips are bit-exact; PNG goes through Pillow.
"""

import io

import numpy as np
from PIL import Image as PILImage

from .. import tensor as T
from ..errors import DecodeError, FormatError, ShapeError, ValidationError

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_PPM_WHITESPACE = b" \t\r\n\x0b\x0c"


def _check_image(img: np.ndarray, what: str) -> None:
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"{what} expects a (3, h, w) image, got shape {img.shape}")


def _decode_ppm(data: bytes) -> np.ndarray:
    pos = 2  # past the b"P6" magic the dispatcher already matched

    def next_token(what: str) -> tuple[bytes, int]:
        nonlocal pos
        while pos < len(data):
            byte = data[pos]
            if byte in _PPM_WHITESPACE:
                pos += 1
            elif byte == ord("#"):
                while pos < len(data) and data[pos] != ord("\n"):
                    pos += 1
            else:
                break
        if pos >= len(data):
            raise DecodeError(f"PPM truncated before {what}", offset=pos)
        start = pos
        while pos < len(data) and data[pos] not in _PPM_WHITESPACE:
            pos += 1
        return data[start:pos], start

    def int_token(what: str) -> int:
        token, start = next_token(what)
        try:
            value = int(token)
        except ValueError:
            raise DecodeError(f"PPM {what} is not an integer: {token!r}", offset=start)
        if value <= 0:
            raise DecodeError(f"PPM {what} must be positive, got {value}", offset=start)
        return value

    width = int_token("width")
    height = int_token("height")
    maxval_token, maxval_offset = next_token("maxval")
    if maxval_token != b"255":
        raise DecodeError(
            f"PPM maxval must be 255, got {maxval_token!r}", offset=maxval_offset
        )
    if pos >= len(data) or data[pos] not in _PPM_WHITESPACE:
        raise DecodeError("PPM maxval must be followed by one whitespace byte", offset=pos)
    pos += 1
    needed = 3 * width * height
    payload = data[pos : pos + needed]
    if len(payload) < needed:
        raise DecodeError(
            f"PPM pixel data truncated: need {needed} bytes, have {len(payload)}",
            offset=pos,
        )
    if pos + needed != len(data):
        raise DecodeError("trailing bytes after PPM pixel data", offset=pos + needed)
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return (pixels.transpose(2, 0, 1).astype(T.DTYPE)) / T.DTYPE(255)


def _decode_png(data: bytes) -> np.ndarray:
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            im.load()
            rgb = im.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8)
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"malformed PNG: {exc}", offset=0) from exc
    return (pixels.transpose(2, 0, 1).astype(T.DTYPE)) / T.DTYPE(255)


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG or PPM (P6) bytes to a (3, h, w) float32 image in [0, 1]."""
    if data[:8] == _PNG_SIGNATURE:
        return _decode_png(data)
    if data[:2] == b"P6":
        return _decode_ppm(data)
    raise FormatError("unsupported image format (expected PNG or PPM P6)", offset=0)


def encode_ppm(img: np.ndarray) -> bytes:
    """Quantize to 8-bit and serialize as binary PPM (P6, maxval 255)."""
    _check_image(img, "encode_ppm")
    _, h, w = img.shape
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.transpose(1, 2, 0).tobytes()


def write_png(path, img: np.ndarray) -> None:
    """Quantize to 8-bit RGB and write a PNG file."""
    _check_image(img, "write_png")
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(pixels.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize; resizing to the same size is identity."""
    _check_image(img, "resize_bilinear")
    if out_h < 1 or out_w < 1:
        raise ValidationError(f"resize target must be >= 1x1, got {out_h}x{out_w}")
    _, h, w = img.shape
    if (out_h, out_w) == (h, w):
        return img.copy()

    def axis_coords(n_in: int, n_out: int):
        if n_out == 1:
            src = np.zeros(1)
        else:
            src = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        lo = np.floor(src).astype(np.int64)
        lo = np.minimum(lo, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = (src - lo).astype(img.dtype)
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    v00 = img[:, y0[:, None], x0[None, :]]
    v01 = img[:, y0[:, None], x1[None, :]]
    v10 = img[:, y1[:, None], x0[None, :]]
    v11 = img[:, y1[:, None], x1[None, :]]
    top = v00 * (1 - fx) + v01 * fx
    bottom = v10 * (1 - fx) + v11 * fx
    return top * (1 - fy) + bottom * fy
