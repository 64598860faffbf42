"""Base64 PNG codecs shared by the HTTP service and the remote client."""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

from .core import BinaryMask, ImageGrid
from .exceptions import ValidationError


def encode_image_b64(img: ImageGrid) -> str:
    buf = io.BytesIO()
    arr = np.round(img.data * 255.0).astype(np.uint8)
    pil = Image.fromarray(arr[:, :, 0], mode="L") if img.channels == 1 else Image.fromarray(arr, mode="RGB")
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image_b64(payload: str, channels: int | None = 1) -> ImageGrid:
    try:
        raw = base64.b64decode(payload, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.float64)[:, :, None] / 255.0
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except ValidationError:
        raise
    except Exception as e:
        raise ValidationError(f"not a base64 PNG image: {e}") from e
    if channels == 1 and arr.shape[2] == 3:
        arr = arr.mean(axis=2, keepdims=True)
    return ImageGrid(arr)


def encode_mask_b64(mask: BinaryMask) -> str:
    buf = io.BytesIO()
    Image.fromarray(mask.data * np.uint8(255), mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_mask_b64(payload: str) -> BinaryMask:
    try:
        raw = base64.b64decode(payload, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except Exception as e:
        raise ValidationError(f"not a base64 PNG mask: {e}") from e
    return BinaryMask((arr >= 0.5).astype(np.uint8))
