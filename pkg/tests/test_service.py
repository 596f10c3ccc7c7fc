import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from texinpaint.masks import gen_freeform, hole_ratio, classify
from texinpaint.service import create_app


@pytest.fixture(scope="module")
def client(tiny_checkpoint):
    app = create_app(str(tiny_checkpoint))
    with TestClient(app) as c:
        yield c


def _png_bytes(arr: np.ndarray, mode: str) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def _random_rgb(rng, h=256, w=256) -> np.ndarray:
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def _mask_bytes(mask: np.ndarray) -> bytes:
    return _png_bytes((mask * 255).astype(np.uint8), "L")


def _decode_result(b64: str) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(base64.b64decode(b64))))


def test_healthz(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    assert resp.text == "ok"


def test_model_info(client):
    resp = client.get("/model")
    assert resp.status_code == 200
    info = resp.json()
    assert 3.0e6 * 0.85 <= info["params"] <= 3.0e6 * 1.15
    assert 9.5 * 0.85 <= info["gflops"] <= 9.5 * 1.15
    assert info["stages"] == [32, 64, 128, 256]
    assert info["blind"] is False


def test_inpaint_happy_path(client):
    rng = np.random.default_rng(0)
    img = _random_rgb(rng)
    mask = gen_freeform(256, 256, "20-30", seed=1)
    resp = client.post(
        "/inpaint",
        files={"image": ("i.png", _png_bytes(img, "RGB")), "mask": ("m.png", _mask_bytes(mask))},
    )
    assert resp.status_code == 200
    body = resp.json()
    out = _decode_result(body["result_png"])
    assert out.shape == (256, 256, 3)
    assert body["width"] == 256 and body["height"] == 256
    assert body["hole_ratio"] == pytest.approx(hole_ratio(mask))
    assert body["bin"] == classify(mask)
    assert body["latency_ms"] > 0
    assert body["pyramid_png"] is None
    # composite mode keeps the known pixels byte-identical
    known = mask == 1.0
    assert np.array_equal(out[known], img[known])


def test_inpaint_all_known_mask_is_identity(client):
    rng = np.random.default_rng(1)
    img = _random_rgb(rng)
    mask = np.ones((256, 256), dtype=np.float32)
    resp = client.post(
        "/inpaint",
        files={"image": ("i.png", _png_bytes(img, "RGB")), "mask": ("m.png", _mask_bytes(mask))},
    )
    assert resp.status_code == 200
    out = _decode_result(resp.json()["result_png"])
    assert np.array_equal(out, img)


def test_inpaint_returns_pyramid(client):
    rng = np.random.default_rng(2)
    img = _random_rgb(rng)
    mask = gen_freeform(256, 256, "10-20", seed=2)
    resp = client.post(
        "/inpaint",
        files={"image": ("i.png", _png_bytes(img, "RGB")), "mask": ("m.png", _mask_bytes(mask))},
        data={"return_pyramid": "true"},
    )
    assert resp.status_code == 200
    pyr = resp.json()["pyramid_png"]
    assert set(pyr) == {"32", "64", "128"}
    for n, b64 in pyr.items():
        thumb = _decode_result(b64)
        assert thumb.shape == (int(n), int(n), 3)


def test_inpaint_arbitrary_size_resizes_back(client):
    rng = np.random.default_rng(3)
    img = _random_rgb(rng, h=100, w=180)
    mask = np.ones((100, 180), dtype=np.float32)
    mask[30:70, 40:120] = 0.0
    resp = client.post(
        "/inpaint",
        files={"image": ("i.png", _png_bytes(img, "RGB")), "mask": ("m.png", _mask_bytes(mask))},
    )
    assert resp.status_code == 200
    body = resp.json()
    out = _decode_result(body["result_png"])
    assert out.shape == (100, 180, 3)
    known = mask == 1.0
    assert np.array_equal(out[known], img[known])


def test_inpaint_deterministic(client):
    rng = np.random.default_rng(4)
    img = _random_rgb(rng)
    mask = gen_freeform(256, 256, "30-40", seed=3)
    files = {"image": ("i.png", _png_bytes(img, "RGB")), "mask": ("m.png", _mask_bytes(mask))}
    a = client.post("/inpaint", files=files).json()["result_png"]
    b = client.post("/inpaint", files=files).json()["result_png"]
    assert a == b


def test_inpaint_size_mismatch_is_400(client):
    rng = np.random.default_rng(5)
    img = _random_rgb(rng, 256, 256)
    mask = np.ones((128, 128), dtype=np.float32)
    resp = client.post(
        "/inpaint",
        files={"image": ("i.png", _png_bytes(img, "RGB")), "mask": ("m.png", _mask_bytes(mask))},
    )
    assert resp.status_code == 400
    assert resp.json()["detail"]["code"] == "size_mismatch"


def test_inpaint_malformed_image_is_400(client):
    resp = client.post(
        "/inpaint",
        files={"image": ("i.png", b"not a png"), "mask": ("m.png", b"nor this")},
    )
    assert resp.status_code == 400
    assert resp.json()["detail"]["code"] == "malformed_image"


def test_inpaint_missing_mask_is_400_for_conditioned_model(client):
    rng = np.random.default_rng(6)
    img = _random_rgb(rng)
    resp = client.post("/inpaint", files={"image": ("i.png", _png_bytes(img, "RGB"))})
    assert resp.status_code == 400
    assert resp.json()["detail"]["code"] == "missing_mask"


def test_missing_checkpoint_fails_startup(tmp_path):
    with pytest.raises(FileNotFoundError):
        create_app(str(tmp_path / "missing.ckpt"))


def test_random_init_app_serves():
    app = create_app(None)
    with TestClient(app) as c:
        assert c.get("/healthz").text == "ok"
        assert c.get("/model").status_code == 200
