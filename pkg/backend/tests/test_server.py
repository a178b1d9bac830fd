import base64
import io
import threading

import numpy as np
import PIL.Image
import pytest
import requests

from reinpaint_backend.inpainters import INPAINTERS
from reinpaint_backend.server import make_server


def png_b64(arr, mode):
    buf = io.BytesIO()
    PIL.Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_reply(b64_text):
    raw = base64.b64decode(b64_text)
    return np.asarray(PIL.Image.open(io.BytesIO(raw)))


def rgb(h, w, seed):
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)


def mask_png(keep):
    return png_b64(np.where(keep, 255, 0).astype(np.uint8), "L")


@pytest.fixture(scope="module", params=["identity", "nearest"])
def service(request):
    server = make_server("127.0.0.1", 0, INPAINTERS[request.param], request.param)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}"
    yield url, request.param
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


class TestHealth:
    def test_health_reports_name(self, service):
        url, name = service
        resp = requests.get(f"{url}/health", timeout=10)
        assert resp.status_code == 200
        assert resp.json() == {"name": name}

    def test_unknown_path_404(self, service):
        url, _ = service
        assert requests.get(f"{url}/nope", timeout=10).status_code == 404


class TestInpaintEndpoint:
    def post(self, url, body):
        return requests.post(f"{url}/inpaint", json=body, timeout=30)

    def test_keep_region_round_trips_exactly(self, service):
        url, _ = service
        img = rgb(12, 10, 0)
        keep = np.random.default_rng(1).random((12, 10)) > 0.4
        keep[0, 0] = True
        resp = self.post(url, {"image": png_b64(img, "RGB"),
                               "mask": mask_png(keep), "seed": 7})
        assert resp.status_code == 200
        out = decode_reply(resp.json()["image"])
        assert out.shape == img.shape
        assert np.array_equal(out[keep], img[keep])

    def test_identity_full_image_bit_exact(self, service):
        url, name = service
        if name != "identity":
            pytest.skip("identity only")
        img = rgb(16, 16, 2)
        keep = np.ones((16, 16), dtype=bool)
        resp = self.post(url, {"image": png_b64(img, "RGB"),
                               "mask": mask_png(keep), "seed": 0})
        assert np.array_equal(decode_reply(resp.json()["image"]), img)

    def test_nearest_constant_stays_constant(self, service):
        url, name = service
        if name != "nearest":
            pytest.skip("nearest only")
        img = np.full((8, 8, 3), 99, dtype=np.uint8)
        keep = np.zeros((8, 8), dtype=bool)
        keep[2, 2] = True
        resp = self.post(url, {"image": png_b64(img, "RGB"),
                               "mask": mask_png(keep), "seed": 0})
        assert np.all(decode_reply(resp.json()["image"]) == 99)

    def test_malformed_json_is_400(self, service):
        url, _ = service
        resp = requests.post(f"{url}/inpaint", data=b"{broken", timeout=10)
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_bad_base64_is_400(self, service):
        url, _ = service
        resp = self.post(url, {"image": "@@not-b64@@", "mask": "@@", "seed": 0})
        assert resp.status_code == 400

    def test_undecodable_png_is_400(self, service):
        url, _ = service
        junk = base64.b64encode(b"png? no.").decode()
        resp = self.post(url, {"image": junk, "mask": junk, "seed": 0})
        assert resp.status_code == 400

    def test_dimension_mismatch_is_422(self, service):
        url, _ = service
        img = rgb(8, 8, 3)
        keep = np.ones((4, 4), dtype=bool)
        resp = self.post(url, {"image": png_b64(img, "RGB"),
                               "mask": mask_png(keep), "seed": 0})
        assert resp.status_code == 422
        assert "mismatch" in resp.json()["error"]

    def test_grayscale_image_promoted(self, service):
        url, _ = service
        gray = np.arange(64, dtype=np.uint8).reshape(8, 8)
        keep = np.ones((8, 8), dtype=bool)
        resp = self.post(url, {"image": png_b64(gray, "L"),
                               "mask": mask_png(keep), "seed": 0})
        assert resp.status_code == 200
        out = decode_reply(resp.json()["image"])
        assert np.array_equal(out[:, :, 0], gray)
        assert np.array_equal(out[:, :, 0], out[:, :, 1])


class TestInpainterCrash:
    def test_exception_becomes_500(self):
        def broken(image, keep, seed):
            raise RuntimeError("model exploded")

        server = make_server("127.0.0.1", 0, broken, "broken")
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_address[1]}"
            img = rgb(4, 4, 4)
            keep = np.zeros((4, 4), dtype=bool)
            resp = requests.post(f"{url}/inpaint", json={
                "image": png_b64(img, "RGB"), "mask": mask_png(keep), "seed": 0,
            }, timeout=10)
            assert resp.status_code == 500
            assert "model exploded" in resp.json()["error"]
        finally:
            server.shutdown()
            server.server_close()
            thread.join(timeout=5)
