"""Acceptance: the evaluation harness completes a full run against this
service with zero protocol errors, and the identity inpainter yields an
exact-zero consistency score when the second masks are empty."""

import base64
import io
import threading

import numpy as np
import PIL.Image
import pytest
import requests

reinpaint = pytest.importorskip(
    "reinpaint", reason="protocol conformance drives the evaluation harness")

from reinpaint.config import EvalConfig, Objective
from reinpaint.image import save_image, ImageBuffer
from reinpaint.metrics import SubMetric
from reinpaint.pipeline import run

from reinpaint_backend.inpainters import INPAINTERS
from reinpaint_backend.server import make_server


def report_line(name, ok, detail=""):
    state = "PASS" if ok else "FAIL"
    print(f"{state} {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def identity_service():
    server = make_server("127.0.0.1", 0, INPAINTERS["identity"], "identity")
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


def build_corpus(directory, count=3, size=32, seed=7):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        save_image(ImageBuffer(rng.random((size, size, 3))),
                   directory / f"img_{i:03d}.png")


def evaluate_against(url, tmp_path, out_name, second_ratio):
    corpus = tmp_path / "corpus"
    if not corpus.exists():
        build_corpus(corpus)
    cfg = EvalConfig(
        output_dir=str(tmp_path / out_name),
        corpus_dir=str(corpus),
        first_backends=[{"kind": "builtin", "variant": "mean-fill"}],
        second_backend={"kind": "http", "url": url, "retries": 0,
                        "name": "reference-service"},
        first_mask_band=(0.1, 0.5),
        second_mask_ratio=second_ratio,
        k=3, patch_size=8,
        sub_metric=SubMetric.MSE,
        objectives=(Objective.FIRST_SECOND,),
        run_seed=13, workers=2,
    )
    return run(cfg)


class TestProtocolConformance:
    def test_acceptance_secondary_protocol(self, identity_service, tmp_path):
        # full harness run, empty second masks: the identity reply must
        # reproduce the first inpainting exactly, so D = 0 under MSE
        records = evaluate_against(identity_service, tmp_path, "out_zero", 0.0)
        zero_ok = (len(records) == 3
                   and all(r["status"] == "ok" for r in records)
                   and all(r["consistency"] == 0.0 for r in records))

        # nonzero masks: still zero protocol errors end to end
        records2 = evaluate_against(identity_service, tmp_path, "out_nonzero", 0.4)
        nonzero_ok = all(r["status"] == "ok" for r in records2)

        report_line("[SECONDARY] protocol-conformance", zero_ok and nonzero_ok,
                    f"{len(records) + len(records2)} records, 0 protocol errors, "
                    f"D=0 exact with empty second masks")

    def test_keep_region_bytes_round_trip(self, identity_service):
        rng = np.random.default_rng(11)
        img = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        keep = rng.random((16, 16)) > 0.4

        def b64_png(arr, mode):
            buf = io.BytesIO()
            PIL.Image.fromarray(arr, mode=mode).save(buf, format="PNG")
            return base64.b64encode(buf.getvalue()).decode("ascii")

        resp = requests.post(f"{identity_service}/inpaint", json={
            "image": b64_png(img, "RGB"),
            "mask": b64_png(np.where(keep, 255, 0).astype(np.uint8), "L"),
            "seed": 3,
        }, timeout=30)
        assert resp.status_code == 200
        out = np.asarray(PIL.Image.open(
            io.BytesIO(base64.b64decode(resp.json()["image"]))))
        report_line("[SECONDARY] keep-region-byte-round-trip",
                    bool(np.array_equal(out[keep], img[keep])),
                    "decoded reply bytes equal request bytes on kept pixels")
