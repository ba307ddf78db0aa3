"""Test harness: build a desk checkpoint, start the session service on an
ephemeral port, and drop connection info (port + base64 frames) into
``<workdir>/info.json`` for the frontend end-to-end test to pick up.
"""

import base64
import json
import os
import sys
import threading
import time

import uvicorn

from hyperseg.pngio import encode_image_png
from hyperseg.service import create_app
from hyperseg.training import TrainConfig, build_pipeline, generate_scene


def main() -> None:
    workdir = sys.argv[1]
    ckpt_root = os.path.join(workdir, "ckpt")
    build_pipeline(TrainConfig(seed=3)).save(os.path.join(ckpt_root, "desk"))
    app = create_app(ckpt_root, os.path.join(workdir, "store"))
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    info = {
        "port": port,
        "frame_b64": base64.b64encode(encode_image_png(generate_scene(1, 32, 32).frame_curr)).decode(),
        "frame2_b64": base64.b64encode(encode_image_png(generate_scene(2, 32, 32).frame_curr)).decode(),
    }
    tmp = os.path.join(workdir, "info.json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(info, fh)
    os.replace(tmp, os.path.join(workdir, "info.json"))
    thread.join()


if __name__ == "__main__":
    main()
