"""The interactive loop over the wire: start the session service in-process,
create a session, place clicks one at a time, switch heads, and undo —
exactly the traffic the browser UI generates.
"""

import base64
import tempfile
import threading
import time

import httpx
import uvicorn

from hyperseg.pngio import decode_mask_png, encode_image_png
from hyperseg.service import create_app
from hyperseg.training import TrainConfig, build_pipeline, generate_scene

ckpt = tempfile.mkdtemp(prefix="hyperseg-ckpt-")
build_pipeline(TrainConfig(seed=3)).save(ckpt + "/desk")
store = tempfile.mkdtemp(prefix="hyperseg-store-")

server = uvicorn.Server(uvicorn.Config(create_app(ckpt, store), host="127.0.0.1", port=0,
                                       log_level="error"))
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.02)
port = server.servers[0].sockets[0].getsockname()[1]
base = f"http://127.0.0.1:{port}"
print(f"service listening on {base}")

scene = generate_scene(1, 32, 32)
frame64 = base64.b64encode(encode_image_png(scene.frame_curr)).decode()

with httpx.Client(base_url=base, timeout=60.0) as api:
    print("checkpoints:", api.get("/v1/checkpoints").json()["checkpoints"])
    session = api.post("/v1/sessions", json={"frame_png_base64": frame64}).json()
    sid = session["session_id"]
    print(f"session {sid[:8]}…: {session['width']}x{session['height']}, "
          f"{session['num_heads']} heads")

    for x, y, pol in [(16, 16, "pos"), (13, 20, "pos"), (3, 3, "neg")]:
        resp = api.post(f"/v1/sessions/{sid}/clicks", json={"x": x, "y": y, "polarity": pol}).json()
        mask = decode_mask_png(api.get(f"/v1/sessions/{sid}/mask", params={"head": 1}).content)
        print(f"click ({x:>2},{y:>2}) {pol}: default head {resp['default_head']}, "
              f"head-1 mask covers {mask.mean():.0%}")

    head2 = decode_mask_png(api.get(f"/v1/sessions/{sid}/mask", params={"head": 2}).content)
    print(f"switched to head 2 without re-clicking: covers {head2.mean():.0%}")

    api.delete(f"/v1/sessions/{sid}/clicks/3,3")
    state = api.get(f"/v1/sessions/{sid}").json()
    print(f"after undoing the negative click: {len(state['clicks'])} clicks remain")

server.should_exit = True
time.sleep(0.2)
print("done")
