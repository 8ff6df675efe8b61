"""Serve a trained refiner behind the chat-completions wire contract, or
export it as merged weights that load without adapter machinery.

The server accepts ``POST /chat/completions`` (any base path) with
``{"model", "messages", "temperature", "max_tokens"}`` and answers with
``choices[0].message.content``, which is exactly what the pipeline's client
expects. Checkpoints are validated before any port is bound.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import torch

from .model import TinyCausalLM, ModelSpec, greedy_generate, merge_adapters
from .train import load_refiner


def export_merged(checkpoint_path: str | Path, out_dir: str | Path) -> Path:
    """Fold the adapters into the base weights and write a standalone model
    directory (model.pt + config.json)."""
    model = load_refiner(checkpoint_path)
    merged = merge_adapters(model)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save({"spec": merged.spec.__dict__, "state_dict": merged.state_dict()}, out_dir / "model.pt")
    (out_dir / "config.json").write_text(
        json.dumps({"format": "merged", "merged_from": str(checkpoint_path), "spec": merged.spec.__dict__}, indent=2)
        + "\n",
        encoding="utf-8",
    )
    return out_dir


def load_merged(export_dir: str | Path) -> TinyCausalLM:
    export_dir = Path(export_dir)
    payload = torch.load(export_dir / "model.pt", map_location="cpu", weights_only=True)
    model = TinyCausalLM(ModelSpec(**payload["spec"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def load_any(path: str | Path) -> TinyCausalLM:
    """Load either an adapter checkpoint (base + adapters applied) or a
    merged-export directory."""
    path = Path(path)
    if path.is_dir():
        return load_merged(path)
    if not path.is_file():
        raise FileNotFoundError(f"no checkpoint at {path}")
    return load_refiner(path)


class RefinerServer:
    """Blocking-or-threaded HTTP server over a loaded model. Generation is
    serialized behind a lock; the checkpoint is loaded (and thus validated)
    before the socket binds."""

    def __init__(self, checkpoint: str | Path, host: str = "127.0.0.1", port: int = 0,
                 default_max_tokens: int = 128):
        self.model = load_any(checkpoint)
        self._generate_lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def do_POST(self):
                if not self.path.endswith("/chat/completions"):
                    self._reply(404, {"error": f"unknown path {self.path}"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    body = json.loads(self.rfile.read(length) or b"{}")
                    prompt = body["messages"][-1]["content"]
                except (json.JSONDecodeError, KeyError, IndexError, TypeError):
                    self._reply(400, {"error": "malformed chat-completions request"})
                    return
                temperature = float(body.get("temperature", 0.0))
                max_tokens = int(body.get("max_tokens", default_max_tokens))
                with outer._generate_lock:
                    text = greedy_generate(
                        outer.model, prompt, max_new_tokens=max_tokens, temperature=temperature
                    )
                self._reply(
                    200,
                    {
                        "object": "chat.completion",
                        "model": body.get("model", "refiner"),
                        "choices": [
                            {"index": 0, "message": {"role": "assistant", "content": text}}
                        ],
                    },
                )

            def _reply(self, status, payload):
                raw = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    def start_background(self) -> "RefinerServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._httpd.serve_forever()

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()
