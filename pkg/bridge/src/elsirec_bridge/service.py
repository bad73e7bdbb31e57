"""HTTP encode endpoint: POST /encode {"text": ...} -> {"vector": [...]}."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .encoder import DocumentEncoder


class EncodeRequest(BaseModel):
    text: str


def create_app(encoder: DocumentEncoder) -> FastAPI:
    app = FastAPI(title="elsirec-bridge")

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "encoder": encoder.encoder_name,
            "dim": encoder.dim,
        }

    @app.post("/encode")
    def encode(req: EncodeRequest):
        if not req.text.strip():
            return JSONResponse(status_code=400, content={"error": "empty text"})
        vector = encoder.encode_batch([req.text])[0]
        return {"vector": vector.tolist()}

    return app
