"""HTTP service over immutable loaded artifacts.

Accepts embedding vectors, not raw text; raw-text queries are proxied to
an external encoder bridge when one is configured.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .classifier import ClassifierHead
from .errors import EmptyPartitionError
from .recommend import TopicIndex, recommend_for_abstract


class RecommendRequest(BaseModel):
    vector: list[float]
    k: int = 1


class RecommendTextRequest(BaseModel):
    text: str
    k: int = 1


def create_app(
    head: ClassifierHead, index: TopicIndex, bridge_url: str | None = None
) -> FastAPI:
    app = FastAPI(title="elsirec")

    def _recommend(vector: list[float], k: int):
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (head.dim,):
            return JSONResponse(
                status_code=400,
                content={
                    "error": f"vector has dimension {vec.shape[0] if vec.ndim == 1 else 'invalid'}, expected {head.dim}"
                },
            )
        if k < 1:
            return JSONResponse(status_code=400, content={"error": "k must be >= 1"})
        try:
            topic, probs, results = recommend_for_abstract(vec, head, index, k)
        except EmptyPartitionError as exc:
            return JSONResponse(
                status_code=404,
                content={"error": str(exc), "topic": exc.topic},
            )
        return {
            "topic": topic,
            "topic_probability": float(probs[topic]),
            "results": [
                {"id": r.article_id, "distance": r.distance, "rank": r.rank}
                for r in results
            ],
        }

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "topics": index.K, "elsi_articles": index.total}

    @app.post("/v1/recommend")
    def recommend_endpoint(req: RecommendRequest):
        return _recommend(req.vector, req.k)

    @app.post("/v1/recommend_text")
    def recommend_text_endpoint(req: RecommendTextRequest):
        if bridge_url is None:
            return JSONResponse(
                status_code=503,
                content={"error": "no encoder bridge configured"},
            )
        if not req.text.strip():
            return JSONResponse(status_code=400, content={"error": "empty text"})
        payload = json.dumps({"text": req.text}).encode("utf-8")
        request = urllib.request.Request(
            bridge_url.rstrip("/") + "/encode",
            data=payload,
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(request, timeout=60) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, json.JSONDecodeError) as exc:
            return JSONResponse(
                status_code=502,
                content={"error": f"encoder bridge request failed: {exc}"},
            )
        return _recommend(body["vector"], req.k)

    return app
