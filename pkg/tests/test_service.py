import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from fastapi.testclient import TestClient

from elsirec.classifier import ClassifierHead
from elsirec.embeddings import EmbeddingMatrix
from elsirec.recommend import TopicIndex
from elsirec.service import create_app

D = 4


@pytest.fixture(scope="module")
def index():
    rng = np.random.default_rng(50)
    parts = []
    for k in range(2):
        values = np.tanh(rng.standard_normal((3, D)))
        parts.append(EmbeddingMatrix(
            ids=[f"t{k}a{i}" for i in range(3)], values=values,
            encoder_name="t", activated=True,
        ))
    return TopicIndex(partitions=parts)


@pytest.fixture(scope="module")
def head():
    # predicts topic 0 when the first component dominates
    W = np.zeros((2, D))
    W[0, 0] = 5.0
    W[1, 1] = 5.0
    return ClassifierHead(W=W, b=np.zeros(2))


@pytest.fixture(scope="module")
def client(head, index):
    return TestClient(create_app(head, index))


class TestHealth:
    def test_health(self, client, index):
        resp = client.get("/v1/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok", "topics": 2, "elsi_articles": 6}


class TestRecommendEndpoint:
    def test_stored_vector_rank1_distance0(self, client, head, index):
        from elsirec.classifier import predict_topic

        vec = index.partitions[0].values[1]
        topic, _ = predict_topic(vec, head)
        resp = client.post("/v1/recommend", json={"vector": vec.tolist(), "k": 1})
        assert resp.status_code == 200
        body = resp.json()
        if topic == 0:  # stored vector only guaranteed present in its own topic
            assert body["results"][0]["id"] == "t0a1"
            assert body["results"][0]["distance"] == 0.0

    def test_wrong_dimension_400_names_expected(self, client):
        resp = client.post("/v1/recommend", json={"vector": [0.1] * (D + 3), "k": 1})
        assert resp.status_code == 400
        assert str(D) in resp.json()["error"]

    def test_malformed_body_400(self, client):
        resp = client.post("/v1/recommend", json={"k": 1})
        assert resp.status_code == 422  # fastapi validation error

    def test_bad_k(self, client):
        resp = client.post("/v1/recommend", json={"vector": [0.0] * D, "k": 0})
        assert resp.status_code == 400

    def test_empty_partition_404(self, head):
        index = TopicIndex(partitions=[
            EmbeddingMatrix(ids=["a"], values=np.zeros((1, D)), activated=True),
            EmbeddingMatrix(ids=[], values=np.empty((0, D)), activated=True),
        ])
        client = TestClient(create_app(head, index))
        vec = [0.0] * D
        vec[1] = 1.0  # predicts topic 1, which is empty
        resp = client.post("/v1/recommend", json={"vector": vec, "k": 1})
        assert resp.status_code == 404
        assert resp.json()["topic"] == 1

    def test_restart_yields_identical_responses(self, head, index):
        payload = {"vector": [0.2, -0.1, 0.4, 0.0], "k": 3}
        r1 = TestClient(create_app(head, index)).post("/v1/recommend", json=payload)
        r2 = TestClient(create_app(head, index)).post("/v1/recommend", json=payload)
        assert r1.json() == r2.json()


class TestRecommendText:
    def test_503_without_bridge(self, client):
        resp = client.post("/v1/recommend_text", json={"text": "hello", "k": 1})
        assert resp.status_code == 503

    def test_proxies_to_bridge(self, head, index):
        vec = index.partitions[0].values[0]

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                json.loads(self.rfile.read(length))
                body = json.dumps({"vector": vec.tolist()}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        server = HTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}"
            client = TestClient(create_app(head, index, bridge_url=url))
            resp = client.post("/v1/recommend_text", json={"text": "an abstract", "k": 1})
            assert resp.status_code == 200
            assert resp.json()["results"][0]["distance"] == 0.0
        finally:
            server.shutdown()

    def test_empty_text_400(self, head, index):
        client = TestClient(create_app(head, index, bridge_url="http://127.0.0.1:1"))
        resp = client.post("/v1/recommend_text", json={"text": "  ", "k": 1})
        assert resp.status_code == 400
