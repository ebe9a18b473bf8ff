import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from newsarena.agents import AgentRole, ReflectMode, build_baseline_request, build_predict_request
from newsarena.config import RunConfig
from newsarena.core import NewsItem, StrategyOwner, StrategySet
from newsarena.dataset import load_corpus, sample_demos
from newsarena.gateway import (
    ChatResponse,
    TransportError,
    canonical_digest,
    write_fixture,
)
from newsarena.orchestrator import RunState, Stage
from newsarena.service import (
    ServiceConfig,
    SubmissionRecord,
    SubmissionStore,
    create_app,
    load_strategy_snapshot,
)
from helpers import det_reply, scripted_backend, write_corpus

SNAPSHOT = StrategySet(
    owner=StrategyOwner.DETECTOR, version=1,
    rules=("Check sudden reversals against official records.",))

TEXT = "City council confirms the bridge repair schedule for next spring."


def write_checkpoint(path, s_d, run_id="svc-run"):
    state = RunState(
        run_id=run_id, stage=Stage.DONE, round_index=0, pool_epoch=0,
        pool_cursor=0, train_cursor=0,
        s_g=StrategySet.initial(StrategyOwner.GENERATOR), s_d=s_d,
        seed=0, config_digest="unused", event_log_offset=0)
    path.write_text(json.dumps(state.to_dict()), encoding="utf-8")


def predict_entry(run, text, s_d, label, explanation):
    det = run.agent(AgentRole.DETECTOR)
    req = build_predict_request(det, NewsItem(id="probe", text=text), s_d)
    return {"digest": canonical_digest(req),
            "response": det_reply(label, explanation)}


def baseline_entry(run, text, mode, label, explanation, demos=()):
    det = run.agent(AgentRole.DETECTOR)
    req = build_baseline_request(det, NewsItem(id="probe", text=text),
                                 mode, demos)
    return {"digest": canonical_digest(req),
            "response": det_reply(label, explanation)}


def make_service(tmp_path, entries=(), *, with_snapshot=True, gateway=None,
                 **overrides):
    fixture = tmp_path / "fixture.jsonl"
    write_fixture(fixture, list(entries))
    run = RunConfig(backend=scripted_backend(fixture))
    kwargs = {"run": run, "history_path": str(tmp_path / "history.jsonl")}
    if with_snapshot:
        ckpt = tmp_path / "checkpoint.json"
        write_checkpoint(ckpt, SNAPSHOT)
        kwargs["strategies_path"] = str(ckpt)
    kwargs.update(overrides)
    cfg = ServiceConfig(**kwargs)
    return create_app(cfg, gateway=gateway), cfg


class ConstantGateway:
    """Answers every request with the same text."""

    def __init__(self, text):
        self.text = text

    def complete(self, req):
        return ChatResponse(text=self.text, backend_id="stub",
                            prompt_digest=canonical_digest(req), latency_ms=0)


class FailingGateway:
    def complete(self, req):
        raise TransportError("backend down", status=502)


class TestDetect:
    def test_strategy_method_round_trip(self, tmp_path):
        fixture = tmp_path / "fixture.jsonl"
        run = RunConfig(backend=scripted_backend(fixture))
        entry = predict_entry(run, TEXT, SNAPSHOT, "fake",
                              "The schedule is unconfirmed by the city.")
        app, _ = make_service(tmp_path, [entry])
        client = TestClient(app)

        resp = client.post("/v1/detect", json={"text": TEXT,
                                               "client_tag": "console-7"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["label"] == "fake"
        assert body["explanation"] == "The schedule is unconfirmed by the city."
        assert body["strategy_version"] == 1

        store = app.state.service.store
        assert len(store) == 1
        record = store.get(body["submission_id"])
        assert record.label == body["label"]
        assert record.explanation == body["explanation"]
        assert record.strategy_version == 1
        assert record.method == "llm-gan"
        assert record.client_tag == "console-7"
        assert record.error is None

    def test_baseline_method_has_no_strategy_version(self, tmp_path):
        fixture = tmp_path / "fixture.jsonl"
        run = RunConfig(backend=scripted_backend(fixture))
        entry = baseline_entry(run, TEXT, ReflectMode.ZERO_SHOT,
                               "real", "Routine municipal announcement.")
        app, _ = make_service(tmp_path, [entry])
        client = TestClient(app)

        resp = client.post("/v1/detect", json={"text": TEXT,
                                               "method": "zero-shot"})
        assert resp.status_code == 200
        assert resp.json()["label"] == "real"
        assert resp.json()["strategy_version"] is None
        record = app.state.service.store.get(resp.json()["submission_id"])
        assert record.strategy_version is None
        assert record.method == "zero-shot"

    def test_few_shot_available_only_with_demo_corpus(self, tmp_path):
        app, _ = make_service(tmp_path)
        client = TestClient(app)
        resp = client.post("/v1/detect", json={"text": TEXT,
                                               "method": "few-shot"})
        assert resp.status_code == 400
        assert resp.json()["code"] == "unknown_method"

        corpus_dir = tmp_path / "corpus"
        manifest = write_corpus(corpus_dir)
        fixture = tmp_path / "fs" / "fixture.jsonl"
        fixture.parent.mkdir()
        run = RunConfig(backend=scripted_backend(fixture))
        cfg_probe = ServiceConfig(run=run, history_path="unused",
                                  demo_corpus_manifest=str(manifest))
        demos = tuple(sample_demos(load_corpus(str(manifest)),
                                   cfg_probe.demo_count, run.loop.seed))
        entry = baseline_entry(run, TEXT, ReflectMode.FEW_SHOT,
                               "real", "Matches the demo pattern.", demos)
        app2, _ = make_service(tmp_path / "fs", [entry],
                               demo_corpus_manifest=str(manifest))
        resp = TestClient(app2).post("/v1/detect", json={"text": TEXT,
                                                         "method": "few-shot"})
        assert resp.status_code == 200
        assert resp.json()["label"] == "real"

    def test_strategy_method_missing_without_snapshot(self, tmp_path):
        app, _ = make_service(tmp_path, with_snapshot=False)
        client = TestClient(app)
        resp = client.post("/v1/detect", json={"text": TEXT})
        assert resp.status_code == 400
        assert resp.json()["code"] == "unknown_method"
        assert "zero-shot" in resp.json()["message"]


class TestDetectValidation:
    @pytest.fixture()
    def client(self, tmp_path):
        app, _ = make_service(tmp_path, max_text_chars=80)
        return TestClient(app)

    def test_missing_text(self, client):
        resp = client.post("/v1/detect", json={})
        assert resp.status_code == 400
        assert resp.json()["code"] == "empty_text"

    def test_blank_text(self, client):
        resp = client.post("/v1/detect", json={"text": "   "})
        assert (resp.status_code, resp.json()["code"]) == (400, "empty_text")

    def test_non_string_text(self, client):
        resp = client.post("/v1/detect", json={"text": 42})
        assert (resp.status_code, resp.json()["code"]) == (400, "empty_text")

    def test_text_too_long(self, client):
        resp = client.post("/v1/detect", json={"text": "x" * 81})
        assert (resp.status_code, resp.json()["code"]) == (400, "text_too_long")

    def test_unknown_method(self, client):
        resp = client.post("/v1/detect", json={"text": TEXT,
                                               "method": "divination"})
        assert (resp.status_code, resp.json()["code"]) == (400, "unknown_method")

    def test_non_object_body(self, client):
        resp = client.post("/v1/detect", json=["not", "an", "object"])
        assert resp.status_code == 400
        assert resp.json()["code"] == "bad_request"

    def test_unparseable_json_body(self, client):
        resp = client.post("/v1/detect", content="{nope",
                           headers={"content-type": "application/json"})
        assert resp.status_code == 400
        assert resp.json()["code"] == "bad_request"

    def test_rejections_leave_no_history(self, client, tmp_path):
        client.post("/v1/detect", json={"text": ""})
        client.post("/v1/detect", json={"text": TEXT, "method": "divination"})
        assert (tmp_path / "history.jsonl").read_text() == ""


class TestDetectFailures:
    def test_unparseable_reply_recorded(self, tmp_path):
        app, _ = make_service(tmp_path, gateway=ConstantGateway("gibberish"))
        client = TestClient(app)
        resp = client.post("/v1/detect", json={"text": TEXT})
        assert resp.status_code == 422
        assert resp.json()["code"] == "unparseable"
        store = app.state.service.store
        assert len(store) == 1
        record, = store.page(1, None)[0]
        assert record.error == "unparseable"
        assert record.label is None
        assert record.text == TEXT

    def test_backend_failure_recorded(self, tmp_path):
        app, _ = make_service(tmp_path, gateway=FailingGateway())
        client = TestClient(app)
        resp = client.post("/v1/detect", json={"text": TEXT})
        assert resp.status_code == 503
        assert resp.json()["code"] == "backend_unavailable"
        record, = app.state.service.store.page(1, None)[0]
        assert record.error == "backend_unavailable"
        assert record.label is None


class TestCapacity:
    def test_over_capacity_rejected_when_not_queueing(self, tmp_path):
        fixture = tmp_path / "fixture.jsonl"
        run = RunConfig(backend=scripted_backend(fixture))
        entry = predict_entry(run, TEXT, SNAPSHOT, "real", "Routine.")
        app, _ = make_service(tmp_path, [entry], max_concurrency=1,
                              queue_over_limit=False)
        client = TestClient(app)
        service = app.state.service

        service.semaphore.acquire()  # a request already in flight
        try:
            resp = client.post("/v1/detect", json={"text": TEXT})
            assert resp.status_code == 429
            assert resp.json()["code"] == "over_capacity"
            assert len(service.store) == 0  # rejected before any record
        finally:
            service.semaphore.release()
        assert client.post("/v1/detect",
                           json={"text": TEXT}).status_code == 200

    def test_queue_mode_waits_instead_of_rejecting(self, tmp_path):
        fixture = tmp_path / "fixture.jsonl"
        run = RunConfig(backend=scripted_backend(fixture))
        entry = predict_entry(run, TEXT, SNAPSHOT, "real", "Routine.")
        app, _ = make_service(tmp_path, [entry], max_concurrency=1)
        client = TestClient(app)
        service = app.state.service

        service.semaphore.acquire()
        results = []
        worker = threading.Thread(
            target=lambda: results.append(
                client.post("/v1/detect", json={"text": TEXT})))
        worker.start()
        time.sleep(0.1)
        assert not results  # still waiting on capacity
        service.semaphore.release()
        worker.join(timeout=10)
        assert results and results[0].status_code == 200

    def test_concurrent_submissions_all_recorded(self, tmp_path):
        fixture = tmp_path / "fixture.jsonl"
        run = RunConfig(backend=scripted_backend(fixture))
        texts = [f"{TEXT} Update {i} adds a new crossing lane." for i in range(10)]
        entries = [predict_entry(run, t, SNAPSHOT, "real", f"Checked {i}.")
                   for i, t in enumerate(texts)]
        app, _ = make_service(tmp_path, entries, max_concurrency=4)
        client = TestClient(app)

        with ThreadPoolExecutor(max_workers=10) as pool:
            responses = list(pool.map(
                lambda t: client.post("/v1/detect", json={"text": t}), texts))
        assert all(r.status_code == 200 for r in responses)
        ids = {r.json()["submission_id"] for r in responses}
        assert len(ids) == 10
        assert len(app.state.service.store) == 10


class TestHistory:
    def submit_three(self, tmp_path):
        fixture = tmp_path / "fixture.jsonl"
        run = RunConfig(backend=scripted_backend(fixture))
        texts = [f"{TEXT} Detail {i}." for i in range(3)]
        entries = [predict_entry(run, t, SNAPSHOT, "real", f"Note {i}.")
                   for i, t in enumerate(texts)]
        app, _ = make_service(tmp_path, entries)
        client = TestClient(app)
        ids = [client.post("/v1/detect", json={"text": t}).json()["submission_id"]
               for t in texts]
        return client, ids

    def test_newest_first_with_cursor(self, tmp_path):
        client, ids = self.submit_three(tmp_path)
        first = client.get("/v1/history", params={"limit": 2}).json()
        assert [r["submission_id"] for r in first["records"]] == [ids[2], ids[1]]
        assert first["next_cursor"] == ids[0]
        second = client.get("/v1/history", params={
            "limit": 2, "before": first["next_cursor"]}).json()
        assert [r["submission_id"] for r in second["records"]] == [ids[0]]
        assert second["next_cursor"] is None

    def test_single_page_has_no_cursor(self, tmp_path):
        client, ids = self.submit_three(tmp_path)
        body = client.get("/v1/history").json()
        assert [r["submission_id"] for r in body["records"]] == ids[::-1]
        assert body["next_cursor"] is None

    def test_limit_bounds(self, tmp_path):
        client, _ = self.submit_three(tmp_path)
        for limit in (0, 201, -3):
            resp = client.get("/v1/history", params={"limit": limit})
            assert (resp.status_code, resp.json()["code"]) == (400, "bad_limit")
        resp = client.get("/v1/history", params={"limit": "many"})
        assert (resp.status_code, resp.json()["code"]) == (400, "bad_request")

    def test_unknown_cursor(self, tmp_path):
        client, _ = self.submit_three(tmp_path)
        resp = client.get("/v1/history", params={"before": "nope"})
        assert (resp.status_code, resp.json()["code"]) == (400, "bad_cursor")

    def test_empty_history(self, tmp_path):
        app, _ = make_service(tmp_path)
        body = TestClient(app).get("/v1/history").json()
        assert body == {"records": [], "next_cursor": None}


class TestReplay:
    def test_log_reconstructs_what_clients_were_told(self, tmp_path):
        fixture = tmp_path / "fixture.jsonl"
        run = RunConfig(backend=scripted_backend(fixture))
        texts = [f"{TEXT} Clause {i}." for i in range(2)]
        entries = [predict_entry(run, t, SNAPSHOT, "fake", f"Fabricated {i}.")
                   for i, t in enumerate(texts)]
        app, cfg = make_service(tmp_path, entries)
        client = TestClient(app)
        told = [client.post("/v1/detect", json={"text": t}).json()
                for t in texts]
        app.state.service.store.close()

        rebuilt = SubmissionStore(cfg.history_path)
        assert len(rebuilt) == 2
        for body in told:
            record = rebuilt.get(body["submission_id"])
            assert record.label == body["label"]
            assert record.explanation == body["explanation"]
            assert record.strategy_version == body["strategy_version"]
        rebuilt.close()

    def test_second_app_serves_prior_history(self, tmp_path):
        fixture = tmp_path / "fixture.jsonl"
        run = RunConfig(backend=scripted_backend(fixture))
        entry = predict_entry(run, TEXT, SNAPSHOT, "real", "Fine.")
        app, cfg = make_service(tmp_path, [entry])
        client = TestClient(app)
        sub = client.post("/v1/detect", json={"text": TEXT}).json()
        app.state.service.store.close()

        app2 = create_app(cfg, gateway=FailingGateway())
        body = TestClient(app2).get("/v1/history").json()
        assert [r["submission_id"] for r in body["records"]] == [sub["submission_id"]]
        assert body["records"][0]["label"] == sub["label"]


class TestSubmissionStore:
    def record(self, i, **overrides):
        base = dict(submission_id=f"s{i}", received_at=1000.0 + i,
                    text=f"text {i}", method="llm-gan", label="real",
                    explanation="ok", strategy_version=1, elapsed_ms=5,
                    error=None, client_tag=None)
        base.update(overrides)
        return SubmissionRecord(**base)

    def test_exactly_one_of_label_or_error(self):
        with pytest.raises(ValueError, match="exactly one"):
            self.record(1, label="real", error="unparseable")
        with pytest.raises(ValueError, match="exactly one"):
            self.record(1, label=None, explanation=None, strategy_version=None)

    def test_duplicate_id_rejected(self, tmp_path):
        store = SubmissionStore(tmp_path / "h.jsonl")
        store.append(self.record(1))
        with pytest.raises(ValueError, match="duplicate submission_id"):
            store.append(self.record(1))
        store.close()

    def test_corrupt_line_cites_position(self, tmp_path):
        path = tmp_path / "h.jsonl"
        path.write_text(json.dumps(self.record(1).to_dict()) + "\n{nope\n")
        with pytest.raises(ValueError, match=r"h\.jsonl:2"):
            SubmissionStore(path)

    def test_duplicate_in_file_rejected_on_load(self, tmp_path):
        path = tmp_path / "h.jsonl"
        line = json.dumps(self.record(1).to_dict())
        path.write_text(line + "\n" + line + "\n")
        with pytest.raises(ValueError, match="duplicate"):
            SubmissionStore(path)

    def test_page_of_empty_store(self, tmp_path):
        store = SubmissionStore(tmp_path / "h.jsonl")
        assert store.page(5, None) == ([], None)
        store.close()


class TestStrategies:
    def test_current_snapshot(self, tmp_path):
        app, _ = make_service(tmp_path)
        body = TestClient(app).get("/v1/strategies/current").json()
        assert body == {"owner": "detector", "version": 1,
                        "rules": list(SNAPSHOT.rules)}

    def test_baseline_only_service(self, tmp_path):
        app, _ = make_service(tmp_path, with_snapshot=False)
        resp = TestClient(app).get("/v1/strategies/current")
        assert (resp.status_code, resp.json()["code"]) == (404, "baseline_only")

    def test_snapshot_loader_reads_detector_side(self, tmp_path):
        ckpt = tmp_path / "c.json"
        write_checkpoint(ckpt, SNAPSHOT)
        assert load_strategy_snapshot(ckpt) == SNAPSHOT


class TestAdmin:
    def test_disabled_without_token(self, tmp_path):
        app, _ = make_service(tmp_path)
        resp = TestClient(app).post("/v1/admin/reload-strategies")
        assert (resp.status_code, resp.json()["code"]) == (403, "admin_disabled")

    def test_requires_bearer_token(self, tmp_path):
        app, _ = make_service(tmp_path, admin_token="sesame")
        client = TestClient(app)
        assert client.post("/v1/admin/reload-strategies").status_code == 401
        resp = client.post("/v1/admin/reload-strategies",
                           headers={"Authorization": "Bearer wrong"})
        assert (resp.status_code, resp.json()["code"]) == (401, "unauthorized")

    def test_reload_picks_up_new_checkpoint(self, tmp_path):
        app, cfg = make_service(tmp_path, admin_token="sesame")
        client = TestClient(app)
        upgraded = SNAPSHOT.upgraded(
            ["Check sudden reversals against official records.",
             "Distrust anonymous insider sourcing."])
        write_checkpoint(tmp_path / "checkpoint.json", upgraded)
        resp = client.post("/v1/admin/reload-strategies",
                           headers={"Authorization": "Bearer sesame"})
        assert resp.status_code == 200
        assert resp.json()["version"] == 2
        assert client.get("/v1/strategies/current").json()["version"] == 2

    def test_reload_failure_reported(self, tmp_path):
        app, cfg = make_service(tmp_path, admin_token="sesame")
        (tmp_path / "checkpoint.json").unlink()
        resp = TestClient(app).post(
            "/v1/admin/reload-strategies",
            headers={"Authorization": "Bearer sesame"})
        assert (resp.status_code, resp.json()["code"]) == (500, "reload_failed")

    def test_reload_without_snapshot_path(self, tmp_path):
        app, _ = make_service(tmp_path, with_snapshot=False,
                              admin_token="sesame")
        resp = TestClient(app).post(
            "/v1/admin/reload-strategies",
            headers={"Authorization": "Bearer sesame"})
        assert (resp.status_code, resp.json()["code"]) == (500, "reload_failed")


class TestServiceConfig:
    def test_bounds(self, tmp_path):
        run = RunConfig(backend=scripted_backend(tmp_path / "f.jsonl"))
        with pytest.raises(ValueError, match="max_concurrency"):
            ServiceConfig(run=run, history_path="h", max_concurrency=0)
        with pytest.raises(ValueError, match="max_text_chars"):
            ServiceConfig(run=run, history_path="h", max_text_chars=0)
