import json
import threading
import urllib.request
import urllib.error

import pytest

from polyvox.mushra import load_design
from polyvox.service import ExperimentStore, RatingService, ServiceError, serve
from polyvox.synthetic import make_demo_experiment


@pytest.fixture
def design(tmp_path):
    return load_design(make_demo_experiment(tmp_path / "exp", panels_per_set=3))


@pytest.fixture
def service(design, tmp_path):
    return RatingService(design, ExperimentStore(tmp_path / "store" / "exp.jsonl"))


def complete_submission(service, state, offsets=None):
    """Valid submission payload for the session's current panel."""
    panel = state["panel"]
    scores, listened, moved = {}, {}, {}
    for i, stim in enumerate(panel["stimuli"]):
        base = 40 + 7 * i if offsets is None else offsets[i]
        scores[stim["id"]] = base
        listened[stim["id"]] = True
        moved[stim["id"]] = True
    return dict(token=state["token"], panel_id=panel["panel_id"],
                scores=scores, listened=listened, moved=moved)


def run_full_session(service, participant):
    state = service.start(participant)
    while not state["done"]:
        sub = complete_submission(service, state)
        state = service.submit(**sub)
    return state


class TestSessionFlow:
    def test_round_robin_assignment(self, service):
        sets = [service.start(f"p{i}")["test_set"] for i in range(6)]
        assert sets == [0, 1, 2, 0, 1, 2]

    def test_duplicate_active_session_rejected(self, service):
        service.start("alice")
        with pytest.raises(ServiceError) as err:
            service.start("alice")
        assert err.value.status == 409

    def test_resume_rotates_token_and_keeps_position(self, service):
        first = service.start("alice")
        sub = complete_submission(service, first)
        service.submit(**sub)
        second = service.start("alice", resume=True)
        assert second["token"] != first["token"]
        assert second["completed"] == 1
        assert second["panel"]["index"] == 1
        # old token no longer valid
        with pytest.raises(ServiceError) as err:
            service.current_panel(first["token"])
        assert err.value.status == 403

    def test_panels_in_fixed_order_until_done(self, service):
        state = service.start("bob")
        seen = []
        while not state["done"]:
            seen.append(state["panel"]["panel_id"])
            state = service.submit(**complete_submission(service, state))
        assert seen == ["p0", "p1", "p2"]
        assert state["done"] and state["panel"] is None

    def test_done_marker_after_last_panel(self, service):
        state = run_full_session(service, "carol")
        assert state["done"]
        assert state["completed"] == 3

    def test_start_after_completion_reports_done(self, service):
        run_full_session(service, "dave")
        state = service.start("dave", resume=True)
        assert state["done"] and state["panel"] is None


class TestSubmitValidation:
    def test_unmoved_slider_rejected_naming_stimulus(self, service):
        state = service.start("alice")
        sub = complete_submission(service, state)
        victim = state["panel"]["stimuli"][2]["id"]
        sub["moved"][victim] = False
        with pytest.raises(ServiceError) as err:
            service.submit(**sub)
        assert err.value.status == 400
        assert any(d["stimulus"] == victim and "slider" in d["reason"]
                   for d in err.value.details)

    def test_unlistened_stimulus_rejected(self, service):
        state = service.start("alice")
        sub = complete_submission(service, state)
        victim = state["panel"]["stimuli"][0]["id"]
        sub["listened"][victim] = False
        with pytest.raises(ServiceError) as err:
            service.submit(**sub)
        assert any(d["stimulus"] == victim for d in err.value.details)

    def test_missing_and_out_of_range_scores_rejected(self, service):
        state = service.start("alice")
        sub = complete_submission(service, state)
        victim = state["panel"]["stimuli"][1]["id"]
        del sub["scores"][victim]
        with pytest.raises(ServiceError, match="incomplete"):
            service.submit(**sub)
        sub = complete_submission(service, state)
        sub["scores"][victim] = 101
        with pytest.raises(ServiceError) as err:
            service.submit(**sub)
        assert any("101" in d["reason"] for d in err.value.details)

    def test_out_of_order_and_duplicate_rejected(self, service, tmp_path):
        state = service.start("alice")
        first_panel = state["panel"]["panel_id"]
        sub = complete_submission(service, state)
        next_state = service.submit(**sub)
        store_size = service.store.path.stat().st_size
        # duplicate of completed panel: rejected, store unchanged
        with pytest.raises(ServiceError) as err:
            service.submit(**sub)
        assert err.value.status == 409
        assert service.store.path.stat().st_size == store_size
        # skipping ahead: panel id that is not the expected next one
        sub2 = complete_submission(service, next_state)
        sub2["panel_id"] = "p9"
        with pytest.raises(ServiceError, match="out-of-order"):
            service.submit(**sub2)

    def test_rejected_submission_not_persisted(self, service):
        state = service.start("alice")
        sub = complete_submission(service, state)
        sub["moved"] = {k: False for k in sub["moved"]}
        with pytest.raises(ServiceError):
            service.submit(**sub)
        assert all(e["type"] == "session_start" for e in service.store.replay())


class TestPersistence:
    def test_restart_resumes_and_replays(self, design, tmp_path):
        store_path = tmp_path / "store" / "exp.jsonl"
        service = RatingService(design, ExperimentStore(store_path))
        state = service.start("alice")
        service.submit(**complete_submission(service, state))
        run_full_session(service, "bob")

        reborn = RatingService(design, ExperimentStore(store_path))
        resumed = reborn.start("alice")          # tokens died with the process
        assert resumed["completed"] == 1
        assert resumed["panel"]["index"] == 1
        assert reborn.start("bob", resume=True)["done"]
        # same records and assignments after replay
        assert len(reborn.scored_records()) == len(service.scored_records())
        assert reborn.sessions["alice"].test_set == service.sessions["alice"].test_set

    def test_all_stored_records_have_flags_true_and_scores_in_range(self, service):
        run_full_session(service, "alice")
        for event in service.store.replay():
            if event["type"] == "rating":
                assert event["all_listened"] is True
                assert event["all_moved"] is True
                assert all(0 <= v <= 100 for v in event["scores"].values())


class TestBlindness:
    def test_no_system_identity_in_payloads(self, service, design):
        state = service.start("alice")
        while not state["done"]:
            blob = json.dumps(state)
            for system in design.all_systems():
                assert system not in blob
            state = service.submit(**complete_submission(service, state))

    def test_unblinding_only_in_store(self, service, design):
        state = service.start("alice")
        service.submit(**complete_submission(service, state))
        events = service.store.replay()
        rating = next(e for e in events if e["type"] == "rating")
        assert set(rating["systems"].values()) == set(design.all_systems())


class TestRecordsAndReport:
    def test_scored_records_unblinded(self, service, design):
        run_full_session(service, "alice")
        records = service.scored_records()
        assert len(records) == 3
        for rec in records:
            assert set(rec.scores) == set(design.all_systems())

    def test_report_runs(self, service):
        for p in ("a", "b", "c"):
            run_full_session(service, p)
        report = service.report(alpha=0.05, margin=10)
        assert report["records"] == 9
        assert {row["system"] for row in report["systems"]} >= {"sys-a", "resynthesis"}
        assert report["pairwise"]


class TestHttpApi:
    @pytest.fixture
    def server(self, design, tmp_path):
        srv = serve(design, tmp_path / "store" / "exp.jsonl", port=0)
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        yield srv
        srv.shutdown()
        thread.join(timeout=5)

    def post(self, server, path, payload):
        port = server.server_address[1]
        req = urllib.request.Request(
            f"http://127.0.0.1:{port}{path}",
            data=json.dumps(payload).encode(), method="POST",
            headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req) as resp:
            return json.loads(resp.read())

    def get(self, server, path):
        port = server.server_address[1]
        with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}") as resp:
            return resp.headers, resp.read()

    def test_full_http_session(self, server):
        state = self.post(server, "/api/start", {"participant": "web1"})
        assert state["panel"]["stimuli"]
        while not state["done"]:
            panel = state["panel"]
            payload = {
                "token": state["token"], "panel_id": panel["panel_id"],
                "scores": {s["id"]: 55 + 3 * i for i, s in enumerate(panel["stimuli"])},
                "listened": {s["id"]: True for s in panel["stimuli"]},
                "moved": {s["id"]: True for s in panel["stimuli"]},
            }
            state = self.post(server, "/api/submit", payload)
            assert state["accepted"]
        headers, body = self.get(server, "/api/report")
        report = json.loads(body)
        assert report["records"] == 3

    def test_http_validation_error(self, server):
        state = self.post(server, "/api/start", {"participant": "web2"})
        panel = state["panel"]
        payload = {
            "token": state["token"], "panel_id": panel["panel_id"],
            "scores": {s["id"]: 50 for s in panel["stimuli"]},
            "listened": {s["id"]: True for s in panel["stimuli"]},
            "moved": {s["id"]: False for s in panel["stimuli"]},
        }
        with pytest.raises(urllib.error.HTTPError) as err:
            self.post(server, "/api/submit", payload)
        assert err.value.code == 400
        details = json.loads(err.value.read())["details"]
        assert details and all("slider" in d["reason"] for d in details)

    def test_audio_endpoint_serves_wav(self, server):
        state = self.post(server, "/api/start", {"participant": "web3"})
        url = state["panel"]["reference_audio"]
        headers, body = self.get(server, url)
        assert headers["Content-Type"] == "audio/wav"
        assert body[:4] == b"RIFF"

    def test_panel_endpoint(self, server):
        state = self.post(server, "/api/start", {"participant": "web4"})
        _, body = self.get(server, f"/api/panel?token={state['token']}")
        again = json.loads(body)
        assert again["panel"]["panel_id"] == state["panel"]["panel_id"]


def test_store_env_var(monkeypatch, tmp_path):
    from polyvox.cli import _store_path
    import argparse
    monkeypatch.setenv("POLYVOX_STORE", str(tmp_path / "envstore"))
    args = argparse.Namespace(store=None)
    assert _store_path(args, "demo") == tmp_path / "envstore" / "demo.jsonl"
    args = argparse.Namespace(store=str(tmp_path / "explicit"))
    assert _store_path(args, "demo") == tmp_path / "explicit" / "demo.jsonl"
