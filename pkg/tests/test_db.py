"""
Tests for the run ledger and run manifests.
"""

import json

import pytest

from pcfgnn.config import Settings
from pcfgnn.db import RunRepository, init_db, make_engine, session_scope
from pcfgnn.errors import ParseError, StageError
from pcfgnn.manifest import RunManifest, RunRecorder


@pytest.fixture
def db_url(tmp_path):
    return f"sqlite:///{tmp_path}/ledger/runs.db"


@pytest.fixture
def engine(db_url):
    engine = make_engine(db_url)
    init_db(engine)
    yield engine
    engine.dispose()


class TestRunRepository:
    """Tests for ledger persistence."""

    def test_start_and_complete(self, engine):
        """A completed run keeps its status, timings and artifacts."""
        with session_scope(engine) as session:
            repo = RunRepository(session)
            run = repo.start_run("r1", "pretrain", seed=3, config={"epochs": 5})
            repo.add_artifact(run, "checkpoint", "/tmp/m.pcfm", "ab" * 32, 128)
            repo.complete_run(run, "success", timings={"train": 1.5})

        with session_scope(engine) as session:
            run = RunRepository(session).get_by_run_id("r1")
            assert run is not None
            assert run.status == "success"
            assert run.seed == 3
            assert run.config == {"epochs": 5}
            assert run.timings == {"train": 1.5}
            assert [a.role for a in run.artifacts] == ["checkpoint"]
            assert run.duration_seconds >= 0

    def test_list_newest_first_and_filter(self, engine):
        """Runs list newest first and filter by subcommand."""
        with session_scope(engine) as session:
            repo = RunRepository(session)
            for i, sub in enumerate(["build-graph", "pretrain", "pretrain"]):
                repo.complete_run(repo.start_run(f"r{i}", sub), "success")

        with session_scope(engine) as session:
            repo = RunRepository(session)
            assert [r.run_id for r in repo.list_runs()] == ["r2", "r1", "r0"]
            assert [r.run_id for r in repo.list_runs(subcommand="pretrain", limit=1)] == ["r2"]

    def test_rollback_on_error(self, engine):
        """A failing session leaves nothing behind."""
        with pytest.raises(RuntimeError), session_scope(engine) as session:
            RunRepository(session).start_run("lost", "eval")
            raise RuntimeError("boom")
        with session_scope(engine) as session:
            assert RunRepository(session).get_by_run_id("lost") is None

    def test_missing_run(self, engine):
        """Unknown run ids return None."""
        with session_scope(engine) as session:
            assert RunRepository(session).get_by_run_id("nope") is None


class TestRunRecorder:
    """Tests for manifests and ledger recording."""

    def test_manifest_and_ledger(self, tmp_path, db_url):
        """Finishing writes the manifest and records the run with its artifacts."""
        settings = Settings(database_url=db_url, record_runs=True)
        out = tmp_path / "graph.pcfg"
        recorder = RunRecorder("build-graph", seed=None, config={"min_count": 1}, inputs={"log": "x.tsv"}, settings=settings)
        with recorder.stage("write"):
            out.write_bytes(b"data")
        recorder.artifact("graph", out)
        manifest_path = recorder.finish(out)

        manifest = RunManifest.model_validate(json.loads(manifest_path.read_text()))
        assert manifest_path.name == "graph.pcfg.manifest.json"
        assert manifest.status == "success"
        assert manifest.artifacts[0].size_bytes == 4
        assert "write" in manifest.timings

        engine = make_engine(db_url)
        with session_scope(engine) as session:
            run = RunRepository(session).get_by_run_id(manifest.run_id)
            assert run is not None
            assert run.manifest_path == str(manifest_path)
            assert run.artifacts[0].sha256 == manifest.artifacts[0].sha256
        engine.dispose()

    def test_stage_wraps_errors(self):
        """Failures inside a stage carry the subcommand and stage name."""
        recorder = RunRecorder("pretrain", settings=Settings(record_runs=False))
        with pytest.raises(StageError) as err, recorder.stage("read-graph"):
            raise ParseError("bad label", 3)
        assert err.value.stage == "pretrain:read-graph"
        assert str(err.value) == "[pretrain:read-graph] bad label at line 3"
        assert "read-graph" in recorder.manifest.timings

    def test_failed_run_recorded(self, db_url):
        """A failed run is recorded with its error."""
        recorder = RunRecorder("eval", settings=Settings(database_url=db_url))
        recorder.fail(RuntimeError("out of data"))
        engine = make_engine(db_url)
        with session_scope(engine) as session:
            run = RunRepository(session).get_by_run_id(recorder.manifest.run_id)
            assert run.status == "failed"
            assert run.errors == ["out of data"]
        engine.dispose()

    def test_recording_disabled(self, tmp_path):
        """With recording off no database is created."""
        url = f"sqlite:///{tmp_path}/never/runs.db"
        recorder = RunRecorder("synthesize", settings=Settings(database_url=url, record_runs=False))
        out = tmp_path / "out.tsv"
        out.write_text("x")
        recorder.finish(out)
        assert not (tmp_path / "never").exists()
