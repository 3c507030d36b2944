"""
Run manifests.

Every CLI run writes ``<primary output>.manifest.json`` listing the resolved
config, inputs, seeds, produced artifacts with their checksums, and per-stage
timings. With ``Settings.record_runs`` the same data goes to the run ledger.
"""

import logging
import time
import uuid
from collections.abc import Iterator
from contextlib import contextmanager
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field
from sqlalchemy.exc import SQLAlchemyError

from pcfgnn import __version__
from pcfgnn.binfmt import sha256_file
from pcfgnn.config import Settings, get_settings
from pcfgnn.db.repository import RunRepository
from pcfgnn.db.session import init_db, make_engine, session_scope
from pcfgnn.errors import PcfError, StageError

logger = logging.getLogger(__name__)


class ArtifactRecord(BaseModel):
    role: str
    path: str
    sha256: str
    size_bytes: int


class RunManifest(BaseModel):
    """What a run read, what it produced, and how long each stage took."""

    run_id: str
    subcommand: str
    version: str = __version__
    status: str = "running"
    seed: int | None = None
    threads: int = 1
    config: dict[str, Any] = Field(default_factory=dict)
    inputs: dict[str, str] = Field(default_factory=dict)
    artifacts: list[ArtifactRecord] = Field(default_factory=list)
    timings: dict[str, float] = Field(default_factory=dict)
    errors: list[str] = Field(default_factory=list)
    started_at: datetime
    completed_at: datetime | None = None


class RunRecorder:
    """
    Collects a manifest while a subcommand runs.

    ``stage`` times a block and re-raises failures as ``StageError`` tagged
    ``<subcommand>:<stage>``.
    """

    def __init__(
        self,
        subcommand: str,
        seed: int | None = None,
        threads: int = 1,
        config: dict[str, Any] | None = None,
        inputs: dict[str, str | Path | None] | None = None,
        settings: Settings | None = None,
    ):
        self.settings = settings or get_settings()
        self.manifest = RunManifest(
            run_id=uuid.uuid4().hex,
            subcommand=subcommand,
            seed=seed,
            threads=threads,
            config=config or {},
            inputs={k: str(v) for k, v in (inputs or {}).items() if v is not None},
            started_at=datetime.now(UTC),
        )

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except (PcfError, OSError, ValueError) as e:
            raise StageError(f"{self.manifest.subcommand}:{name}", e) from e
        finally:
            self.manifest.timings[name] = round(time.perf_counter() - start, 6)

    def artifact(self, role: str, path: str | Path) -> ArtifactRecord:
        path = Path(path)
        record = ArtifactRecord(
            role=role, path=str(path), sha256=sha256_file(path), size_bytes=path.stat().st_size
        )
        self.manifest.artifacts.append(record)
        return record

    def finish(self, primary: str | Path, status: str = "success") -> Path:
        """Write the manifest next to ``primary`` and record the run."""
        self.manifest.status = status
        self.manifest.completed_at = datetime.now(UTC)
        path = Path(f"{primary}.manifest.json")
        path.write_text(self.manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        self._record(manifest_path=str(path))
        return path

    def fail(self, error: BaseException) -> None:
        """Record a failed run in the ledger; no manifest file is written."""
        self.manifest.status = "failed"
        self.manifest.completed_at = datetime.now(UTC)
        self.manifest.errors.append(str(error))
        self._record(manifest_path=None)

    def _record(self, manifest_path: str | None) -> None:
        if not self.settings.record_runs:
            return
        m = self.manifest
        try:
            engine = make_engine(self.settings.database_url)
            init_db(engine)
            with session_scope(engine) as session:
                repo = RunRepository(session)
                run = repo.start_run(
                    run_id=m.run_id,
                    subcommand=m.subcommand,
                    seed=m.seed,
                    config=m.config,
                    inputs=m.inputs,
                    started_at=m.started_at,
                )
                for a in m.artifacts:
                    repo.add_artifact(run, a.role, a.path, a.sha256, a.size_bytes)
                repo.complete_run(run, m.status, m.timings, m.errors, manifest_path)
            engine.dispose()
        except SQLAlchemyError as e:
            logger.warning("could not record run %s in the ledger: %s", m.run_id, e)
