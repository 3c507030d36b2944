"""
Repository for run-ledger operations.
"""

from datetime import UTC, datetime
from typing import Any

from sqlalchemy import select
from sqlalchemy.orm import Session, selectinload

from pcfgnn.db.models import Artifact, Run


class RunRepository:
    """Repository for Run and Artifact operations."""

    def __init__(self, session: Session):
        self.session = session

    def start_run(
        self,
        run_id: str,
        subcommand: str,
        seed: int | None = None,
        config: dict[str, Any] | None = None,
        inputs: dict[str, str] | None = None,
        started_at: datetime | None = None,
    ) -> Run:
        """Start a new run."""
        run = Run(
            run_id=run_id,
            subcommand=subcommand,
            status="running",
            seed=seed,
            config=config or {},
            inputs=inputs or {},
            started_at=started_at or datetime.now(UTC),
        )
        self.session.add(run)
        self.session.flush()
        return run

    def add_artifact(self, run: Run, role: str, path: str, sha256: str, size_bytes: int) -> Artifact:
        artifact = Artifact(run_id=run.id, role=role, path=path, sha256=sha256, size_bytes=size_bytes)
        self.session.add(artifact)
        self.session.flush()
        return artifact

    def complete_run(
        self,
        run: Run,
        status: str,
        timings: dict[str, float] | None = None,
        errors: list[str] | None = None,
        manifest_path: str | None = None,
    ) -> Run:
        """Complete a run."""
        run.completed_at = datetime.now(UTC)
        run.status = status
        run.timings = timings or {}
        run.errors = errors or []
        run.manifest_path = manifest_path
        started = run.started_at if run.started_at.tzinfo else run.started_at.replace(tzinfo=UTC)
        run.duration_seconds = (run.completed_at - started).total_seconds()
        self.session.flush()
        return run

    def get_by_run_id(self, run_id: str) -> Run | None:
        stmt = select(Run).where(Run.run_id == run_id).options(selectinload(Run.artifacts))
        return self.session.scalar(stmt)

    def list_runs(self, limit: int = 20, subcommand: str | None = None) -> list[Run]:
        """Most recent runs first."""
        stmt = select(Run).options(selectinload(Run.artifacts)).order_by(Run.started_at.desc(), Run.id.desc())
        if subcommand:
            stmt = stmt.where(Run.subcommand == subcommand)
        return list(self.session.scalars(stmt.limit(limit)))
