"""
Run ledger: every CLI run and the artifacts it produced.
"""

from pcfgnn.db.models import Artifact, Base, Run
from pcfgnn.db.repository import RunRepository
from pcfgnn.db.session import init_db, make_engine, session_scope

__all__ = ["Artifact", "Base", "Run", "RunRepository", "init_db", "make_engine", "session_scope"]
