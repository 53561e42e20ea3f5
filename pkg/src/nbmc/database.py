"""
Session store operations on top of the SQLModel models.
"""

import logging
from typing import List, Optional

from sqlmodel import desc, select

from .models import SessionRecord, SessionStatus, as_utc, get_session, utcnow
from .models import init_db as model_init_db

logger = logging.getLogger(__name__)


def init_db(url: Optional[str] = None) -> None:
    """Initialize the store at ``url`` (default: the configured sqlite file)."""
    model_init_db(url)


def _with_utc_timestamps(record: Optional[SessionRecord]) -> Optional[SessionRecord]:
    if record is not None:
        record.created_at = as_utc(record.created_at)
        record.updated_at = as_utc(record.updated_at)
    return record


def save_session(record: SessionRecord) -> int:
    """Insert or update a session; returns its id."""
    record.created_at = as_utc(record.created_at)
    record.updated_at = utcnow()
    with get_session() as session:
        if record.id is not None:
            record = session.merge(record)
        session.add(record)
        session.commit()
        session.refresh(record)
        logger.info("Saved session %d (%s, %d trials)", record.id, SessionStatus(record.status).value, record.trials)
        return record.id


def get_session_by_id(session_id: int) -> Optional[SessionRecord]:
    """Retrieves a stored session by its id."""
    with get_session() as session:
        record = session.get(SessionRecord, session_id)
    return _with_utc_timestamps(record)


def list_sessions(status: Optional[SessionStatus] = None) -> List[SessionRecord]:
    """Stored sessions, newest first, optionally filtered by status."""
    with get_session() as session:
        statement = select(SessionRecord)
        if status is not None:
            statement = statement.where(SessionRecord.status == SessionStatus(status))
        statement = statement.order_by(desc(SessionRecord.id))
        records = list(session.exec(statement).all())
    return [_with_utc_timestamps(r) for r in records]
