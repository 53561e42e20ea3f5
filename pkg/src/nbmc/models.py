"""
SQLModel models for persisted sequential-estimation sessions.
"""

import enum
from datetime import datetime, timezone
from typing import Optional

from sqlmodel import DateTime, Field, Session, SQLModel, create_engine

from . import config_base as config
from .core import StoppingPlan


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def as_utc(value: datetime) -> datetime:
    """Timestamps read back from SQLite are naive; they were written in UTC."""
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value


class SessionStatus(str, enum.Enum):
    RUNNING = "running"
    STOPPED = "stopped"
    EXHAUSTED = "exhausted"
    CAPPED = "capped"


class SourceKind(str, enum.Enum):
    SYNTHETIC = "synthetic"
    STREAM = "stream"
    REPLAY = "replay"


class SessionRecord(SQLModel, table=True):
    """
    State of one sequential run: the plan, how far the source has been read
    and how the run ended. A synthetic run is reproducible from (seed, p,
    rng_name, rng_version); a replay run from its file.
    """

    __tablename__ = "sessions"

    id: Optional[int] = Field(default=None, primary_key=True)
    N: int
    mu1: float
    mu2: float
    c_bar: float
    trials: int = 0
    successes: int = 0
    status: SessionStatus = Field(default=SessionStatus.RUNNING, index=True)
    source_kind: SourceKind
    seed: Optional[int] = None
    p: Optional[float] = None  # synthetic event probability
    rng_name: Optional[str] = None
    rng_version: Optional[int] = None
    replay_path: Optional[str] = None
    created_at: datetime = Field(default_factory=utcnow, sa_type=DateTime(timezone=True))
    updated_at: datetime = Field(default_factory=utcnow, sa_type=DateTime(timezone=True))

    @property
    def plan(self) -> StoppingPlan:
        return StoppingPlan(self.N, self.mu1, self.mu2)

    @property
    def p_hat(self) -> Optional[float]:
        if self.status is not SessionStatus.STOPPED:
            return None
        return (self.N - 1) / self.trials

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "status": SessionStatus(self.status).value,
            "N": self.N,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "c_bar": self.c_bar,
            "trials": self.trials,
            "successes": self.successes,
            "source_kind": SourceKind(self.source_kind).value,
            "seed": self.seed,
            "p": self.p,
            "rng_name": self.rng_name,
            "rng_version": self.rng_version,
        }


engine = create_engine(config.DEFAULT_STORE_URL, echo=False)


def configure_engine(url: str):
    """Point the session store at ``url`` (any SQLAlchemy URL)."""
    global engine
    if str(engine.url) != url:
        engine.dispose()
        engine = create_engine(url, echo=False)
    return engine


def get_session():
    """Get a database session."""
    return Session(engine, expire_on_commit=False)


def init_db(url: Optional[str] = None):
    """Create the sessions table if it does not exist."""
    if url is not None:
        configure_engine(url)
    SQLModel.metadata.create_all(engine)
