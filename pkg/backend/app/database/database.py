import logging

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from .models import Base

from ..core import config

logger = logging.getLogger(__name__)


def make_engine(url: str = None):
    url = url or config.DATABASE_URL
    # SQLite는 스레드 간 공유를 위해 check_same_thread 해제
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


engine = make_engine()
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def init_db(bind=None):
    Base.metadata.create_all(bind=bind or engine)


def session_for(url: str):
    """Session on an explicit database (CLI --db)."""
    other = make_engine(url)
    init_db(other)
    logger.info(f"using database {url}")
    return sessionmaker(autocommit=False, autoflush=False, bind=other)()


def get_db():
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
