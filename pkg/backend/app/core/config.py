import logging
import os
import sys

from dotenv import load_dotenv

load_dotenv()

ARTIFACT_NAME = "coalescent-families"
ARTIFACT_VERSION = "1.0.0"

DATABASE_URL = os.getenv("COALESCENT_DATABASE_URL", "sqlite:///./experiments.db")
LOG_LEVEL = os.getenv("COALESCENT_LOG_LEVEL", "INFO")

# 수치 허용 오차
QUAD_REL_TOL = float(os.getenv("COALESCENT_QUAD_REL_TOL", "1e-9"))
ROOT_REL_TOL = float(os.getenv("COALESCENT_ROOT_REL_TOL", "1e-10"))

# non-CDI guard
MAX_EVENTS = int(float(os.getenv("COALESCENT_MAX_EVENTS", "1e8")))
WORKERS = int(os.getenv("COALESCENT_WORKERS", "1"))

FRONTEND_URL = os.getenv("FRONTEND_URL")

LOG_FORMAT = '%(asctime)s - %(levelname)s - [%(funcName)s] %(message)s'


def setup_logging(level=None, stream=None):
    """로깅 설정 - CLI와 API 진입점에서 한 번만 호출"""
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        stream=stream or sys.stderr,
    )
