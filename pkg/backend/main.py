from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from app.api.endpoints import coalescent
from app.core import config
from app.core.config import ARTIFACT_VERSION, setup_logging
from app.database.database import engine, Base

setup_logging()

# 실험 결과 저장용 테이블 생성
Base.metadata.create_all(bind=engine)

app = FastAPI(
    title="Coalescent Families API",
    description="Xi / Lambda coalescent genealogies with mutations: psi, speed, simulation, families, Ewens",
    version=ARTIFACT_VERSION,
)

# 개발 환경 기본 origin
allowed_origins = [
    "http://localhost:3000",
    "http://localhost:8000",
]

# 환경 변수로 추가 도메인 허용
if config.FRONTEND_URL:
    allowed_origins.append(config.FRONTEND_URL)

app.add_middleware(
    CORSMiddleware,
    allow_origins=allowed_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# API 라우터 등록
app.include_router(coalescent.router, prefix="/api", tags=["coalescent"])


@app.get("/")
async def read_root():
    return {
        "message": "Coalescent Families backend",
        "docs": "/docs",
        "api": "/api",
    }


@app.get("/health")
async def health():
    return {"status": "ok", "version": ARTIFACT_VERSION}
