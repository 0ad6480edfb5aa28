import logging
from typing import List

from fastapi import APIRouter, Depends, HTTPException
from sqlalchemy.orm import Session
from ...core.errors import CoalescentError, InputError, UnsupportedError
from ...database.database import get_db
from ...crud import crud
from ...schemas import schemas
from ...services.ewens import ewens_distribution
from ...services.genealogy import replay, to_document
from ...services.measures import PsiEvaluator, validate_measure
from ...services.simulator import parse_stop, simulate
from ...services.speed import SpeedSolver
from ...services.statistics import decompose

logger = logging.getLogger(__name__)

router = APIRouter()


def _http_error(e: CoalescentError) -> HTTPException:
    logger.error(f"{type(e).__name__}: {e}")
    if isinstance(e, InputError):
        status = 422
    elif isinstance(e, UnsupportedError):
        status = 400
    else:
        status = 500
    return HTTPException(status_code=status, detail={"error": type(e).__name__, "message": str(e)})


@router.post("/psi", response_model=List[schemas.PsiPoint])
def post_psi(request: schemas.PsiRequest):
    try:
        ev = PsiEvaluator(validate_measure(request.measure))
        return [schemas.PsiPoint(q=q, psi=ev(q, request.variant)) for q in request.q]
    except CoalescentError as e:
        raise _http_error(e)


@router.post("/speed", response_model=schemas.SpeedResponse)
def post_speed(request: schemas.SpeedRequest):
    try:
        solver = SpeedSolver(PsiEvaluator(validate_measure(request.measure)), request.n)
        return schemas.SpeedResponse(
            n=request.n,
            ell=solver.ell(),
            horizon=solver.horizon(),
            v=[(t, solver.v_of_t(t)) for t in request.t],
        )
    except CoalescentError as e:
        raise _http_error(e)


@router.get("/ewens", response_model=schemas.EwensResponse)
def get_ewens(n: int, gamma: float):
    try:
        dist = ewens_distribution(n, gamma)
    except CoalescentError as e:
        raise _http_error(e)
    return schemas.EwensResponse(
        n=n,
        gamma=gamma,
        pmf=[schemas.EwensRow(configuration=list(c.a), probability=float(p))
             for c, p in zip(dist.configurations, dist.probabilities)],
        k_marginal=dist.k_marginal,
    )


@router.post("/simulate", response_model=schemas.GenealogyDocument, response_model_exclude_none=True)
def post_simulate(request: schemas.SimulateRequest):
    try:
        g = simulate(validate_measure(request.measure), request.n, request.gamma, request.seed, parse_stop(request.stop))
        return to_document(g)
    except CoalescentError as e:
        raise _http_error(e)


@router.post("/families", response_model=schemas.FamiliesResponse)
def post_families(document: schemas.GenealogyDocument):
    try:
        g = replay(document.events, document.n, end_time=document.end_time)
    except CoalescentError as e:
        raise _http_error(e)
    fam = decompose(g)
    return schemas.FamiliesResponse(
        sites_families=[schemas.SitesFamilyOut(mutation_id=f.mutation_id, leaves=list(f.leaves))
                        for f in fam.sites_families],
        alleles_partition=[list(block) for block in fam.alleles_partition],
        spectrum_sites=fam.spectrum_sites,
        spectrum_alleles=fam.spectrum_alleles,
    )


@router.get("/schema/measure")
def get_measure_schema():
    return schemas.MeasureDescription.model_json_schema()


@router.get("/runs", response_model=List[schemas.ExperimentRun])
def get_runs(skip: int = 0, limit: int = 100, statistic: str = None, db: Session = Depends(get_db)):
    return crud.get_runs(db, skip=skip, limit=limit, statistic=statistic)


@router.get("/runs/{run_id}", response_model=schemas.ExperimentRunWithSummary)
def get_run(run_id: int, db: Session = Depends(get_db)):
    run = crud.get_run_with_summary(db, run_id)
    if run is None:
        raise HTTPException(status_code=404, detail=f"experiment run {run_id} not found")
    return run
