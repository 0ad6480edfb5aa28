import logging
import math

from sqlalchemy.orm import Session
from ..database import models
from ..schemas import schemas
from ..services.experiments import ExperimentResult, ExperimentSpec

logger = logging.getLogger(__name__)


def _finite(x):
    return x if x is not None and math.isfinite(x) else None


def save_experiment(db: Session, spec: ExperimentSpec, result: ExperimentResult) -> models.ExperimentRun:
    db_run = models.ExperimentRun(
        statistic=result.statistic,
        family=spec.measure.family,
        master_seed=str(spec.master_seed),
        replicates=spec.replicates,
        spec_json=spec.to_document().model_dump_json(),
    )
    for row in result.summary():
        db_run.summary_rows.append(models.SummaryRow(
            n=row.n,
            statistic=row.statistic,
            estimate=_finite(row.estimate),
            stderr=_finite(row.stderr),
            median=_finite(row.median),
            replicates=row.replicates,
        ))
    for row in result.replicate_rows():
        db_run.replicate_values.append(models.ReplicateValue(
            n=row["n"],
            replicate=row["replicate"],
            value=_finite(row["value"]),
            label=row.get("configuration"),
        ))
    db.add(db_run)
    db.commit()
    db.refresh(db_run)
    logger.info(f"saved experiment run {db_run.id} ({len(db_run.replicate_values)} replicate values)")
    return db_run


def get_run(db: Session, run_id: int):
    return db.query(models.ExperimentRun).filter(models.ExperimentRun.id == run_id).first()


def get_runs(db: Session, skip: int = 0, limit: int = 100, statistic: str = None):
    query = db.query(models.ExperimentRun)
    if statistic:
        query = query.filter(models.ExperimentRun.statistic == statistic)
    return query.order_by(models.ExperimentRun.id.desc()).offset(skip).limit(limit).all()


def get_run_with_summary(db: Session, run_id: int):
    db_run = get_run(db, run_id)
    if db_run is None:
        return None
    return schemas.ExperimentRunWithSummary(
        id=db_run.id,
        statistic=db_run.statistic,
        master_seed=int(db_run.master_seed),
        replicates=db_run.replicates,
        created_at=db_run.created_at,
        spec_json=db_run.spec_json,
        summary=[schemas.SummaryRow.model_validate(r) for r in sorted(db_run.summary_rows, key=lambda r: r.n)],
    )


def load_result(db: Session, run_id: int):
    """Rebuild an ExperimentResult (and its spec) from a stored run."""
    db_run = get_run(db, run_id)
    if db_run is None:
        return None
    spec = ExperimentSpec.from_document(schemas.ExperimentSpecDocument.model_validate_json(db_run.spec_json))
    values, labels = {}, {}
    for rv in sorted(db_run.replicate_values, key=lambda r: (r.n, r.replicate)):
        values.setdefault(rv.n, {})[rv.replicate] = rv.value if rv.value is not None else math.nan
        if rv.label is not None:
            labels.setdefault(rv.n, {})[rv.replicate] = rv.label
    return spec, ExperimentResult(db_run.statistic, int(db_run.master_seed), values, labels)
