from sqlalchemy import Column, Integer, String, DateTime, Float, ForeignKey, Text
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import relationship
from datetime import datetime

Base = declarative_base()

class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True)
    statistic = Column(String, index=True)
    family = Column(String, index=True)
    # decimal string, seeds go up to 2^64 - 1
    master_seed = Column(String(20))
    replicates = Column(Integer)
    spec_json = Column(Text)
    created_at = Column(DateTime, default=datetime.now)

    summary_rows = relationship("SummaryRow", back_populates="run", cascade="all, delete-orphan")
    replicate_values = relationship("ReplicateValue", back_populates="run", cascade="all, delete-orphan")

class SummaryRow(Base):
    __tablename__ = "summary_rows"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), index=True)
    n = Column(Integer)
    statistic = Column(String)
    estimate = Column(Float, nullable=True)
    stderr = Column(Float, nullable=True)
    median = Column(Float, nullable=True)
    replicates = Column(Integer)

    run = relationship("ExperimentRun", back_populates="summary_rows")

class ReplicateValue(Base):
    __tablename__ = "replicate_values"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), index=True)
    n = Column(Integer, index=True)
    replicate = Column(Integer)
    value = Column(Float, nullable=True)
    # allele configuration "a_1 a_2 ... a_n" for histogram runs
    label = Column(String, nullable=True)

    run = relationship("ExperimentRun", back_populates="replicate_values")
