"""
Record types shared by training, diagnostics and the CLI.
Every record is a pydantic model so CSV rows are validated before they are written.
"""

from typing import Optional

from pydantic import BaseModel, Field, model_validator


class EpochRecord(BaseModel):
    epoch: int = Field(ge=0)
    train_loss: float = Field(ge=0.0)
    test_accuracy: float = Field(ge=0.0, le=1.0)
    wall_seconds: float = Field(ge=0.0)


class RunRecord(EpochRecord):
    model: str
    seed: int


class CompareRow(BaseModel):
    model: str
    epoch: int
    repeats: int = Field(ge=1)
    loss_mean: float
    loss_min: float
    loss_max: float
    accuracy_mean: float
    accuracy_min: float
    accuracy_max: float
    seed: int

    @model_validator(mode="after")
    def _ordered(self):
        # small slack for the rounding of a mean of equal values
        slack = 1e-12
        if not (self.loss_min - slack <= self.loss_mean <= self.loss_max + slack):
            raise ValueError("loss band must satisfy min <= mean <= max")
        if not (self.accuracy_min - slack <= self.accuracy_mean <= self.accuracy_max + slack):
            raise ValueError("accuracy band must satisfy min <= mean <= max")
        return self


class GradientStats(BaseModel):
    k: int = Field(ge=0)
    samples: int = Field(ge=2)
    grad_mean: float
    grad_var: float = Field(ge=0.0)
    stderr: float = Field(ge=0.0)
    var_stderr: float = Field(ge=0.0)
    nq: Optional[int] = None
    layers: Optional[int] = None
    model: Optional[str] = None
    seed: Optional[int] = None


class ConcentrationStats(BaseModel):
    samples: int = Field(ge=1)
    mean_f: float
    var_f: float = Field(ge=0.0)
    stderr: float = Field(ge=0.0)
    target: float
    deviation: float = Field(ge=0.0)
    expressibility: float = Field(ge=0.0)
    expressibility_stderr: float = Field(ge=0.0)
    bound_rhs: float = Field(ge=0.0)
    nq: Optional[int] = None
    layers: Optional[int] = None
    seed: Optional[int] = None


class BoundCheck(BaseModel):
    lhs: float = Field(ge=0.0)
    rhs: float = Field(ge=0.0)
    stderr: float = Field(ge=0.0)
    holds: bool
    nq: Optional[int] = None
    layers: Optional[int] = None
    seed: Optional[int] = None
