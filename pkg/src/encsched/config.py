"""JSON run configuration.

Matrices are given row-major with explicit dimensions::

    {"rows": 2, "cols": 2, "data": [1.5, 0, 0, 0.9]}

Unknown keys are rejected at every level.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from encsched.channel import ChannelParams
from encsched.errors import ConfigError
from encsched.linear_model import CovarianceLadder, SystemModel, build_ladder
from encsched.mdp_full_info import ProblemParams


class Matrix(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)

    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    data: list[float]

    @model_validator(mode="after")
    def _check_size(self):
        if len(self.data) != self.rows * self.cols:
            raise ValueError(f"data has {len(self.data)} entries, expected rows*cols = {self.rows * self.cols}")
        return self

    def to_array(self) -> np.ndarray:
        return np.array(self.data, dtype=float).reshape(self.rows, self.cols)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, populate_by_name=True)

    A: Matrix
    C: Matrix
    Q: Matrix
    R: Matrix
    Pi0: Matrix
    lam: float = Field(alias="lambda", ge=0.0, le=1.0)
    lam_e: float = Field(alias="lambda_e", ge=0.0, le=1.0)
    eps1: float = Field(ge=0.0, le=1.0)
    eps2: float = Field(ge=0.0, le=1.0)
    enc_cost: float = Field(ge=0.0, allow_inf_nan=False)
    beta: float = Field(gt=0.0, lt=1.0)
    horizon: int = Field(ge=1)
    ladder_depth: Optional[int] = Field(default=None, ge=1)
    riccati_tol: float = Field(default=1e-12, gt=0.0)
    riccati_max_iter: int = Field(default=1_000_000, ge=1)
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    trials: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_depth(self):
        if self.ladder_depth is not None and self.ladder_depth < self.horizon + 1:
            raise ValueError(f"ladder_depth must be >= horizon + 1 = {self.horizon + 1}")
        return self

    @property
    def depth(self) -> int:
        return self.horizon + 1 if self.ladder_depth is None else self.ladder_depth

    def model(self) -> SystemModel:
        return SystemModel(
            A=self.A.to_array(),
            C=self.C.to_array(),
            Q=self.Q.to_array(),
            R=self.R.to_array(),
            Pi0=self.Pi0.to_array(),
        )

    def channel(self) -> ChannelParams:
        return ChannelParams(self.lam, self.lam_e, self.eps1, self.eps2)

    def problem(self) -> ProblemParams:
        return ProblemParams(self.model(), self.channel(), self.beta, self.enc_cost, self.horizon)

    def ladder(self, p: ProblemParams, depth: Optional[int] = None) -> CovarianceLadder:
        return build_ladder(
            p.model,
            self.depth if depth is None else depth,
            tol=self.riccati_tol,
            max_iter=self.riccati_max_iter,
        )


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(obj, source="<config>") -> RunConfig:
    try:
        cfg = RunConfig.model_validate(obj)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_errors(exc)}") from None
    try:
        cfg.problem()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    """Read and fully validate a JSON run configuration.

    Raises:
        ConfigError: malformed JSON (with line/column) or a failed
            validation (with the field path).
        OSError: the file cannot be read.
    """
    path = Path(path)
    text = path.read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(obj, str(path))
