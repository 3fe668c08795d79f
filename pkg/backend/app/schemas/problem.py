"""
Problem file schema.

A problem file is a JSON object ``{"A": [[...]], "b": [...], "tau": t, "rho": r}``.
"""

from typing import List

from pydantic import BaseModel, ConfigDict, Field, field_validator


class ProblemFile(BaseModel):
    """
    Schema for an elastic-net problem file.
    """

    model_config = ConfigDict(allow_inf_nan=False, extra="forbid")

    A: List[List[float]] = Field(
        ..., min_length=1, description="Design matrix, one list per row (m x n_x)"
    )
    b: List[float] = Field(..., min_length=1, description="Observation vector (m)")
    tau: float = Field(..., gt=0, description="l1 weight")
    rho: float = Field(..., gt=0, description="l2 weight")

    @field_validator("A")
    @classmethod
    def validate_rectangular(cls, v: List[List[float]]) -> List[List[float]]:
        """Validate that every row has the same nonzero length."""
        widths = {len(row) for row in v}
        if len(widths) != 1:
            raise ValueError("All rows of A must have the same length")
        if 0 in widths:
            raise ValueError("Rows of A cannot be empty")
        return v
