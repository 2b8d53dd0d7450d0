from typing import List
from pydantic import BaseModel, Field, model_validator


class MatrixPayload(BaseModel):
    """Wire form of a HermitianMatrix: row-major real and imaginary parts."""

    dim: int = Field(ge=0)
    re: List[List[float]]
    im: List[List[float]]

    @model_validator(mode="after")
    def _square(self):
        for part in (self.re, self.im):
            if len(part) != self.dim or any(len(row) != self.dim for row in part):
                raise ValueError(f"matrix parts must be {self.dim}x{self.dim}")
        return self


class PovmPayload(BaseModel):
    dim: int = Field(ge=1)
    N: int = Field(ge=1)
    elements: List[MatrixPayload]

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.elements) != self.N:
            raise ValueError(f"N={self.N} but {len(self.elements)} elements")
        if any(e.dim != self.dim for e in self.elements):
            raise ValueError("element dimensions disagree with dim")
        return self


class KernelPayload(BaseModel):
    L: int = Field(ge=1)
    N: int = Field(ge=1)
    rows: List[List[float]]

    @model_validator(mode="after")
    def _shape(self):
        if len(self.rows) != self.L or any(len(r) != self.N for r in self.rows):
            raise ValueError(f"kernel rows must form an {self.L}x{self.N} table")
        return self
