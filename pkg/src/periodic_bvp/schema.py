"""JSON problem documents and their conversion to solver objects."""

from __future__ import annotations

import math
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .linear import BVPProblem, ForcingFunction, TrigTerm
from .lyapunov_schmidt import NonlinearRHS, PolynomialTerm, polynomial_rhs
from .spectral import SpectralOperator
from .vdp import VdPConfig, build_vdp_problem, vdp_rhs

SCHEMA_VERSION = "1.0"
_SLOTS = {"x": 0, "y": 1}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class OperatorSpec(_Strict):
    eigenvalues: Optional[list[float]] = None
    rule: Optional[Literal["k^2"]] = None
    n_modes: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _one_form(self):
        if (self.eigenvalues is None) == (self.rule is None):
            raise ValueError("give either 'eigenvalues' or 'rule' (with 'n_modes')")
        if self.rule is not None and self.n_modes is None:
            raise ValueError("'rule' requires 'n_modes'")
        return self

    def build(self) -> SpectralOperator:
        if self.eigenvalues is not None:
            return SpectralOperator(np.array(self.eigenvalues))
        k = np.arange(1, self.n_modes + 1, dtype=float)
        return SpectralOperator(k**2)


class TrigTermSpec(_Strict):
    mode: int = Field(ge=1)
    slot: Literal["x", "y"]
    a: float = 0.0
    b: float = 0.0
    omega: float = 0.0


class ForcingSpec(_Strict):
    terms: list[TrigTermSpec] = []
    samples: Optional[list[list[tuple[float, float]]]] = None
    allow_interpolation: bool = False


class PolynomialTermSpec(_Strict):
    mode: int = Field(ge=1)
    slot: Literal["x", "y"]
    coeff: float
    powers: list[tuple[int, int]]
    omega: float = 0.0
    phase: float = 0.0


class NonlinearSpec(_Strict):
    system: Optional[Literal["van_der_pol"]] = None
    polynomial: Optional[list[PolynomialTermSpec]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.system is None) == (self.polynomial is None):
            raise ValueError("give either 'system' or 'polynomial'")
        return self


class VdPSpec(_Strict):
    n_modes: int = Field(ge=1)
    support: list[int] = [1]
    w: float = Field(default=2.0 * math.pi, gt=0)


class Settings(_Strict):
    grid_size: int = Field(default=1024, ge=2)
    tol: float = Field(default=1e-10, gt=0)
    solvability_tol: float = Field(default=1e-8, gt=0)
    boundary_tol: float = Field(default=1e-8, gt=0)
    newton_tol: float = Field(default=1e-12, gt=0)
    mu: float = 1.5
    series_terms: int = Field(default=200, ge=1)
    eps: float = 0.0
    eps0: float = Field(default=0.1, gt=0)
    max_iter: int = Field(default=200, ge=1)
    resonance_tol: float = Field(default=1e-9, ge=0)
    rank_tol: float = Field(default=1e-10, gt=0)
    seed: Optional[int] = None
    skip_newton: bool = False


class ProblemDocument(_Strict):
    schema_version: Literal["1.0"]
    kind: Literal["linear", "nonlinear", "vdp"]
    operator: Optional[OperatorSpec] = None
    w: float = Field(default=2.0 * math.pi, gt=0)
    alpha: Optional[list[tuple[float, float]]] = None
    forcing: Optional[ForcingSpec] = None
    nonlinear: Optional[NonlinearSpec] = None
    vdp: Optional[VdPSpec] = None
    c_bar: Optional[list[tuple[float, float]]] = None
    settings: Settings = Settings()

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind in ("linear", "nonlinear") and self.operator is None:
            raise ValueError(f"kind '{self.kind}' requires 'operator'")
        if self.kind == "nonlinear" and self.nonlinear is None:
            raise ValueError("kind 'nonlinear' requires 'nonlinear'")
        if self.kind == "vdp" and self.vdp is None:
            raise ValueError("kind 'vdp' requires 'vdp'")
        return self

    # -- conversion -------------------------------------------------------

    def vdp_config(self) -> VdPConfig:
        return VdPConfig(self.vdp.n_modes, self.vdp.w, self.settings.eps, tuple(self.vdp.support))

    def to_problem(self) -> BVPProblem:
        if self.kind == "vdp":
            return build_vdp_problem(self.vdp_config())[0]
        op = self.operator.build()
        n = op.n_modes
        alpha = np.zeros((n, 2)) if self.alpha is None else np.array(self.alpha, dtype=float)
        forcing = ForcingFunction.zero(n)
        if self.forcing is not None:
            terms = tuple(TrigTerm(t.mode, _SLOTS[t.slot], t.a, t.b, t.omega) for t in self.forcing.terms)
            samples = None if self.forcing.samples is None else np.array(self.forcing.samples, dtype=float)
            forcing = ForcingFunction(n, terms, samples, self.forcing.allow_interpolation)
        return BVPProblem(op, self.w, alpha, forcing)

    def to_rhs(self, problem: BVPProblem) -> NonlinearRHS:
        if self.kind == "vdp" or self.nonlinear.system == "van_der_pol":
            return vdp_rhs(problem.op)
        terms = [
            PolynomialTerm(t.mode, _SLOTS[t.slot], t.coeff, tuple(t.powers), t.omega, t.phase)
            for t in self.nonlinear.polynomial
        ]
        return polynomial_rhs(terms, problem.n_modes)

    def c_bar_array(self, n_modes: int) -> np.ndarray:
        if self.c_bar is None:
            return np.zeros((n_modes, 2))
        return np.array(self.c_bar, dtype=float)


def load_document(text: str) -> ProblemDocument:
    """Parse and validate a JSON document (raises json or pydantic errors)."""
    return ProblemDocument.model_validate_json(text)


def dump_document(doc: ProblemDocument) -> str:
    return doc.model_dump_json(indent=2, exclude_none=True)
