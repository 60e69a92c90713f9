from .basis import SmoothBasis, build_tprs_basis
from .formula import GammSpec, SmoothTerm, parse_formula
from .design import DesignMatrices, Penalty, TermInfo, assemble_design
from .fit import (
    GammFit,
    PLSResult,
    fit_ar1,
    fit_gamm,
    fit_pls,
    load_fit,
    optimize_reml,
    save_fit,
)
from .inference import (
    DiffResult,
    TestReport,
    build_report,
    difference_smooth,
    predict_with_ci,
    test_parametric,
    test_smooth,
)

__all__ = [
    "SmoothBasis",
    "build_tprs_basis",
    "GammSpec",
    "SmoothTerm",
    "parse_formula",
    "DesignMatrices",
    "Penalty",
    "TermInfo",
    "assemble_design",
    "GammFit",
    "PLSResult",
    "fit_ar1",
    "fit_gamm",
    "fit_pls",
    "load_fit",
    "optimize_reml",
    "save_fit",
    "DiffResult",
    "TestReport",
    "build_report",
    "difference_smooth",
    "predict_with_ci",
    "test_parametric",
    "test_smooth",
]
