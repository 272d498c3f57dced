"""Curvature and Jacobi-operator spectra for metric and connection models.

The package computes curvature of coordinate models (metrics or affine
connections with rational or elementary-function entries), extracts
Jacobi-type operator spectra exactly or numerically, and decides
Osserman-type spectral-rigidity properties with symbolic proofs where
possible and seeded sampling otherwise.
"""

from .classify import (
    FAILS,
    HOLDS_SAMPLED,
    HOLDS_SYMBOLIC,
    INAPPLICABLE,
    SampleBudget,
    Verdict,
    WalkerReport,
    classify_affine_osserman,
    classify_conformally_osserman,
    classify_osserman,
    classify_projective_weyl_osserman,
    classify_projectively_osserman,
    walker_analyze,
    walker_closed_form_a,
)
from .expr import Chart, Expression, evaluate, parse, to_string
from .geom import (
    ConnectionModel,
    DegenerateMetricError,
    MetricModel,
    conformal_jacobi,
    jacobi,
    levi_civita,
    product_connection,
    product_metric,
    projective_change,
    projective_jacobi,
    ricci,
    sample_unit_vectors,
    weyl_conformal,
    weyl_projective,
)
from .spectral import (
    CharPoly,
    SpectrumMultiset,
    char_poly,
    eigenvalues,
    is_nilpotent,
    projective_compare,
    spectra_equal,
)

__version__ = "0.1.0"

__all__ = [
    "FAILS",
    "HOLDS_SAMPLED",
    "HOLDS_SYMBOLIC",
    "INAPPLICABLE",
    "Chart",
    "CharPoly",
    "ConnectionModel",
    "DegenerateMetricError",
    "Expression",
    "MetricModel",
    "SampleBudget",
    "SpectrumMultiset",
    "Verdict",
    "WalkerReport",
    "char_poly",
    "classify_affine_osserman",
    "classify_conformally_osserman",
    "classify_osserman",
    "classify_projective_weyl_osserman",
    "classify_projectively_osserman",
    "conformal_jacobi",
    "eigenvalues",
    "evaluate",
    "is_nilpotent",
    "jacobi",
    "levi_civita",
    "parse",
    "product_connection",
    "product_metric",
    "projective_change",
    "projective_compare",
    "projective_jacobi",
    "ricci",
    "sample_unit_vectors",
    "spectra_equal",
    "to_string",
    "walker_analyze",
    "walker_closed_form_a",
    "weyl_conformal",
    "weyl_projective",
    "__version__",
]
