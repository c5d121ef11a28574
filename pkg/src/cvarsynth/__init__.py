"""Risk-averse static output-feedback synthesis against stealthy actuator attacks.

Controllers are chosen to minimise the empirical CVaR of a convex proxy for
the worst-case stealthy attack impact over sampled plant uncertainties, and
come with an out-of-sample probability-of-shortfall certificate.
"""
from .certificate import (Certificate, CertificateError, betainc, certify, confidence, confidence_curve,
                          empirical_ps, shortfall_threshold)
from .impact import (ImpactReport, ProxyConstants, UnboundedImpactError, impact_exact, impact_proxy,
                     proxy_bound_constants, proxy_gradient)
from .lifted import (AffineKappaInverse, LiftedOperators, affine_decomposition, build_kappa_inverse,
                     build_lifted, simulate_closed_loop)
from .model import (Controller, Horizon, ModelError, PlantModel, UncertaintyModel, ValidationReport,
                    example_system, sample_A, validate_model)
from .optimizer import (SolverConfig, SynthesisResult, evaluate_risk, minimize_cvar, nominal_controller,
                        subset_form_objective)
from .scenario import (CvarParameters, ScenarioSet, draw_scenarios, empirical_var_cvar, proxy_values,
                       topm_average)

__version__ = "0.1.0"

__all__ = [
    "AffineKappaInverse", "Certificate", "CertificateError", "Controller", "CvarParameters", "Horizon",
    "ImpactReport", "LiftedOperators", "ModelError", "PlantModel", "ProxyConstants", "ScenarioSet",
    "SolverConfig", "SynthesisResult", "UnboundedImpactError", "UncertaintyModel", "ValidationReport",
    "affine_decomposition", "betainc", "build_kappa_inverse", "build_lifted", "certify", "confidence",
    "confidence_curve", "draw_scenarios", "empirical_ps", "empirical_var_cvar", "evaluate_risk",
    "example_system", "impact_exact", "impact_proxy", "proxy_bound_constants", "minimize_cvar",
    "nominal_controller", "proxy_gradient", "proxy_values", "sample_A", "shortfall_threshold",
    "simulate_closed_loop", "subset_form_objective", "topm_average", "validate_model",
]
