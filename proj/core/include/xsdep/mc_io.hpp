#pragma once

#include "xsdep/dgp.hpp"

#include <string>

namespace xsdep {

/// Experiment config document:
///   {"dgp": {"family": "factor(1,1,normal,1)", "time": {"family": "idio_ma", "coeffs": [1, 0.5]},
///            "x_law": "normal", "alignment": 1, "beta": [1], "mu_scale": 1,
///            "errors": "gaussian", "nu": 8, "fixed_design": false},
///    "grid": [[50, 100], [50, 200]], "reps": 2000, "estimator": "fe",
///    "cov": {"method": "cs", "kernel": "bartlett", "trunc": "auto", "declare": "pure-cs"},
///    "seed": 1, "threads": 4, "compute_true_variance": true, "alpha": 0.05,
///    "failure_tolerance": 0.01, "min_reps": 200}
/// Unknown keys are rejected. Throws ParseError / InvalidArgument.
McConfig parse_mc_config(const std::string& json_text);

/// Canonical config document (threads omitted).
std::string config_to_json(const McConfig& config);

/// Byte-deterministic report document (schema_version 1).
std::string report_to_json(const McReport& report);
McReport parse_mc_report(const std::string& json_text);

std::string render_table(const McReport& report);
std::string render_csv(const McReport& report);

}  // namespace xsdep
