#pragma once

#include "esapo/core.hpp"
#include "esapo/policy.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace esapo {

// Central finite-difference harness. It only ever evaluates scalar
// functions, so it stays independent of the analytic gradient code.

/// |a − b| / max(|a|, |b|, floor). Below `floor` the error is absolute.
double relative_error(double analytic, double numeric, double floor = 1.0);

/// Central differences of f at x, step h, one coordinate at a time.
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> x, double h);

/// Central differences of f over every coefficient of `params`.
std::vector<double> numeric_param_gradient(const std::function<double(const PolicyParams&)>& f,
                                           PolicyParams params, double h);

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1.0);

/// Flattened coefficients in PolicyParams::coeff order.
std::vector<double> flatten(const PolicyParams& p);

/// A random small policy problem: V ≤ 8, d_ctx ≤ 8, 1..3 triples whose
/// responses have 1..5 tokens, and random loss hyperparameters.
struct RandomInstance {
  PolicyParams params;
  PolicyParams ref_params;
  std::vector<PreferenceTriple> triples;
  double beta = 0.1;
  double eps = 0.1;
  double tau = 0.1;
};

RandomInstance random_instance(std::uint64_t seed);

struct GradcheckConfig {
  std::uint64_t seed = 7;
  std::size_t instances = 100;
  double h = 1e-5;
  double tolerance = 1e-5;
};

struct GradcheckRow {
  std::string check;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Gradient checks for the four losses w.r.t. rewards, log π w.r.t. policy
/// parameters, and batch_loss w.r.t. policy parameters for every method.
std::vector<GradcheckRow> run_gradcheck(const GradcheckConfig& cfg);

std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows);

}  // namespace esapo
