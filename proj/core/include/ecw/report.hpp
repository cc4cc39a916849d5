#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecw/constraints.hpp"
#include "ecw/types.hpp"

namespace ecw::io {

inline constexpr const char* kVersion = "0.1.0";

struct TraceRow {
  int iter = 0;
  int state = 0;
  double energy = 0.0;
  double q = 0.0;
  double max_residual = 0.0;
};

struct ResidualEntry {
  std::string property_id;
  int bra = 0;
  int ket = 0;
  double target = 0.0;
  double calc = 0.0;
  double sigma = 1.0;
  double weight = 0.0;
  std::string loss;
  double residual = 0.0;  // (calc - target) / sigma
};

struct PairOverlapEntry {
  int bra = 0;
  int ket = 0;
  double value = 0.0;
};

/// Everything a solve leaves behind. Deterministic content only: no
/// timestamps, no machine identifiers.
struct SolveReport {
  std::string method;  // "hf" | "cc" | "oracle"
  std::uint64_t seed = 0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> energies;
  double q = 0.0;
  std::vector<ResidualEntry> residuals;
  std::vector<PairOverlapEntry> pair_overlaps;
  std::vector<TraceRow> trace;
  std::vector<std::string> events;
  std::map<std::string, double> diagnostics;
  std::vector<Mat> densities;  // final one-particle density per state
};

/// report JSON (version-stamped, key-ordered, round-trip float precision).
std::string report_to_json(const SolveReport& r);
void write_report_json(const SolveReport& r, const std::string& path);

/// CSV convergence trace: header "iter,state,energy,Q,max_residual".
std::string trace_to_csv(const SolveReport& r);
void write_trace_csv(const SolveReport& r, const std::string& path);

/// densities JSON: row-major matrices per state.
void write_densities_json(const SolveReport& r, const std::string& path);

/// Fills residual entries and q of a report from a constraint set and the
/// calculated values at the solution.
void attach_residuals(SolveReport& r, const constraints::ConstraintSet& cs,
                      const constraints::CalcMap& calc, const constraints::OverlapMap& overlaps);

}  // namespace ecw::io
