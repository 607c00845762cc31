// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

// Timing and allocation sweeps over N for the attention variants, power-law
// fits of the measured times, and CSV/JSON reporting.

#ifndef LINATT_BENCH_H_
#define LINATT_BENCH_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "linatt/attention.h"

namespace linatt {

enum class Direction { kForward, kBackward };

std::string_view DirectionName(Direction d);
std::optional<Direction> ParseDirection(std::string_view name);

inline constexpr std::uint64_t kDefaultFloatBudget = std::uint64_t{1} << 26;

struct BenchConfig {
  std::vector<std::size_t> n_values;
  std::size_t c = 64;
  std::size_t r = 8;
  std::size_t reps = 5;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
  std::string csv_path;
  std::string json_path;
  std::vector<AttentionVariant> variants = {AttentionVariant::kVanillaSoftmax,
                                            AttentionVariant::kLinearLinearOrder};
  std::vector<Direction> directions = {Direction::kForward, Direction::kBackward};
  // Runs whose predicted peak exceeds this are recorded as infeasible
  // without executing. 0 disables the check.
  std::uint64_t float_budget = 0;

  // Throws ContractViolation on an invalid configuration.
  void Validate() const;
};

struct BenchRecord {
  AttentionVariant variant = AttentionVariant::kVanillaSoftmax;
  Direction direction = Direction::kForward;
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t r = 0;
  std::size_t reps = 0;
  double wall_seconds = 0.0;  // median over reps; NaN when infeasible
  std::uint64_t peak_floats = 0;  // observed, or predicted when infeasible
  std::uint64_t seed = 0;
  bool feasible = true;
};

struct ScalingFit {
  AttentionVariant variant = AttentionVariant::kVanillaSoftmax;
  Direction direction = Direction::kForward;
  double exponent = 0.0;
  double r_squared = 0.0;
  std::size_t n_min = 0;
  std::size_t n_max = 0;
  std::size_t points = 0;
};

struct PeakTerm {
  std::string name;
  std::uint64_t floats;
};

// Every matrix the implementation allocates for one call, in allocation
// order. The sum equals the ledger's peak because nothing is released early.
std::vector<PeakTerm> PeakFloatTerms(AttentionVariant v, std::size_t n, std::size_t c,
                                     std::size_t r, Direction d);
std::uint64_t PredictPeakFloats(AttentionVariant v, std::size_t n, std::size_t c,
                                std::size_t r, Direction d);

// Runs one call under a fresh ledger and returns its peak.
std::uint64_t MeasurePeakFloats(AttentionVariant v, Direction d, const FeatureMap& x,
                                const ProjectionSet& p, const Matrix& upstream);

// Largest N whose predicted peak fits in `budget`, or 0 if even N = 1 does not.
std::size_t LargestFeasibleN(AttentionVariant v, std::size_t c, std::size_t r,
                             Direction d, std::uint64_t budget);

using ProgressFn = std::function<void(const BenchRecord&)>;

std::vector<BenchRecord> RunSweep(const BenchConfig& config, const ProgressFn& progress = {});

// Ordinary least squares of log(time) on log(n).
ScalingFit FitPowerLaw(std::span<const double> n, std::span<const double> seconds);

// Fit for one (variant, direction) over its feasible records. Requires at
// least 4 distinct N spanning at least 16x.
ScalingFit FitScaling(std::span<const BenchRecord> records, AttentionVariant v,
                      Direction d);
// Fits for every (variant, direction) group that meets FitScaling's
// requirements; other groups are skipped.
std::vector<ScalingFit> FitAllScaling(std::span<const BenchRecord> records);

// Smallest N at which `fast` is strictly faster than `slow` there and at every
// larger N measured for both. An infeasible `slow` run counts as slower.
std::optional<std::size_t> FindCrossover(
    std::span<const BenchRecord> records, Direction d = Direction::kForward,
    AttentionVariant fast = AttentionVariant::kLinearLinearOrder,
    AttentionVariant slow = AttentionVariant::kVanillaSoftmax);

struct FeasibilityEntry {
  AttentionVariant variant;
  Direction direction;
  std::uint64_t float_budget;
  std::size_t max_n;
};

struct BenchReport {
  BenchConfig config;
  std::vector<BenchRecord> records;
  std::vector<ScalingFit> fits;
  std::optional<std::size_t> crossover_forward;
  std::optional<std::size_t> crossover_backward;
  std::vector<FeasibilityEntry> feasibility;
};

BenchReport BuildReport(const BenchConfig& config, std::vector<BenchRecord> records);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kCsvHeader =
    "variant,direction,n,c,r,reps,wall_seconds_median,peak_floats,seed";

std::string CsvField(std::string_view field);
void WriteCsv(std::ostream& os, std::span<const BenchRecord> records);
std::string ReportToJson(const BenchReport& report);
// Throws IoError on malformed input.
BenchReport ReportFromJson(std::string_view text);
std::string RenderReportText(const BenchReport& report);

// Throws IoError if a file cannot be created next to `path`.
void EnsureWritable(const std::string& path);
// Writes to `path.tmp` and renames over `path`.
void WriteFileAtomic(const std::string& path, std::string_view content);

}  // namespace linatt

#endif  // LINATT_BENCH_H_
