// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#include "linatt/bench.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <new>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "linatt/gradients.h"

namespace linatt {
namespace {

using nlohmann::json;

constexpr AttentionVariant kAllVariants[] = {AttentionVariant::kVanillaSoftmax,
                                             AttentionVariant::kLinearQuadraticOrder,
                                             AttentionVariant::kLinearLinearOrder};
constexpr Direction kAllDirections[] = {Direction::kForward, Direction::kBackward};

bool IsQuadratic(AttentionVariant v) { return v != AttentionVariant::kLinearLinearOrder; }

std::uint64_t InputSeed(std::uint64_t seed, std::size_t n) {
  return seed * 0x9E3779B97F4A7C15ull + n;
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

void RunOnce(AttentionVariant v, Direction d, const FeatureMap& x, const ProjectionSet& p,
             const Matrix& upstream) {
  if (d == Direction::kForward) {
    AttentionArtifacts art = Forward(v, x, p);
    (void)art;
  } else {
    GradientBundle g = Backward(v, x, p, upstream);
    (void)g;
  }
}

std::string FormatSeconds(double s) {
  if (!std::isfinite(s)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", s);
  return buf;
}

json OptionalN(const std::optional<std::size_t>& n) {
  return n ? json(*n) : json(nullptr);
}

}  // namespace

std::string_view DirectionName(Direction d) {
  return d == Direction::kForward ? "forward" : "backward";
}

std::optional<Direction> ParseDirection(std::string_view name) {
  if (name == "forward") return Direction::kForward;
  if (name == "backward") return Direction::kBackward;
  return std::nullopt;
}

void BenchConfig::Validate() const {
  if (n_values.empty()) throw ContractViolation("n_values must be non-empty");
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    if (n_values[i] < 1) throw ContractViolation("every N must be >= 1");
    if (i > 0 && n_values[i] <= n_values[i - 1]) {
      throw ContractViolation("n_values must be strictly ascending");
    }
  }
  if (c == 0 || r == 0 || c % r != 0) {
    throw ContractViolation("reduction " + std::to_string(r) + " must divide C=" +
                            std::to_string(c));
  }
  if (reps < 5) throw ContractViolation("reps must be >= 5");
  if (warmup < 1) throw ContractViolation("warmup must be >= 1");
  if (variants.empty()) throw ContractViolation("no variants selected");
  if (directions.empty()) throw ContractViolation("no directions selected");
}

std::vector<PeakTerm> PeakFloatTerms(AttentionVariant v, std::size_t n, std::size_t c,
                                     std::size_t r, Direction d) {
  if (n == 0 || c == 0 || r == 0 || c % r != 0) {
    throw ContractViolation("invalid shape for peak prediction");
  }
  const std::uint64_t N = n, C = c, D = c / r;
  std::vector<PeakTerm> t = {{"z", N * D}, {"y", N * D}, {"phi", N * C}};
  if (IsQuadratic(v)) {
    t.push_back({"attention_map", N * N});
  } else {
    t.push_back({"compact_map", D * C});
  }
  t.push_back({"out", N * C});
  if (d == Direction::kForward) return t;

  if (IsQuadratic(v)) {
    t.push_back({"d_attention_map", N * N});
    t.push_back({"d_phi", N * C});
    t.push_back({"d_z", N * D});
    t.push_back({"d_y", N * D});
  } else {
    t.push_back({"d_z", N * D});
    t.push_back({"d_compact_map", D * C});
    t.push_back({"d_y", N * D});
    t.push_back({"d_phi", N * C});
  }
  t.push_back({"d_wz", C * D});
  t.push_back({"d_wy", C * D});
  t.push_back({"d_wphi", C * C});
  t.push_back({"d_x", N * C});
  return t;
}

std::uint64_t PredictPeakFloats(AttentionVariant v, std::size_t n, std::size_t c,
                                std::size_t r, Direction d) {
  std::uint64_t total = 0;
  for (const PeakTerm& term : PeakFloatTerms(v, n, c, r, d)) total += term.floats;
  return total;
}

std::uint64_t MeasurePeakFloats(AttentionVariant v, Direction d, const FeatureMap& x,
                                const ProjectionSet& p, const Matrix& upstream) {
  AllocationLedger ledger;
  {
    LedgerScope scope(ledger);
    RunOnce(v, d, x, p, upstream);
  }
  return ledger.peak_floats;
}

std::size_t LargestFeasibleN(AttentionVariant v, std::size_t c, std::size_t r,
                             Direction d, std::uint64_t budget) {
  auto fits = [&](std::size_t n) { return PredictPeakFloats(v, n, c, r, d) <= budget; };
  if (!fits(1)) return 0;
  std::size_t lo = 1, hi = 2;
  while (fits(hi)) {
    lo = hi;
    if (hi > (std::size_t{1} << 40)) return hi;
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (fits(mid) ? lo : hi) = mid;
  }
  return lo;
}

std::vector<BenchRecord> RunSweep(const BenchConfig& config, const ProgressFn& progress) {
  config.Validate();
  std::vector<BenchRecord> records;
  for (AttentionVariant v : config.variants) {
    for (Direction d : config.directions) {
      for (std::size_t n : config.n_values) {
        BenchRecord rec;
        rec.variant = v;
        rec.direction = d;
        rec.n = n;
        rec.c = config.c;
        rec.r = config.r;
        rec.reps = config.reps;
        rec.seed = config.seed;
        const std::uint64_t predicted = PredictPeakFloats(v, n, config.c, config.r, d);

        if (config.float_budget > 0 && predicted > config.float_budget) {
          rec.feasible = false;
        } else {
          try {
            Rng rng(InputSeed(config.seed, n));
            const FeatureMap x = FeatureMap::Random(n, config.c, rng);
            const ProjectionSet p = InitProjections(config.c, config.r, rng);
            const Matrix upstream = RandomUniform(n, config.c, -1.0, 1.0, rng);

            for (std::size_t i = 0; i < config.warmup; ++i) {
              rec.peak_floats = MeasurePeakFloats(v, d, x, p, upstream);
            }
            std::vector<double> times;
            times.reserve(config.reps);
            for (std::size_t i = 0; i < config.reps; ++i) {
              AllocationLedger ledger;
              const auto start = std::chrono::steady_clock::now();
              {
                LedgerScope scope(ledger);
                RunOnce(v, d, x, p, upstream);
              }
              const auto stop = std::chrono::steady_clock::now();
              times.push_back(std::chrono::duration<double>(stop - start).count());
              if (ledger.peak_floats != rec.peak_floats) {
                throw std::logic_error("allocation peak changed between repetitions");
              }
            }
            rec.wall_seconds = Median(std::move(times));
          } catch (const std::bad_alloc&) {
            rec.feasible = false;
          }
        }
        if (!rec.feasible) {
          rec.wall_seconds = std::numeric_limits<double>::quiet_NaN();
          rec.peak_floats = predicted;
        }
        if (progress) progress(rec);
        records.push_back(rec);
      }
    }
  }
  return records;
}

ScalingFit FitPowerLaw(std::span<const double> n, std::span<const double> seconds) {
  if (n.size() != seconds.size()) throw ContractViolation("fit inputs differ in length");
  if (n.size() < 4) {
    throw ContractViolation("scaling fit needs at least 4 points, got " +
                            std::to_string(n.size()));
  }
  const double count = static_cast<double>(n.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(n[i] > 0.0) || !(seconds[i] > 0.0)) {
      throw ContractViolation("scaling fit needs positive N and times");
    }
    mx += std::log(n[i]);
    my += std::log(seconds[i]);
  }
  mx /= count;
  my /= count;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double dx = std::log(n[i]) - mx;
    const double dy = std::log(seconds[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw ContractViolation("scaling fit needs distinct N values");
  ScalingFit fit;
  fit.exponent = sxy / sxx;
  fit.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  fit.n_min = static_cast<std::size_t>(*std::min_element(n.begin(), n.end()));
  fit.n_max = static_cast<std::size_t>(*std::max_element(n.begin(), n.end()));
  fit.points = n.size();
  return fit;
}

ScalingFit FitScaling(std::span<const BenchRecord> records, AttentionVariant v,
                      Direction d) {
  std::map<std::size_t, double> by_n;
  for (const BenchRecord& rec : records) {
    if (rec.variant == v && rec.direction == d && rec.feasible) by_n[rec.n] = rec.wall_seconds;
  }
  if (by_n.size() < 4) {
    throw ContractViolation("scaling fit for " + std::string(VariantName(v)) + "/" +
                            std::string(DirectionName(d)) + " needs 4 distinct N, got " +
                            std::to_string(by_n.size()));
  }
  if (by_n.rbegin()->first < 16 * by_n.begin()->first) {
    throw ContractViolation("scaling fit needs N to span at least 16x");
  }
  std::vector<double> ns, ts;
  for (const auto& [n, t] : by_n) {
    ns.push_back(static_cast<double>(n));
    ts.push_back(t);
  }
  ScalingFit fit = FitPowerLaw(ns, ts);
  fit.variant = v;
  fit.direction = d;
  return fit;
}

std::vector<ScalingFit> FitAllScaling(std::span<const BenchRecord> records) {
  std::vector<ScalingFit> fits;
  for (AttentionVariant v : kAllVariants) {
    for (Direction d : kAllDirections) {
      try {
        fits.push_back(FitScaling(records, v, d));
      } catch (const ContractViolation&) {
      }
    }
  }
  return fits;
}

std::optional<std::size_t> FindCrossover(std::span<const BenchRecord> records, Direction d,
                                         AttentionVariant fast, AttentionVariant slow) {
  std::map<std::size_t, const BenchRecord*> fast_at, slow_at;
  for (const BenchRecord& rec : records) {
    if (rec.direction != d) continue;
    if (rec.variant == fast) fast_at[rec.n] = &rec;
    if (rec.variant == slow) slow_at[rec.n] = &rec;
  }
  std::optional<std::size_t> crossover;
  // Walk from the largest shared N down while the fast variant keeps winning.
  for (auto it = fast_at.rbegin(); it != fast_at.rend(); ++it) {
    auto other = slow_at.find(it->first);
    if (other == slow_at.end()) continue;
    const BenchRecord& f = *it->second;
    const BenchRecord& s = *other->second;
    const bool wins = f.feasible && (!s.feasible || f.wall_seconds < s.wall_seconds);
    if (!wins) break;
    crossover = it->first;
  }
  return crossover;
}

BenchReport BuildReport(const BenchConfig& config, std::vector<BenchRecord> records) {
  BenchReport report;
  report.config = config;
  report.records = std::move(records);
  report.fits = FitAllScaling(report.records);
  report.crossover_forward = FindCrossover(report.records, Direction::kForward);
  report.crossover_backward = FindCrossover(report.records, Direction::kBackward);
  const std::uint64_t budget =
      config.float_budget > 0 ? config.float_budget : kDefaultFloatBudget;
  for (AttentionVariant v : config.variants) {
    for (Direction d : config.directions) {
      report.feasibility.push_back({v, d, budget, LargestFeasibleN(v, config.c, config.r, d, budget)});
    }
  }
  return report;
}

std::string CsvField(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void WriteCsv(std::ostream& os, std::span<const BenchRecord> records) {
  os << kCsvHeader << "\r\n";
  for (const BenchRecord& r : records) {
    os << CsvField(VariantName(r.variant)) << ',' << CsvField(DirectionName(r.direction))
       << ',' << r.n << ',' << r.c << ',' << r.r << ',' << r.reps << ','
       << CsvField(FormatSeconds(r.wall_seconds)) << ',' << r.peak_floats << ',' << r.seed
       << "\r\n";
  }
}

std::string ReportToJson(const BenchReport& report) {
  const BenchConfig& c = report.config;
  json j;
  json variants = json::array(), directions = json::array();
  for (auto v : c.variants) variants.push_back(VariantName(v));
  for (auto d : c.directions) directions.push_back(DirectionName(d));
  j["config"] = {{"n_values", c.n_values}, {"c", c.c},           {"r", c.r},
                 {"reps", c.reps},         {"warmup", c.warmup}, {"seed", c.seed},
                 {"variants", variants},   {"directions", directions},
                 {"float_budget", c.float_budget}, {"rng", Rng::kAlgorithm}};
  j["records"] = json::array();
  for (const BenchRecord& r : report.records) {
    j["records"].push_back({{"variant", VariantName(r.variant)},
                            {"direction", DirectionName(r.direction)},
                            {"n", r.n},
                            {"c", r.c},
                            {"r", r.r},
                            {"reps", r.reps},
                            {"wall_seconds_median",
                             r.feasible ? json(r.wall_seconds) : json(nullptr)},
                            {"peak_floats", r.peak_floats},
                            {"seed", r.seed},
                            {"feasible", r.feasible}});
  }
  j["fits"] = json::array();
  for (const ScalingFit& f : report.fits) {
    j["fits"].push_back({{"variant", VariantName(f.variant)},
                         {"direction", DirectionName(f.direction)},
                         {"exponent", f.exponent},
                         {"r_squared", f.r_squared},
                         {"n_min", f.n_min},
                         {"n_max", f.n_max},
                         {"points", f.points}});
  }
  j["crossover"] = {{"forward", OptionalN(report.crossover_forward)},
                    {"backward", OptionalN(report.crossover_backward)}};
  j["feasibility"] = json::array();
  for (const FeasibilityEntry& e : report.feasibility) {
    j["feasibility"].push_back({{"variant", VariantName(e.variant)},
                                {"direction", DirectionName(e.direction)},
                                {"float_budget", e.float_budget},
                                {"max_n", e.max_n}});
  }
  return j.dump(2) + "\n";
}

BenchReport ReportFromJson(std::string_view text) {
  auto variant_of = [](const json& v) {
    auto parsed = ParseVariant(v.get<std::string>());
    if (!parsed) throw IoError("unknown variant '" + v.get<std::string>() + "'");
    return *parsed;
  };
  auto direction_of = [](const json& v) {
    auto parsed = ParseDirection(v.get<std::string>());
    if (!parsed) throw IoError("unknown direction '" + v.get<std::string>() + "'");
    return *parsed;
  };
  auto optional_n = [](const json& v) -> std::optional<std::size_t> {
    if (v.is_null()) return std::nullopt;
    return v.get<std::size_t>();
  };
  try {
    const json j = json::parse(text);
    BenchReport report;
    const json& c = j.at("config");
    report.config.n_values = c.at("n_values").get<std::vector<std::size_t>>();
    report.config.c = c.at("c").get<std::size_t>();
    report.config.r = c.at("r").get<std::size_t>();
    report.config.reps = c.at("reps").get<std::size_t>();
    report.config.warmup = c.at("warmup").get<std::size_t>();
    report.config.seed = c.at("seed").get<std::uint64_t>();
    report.config.float_budget = c.at("float_budget").get<std::uint64_t>();
    report.config.variants.clear();
    for (const json& v : c.at("variants")) report.config.variants.push_back(variant_of(v));
    report.config.directions.clear();
    for (const json& d : c.at("directions")) report.config.directions.push_back(direction_of(d));

    for (const json& r : j.at("records")) {
      BenchRecord rec;
      rec.variant = variant_of(r.at("variant"));
      rec.direction = direction_of(r.at("direction"));
      rec.n = r.at("n").get<std::size_t>();
      rec.c = r.at("c").get<std::size_t>();
      rec.r = r.at("r").get<std::size_t>();
      rec.reps = r.at("reps").get<std::size_t>();
      rec.feasible = r.at("feasible").get<bool>();
      const json& t = r.at("wall_seconds_median");
      rec.wall_seconds = t.is_null() ? std::numeric_limits<double>::quiet_NaN() : t.get<double>();
      rec.peak_floats = r.at("peak_floats").get<std::uint64_t>();
      rec.seed = r.at("seed").get<std::uint64_t>();
      report.records.push_back(rec);
    }
    for (const json& f : j.at("fits")) {
      ScalingFit fit;
      fit.variant = variant_of(f.at("variant"));
      fit.direction = direction_of(f.at("direction"));
      fit.exponent = f.at("exponent").get<double>();
      fit.r_squared = f.at("r_squared").get<double>();
      fit.n_min = f.at("n_min").get<std::size_t>();
      fit.n_max = f.at("n_max").get<std::size_t>();
      fit.points = f.at("points").get<std::size_t>();
      report.fits.push_back(fit);
    }
    report.crossover_forward = optional_n(j.at("crossover").at("forward"));
    report.crossover_backward = optional_n(j.at("crossover").at("backward"));
    for (const json& e : j.at("feasibility")) {
      report.feasibility.push_back({variant_of(e.at("variant")), direction_of(e.at("direction")),
                                    e.at("float_budget").get<std::uint64_t>(),
                                    e.at("max_n").get<std::size_t>()});
    }
    return report;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
}

std::string RenderReportText(const BenchReport& report) {
  std::ostringstream os;
  char line[160];
  os << "records (C=" << report.config.c << ", r=" << report.config.r
     << ", seed=" << report.config.seed << ")\n";
  std::snprintf(line, sizeof line, "  %-16s %-9s %8s %14s %16s\n", "variant", "direction",
                "N", "median_s", "peak_floats");
  os << line;
  for (const BenchRecord& r : report.records) {
    const std::string t = r.feasible ? FormatSeconds(r.wall_seconds) : "infeasible";
    std::snprintf(line, sizeof line, "  %-16s %-9s %8zu %14s %16llu\n",
                  std::string(VariantName(r.variant)).c_str(),
                  std::string(DirectionName(r.direction)).c_str(), r.n, t.c_str(),
                  static_cast<unsigned long long>(r.peak_floats));
    os << line;
  }
  os << "scaling fits (log time vs log N)\n";
  if (report.fits.empty()) os << "  none (need 4 distinct N spanning 16x)\n";
  for (const ScalingFit& f : report.fits) {
    std::snprintf(line, sizeof line, "  %-16s %-9s exponent %.3f  R^2 %.4f  N %zu..%zu\n",
                  std::string(VariantName(f.variant)).c_str(),
                  std::string(DirectionName(f.direction)).c_str(), f.exponent, f.r_squared,
                  f.n_min, f.n_max);
    os << line;
  }
  auto crossover = [](const std::optional<std::size_t>& n) {
    return n ? std::to_string(*n) : std::string("none");
  };
  os << "crossover (linear faster from N on): forward " << crossover(report.crossover_forward)
     << ", backward " << crossover(report.crossover_backward) << "\n";
  os << "feasibility frontier\n";
  for (const FeasibilityEntry& e : report.feasibility) {
    std::snprintf(line, sizeof line, "  %-16s %-9s budget %llu floats -> max N %zu\n",
                  std::string(VariantName(e.variant)).c_str(),
                  std::string(DirectionName(e.direction)).c_str(),
                  static_cast<unsigned long long>(e.float_budget), e.max_n);
    os << line;
  }
  return os.str();
}

void EnsureWritable(const std::string& path) {
  const std::string probe = path + ".tmp";
  {
    std::ofstream out(probe, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write to '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::remove(probe, ec);
}

void WriteFileAtomic(const std::string& path, std::string_view content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write to '" + tmp + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto '" + path + "'");
  }
}

}  // namespace linatt
