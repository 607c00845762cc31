// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "linatt/attention.h"
#include "linatt/channel_attention.h"
#include "linatt/gradients.h"

namespace linatt::cli {
namespace {

constexpr const char* kDefaultVerifySizes = "1x8,4x2,7x16,64x16,257x64,512x64";
constexpr const char* kDefaultGradSizes = "6x4,8x8";

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> SplitList(std::string_view text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t end = comma == std::string_view::npos ? text.size() : comma;
    std::string item = Trim(text.substr(start, end - start));
    if (!item.empty()) parts.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

std::uint64_t ParseU64(std::string_view s, std::string_view what) {
  const std::string t = Trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ContractViolation("invalid " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

std::vector<AttentionVariant> ParseVariants(std::string_view text) {
  std::vector<AttentionVariant> out;
  for (const std::string& name : SplitList(text)) {
    auto v = ParseVariant(name);
    if (!v) throw ContractViolation("unknown variant '" + name + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<Direction> ParseDirections(std::string_view text) {
  std::vector<Direction> out;
  for (const std::string& name : SplitList(text)) {
    auto d = ParseDirection(name);
    if (!d) throw ContractViolation("unknown direction '" + name + "'");
    out.push_back(*d);
  }
  return out;
}

std::string FormatError(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Reductions exercised for a shape: 1, 2 and the requested r, where they
// divide C.
std::vector<std::size_t> Reductions(std::size_t c, std::size_t r, bool include_two) {
  std::vector<std::size_t> out;
  for (std::size_t cand : {std::size_t{1}, include_two ? std::size_t{2} : std::size_t{1}, r}) {
    if (cand > 0 && c % cand == 0 && std::find(out.begin(), out.end(), cand) == out.end()) {
      out.push_back(cand);
    }
  }
  return out;
}

std::size_t CaBottleneck(std::size_t c) {
  for (std::size_t rho : {16, 4, 2}) {
    if (c % rho == 0 && c / rho >= 2) return rho;
  }
  return 1;
}

class Suite {
 public:
  Suite(std::string name, std::string metric) : name_(std::move(name)), metric_(std::move(metric)) {}

  // Records `value`; fails when `ok` is false.
  void Observe(double value, bool ok, const std::string& context) {
    ++checks_;
    if (!std::isfinite(value)) ok = false;
    if (std::isfinite(value)) worst_ = std::max(worst_, value);
    if (!ok && pass_) {
      pass_ = false;
      failure_ = context + " (" + metric_ + " " + FormatError(value) + ")";
    }
  }
  void ObserveAtMost(double value, double limit, const std::string& context) {
    Observe(value, value <= limit, context);
  }
  bool pass() const { return pass_; }

  void Print(std::ostream& out) const {
    out << (pass_ ? "[PASS] " : "[FAIL] ") << name_ << ": worst " << metric_ << " "
        << FormatError(worst_) << " over " << checks_ << " checks";
    if (!pass_) out << "; first failure at " << failure_;
    out << "\n";
  }

 private:
  std::string name_;
  std::string metric_;
  bool pass_ = true;
  double worst_ = 0.0;
  std::size_t checks_ = 0;
  std::string failure_;
};

std::string Context(std::uint64_t seed, std::size_t n, std::size_t c, std::size_t r) {
  return "seed " + std::to_string(seed) + " shape " + std::to_string(n) + "x" +
         std::to_string(c) + " r=" + std::to_string(r);
}

std::uint64_t InstanceSeed(std::uint64_t seed, std::size_t shape, std::size_t instance) {
  return seed + 1000 * shape + instance;
}

Suite RunSoftmaxSuite(std::uint64_t seed) {
  Suite suite("softmax", "row-sum error");
  Rng rng(seed);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t rows = 1 + rng.NextU64() % 8, cols = 1 + rng.NextU64() % 8;
    const Matrix s = RowSoftmax(RandomUniform(rows, cols, -50.0, 50.0, rng));
    double worst = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (double v : s.row(r)) sum += v;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    suite.ObserveAtMost(worst, 1e-12, "seed " + std::to_string(seed) + " matrix " + std::to_string(i));
  }
  // Large logits must not overflow.
  const Matrix big = RowSoftmax(Matrix::FromRows({{1000.0, 1001.0}}));
  const double e = std::exp(1.0);
  const double err = std::max(std::abs(big(0, 0) - 1.0 / (1.0 + e)), std::abs(big(0, 1) - e / (1.0 + e)));
  suite.ObserveAtMost(err, 1e-12, "stability case [1000, 1001]");
  return suite;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> ParseShapes(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  for (const std::string& item : SplitList(text)) {
    const auto x = item.find_first_of("xX");
    if (x == std::string::npos) throw ContractViolation("shape '" + item + "' is not NxC");
    const std::size_t n = ParseU64(std::string_view(item).substr(0, x), "N");
    const std::size_t c = ParseU64(std::string_view(item).substr(x + 1), "C");
    if (n == 0 || c == 0) throw ContractViolation("shape '" + item + "' has a zero dimension");
    shapes.emplace_back(n, c);
  }
  if (shapes.empty()) throw ContractViolation("no shapes given");
  return shapes;
}

std::vector<std::size_t> ParseSizeList(std::string_view text) {
  std::vector<std::size_t> out;
  for (const std::string& item : SplitList(text)) out.push_back(ParseU64(item, "size"));
  if (out.empty()) throw ContractViolation("empty size list");
  return out;
}

void ApplyConfigText(std::string_view text, BenchConfig& config) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (Trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractViolation("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = Trim(std::string_view(line).substr(0, eq));
    const std::string value = Trim(std::string_view(line).substr(eq + 1));
    if (key == "n") config.n_values = ParseSizeList(value);
    else if (key == "c") config.c = ParseU64(value, "c");
    else if (key == "r") config.r = ParseU64(value, "r");
    else if (key == "reps") config.reps = ParseU64(value, "reps");
    else if (key == "warmup") config.warmup = ParseU64(value, "warmup");
    else if (key == "seed") config.seed = ParseU64(value, "seed");
    else if (key == "csv") config.csv_path = value;
    else if (key == "json") config.json_path = value;
    else if (key == "variants") config.variants = ParseVariants(value);
    else if (key == "directions") config.directions = ParseDirections(value);
    else if (key == "budget") config.float_budget = ParseU64(value, "budget");
    else throw ContractViolation("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
}

namespace {

int CmdVerify(std::uint64_t seed, const std::string& sizes, std::size_t r,
              std::size_t instances, std::ostream& out) {
  const auto shapes = ParseShapes(sizes);
  out << "verify: seed " << seed << ", shapes " << sizes << ", r " << r << "\n";

  Suite softmax = RunSoftmaxSuite(seed);
  Suite equivalence("equivalence (N^2 order vs N order)", "max-abs relative difference");
  Suite oracle("scalar-loop oracles (N <= 64)", "max-abs difference");
  Suite channel("channel weights (rank-one projections)", "relative residual / closed-form gap");
  Suite homogeneity("degree-3 homogeneity of linear attention", "relative error");
  Suite ca_witness("channel attention non-homogeneity witness", "relative deviation");

  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const auto [n, c] = shapes[s];
    for (std::size_t red : Reductions(c, r, false)) {
      for (std::size_t i = 0; i < instances; ++i) {
        const std::uint64_t iseed = InstanceSeed(seed, s, i);
        const std::string ctx = Context(iseed, n, c, red);
        Rng rng(iseed);
        const FeatureMap x = FeatureMap::Random(n, c, rng);
        const ProjectionSet p = InitProjections(c, red, rng);
        const Matrix quad = LinearSaForwardQuadratic(x, p).output;
        const Matrix lin = LinearSaForwardLinear(x, p).output;
        equivalence.ObserveAtMost(MaxAbsRelativeDiff(lin, quad), 1e-9, ctx);

        if (n <= kOracleMaxPositions) {
          const Matrix oq = ElementwiseOracleQuadratic(x, p);
          const Matrix ol = ElementwiseOracleLinear(x, p);
          oracle.ObserveAtMost(MaxAbsDiff(VanillaSaForward(x, p).output, oq), 1e-10, ctx + " vanilla");
          oracle.ObserveAtMost(MaxAbsDiff(quad, ol), 1e-10, ctx + " linear N^2 order");
          oracle.ObserveAtMost(MaxAbsDiff(lin, ol), 1e-10, ctx + " linear N order");
        }
        for (double alpha : {0.5, 2.0, 3.0}) {
          const Matrix scaled = LinearSaForwardLinear(FeatureMap(Scale(x.values(), alpha)), p).output;
          homogeneity.ObserveAtMost(MaxAbsRelativeDiff(scaled, Scale(lin, alpha * alpha * alpha)),
                                    1e-9, ctx + " alpha " + FormatError(alpha));
        }
      }
    }
    for (std::size_t i = 0; i < instances; ++i) {
      const std::uint64_t iseed = InstanceSeed(seed, s, i);
      Rng rng(iseed);
      const FeatureMap x = FeatureMap::Random(n, c, rng);
      const Matrix base = RandomUniform(c, 1, -1.0, 1.0, rng);
      const Matrix scales = RandomUniform(c, 1, -2.0, 2.0, rng);
      const ProjectionSet p = RankOneProjections(c, base.data(), scales.data(), rng);
      const ChannelWeightReport rep = ComputeChannelWeightReport(x, p);
      const std::string ctx = Context(iseed, n, c, 1);
      channel.ObserveAtMost(rep.relative_residual, 1e-9, ctx + " residual");
      double peak = 0.0, gap = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        if (!rep.weights[k] || !rep.closed_form_weights[k]) continue;
        peak = std::max(peak, std::abs(*rep.closed_form_weights[k]));
        gap = std::max(gap, std::abs(*rep.weights[k] - *rep.closed_form_weights[k]));
      }
      channel.ObserveAtMost(peak > 0 ? gap / peak : gap, 1e-9, ctx + " closed form");
    }
  }

  {
    Rng rng(seed);
    const std::size_t n = 32, c = 16;
    const FeatureMap x = FeatureMap::Random(n, c, rng);
    const CAWeights w = InitCAWeights(c, 1, rng);
    const CAResult base = CaForward(x, w);
    const CAResult doubled = CaForward(FeatureMap(Scale(x.values(), 2.0)), w);
    const double dev = MaxAbsRelativeDiff(doubled.out.values(), Scale(base.out.values(), 2.0));
    ca_witness.Observe(dev, dev > 1e-3, Context(seed, n, c, 1) + " alpha 2");
  }

  bool ok = true;
  for (const Suite* suite : {&softmax, &equivalence, &oracle, &channel, &homogeneity, &ca_witness}) {
    suite->Print(out);
    ok = ok && suite->pass();
  }
  out << (ok ? "verify: all suites passed\n" : "verify: FAILED\n");
  return ok ? kOk : kCheckFailed;
}

int CmdGradcheck(std::uint64_t seed, const std::string& sizes, std::size_t r, double h,
                 std::size_t instances, std::ostream& out) {
  const auto shapes = ParseShapes(sizes);
  out << "gradcheck: seed " << seed << ", shapes " << sizes << ", h " << h << "\n";
  Suite vanilla("vanilla backward vs central differences", "relative error");
  Suite linear("linear backward vs central differences", "relative error");
  Suite quadratic("linear (N^2 order) backward vs central differences", "relative error");
  Suite dual("linear backward, N order vs N^2 order graph", "max-abs difference");
  Suite ca("channel attention backward vs central differences", "relative error");

  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const auto [n, c] = shapes[s];
    for (std::size_t i = 0; i < instances; ++i) {
      for (std::size_t red : Reductions(c, r, true)) {
        const std::uint64_t iseed = InstanceSeed(seed, s, i);
        const std::string ctx = Context(iseed, n, c, red);
        Rng rng(iseed);
        const FeatureMap x = FeatureMap::Random(n, c, rng);
        const ProjectionSet p = InitProjections(c, red, rng);
        const Matrix g = RandomUniform(n, c, -1.0, 1.0, rng);
        vanilla.ObserveAtMost(
            CheckAttentionGradients(AttentionVariant::kVanillaSoftmax, x, p, g, h).worst(), 1e-4, ctx);
        linear.ObserveAtMost(
            CheckAttentionGradients(AttentionVariant::kLinearLinearOrder, x, p, g, h).worst(), 1e-4, ctx);
        quadratic.ObserveAtMost(
            CheckAttentionGradients(AttentionVariant::kLinearQuadraticOrder, x, p, g, h).worst(), 1e-4, ctx);
        const GradientBundle a = BackwardLinear(x, p, g);
        const GradientBundle b = BackwardLinearQuadratic(x, p, g);
        const double gap = std::max({MaxAbsDiff(a.d_x, b.d_x), MaxAbsDiff(a.d_wz, b.d_wz),
                                     MaxAbsDiff(a.d_wy, b.d_wy), MaxAbsDiff(a.d_wphi, b.d_wphi)});
        dual.ObserveAtMost(gap, 1e-9, ctx);
      }
      const std::uint64_t iseed = InstanceSeed(seed, s, i);
      Rng rng(iseed + 500);
      const std::size_t rho = CaBottleneck(c);
      const FeatureMap x = FeatureMap::Random(n, c, rng);
      const CAWeights w = InitCAWeights(c, rho, rng);
      const Matrix g = RandomUniform(n, c, -1.0, 1.0, rng);
      ca.ObserveAtMost(CheckCaGradients(x, w, g, h).worst(), 1e-4,
                       Context(iseed + 500, n, c, rho) + " (r is rho)");
    }
  }
  bool ok = true;
  for (const Suite* suite : {&vanilla, &linear, &quadratic, &dual, &ca}) {
    suite->Print(out);
    ok = ok && suite->pass();
  }
  out << (ok ? "gradcheck: all suites passed\n" : "gradcheck: FAILED\n");
  return ok ? kOk : kCheckFailed;
}

int CmdBench(const BenchConfig& config, std::ostream& out, std::ostream& err) {
  config.Validate();
  try {
    EnsureWritable(config.csv_path);
    EnsureWritable(config.json_path);
  } catch (const IoError& e) {
    err << "bench: " << e.what() << "\n";
    return kIoError;
  }
  out << "bench: C=" << config.c << " r=" << config.r << " reps=" << config.reps
      << " warmup=" << config.warmup << " seed=" << config.seed << "\n";
  std::vector<BenchRecord> records = RunSweep(config, [&](const BenchRecord& rec) {
    out << "  " << VariantName(rec.variant) << " " << DirectionName(rec.direction) << " N=" << rec.n
        << ": ";
    if (rec.feasible) {
      out << FormatError(rec.wall_seconds) << " s, peak " << rec.peak_floats << " floats\n";
    } else {
      out << "infeasible (needs " << rec.peak_floats << " floats)\n";
    }
    out.flush();
  });
  const BenchReport report = BuildReport(config, std::move(records));

  std::ostringstream csv;
  WriteCsv(csv, report.records);
  try {
    WriteFileAtomic(config.csv_path, csv.str());
    WriteFileAtomic(config.json_path, ReportToJson(report));
  } catch (const IoError& e) {
    err << "bench: " << e.what() << "\n";
    return kIoError;
  }
  out << RenderReportText(report);
  out << "wrote " << config.csv_path << " and " << config.json_path << "\n";
  return kOk;
}

int CmdReport(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    err << "report: cannot read '" << path << "'\n";
    return kIoError;
  }
  std::ostringstream text;
  text << in.rdbuf();
  try {
    out << RenderReportText(ReportFromJson(text.str()));
  } catch (const IoError& e) {
    err << "report: " << e.what() << "\n";
    return kIoError;
  }
  return kOk;
}

}  // namespace

int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Softmax vs. linear self-attention: verification, gradient checks, benchmarks"};
  app.name("linatt");
  app.require_subcommand(1);

  std::string seed_text;
  if (const char* env = std::getenv("LINATT_SEED")) seed_text = env;

  auto* verify = app.add_subcommand("verify", "Run the numerical property suites");
  std::string verify_sizes = kDefaultVerifySizes;
  std::size_t verify_r = 8, verify_instances = 3;
  verify->add_option("--seed", seed_text, "Base seed (default: $LINATT_SEED or 0)");
  verify->add_option("--sizes", verify_sizes, "Comma-separated NxC shapes")->capture_default_str();
  verify->add_option("--r", verify_r, "Channel reduction for z and y")->capture_default_str();
  verify->add_option("--instances", verify_instances, "Seeded instances per shape")
      ->capture_default_str()->check(CLI::PositiveNumber);

  auto* grad = app.add_subcommand("gradcheck", "Compare backward passes with finite differences");
  std::string grad_sizes = kDefaultGradSizes;
  std::size_t grad_r = 8, grad_instances = 3;
  double grad_h = kDefaultFiniteDifferenceStep;
  grad->add_option("--seed", seed_text, "Base seed (default: $LINATT_SEED or 0)");
  grad->add_option("--sizes", grad_sizes, "Comma-separated NxC shapes")->capture_default_str();
  grad->add_option("--r", grad_r, "Channel reduction for z and y")->capture_default_str();
  grad->set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
  grad->add_option("--h", grad_h, "Central difference step")->capture_default_str();
  grad->add_option("--instances", grad_instances, "Seeded instances per shape")
      ->capture_default_str()->check(CLI::PositiveNumber);

  auto* bench = app.add_subcommand("bench", "Time and account allocations over an N sweep");
  std::string config_path, n_text, variants_text, directions_text, csv_path, json_path;
  std::size_t c = 0, r = 0, reps = 0, warmup = 0;
  std::uint64_t budget = 0;
  bench->add_option("--config", config_path, "Flat key = value config file");
  bench->add_option("--n", n_text, "Comma-separated ascending N values");
  bench->add_option("--c", c, "Channels");
  bench->add_option("--r", r, "Channel reduction");
  bench->add_option("--reps", reps, "Timed repetitions (median reported, >= 5)");
  bench->add_option("--warmup", warmup, "Untimed warmup runs");
  bench->add_option("--seed", seed_text, "Input seed (default: $LINATT_SEED or 0)");
  bench->add_option("--csv", csv_path, "CSV output path");
  bench->add_option("--json", json_path, "JSON report path");
  bench->add_option("--variants", variants_text, "Comma-separated: vanilla,linear,linear_quadratic");
  bench->add_option("--directions", directions_text, "Comma-separated: forward,backward");
  bench->add_option("--budget", budget, "Float budget; larger runs are recorded as infeasible");

  auto* report = app.add_subcommand("report", "Render a JSON bench report as text");
  std::string report_path;
  report->add_option("json", report_path, "Report written by 'bench'")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsageError;
  }

  try {
    const std::uint64_t seed = seed_text.empty() ? 0 : ParseU64(seed_text, "seed");
    if (verify->parsed()) {
      return CmdVerify(seed, verify_sizes, verify_r, verify_instances, out);
    }
    if (grad->parsed()) {
      return CmdGradcheck(seed, grad_sizes, grad_r, grad_h, grad_instances, out);
    }
    if (report->parsed()) return CmdReport(report_path, out, err);

    BenchConfig config;
    config.n_values = {512, 1024, 2048, 4096};
    config.seed = seed;
    config.csv_path = "linatt_bench.csv";
    config.json_path = "linatt_bench.json";
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        err << "bench: cannot read config '" << config_path << "'\n";
        return kIoError;
      }
      std::ostringstream text;
      text << in.rdbuf();
      ApplyConfigText(text.str(), config);
      // LINATT_SEED is only a default: the file's seed beats it, --seed beats both.
      if (bench->count("--seed")) config.seed = seed;
    }
    if (!n_text.empty()) config.n_values = ParseSizeList(n_text);
    if (bench->count("--c")) config.c = c;
    if (bench->count("--r")) config.r = r;
    if (bench->count("--reps")) config.reps = reps;
    if (bench->count("--warmup")) config.warmup = warmup;
    if (!csv_path.empty()) config.csv_path = csv_path;
    if (!json_path.empty()) config.json_path = json_path;
    if (!variants_text.empty()) config.variants = ParseVariants(variants_text);
    if (!directions_text.empty()) config.directions = ParseDirections(directions_text);
    if (bench->count("--budget")) config.float_budget = budget;
    return CmdBench(config, out, err);
  } catch (const ContractViolation& e) {
    err << "linatt: " << e.what() << "\n";
    return kUsageError;
  } catch (const IoError& e) {
    err << "linatt: " << e.what() << "\n";
    return kIoError;
  }
}

}  // namespace linatt::cli
