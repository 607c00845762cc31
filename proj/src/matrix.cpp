// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#include "linatt/matrix.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <utility>

namespace linatt {
namespace {

struct ActiveLedger {
  std::uint64_t epoch;
  AllocationLedger* ledger;
};

std::atomic<std::uint64_t> g_next_epoch{1};
thread_local std::vector<ActiveLedger> t_ledgers;

AllocationLedger* FindLedger(std::uint64_t epoch) {
  for (auto it = t_ledgers.rbegin(); it != t_ledgers.rend(); ++it) {
    if (it->epoch == epoch) return it->ledger;
  }
  return nullptr;
}

std::string Shape(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// Rows processed per pass over a block of b in the NN/TN kernels. Keeps the
// b block resident in cache; accumulation order over k is unchanged.
constexpr std::size_t kBlockK = 256;

}  // namespace

void AllocationLedger::Allocate(std::size_t floats) {
  current_floats += floats;
  peak_floats = std::max(peak_floats, current_floats);
}

void AllocationLedger::Release(std::size_t floats) {
  current_floats -= std::min(floats, current_floats);
}

LedgerScope::LedgerScope(AllocationLedger& ledger)
    : epoch_(g_next_epoch.fetch_add(1, std::memory_order_relaxed)) {
  t_ledgers.push_back({epoch_, &ledger});
}

LedgerScope::~LedgerScope() {
  auto it = std::find_if(t_ledgers.begin(), t_ledgers.end(),
                         [&](const ActiveLedger& a) { return a.epoch == epoch_; });
  if (it != t_ledgers.end()) t_ledgers.erase(it);
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) {
    throw ContractViolation("matrix dimensions must be positive, got " +
                            Shape(rows, cols));
  }
  data_.assign(rows * cols, 0.0);
  Track();
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) {
    throw ContractViolation("matrix dimensions must be positive, got " +
                            Shape(rows, cols));
  }
  if (data_.size() != rows * cols) {
    throw ContractViolation("data length " + std::to_string(data_.size()) +
                            " does not match shape " + Shape(rows, cols));
  }
  Track();
}

Matrix Matrix::FromRows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("ragged row list");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::Identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix::Matrix(const Matrix& other)
    : rows_(other.rows_), cols_(other.cols_), data_(other.data_) {
  Track();
}

Matrix::Matrix(Matrix&& other) noexcept
    : rows_(std::exchange(other.rows_, 0)),
      cols_(std::exchange(other.cols_, 0)),
      data_(std::move(other.data_)),
      ledger_epoch_(std::exchange(other.ledger_epoch_, 0)) {
  other.data_.clear();
}

Matrix& Matrix::operator=(const Matrix& other) {
  if (this != &other) {
    Untrack();
    rows_ = other.rows_;
    cols_ = other.cols_;
    data_ = other.data_;
    Track();
  }
  return *this;
}

Matrix& Matrix::operator=(Matrix&& other) noexcept {
  if (this != &other) {
    Untrack();
    rows_ = std::exchange(other.rows_, 0);
    cols_ = std::exchange(other.cols_, 0);
    data_ = std::move(other.data_);
    other.data_.clear();
    ledger_epoch_ = std::exchange(other.ledger_epoch_, 0);
  }
  return *this;
}

Matrix::~Matrix() { Untrack(); }

void Matrix::Track() {
  ledger_epoch_ = 0;
  if (data_.empty() || t_ledgers.empty()) return;
  t_ledgers.back().ledger->Allocate(data_.size());
  ledger_epoch_ = t_ledgers.back().epoch;
}

void Matrix::Untrack() {
  if (ledger_epoch_ == 0) return;
  if (AllocationLedger* ledger = FindLedger(ledger_epoch_)) {
    ledger->Release(data_.size());
  }
  ledger_epoch_ = 0;
}

std::string Matrix::ShapeString() const { return Shape(rows_, cols_); }

Matrix RandomUniform(std::size_t rows, std::size_t cols, double lo, double hi,
                     Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.Uniform(lo, hi);
  return m;
}

void Gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb,
          Matrix& c, bool accumulate) {
  const bool at = ta == Transpose::kYes;
  const bool bt = tb == Transpose::kYes;
  const std::size_t m = at ? a.cols() : a.rows();
  const std::size_t k = at ? a.rows() : a.cols();
  const std::size_t kb = bt ? b.cols() : b.rows();
  const std::size_t n = bt ? b.rows() : b.cols();
  if (k != kb) {
    throw ContractViolation("matmul dimension mismatch: " + a.ShapeString() +
                            (at ? "^T" : "") + " x " + b.ShapeString() +
                            (bt ? "^T" : ""));
  }
  if (c.rows() != m || c.cols() != n) {
    throw ContractViolation("matmul output has shape " + c.ShapeString() +
                            ", expected " + Shape(m, n));
  }
  if (!accumulate) std::fill(c.data().begin(), c.data().end(), 0.0);

  if (!bt) {
    // Rows of b are contiguous: c[i,:] += op(a)[i,p] * b[p,:], p ascending.
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t p1 = std::min(k, p0 + kBlockK);
      for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.row(i).data();
        for (std::size_t p = p0; p < p1; ++p) {
          const double aip = at ? a(p, i) : a(i, p);
          const double* brow = b.row(p).data();
          for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
      }
    }
    return;
  }
  if (!at) {
    // a * b^T: row-by-row dot products.
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a.row(i).data();
      double* crow = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b.row(j).data();
        double sum = 0.0;
        for (std::size_t p = 0; p < k; ++p) sum += arow[p] * brow[p];
        crow[j] += sum;
      }
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a(p, i) * b(j, p);
      c(i, j) += sum;
    }
  }
}

Matrix MatMul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("matmul dimension mismatch: " + a.ShapeString() +
                            " x " + b.ShapeString());
  }
  Matrix c(a.rows(), b.cols());
  Gemm(a, Transpose::kNo, b, Transpose::kNo, c, true);
  return c;
}

Matrix MatMulTN(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ContractViolation("matmul dimension mismatch: " + a.ShapeString() +
                            "^T x " + b.ShapeString());
  }
  Matrix c(a.cols(), b.cols());
  Gemm(a, Transpose::kYes, b, Transpose::kNo, c, true);
  return c;
}

Matrix MatMulNT(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ContractViolation("matmul dimension mismatch: " + a.ShapeString() +
                            " x " + b.ShapeString() + "^T");
  }
  Matrix c(a.rows(), b.rows());
  Gemm(a, Transpose::kNo, b, Transpose::kYes, c, true);
  return c;
}

void RowSoftmaxInPlace(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    const double inv = 1.0 / sum;
    for (double& v : row) v *= inv;
  }
}

Matrix RowSoftmax(const Matrix& m) {
  Matrix out = m;
  RowSoftmaxInPlace(out);
  return out;
}

void ScaleInPlace(Matrix& m, double s) {
  for (double& v : m.data()) v *= s;
}

Matrix Scale(const Matrix& m, double s) {
  Matrix out = m;
  ScaleInPlace(out, s);
  return out;
}

Matrix Transposed(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  }
  return out;
}

void RequireSameShape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractViolation(std::string(what) + ": shape mismatch " +
                            a.ShapeString() + " vs " + b.ShapeString());
  }
}

Matrix Add(const Matrix& a, const Matrix& b) {
  RequireSameShape(a, b, "add");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return out;
}

double FrobeniusDot(const Matrix& a, const Matrix& b) {
  RequireSameShape(a, b, "frobenius_dot");
  double sum = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) sum += ad[i] * bd[i];
  return sum;
}

double MaxAbs(const Matrix& m) {
  double mx = 0.0;
  for (double v : m.data()) mx = std::max(mx, std::abs(v));
  return mx;
}

double MaxAbsDiff(const Matrix& a, const Matrix& b) {
  RequireSameShape(a, b, "max_abs_diff");
  double mx = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) {
    mx = std::max(mx, std::abs(ad[i] - bd[i]));
  }
  return mx;
}

double MaxAbsRelativeDiff(const Matrix& a, const Matrix& b, double floor) {
  return MaxAbsDiff(a, b) / std::max(MaxAbs(b), floor);
}

bool AllFinite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace linatt
