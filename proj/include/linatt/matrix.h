// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major f64 matrices, an allocation ledger that counts logical
// floats, and the handful of kernels the attention code is built from.

#ifndef LINATT_MATRIX_H_
#define LINATT_MATRIX_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace linatt {

// Raised whenever a precondition on shapes or arguments is not met.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Counts floats held by live matrices created while a LedgerScope is active.
struct AllocationLedger {
  std::size_t current_floats = 0;
  std::size_t peak_floats = 0;

  void Allocate(std::size_t floats);
  void Release(std::size_t floats);
};

// Installs `ledger` as the active ledger of the calling thread for the
// lifetime of the scope. Scopes nest; matrices are always credited back to
// the ledger that was charged for them, as long as that scope is still open.
class LedgerScope {
 public:
  explicit LedgerScope(AllocationLedger& ledger);
  ~LedgerScope();
  LedgerScope(const LedgerScope&) = delete;
  LedgerScope& operator=(const LedgerScope&) = delete;

 private:
  std::uint64_t epoch_;
};

class Matrix {
 public:
  Matrix() = default;
  // Zero-filled rows x cols matrix; both dimensions must be positive.
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Matrix FromRows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix Identity(std::size_t n);

  Matrix(const Matrix& other);
  Matrix(Matrix&& other) noexcept;
  Matrix& operator=(const Matrix& other);
  Matrix& operator=(Matrix&& other) noexcept;
  ~Matrix();

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  // "RxC", used in error messages.
  std::string ShapeString() const;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  void Track();
  void Untrack();

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
  std::uint64_t ledger_epoch_ = 0;
};

// Deterministic generator: std::mt19937_64 with a fixed 53-bit conversion to
// double, so sequences are identical across standard libraries.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64/u53";

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1).
  double NextUnit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * NextUnit(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

Matrix RandomUniform(std::size_t rows, std::size_t cols, double lo, double hi,
                     Rng& rng);

enum class Transpose { kNo, kYes };

// c (+)= op(a) * op(b). `c` must already have the product's shape.
void Gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb,
          Matrix& c, bool accumulate);

Matrix MatMul(const Matrix& a, const Matrix& b);
// a^T * b without materializing a^T.
Matrix MatMulTN(const Matrix& a, const Matrix& b);
// a * b^T without materializing b^T.
Matrix MatMulNT(const Matrix& a, const Matrix& b);

// Softmax over each row with per-row max subtraction.
Matrix RowSoftmax(const Matrix& m);
void RowSoftmaxInPlace(Matrix& m);

Matrix Scale(const Matrix& m, double s);
void ScaleInPlace(Matrix& m, double s);
Matrix Transposed(const Matrix& m);
Matrix Add(const Matrix& a, const Matrix& b);
double FrobeniusDot(const Matrix& a, const Matrix& b);

double MaxAbs(const Matrix& m);
double MaxAbsDiff(const Matrix& a, const Matrix& b);
// max|a - b| / max(max|b|, floor).
double MaxAbsRelativeDiff(const Matrix& a, const Matrix& b, double floor = 1e-300);
bool AllFinite(const Matrix& m);

void RequireSameShape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace linatt

#endif  // LINATT_MATRIX_H_
