#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace amc {

/// A matrix cell. Zero-based internally; I/O layers convert to 1-based.
struct Entry {
  Eigen::Index row = 0;
  Eigen::Index col = 0;

  friend auto operator<=>(const Entry&, const Entry&) = default;
};

struct EntryHash {
  std::size_t operator()(const Entry& e) const noexcept {
    const auto r = static_cast<std::uint64_t>(e.row);
    const auto c = static_cast<std::uint64_t>(e.col);
    return std::hash<std::uint64_t>{}((r << 32) ^ c);
  }
};

using EntrySet = std::unordered_set<Entry, EntryHash>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid-argument"; }
};

class InvalidBasis : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid-basis"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

class IllConditioned : public Error {
 public:
  IllConditioned(const std::string& what, double condition_estimate)
      : Error(what + " (condition estimate " + std::to_string(condition_estimate) + ")"),
        condition_(condition_estimate) {}
  const char* kind() const noexcept override { return "ill-conditioned"; }
  double condition_estimate() const noexcept { return condition_; }

 private:
  double condition_;
};

class IndexError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "index"; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " at line " + std::to_string(line)), line_(line) {}
  const char* kind() const noexcept override { return "parse"; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline std::string to_string(const Entry& e) {
  return "(" + std::to_string(e.row + 1) + "," + std::to_string(e.col + 1) + ")";
}

/// Throws IndexError unless every entry lies in [0,rows) x [0,cols) and none repeats.
inline void validate_entries(const std::vector<Entry>& entries, Eigen::Index rows,
                             Eigen::Index cols) {
  EntrySet seen;
  seen.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) {
      throw IndexError("entry " + to_string(e) + " outside " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
    if (!seen.insert(e).second) throw IndexError("duplicate entry " + to_string(e));
  }
}

/// Noisy observations Y at an ordered list of distinct cells, with noise variance eta2.
class ObservationSet {
 public:
  ObservationSet() = default;

  ObservationSet(Eigen::Index rows, Eigen::Index cols, std::vector<Entry> indices,
                 Eigen::VectorXd values, double eta2)
      : rows_(rows), cols_(cols), indices_(std::move(indices)), values_(std::move(values)),
        eta2_(eta2) {
    if (rows <= 0 || cols <= 0) throw InvalidArgument("observation grid must be non-empty");
    if (static_cast<Eigen::Index>(indices_.size()) != values_.size()) {
      throw InvalidArgument("observation indices and values differ in length");
    }
    if (!(eta2 >= 0.0)) throw InvalidArgument("noise variance must be non-negative");
    validate_entries(indices_, rows_, cols_);
  }

  static ObservationSet empty(Eigen::Index rows, Eigen::Index cols, double eta2) {
    return ObservationSet(rows, cols, {}, Eigen::VectorXd(0), eta2);
  }

  Eigen::Index rows() const noexcept { return rows_; }
  Eigen::Index cols() const noexcept { return cols_; }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(indices_.size()); }
  bool empty() const noexcept { return indices_.empty(); }
  const std::vector<Entry>& indices() const noexcept { return indices_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  double eta2() const noexcept { return eta2_; }

  bool contains(const Entry& e) const {
    for (const auto& x : indices_)
      if (x == e) return true;
    return false;
  }

  /// Unobserved cells in row-major order.
  std::vector<Entry> complement() const {
    EntrySet seen(indices_.begin(), indices_.end());
    std::vector<Entry> out;
    out.reserve(static_cast<std::size_t>(rows_ * cols_) - indices_.size());
    for (Eigen::Index i = 0; i < rows_; ++i)
      for (Eigen::Index j = 0; j < cols_; ++j)
        if (!seen.contains(Entry{i, j})) out.push_back(Entry{i, j});
    return out;
  }

  ObservationSet appended(const Entry& e, double value) const {
    auto idx = indices_;
    idx.push_back(e);
    Eigen::VectorXd v(values_.size() + 1);
    v.head(values_.size()) = values_;
    v(values_.size()) = value;
    return ObservationSet(rows_, cols_, std::move(idx), std::move(v), eta2_);
  }

  ObservationSet with_eta2(double eta2) const {
    return ObservationSet(rows_, cols_, indices_, values_, eta2);
  }

  /// Dense matrix with observed values and zeros elsewhere.
  Eigen::MatrixXd scatter() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows_, cols_);
    for (std::size_t n = 0; n < indices_.size(); ++n)
      m(indices_[n].row, indices_[n].col) = values_(static_cast<Eigen::Index>(n));
    return m;
  }

  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask() const {
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> m(rows_, cols_);
    m.setConstant(false);
    for (const auto& e : indices_) m(e.row, e.col) = true;
    return m;
  }

 private:
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  std::vector<Entry> indices_;
  Eigen::VectorXd values_;
  double eta2_ = 0.0;
};

}  // namespace amc
