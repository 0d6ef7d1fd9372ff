// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Core>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace survmix {

/// One observed policy: duration, censoring indicator and covariates.
/// status 1 marks an observed lapse, status 0 a right-censored record
/// (the true duration is only known to exceed `time`).
struct PolicyRecord {
  double time = 0.0;
  int status = 1;
  std::vector<double> covariates;
};

namespace detail {

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const char* what,
                           std::size_t row) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw std::invalid_argument(std::string("malformed ") + what + " at row " +
                                std::to_string(row) + ": '" + s + "'");
  }
  return v;
}

}  // namespace detail

/// Validated right-censored survival sample. Records all share the same
/// covariate dimension p; the design matrix prepends an explicit intercept
/// column, so user-supplied covariates never include one.
class SurvivalDataset {
 public:
  SurvivalDataset(std::vector<PolicyRecord> records)
      : records_(std::move(records)) {
    if (records_.empty()) {
      throw std::invalid_argument("dataset must contain at least one record");
    }
    p_ = records_[0].covariates.size();
    h_ = 0;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const PolicyRecord& r = records_[i];
      if (!(r.time > 0.0) || !std::isfinite(r.time)) {
        throw std::invalid_argument("non-positive time at row " +
                                    std::to_string(i));
      }
      if (r.status != 0 && r.status != 1) {
        throw std::invalid_argument("status outside {0,1} at row " +
                                    std::to_string(i));
      }
      if (r.covariates.size() != p_) {
        throw std::invalid_argument("ragged covariate row at row " +
                                    std::to_string(i));
      }
      h_ += static_cast<std::size_t>(r.status);
    }
  }

  std::size_t n() const { return records_.size(); }
  std::size_t p() const { return p_; }
  std::size_t h() const { return h_; }
  double censoring_fraction() const {
    return static_cast<double>(n() - h_) / static_cast<double>(n());
  }
  const std::vector<PolicyRecord>& records() const { return records_; }
  const PolicyRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Natural log of every observed time.
  std::vector<double> log_times() const {
    std::vector<double> out(n());
    for (std::size_t i = 0; i < n(); ++i) out[i] = std::log(records_[i].time);
    return out;
  }

  /// n x (p+1) design matrix with the leading intercept column.
  Eigen::MatrixXd design_matrix() const {
    Eigen::MatrixXd x(n(), p_ + 1);
    for (std::size_t i = 0; i < n(); ++i) {
      x(static_cast<Eigen::Index>(i), 0) = 1.0;
      for (std::size_t j = 0; j < p_; ++j) {
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j) + 1) =
            records_[i].covariates[j];
      }
    }
    return x;
  }

 private:
  std::vector<PolicyRecord> records_;
  std::size_t p_ = 0;
  std::size_t h_ = 0;
};

/// Builds a dataset from raw rows, rejecting the whole load on the first
/// invalid row (the error message carries the 0-based row index).
inline SurvivalDataset validate_dataset(std::vector<PolicyRecord> rows) {
  return SurvivalDataset(std::move(rows));
}

/// Writes `time,status,x1,...,xp` CSV. Doubles use shortest round-trip
/// formatting, so save/load reproduces every value bit for bit.
inline void save_dataset_csv(const SurvivalDataset& data,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "time,status";
  for (std::size_t j = 1; j <= data.p(); ++j) out << ",x" << j;
  out << "\n";
  for (const PolicyRecord& r : data.records()) {
    out << detail::format_double(r.time) << "," << r.status;
    for (double c : r.covariates) out << "," << detail::format_double(c);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) fields.push_back(cur);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline SurvivalDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty dataset file: " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "time" || header[1] != "status") {
    throw std::runtime_error("dataset header must start with 'time,status': " +
                             path);
  }
  const std::size_t p = header.size() - 2;
  std::vector<PolicyRecord> rows;
  std::size_t rownum = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != p + 2) {
      throw std::invalid_argument("ragged covariate row at row " +
                                  std::to_string(rownum));
    }
    PolicyRecord r;
    r.time = detail::parse_double(fields[0], "time", rownum);
    const double st = detail::parse_double(fields[1], "status", rownum);
    r.status = static_cast<int>(st);
    if (st != 0.0 && st != 1.0) {
      throw std::invalid_argument("status outside {0,1} at row " +
                                  std::to_string(rownum));
    }
    r.covariates.reserve(p);
    for (std::size_t j = 0; j < p; ++j) {
      r.covariates.push_back(detail::parse_double(fields[2 + j], "covariate", rownum));
    }
    rows.push_back(std::move(r));
    ++rownum;
  }
  return validate_dataset(std::move(rows));
}

}  // namespace survmix
