// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survmix/data.hpp"

namespace survmix {

/// Product-limit survival curve: one step per distinct event time, with the
/// at-risk and event counts that produced it.
struct KmCurve {
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<long> at_risk;
  std::vector<long> events;
  std::string label;
};

namespace detail {

inline KmCurve product_limit(const std::vector<double>& times,
                             const std::vector<int>& status,
                             std::string label) {
  const std::size_t n = times.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Ties between events and censorings: events come first, so censored
  // records at time t still count as at risk for the event at t.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (times[a] != times[b]) return times[a] < times[b];
    return status[a] > status[b];
  });

  KmCurve curve;
  curve.label = std::move(label);
  double s = 1.0;
  std::size_t i = 0;
  long risk = static_cast<long>(n);
  while (i < n) {
    const double t = times[order[i]];
    long d = 0, removed = 0;
    while (i < n && times[order[i]] == t) {
      d += status[order[i]];
      ++removed;
      ++i;
    }
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(risk);
      curve.times.push_back(t);
      curve.survival.push_back(s);
      curve.at_risk.push_back(risk);
      curve.events.push_back(d);
    }
    risk -= removed;
  }
  return curve;
}

}  // namespace detail

/// Kaplan-Meier estimate; when `group_by` names a covariate index, one curve
/// per distinct value of that covariate (label "x<idx+1>=<value>").
inline std::vector<KmCurve> kaplan_meier(const SurvivalDataset& data,
                                         std::optional<std::size_t> group_by =
                                             std::nullopt) {
  if (!group_by) {
    std::vector<double> t(data.n());
    std::vector<int> st(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
      t[i] = data[i].time;
      st[i] = data[i].status;
    }
    return {detail::product_limit(t, st, "")};
  }
  if (*group_by >= data.p()) {
    throw std::invalid_argument("kaplan_meier: covariate index out of range");
  }
  std::map<double, std::pair<std::vector<double>, std::vector<int>>> groups;
  for (std::size_t i = 0; i < data.n(); ++i) {
    auto& g = groups[data[i].covariates[*group_by]];
    g.first.push_back(data[i].time);
    g.second.push_back(data[i].status);
  }
  if (groups.empty()) throw std::invalid_argument("kaplan_meier: empty group");
  std::vector<KmCurve> curves;
  for (auto& [level, g] : groups) {
    const std::string label = "x" + std::to_string(*group_by + 1) + "=" +
                              detail::format_double(level);
    curves.push_back(detail::product_limit(g.first, g.second, label));
  }
  return curves;
}

/// Life-table hazard: per bin [m*w, (m+1)*w), events in the bin divided by
/// (records at risk at the bin start times the bin width). Bins with nobody
/// at risk report zero.
struct HazardCurve {
  double bin_width = 1.0;
  std::vector<double> bin_start;
  std::vector<double> hazard;
  std::vector<long> at_risk;
  std::vector<long> events;
};

inline HazardCurve empirical_hazard(const SurvivalDataset& data,
                                    double bin_width) {
  if (!(bin_width > 0.0)) {
    throw std::invalid_argument("empirical_hazard: bin width must be > 0");
  }
  double tmax = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) tmax = std::max(tmax, data[i].time);
  const std::size_t bins =
      static_cast<std::size_t>(std::ceil(tmax / bin_width)) + (tmax == 0.0 ? 1 : 0);
  HazardCurve out;
  out.bin_width = bin_width;
  out.bin_start.resize(bins);
  out.hazard.assign(bins, 0.0);
  out.at_risk.assign(bins, 0);
  out.events.assign(bins, 0);
  for (std::size_t m = 0; m < bins; ++m) {
    out.bin_start[m] = static_cast<double>(m) * bin_width;
    const double lo = out.bin_start[m];
    const double hi = lo + bin_width;
    long risk = 0, d = 0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double t = data[i].time;
      if (t >= lo) ++risk;
      if (data[i].status == 1 && t >= lo && t < hi) ++d;
    }
    out.at_risk[m] = risk;
    out.events[m] = d;
    if (risk > 0) {
      out.hazard[m] = static_cast<double>(d) / (static_cast<double>(risk) * bin_width);
    }
  }
  return out;
}

/// Curve CSV: time,survival,at_risk,events[,group].
inline void save_km_csv(const KmCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "time,survival,at_risk,events";
  const bool grouped = !curve.label.empty();
  if (grouped) out << ",group";
  out << "\n";
  for (std::size_t i = 0; i < curve.times.size(); ++i) {
    out << detail::format_double(curve.times[i]) << ","
        << detail::format_double(curve.survival[i]) << "," << curve.at_risk[i]
        << "," << curve.events[i];
    if (grouped) out << "," << curve.label;
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace survmix
