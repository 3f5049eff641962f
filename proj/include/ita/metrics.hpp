#pragma once

// Bidirectional retrieval scores for two-image / two-caption instances.
// s{c}{i} is the similarity of caption c to image i; index 0 is positive.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "ita/error.hpp"

namespace ita {

struct SimilarityTable {
  double s00 = 0.0;  // C0, I0
  double s10 = 0.0;  // C1, I0
  double s01 = 0.0;  // C0, I1
  double s11 = 0.0;  // C1, I1

  bool finite() const {
    return std::isfinite(s00) && std::isfinite(s10) && std::isfinite(s01) && std::isfinite(s11);
  }
};

struct InstanceScores {
  bool i2t = false;
  bool t2i = false;
  bool group = false;
  bool i_pos2t = false;  // I0 prefers C0 over C1
  bool i_neg2t = false;  // I1 prefers C1 over C0
  bool t_pos2i = false;  // C0 prefers I0 over I1
  bool t_neg2i = false;  // C1 prefers I1 over I0

  friend bool operator==(const InstanceScores&, const InstanceScores&) = default;
};

/// Strict inequalities throughout: a tie scores 0.
inline InstanceScores instance_scores(const SimilarityTable& t) {
  if (!t.finite()) throw Error(ErrorKind::kInvalidConfig, "similarity table has non-finite entries");
  InstanceScores s;
  s.i_pos2t = t.s00 > t.s10;
  s.i_neg2t = t.s11 > t.s01;
  s.t_pos2i = t.s00 > t.s01;
  s.t_neg2i = t.s11 > t.s10;
  s.i2t = s.i_pos2t && s.i_neg2t;
  s.t2i = s.t_pos2i && s.t_neg2i;
  s.group = s.i2t && s.t2i;
  return s;
}

struct MetricCount {
  std::size_t hits = 0;
  double percent = 0.0;  // one decimal
};

struct MetricsReport {
  std::size_t n_instances = 0;
  MetricCount i2t, t2i, group;
  MetricCount i_pos2t, i_neg2t, t_pos2i, t_neg2i;
  std::string fingerprint;
};

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

inline MetricsReport aggregate(std::span<const InstanceScores> instances, std::string fingerprint = {}) {
  if (instances.empty()) throw Error(ErrorKind::kEmptyInput, "no instances to aggregate");
  MetricsReport r;
  r.n_instances = instances.size();
  r.fingerprint = std::move(fingerprint);
  auto fill = [&](MetricCount& m, bool InstanceScores::*bit) {
    for (const auto& s : instances) m.hits += (s.*bit) ? 1 : 0;
    m.percent = round1(100.0 * static_cast<double>(m.hits) / static_cast<double>(instances.size()));
  };
  fill(r.i2t, &InstanceScores::i2t);
  fill(r.t2i, &InstanceScores::t2i);
  fill(r.group, &InstanceScores::group);
  fill(r.i_pos2t, &InstanceScores::i_pos2t);
  fill(r.i_neg2t, &InstanceScores::i_neg2t);
  fill(r.t_pos2i, &InstanceScores::t_pos2i);
  fill(r.t_neg2i, &InstanceScores::t_neg2i);
  return r;
}

inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json to_json(const MetricsReport& r) {
  auto m = [](const MetricCount& c) { return nlohmann::json{{"count", c.hits}, {"percent", c.percent}}; };
  return {{"schema_version", kReportSchemaVersion},
          {"fingerprint", r.fingerprint},
          {"n_instances", r.n_instances},
          {"i2t", m(r.i2t)},
          {"t2i", m(r.t2i)},
          {"group", m(r.group)},
          {"finer",
           {{"i_pos2t", m(r.i_pos2t)},
            {"i_neg2t", m(r.i_neg2t)},
            {"t_pos2i", m(r.t_pos2i)},
            {"t_neg2i", m(r.t_neg2i)}}}};
}

inline constexpr const char* kReportCsvHeader =
    "dataset,fingerprint,n,I2T,T2I,Group,I_pos2T,I_neg2T,T_pos2I,T_neg2I";

inline void write_report_csv_row(std::ostream& out, const std::string& dataset, const MetricsReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.1f,%.1f,%.1f,%.1f,%.1f,%.1f,%.1f", r.n_instances,
                r.i2t.percent, r.t2i.percent, r.group.percent, r.i_pos2t.percent, r.i_neg2t.percent,
                r.t_pos2i.percent, r.t_neg2i.percent);
  out << dataset << ',' << r.fingerprint << ',' << buf << '\n';
}

}  // namespace ita
