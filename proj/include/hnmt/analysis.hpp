#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hnmt/common.hpp"
#include "hnmt/langtree.hpp"

namespace hnmt {

// One task's test score under one scheme, with the grouping attributes the
// reports need.
struct TaskScore {
  std::string src, tgt;
  std::string scheme;
  double bleu = 0.0;
  std::size_t train_pairs = 0;
};

constexpr const char* kBaselineScheme = "many-to-many";

struct AnalysisRow {
  std::string group;
  std::map<std::string, double> mean;           // scheme -> mean BLEU
  std::map<std::string, std::size_t> count;     // scheme -> tasks averaged
  std::map<std::string, double> improvement;    // scheme -> mean - baseline mean
};

// Grouped means per scheme. The improvement columns exist only when the
// bilingual baseline is among the schemes and at least one other scheme is.
struct AnalysisTable {
  std::string key;  // grouping attribute name
  std::vector<std::string> schemes;
  bool has_improvement = false;
  std::vector<AnalysisRow> rows;

  std::string to_csv() const {
    std::ostringstream os;
    os << key;
    for (const auto& s : schemes) os << "," << s << "," << s << "_count";
    if (has_improvement)
      for (const auto& s : schemes)
        if (s != kBaselineScheme) os << ",improvement_" << s;
    os << "\n";
    for (const auto& r : rows) {
      os << r.group;
      for (const auto& s : schemes) {
        os << ",";
        if (r.mean.count(s)) os << std::setprecision(17) << r.mean.at(s);
        os << "," << (r.count.count(s) ? r.count.at(s) : 0);
      }
      if (has_improvement)
        for (const auto& s : schemes) {
          if (s == kBaselineScheme) continue;
          os << ",";
          if (r.improvement.count(s)) os << std::setprecision(17) << r.improvement.at(s);
        }
      os << "\n";
    }
    return os.str();
  }

  std::string pretty() const {
    std::ostringstream os;
    os << std::left << std::setw(18) << key;
    for (const auto& s : schemes) os << std::right << std::setw(14) << s;
    if (has_improvement)
      for (const auto& s : schemes)
        if (s != kBaselineScheme) os << std::setw(14) << ("impr(" + s + ")");
    os << "\n";
    for (const auto& r : rows) {
      os << std::left << std::setw(18) << r.group;
      os << std::fixed << std::setprecision(2);
      for (const auto& s : schemes) {
        if (r.mean.count(s))
          os << std::right << std::setw(14) << r.mean.at(s);
        else
          os << std::right << std::setw(14) << "-";
      }
      if (has_improvement)
        for (const auto& s : schemes) {
          if (s == kBaselineScheme) continue;
          if (r.improvement.count(s))
            os << std::right << std::setw(14) << r.improvement.at(s);
          else
            os << std::right << std::setw(14) << "-";
        }
      os << "\n";
    }
    return os.str();
  }
};

namespace detail {

// rows from (group label -> scheme -> scores), with improvement vs the
// bilingual baseline where both sides exist
inline AnalysisTable assemble_table(
    std::string key, const std::map<std::string, std::map<std::string, std::vector<double>>>& cells,
    const std::vector<std::string>& row_order) {
  AnalysisTable t;
  t.key = std::move(key);
  std::set<std::string> schemes;
  for (const auto& [group, per_scheme] : cells)
    for (const auto& [scheme, scores] : per_scheme) schemes.insert(scheme);
  t.schemes.assign(schemes.begin(), schemes.end());
  t.has_improvement = schemes.count(kBaselineScheme) > 0 && schemes.size() >= 2;
  for (const auto& group : row_order) {
    const auto& per_scheme = cells.at(group);
    AnalysisRow row;
    row.group = group;
    for (const auto& [scheme, scores] : per_scheme) {
      double acc = 0.0;
      for (double v : scores) acc += v;
      row.mean[scheme] = acc / static_cast<double>(scores.size());
      row.count[scheme] = scores.size();
    }
    if (t.has_improvement && row.mean.count(kBaselineScheme))
      for (const auto& [scheme, mean] : row.mean)
        if (scheme != kBaselineScheme)
          row.improvement[scheme] = mean - row.mean.at(kBaselineScheme);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace detail

// Mean BLEU per source language per scheme, plus an overall average row.
inline AnalysisTable language_summary(const std::vector<TaskScore>& scores) {
  std::map<std::string, std::map<std::string, std::vector<double>>> cells;
  std::vector<std::string> order;
  for (const auto& s : scores) {
    if (!cells.count(s.src)) order.push_back(s.src);
    cells[s.src][s.scheme].push_back(s.bleu);
    cells["average"][s.scheme].push_back(s.bleu);
  }
  std::sort(order.begin(), order.end());
  if (cells.count("average")) order.push_back("average");
  return detail::assemble_table("source_language", cells, order);
}

// Buckets are lower-inclusive intervals [e_i, e_{i+1}) over the task's
// training-pair count; the last edge opens an unbounded bucket. Default
// edges give the seven groups used by the size analysis.
inline std::vector<std::size_t> default_size_edges() {
  return {0, 1000, 2000, 5000, 10000, 20000, 50000};
}

inline AnalysisTable group_by_size(const std::vector<TaskScore>& scores,
                                   std::vector<std::size_t> edges = default_size_edges()) {
  if (edges.empty() || !std::is_sorted(edges.begin(), edges.end()))
    throw ConfigError("group_by_size: bucket edges must be non-empty and ascending");
  auto label = [&](std::size_t b) {
    std::ostringstream os;
    os << "[" << edges[b] << ", ";
    if (b + 1 < edges.size())
      os << edges[b + 1] << ")";
    else
      os << "inf)";
    return os.str();
  };
  std::map<std::string, std::map<std::string, std::vector<double>>> cells;
  std::set<std::size_t> used;
  for (const auto& s : scores) {
    std::size_t b = 0;
    while (b + 1 < edges.size() && s.train_pairs >= edges[b + 1]) ++b;
    if (s.train_pairs < edges[0]) b = 0;  // counts below the first edge pool into it
    used.insert(b);
    cells[label(b)][s.scheme].push_back(s.bleu);
  }
  std::vector<std::string> order;
  for (std::size_t b : used) order.push_back(label(b));
  return detail::assemble_table("train_pairs", cells, order);
}

// Rows per similarity value between source and target, computed on the
// redundancy-pruned tree.
inline AnalysisTable group_by_similarity(const std::vector<TaskScore>& scores,
                                         const LanguageTree& pruned) {
  std::map<int, std::map<std::string, std::vector<double>>> by_value;
  for (const auto& s : scores)
    by_value[similarity(pruned, s.src, s.tgt)][s.scheme].push_back(s.bleu);
  std::map<std::string, std::map<std::string, std::vector<double>>> cells;
  std::vector<std::string> order;
  for (const auto& [value, per_scheme] : by_value) {
    const std::string label = std::to_string(value);
    order.push_back(label);
    cells[label] = per_scheme;
  }
  return detail::assemble_table("similarity", cells, order);
}

// BLEU histogram rows (bin lower edge, count) for one scheme's scores.
inline std::vector<std::pair<double, std::size_t>> bleu_histogram(
    const std::vector<TaskScore>& scores, const std::string& scheme, double bin_width = 5.0) {
  if (bin_width <= 0.0) throw ConfigError("histogram bin width must be positive");
  const std::size_t bins = static_cast<std::size_t>(std::ceil(100.0 / bin_width));
  std::vector<std::pair<double, std::size_t>> out;
  out.reserve(bins);
  for (std::size_t b = 0; b < bins; ++b) out.emplace_back(bin_width * static_cast<double>(b), 0);
  for (const auto& s : scores) {
    if (s.scheme != scheme) continue;
    std::size_t b = std::min(bins - 1, static_cast<std::size_t>(s.bleu / bin_width));
    ++out[b].second;
  }
  return out;
}

namespace detail {

// regularized incomplete beta via Lentz's continued fraction
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

inline double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

struct TTestResult {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double t = 0.0;
  double p = 1.0;  // two-sided
};

// Paired t-test over per-task BLEU of two schemes, aligned by task. Tasks
// present on only one side are ignored. Identical runs give t = 0, p = 1.
inline TTestResult paired_ttest(const std::map<std::string, double>& scheme_a,
                                const std::map<std::string, double>& scheme_b) {
  std::vector<double> diffs;
  for (const auto& [task, a] : scheme_a) {
    auto it = scheme_b.find(task);
    if (it != scheme_b.end()) diffs.push_back(a - it->second);
  }
  if (diffs.empty()) throw DataError("paired t-test: no common tasks between the two schemes");
  TTestResult r;
  r.n = diffs.size();
  for (double d : diffs) r.mean_diff += d;
  r.mean_diff /= static_cast<double>(r.n);
  if (r.n < 2) return r;  // no variance estimate; keep p = 1
  double ss = 0.0;
  for (double d : diffs) ss += (d - r.mean_diff) * (d - r.mean_diff);
  const double sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  if (sd == 0.0) {
    if (r.mean_diff == 0.0) return r;  // identical runs
    r.t = r.mean_diff > 0 ? 1e12 : -1e12;
    r.p = 0.0;
    return r;
  }
  r.t = r.mean_diff / (sd / std::sqrt(static_cast<double>(r.n)));
  const double nu = static_cast<double>(r.n - 1);
  r.p = detail::reg_inc_beta(nu / 2.0, 0.5, nu / (nu + r.t * r.t));
  return r;
}

}  // namespace hnmt
