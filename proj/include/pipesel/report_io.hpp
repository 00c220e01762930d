// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Selection reports as JSON lines: one "round" record per round, one
// "observation" record per launched pipeline, then a single "summary".
// Non-finite reals are written as null.

#pragma once

#include <cmath>
#include <istream>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pipesel/error.hpp"
#include "pipesel/io.hpp"
#include "pipesel/harness.hpp"
#include "pipesel/selection.hpp"

namespace pipesel {

namespace detail {

using Json = nlohmann::ordered_json;

inline Json real_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double json_real(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  if (!j.is_number()) throw ArgumentError("expected a number");
  return j.get<double>();
}

inline Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(real_json(v(i)));
  return a;
}

inline Eigen::VectorXd json_vector(const Json& j) {
  if (!j.is_array()) throw ArgumentError("expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = json_real(j[i]);
  return v;
}

inline Json reals_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(real_json(x));
  return a;
}

inline std::vector<double> json_reals(const Json& j) {
  if (!j.is_array()) throw ArgumentError("expected an array");
  std::vector<double> v;
  for (const Json& x : j) v.push_back(json_real(x));
  return v;
}

inline std::size_t json_index(const Json& j) {
  if (!j.is_number_unsigned()) throw ArgumentError("expected a nonnegative integer");
  return j.get<std::size_t>();
}

inline std::vector<std::size_t> json_indices(const Json& j) {
  if (!j.is_array()) throw ArgumentError("expected an array");
  std::vector<std::size_t> v;
  for (const Json& x : j) v.push_back(json_index(x));
  return v;
}

inline const Json& field(const Json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw ArgumentError(std::string("missing field '") + name + "'");
  return *it;
}

}  // namespace detail

inline void write_report(std::ostream& out, const SelectionReport& r) {
  using detail::Json;
  for (const RoundLog& l : r.rounds) {
    Json j;
    j["record"] = "round";
    j["round"] = l.round;
    j["time_target"] = detail::real_json(l.time_target);
    j["rank"] = l.rank_used;
    j["designed"] = l.designed_set;
    j["observed"] = l.observed_set;
    j["observed_errors"] = detail::reals_json(l.observed_errors);
    j["embedding"] = detail::vector_json(l.estimated_embedding);
    j["predicted_errors"] = detail::vector_json(l.predicted_errors);
    j["top_candidates"] = l.top_candidates;
    j["ensemble"] = l.ensemble_members;
    j["ensemble_errors"] = detail::reals_json(l.ensemble_errors);
    j["validation_error"] = detail::real_json(l.validation_error);
    j["fallback"] = l.fallback;
    j["clock"] = detail::real_json(l.clock_after);
    out << j.dump() << '\n';
  }
  for (const ObservationEvent& e : r.events) {
    Json j;
    j["record"] = "observation";
    j["pipeline"] = e.pipeline;
    j["error"] = detail::real_json(e.error);
    j["seconds"] = detail::real_json(e.seconds);
    j["clock"] = detail::real_json(e.clock_after);
    j["completed"] = e.completed;
    out << j.dump() << '\n';
  }
  Json j;
  j["record"] = "summary";
  j["final_ranking"] = r.final_ranking;
  j["final_ensemble"] = r.final_ensemble;
  j["sweep"] = r.sweep_observed;
  j["budget_spent"] = detail::real_json(r.budget_spent);
  j["total_budget"] = detail::real_json(r.total_budget);
  out << j.dump() << '\n';
}

inline SelectionReport read_report(std::istream& in) {
  using detail::Json;
  SelectionReport r;
  bool summary = false;
  std::string line;
  std::size_t n = 0;
  while (detail::next_line(in, line, n)) {
    if (detail::trim(line).empty()) continue;
    if (summary) throw ParseError(n, "records after the summary");
    try {
      const Json j = Json::parse(line);
      if (!j.is_object()) throw ArgumentError("record is not an object");
      const Json& kind = detail::field(j, "record");
      if (kind == "round") {
        RoundLog l;
        l.round = detail::json_index(detail::field(j, "round"));
        l.time_target = detail::json_real(detail::field(j, "time_target"));
        l.rank_used = detail::json_index(detail::field(j, "rank"));
        l.designed_set = detail::json_indices(detail::field(j, "designed"));
        l.observed_set = detail::json_indices(detail::field(j, "observed"));
        l.observed_errors = detail::json_reals(detail::field(j, "observed_errors"));
        l.estimated_embedding = detail::json_vector(detail::field(j, "embedding"));
        l.predicted_errors = detail::json_vector(detail::field(j, "predicted_errors"));
        l.top_candidates = detail::json_indices(detail::field(j, "top_candidates"));
        l.ensemble_members = detail::json_indices(detail::field(j, "ensemble"));
        l.ensemble_errors = detail::json_reals(detail::field(j, "ensemble_errors"));
        l.validation_error = detail::json_real(detail::field(j, "validation_error"));
        l.fallback = detail::field(j, "fallback").get<bool>();
        l.clock_after = detail::json_real(detail::field(j, "clock"));
        r.rounds.push_back(std::move(l));
      } else if (kind == "observation") {
        ObservationEvent e;
        e.pipeline = detail::json_index(detail::field(j, "pipeline"));
        e.error = detail::json_real(detail::field(j, "error"));
        e.seconds = detail::json_real(detail::field(j, "seconds"));
        e.clock_after = detail::json_real(detail::field(j, "clock"));
        e.completed = detail::field(j, "completed").get<bool>();
        r.events.push_back(e);
      } else if (kind == "summary") {
        r.final_ranking = detail::json_indices(detail::field(j, "final_ranking"));
        r.final_ensemble = detail::json_indices(detail::field(j, "final_ensemble"));
        r.sweep_observed = detail::json_indices(detail::field(j, "sweep"));
        r.budget_spent = detail::json_real(detail::field(j, "budget_spent"));
        r.total_budget = detail::json_real(detail::field(j, "total_budget"));
        summary = true;
      } else {
        throw ArgumentError("unknown record type " + kind.dump());
      }
    } catch (const Json::exception& e) {
      throw ParseError(n, std::string("malformed record: ") + e.what());
    } catch (const ArgumentError& e) {
      throw ParseError(n, e.what());
    }
  }
  if (!summary) throw ParseError(0, "report has no summary record");
  return r;
}

inline SelectionReport read_report_file(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  return detail::with_source(path, [&] { return read_report(in); });
}

// LOO results as a delimited table, one row per (dataset, fraction). A failed
// fold is one row with empty numeric fields and the message (commas become
// semicolons).
inline void write_loo_table(std::ostream& out, const LooResult& r) {
  out << "dataset,fraction,regret,engine_rank,pick,baseline,baseline_rank,"
         "baseline_regret,error\n";
  for (const FoldResult& f : r.folds) {
    if (!f.error.empty()) {
      std::string msg = f.error;
      for (char& c : msg) {
        if (c == ',' || c == '\n' || c == '\r') c = ';';
      }
      out << f.dataset << ",,,,,,,," << msg << '\n';
      continue;
    }
    for (std::size_t i = 0; i < f.regrets.size(); ++i) {
      out << f.dataset << ',' << format_double(r.budget_fractions[i]) << ','
          << format_double(f.regrets[i]) << ',' << f.engine_ranks[i] << ','
          << f.picks[i] << ',' << f.baseline << ',' << f.baseline_rank << ','
          << format_double(f.baseline_regret) << ",\n";
    }
  }
}

struct LooRow {
  std::size_t dataset = 0;
  std::optional<double> fraction;  // unset on failed folds
  double regret = 0.0;
  std::size_t engine_rank = 0, pick = 0, baseline = 0, baseline_rank = 0;
  double baseline_regret = 0.0;
  std::string error;
};

inline std::vector<LooRow> read_loo_table(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  if (!detail::next_line(in, line, n) ||
      detail::trim(line) !=
          "dataset,fraction,regret,engine_rank,pick,baseline,baseline_rank,"
          "baseline_regret,error") {
    throw ParseError(1, "expected the evaluation table header");
  }
  std::vector<LooRow> rows;
  while (detail::next_line(in, line, n)) {
    const std::string_view s = detail::strip_cr(line);
    if (detail::trim(s).empty()) continue;
    const auto f = detail::split_char(s, ',');
    if (f.size() != 9) throw ParseError(n, "expected 9 comma-separated fields");
    LooRow r;
    r.dataset = detail::parse_index_at(f[0], n, "dataset");
    if (f[1].empty()) {
      if (f[8].empty()) throw ParseError(n, "failed fold without a message");
      r.error = std::string(f[8]);
    } else {
      r.fraction = detail::parse_finite_at(f[1], n, "fraction");
      r.regret = detail::parse_finite_at(f[2], n, "regret");
      r.engine_rank = detail::parse_index_at(f[3], n, "engine_rank");
      r.pick = detail::parse_index_at(f[4], n, "pick");
      r.baseline = detail::parse_index_at(f[5], n, "baseline");
      r.baseline_rank = detail::parse_index_at(f[6], n, "baseline_rank");
      r.baseline_regret = detail::parse_finite_at(f[7], n, "baseline_regret");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// Human-readable digests for the report subcommand.
inline std::string summarize_report(const SelectionReport& r) {
  std::ostringstream s;
  s << "rounds: " << r.rounds.size() << "\n";
  for (const RoundLog& l : r.rounds) {
    s << "  round " << l.round << ": target " << format_double(l.time_target)
      << " s, rank " << l.rank_used << ", designed " << l.designed_set.size()
      << ", observed " << l.observed_set.size() << ", validation "
      << (std::isfinite(l.validation_error) ? format_double(l.validation_error) : "n/a")
      << (l.fallback ? " (fallback)" : "") << "\n";
  }
  std::size_t completed = 0, killed = 0;
  for (const ObservationEvent& e : r.events) (e.completed ? completed : killed)++;
  s << "observations: " << completed << " completed, " << killed << " killed, "
    << r.sweep_observed.size() << " after the last round\n";
  s << "budget: " << format_double(r.budget_spent) << " of "
    << format_double(r.total_budget) << " s\n";
  s << "ensemble:";
  for (std::size_t j : r.final_ensemble) s << ' ' << j;
  s << "\ntop of ranking:";
  for (std::size_t i = 0; i < std::min<std::size_t>(10, r.final_ranking.size()); ++i) {
    s << ' ' << r.final_ranking[i];
  }
  s << "\n";
  return s.str();
}

// Per-fraction means over successful folds, plus the baseline. Only engine
// variants and the baseline are compared.
inline std::string summarize_loo(const std::vector<LooRow>& rows) {
  std::map<double, std::pair<double, double>> sums;  // fraction -> (regret, rank)
  std::map<double, std::size_t> counts;
  std::map<std::size_t, std::size_t> baseline_rank;
  std::size_t failed = 0;
  for (const LooRow& r : rows) {
    if (!r.fraction) {
      ++failed;
      continue;
    }
    sums[*r.fraction].first += r.regret;
    sums[*r.fraction].second += static_cast<double>(r.engine_rank);
    ++counts[*r.fraction];
    baseline_rank[r.dataset] = r.baseline_rank;
  }
  std::ostringstream s;
  s << "fraction  mean_regret  mean_engine_rank  folds\n";
  for (const auto& [f, sum] : sums) {
    const double n = static_cast<double>(counts[f]);
    char line[128];
    std::snprintf(line, sizeof(line), "%8.4g  %11.6g  %16.6g  %5zu\n", f, sum.first / n,
                  sum.second / n, counts[f]);
    s << line;
  }
  double b = 0.0;
  for (const auto& [d, rank] : baseline_rank) b += static_cast<double>(rank);
  if (!baseline_rank.empty()) {
    s << "baseline mean rank: " << format_double(b / static_cast<double>(baseline_rank.size()))
      << " over " << baseline_rank.size() << " datasets\n";
  }
  s << "failed folds: " << failed << "\n";
  return s.str();
}

}  // namespace pipesel
