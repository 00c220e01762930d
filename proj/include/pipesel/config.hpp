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

// Flat key = value run configuration. Every value is range-checked when it is
// set; unknown keys are rejected. Resolution order: defaults, then a config
// file, then command-line overrides.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pipesel/error.hpp"
#include "pipesel/harness.hpp"
#include "pipesel/io.hpp"

namespace pipesel {

struct RunConfig {
  std::uint64_t seed = 0;

  // generate
  std::vector<std::size_t> shape = {30, 2, 2, 2, 3, 20};
  std::vector<std::size_t> ranks = {5, 2, 2, 2, 2, 4};
  double noise_std = 0.0;
  double runtime_jitter = 0.2;
  double n_points_min = 500.0, n_points_max = 10000.0;
  double n_features_min = 10.0, n_features_max = 100.0;
  double missing_ratio = 0.0;
  double censor_seconds = std::numeric_limits<double>::infinity();

  // complete
  CompletionMethod method = CompletionMethod::em_tucker;
  std::size_t matrix_rank = 5;
  int em_max_iter = 1000;
  double em_tol = 1e-4;
  int em_inner_sweeps = 1;
  std::size_t kfmc_r = 32;
  std::optional<double> kfmc_sigma;  // unset: median heuristic
  double kfmc_alpha = 1e-3, kfmc_beta = 1e-3, kfmc_eta = 0.5;
  std::size_t kfmc_n_batch = 1, kfmc_n_iter = 20, kfmc_n_pass = 100;
  double kfmc_update_tol = 1e-6;

  // design
  std::size_t design_k = 0;  // 0: all embedding rows

  // select / evaluate
  std::optional<double> budget;  // seconds; unset: budget_fraction of the total
  double budget_fraction = 0.1;
  std::vector<double> budget_fractions = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  double initial_target_fraction = 1.0 / 64.0;
  std::size_t initial_rank = 0;  // 0: energy rule
  std::size_t top_n = 10;
  std::size_t ensemble_size = 5;
  double energy_fraction = 0.97;
  double design_overhead = 0.0;
  bool spend_remaining = true;
  EmbeddingMethod embedding = EmbeddingMethod::tucker;
  std::size_t pca_rank = 5;
  double training_missing_ratio = 0.0;

  SyntheticSpec synthetic_spec() const {
    SyntheticSpec s;
    s.shape = Shape(shape);
    s.ranks = TuckerRanks(ranks);
    s.noise_std = noise_std;
    s.runtime_jitter = runtime_jitter;
    s.n_points_min = n_points_min;
    s.n_points_max = n_points_max;
    s.n_features_min = n_features_min;
    s.n_features_max = n_features_max;
    s.seed = seed;
    return s;
  }

  EmOptions em_options() const { return {em_max_iter, em_tol, em_inner_sweeps}; }

  KfmcOptions kfmc_options() const {
    KfmcOptions k;
    k.r = kfmc_r;
    k.sigma = kfmc_sigma;
    k.alpha = kfmc_alpha;
    k.beta = kfmc_beta;
    k.eta = kfmc_eta;
    k.n_batch = kfmc_n_batch;
    k.n_iter = kfmc_n_iter;
    k.n_pass = kfmc_n_pass;
    k.update_tol = kfmc_update_tol;
    k.seed = seed;
    return k;
  }

  CompletionSettings completion_settings(const Shape& s) const {
    CompletionSettings c;
    if (ranks.size() == s.order()) c.tucker_ranks = TuckerRanks(ranks);
    c.matrix_rank = matrix_rank;
    c.em = em_options();
    c.kfmc = kfmc_options();
    return c;
  }

  SelectionConfig selection_config() const {
    SelectionConfig c;
    c.top_n = top_n;
    c.ensemble_size = ensemble_size;
    c.energy_fraction = energy_fraction;
    c.design_overhead = design_overhead;
    c.spend_remaining = spend_remaining;
    return c;
  }

  LooConfig loo_config(const Shape& corpus_shape) const {
    LooConfig c;
    if (ranks.size() == corpus_shape.order()) c.ranks = TuckerRanks(ranks);
    c.embedding = embedding;
    c.pca_rank = pca_rank;
    c.training_missing_ratio = training_missing_ratio;
    c.budget_fractions = budget_fractions;
    c.initial_target_fraction = initial_target_fraction;
    if (initial_rank > 0) c.initial_rank = initial_rank;
    c.selection = selection_config();
    c.seed = seed;
    return c;
  }
};

namespace detail {

struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;  // throws ArgumentError
  std::function<std::string(const RunConfig&)> get;
};

inline double config_real(std::string_view v, double lo, double hi, bool lo_open,
                          bool hi_open) {
  const auto x = parse_real(v);
  if (!x || std::isnan(*x)) throw ArgumentError("not a number: '" + std::string(v) + "'");
  const bool ok = (lo_open ? *x > lo : *x >= lo) && (hi_open ? *x < hi : *x <= hi);
  if (!ok) {
    throw ArgumentError("value " + std::string(v) + " outside " +
                        (lo_open ? "(" : "[") + format_double(lo) + ", " +
                        format_double(hi) + (hi_open ? ")" : "]"));
  }
  return *x;
}

inline std::size_t config_count(std::string_view v, std::size_t lo) {
  const auto x = parse_index(v);
  if (!x) throw ArgumentError("not a nonnegative integer: '" + std::string(v) + "'");
  if (*x < lo) throw ArgumentError("value must be >= " + std::to_string(lo));
  return *x;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<T>) {
      s += format_double(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

inline std::vector<std::string_view> config_list(std::string_view v) {
  std::vector<std::string_view> out;
  for (std::string_view f : split_char(v, ',')) {
    f = trim(f);
    if (f.empty()) throw ArgumentError("empty list element in '" + std::string(v) + "'");
    out.push_back(f);
  }
  return out;
}

inline const std::vector<ConfigKey>& config_keys() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  using C = RunConfig;
  auto real = [](std::string name, double C::*m, double lo, double hi, bool lo_open,
                 bool hi_open) {
    return ConfigKey{
        std::move(name),
        [=](C& c, std::string_view v) { c.*m = config_real(v, lo, hi, lo_open, hi_open); },
        [=](const C& c) { return format_double(c.*m); }};
  };
  auto count = [](std::string name, std::size_t C::*m, std::size_t lo) {
    return ConfigKey{std::move(name),
                     [=](C& c, std::string_view v) { c.*m = config_count(v, lo); },
                     [=](const C& c) { return std::to_string(c.*m); }};
  };
  auto int_count = [](std::string name, int C::*m) {
    return ConfigKey{std::move(name),
                     [=](C& c, std::string_view v) {
                       const std::size_t x = config_count(v, 1);
                       if (x > 100000000) throw ArgumentError("value too large");
                       c.*m = static_cast<int>(x);
                     },
                     [=](const C& c) { return std::to_string(c.*m); }};
  };
  auto extents = [](std::string name, std::vector<std::size_t> C::*m) {
    return ConfigKey{std::move(name),
                     [=](C& c, std::string_view v) {
                       std::vector<std::size_t> out;
                       for (std::string_view f : config_list(v)) out.push_back(config_count(f, 1));
                       if (out.size() > kMaxOrder) throw ArgumentError("too many modes");
                       c.*m = std::move(out);
                     },
                     [=](const C& c) { return join(c.*m); }};
  };
  static const std::vector<ConfigKey> keys = {
      {"seed",
       [](C& c, std::string_view v) {
         std::uint64_t x = 0;
         const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
         if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
           throw ArgumentError("not a 64-bit unsigned integer: '" + std::string(v) + "'");
         }
         c.seed = x;
       },
       [](const C& c) { return std::to_string(c.seed); }},
      extents("shape", &C::shape),
      extents("ranks", &C::ranks),
      real("noise_std", &C::noise_std, 0.0, inf, false, true),
      real("runtime_jitter", &C::runtime_jitter, 0.0, inf, false, true),
      real("n_points_min", &C::n_points_min, 0.0, inf, true, true),
      real("n_points_max", &C::n_points_max, 0.0, inf, true, true),
      real("n_features_min", &C::n_features_min, 0.0, inf, true, true),
      real("n_features_max", &C::n_features_max, 0.0, inf, true, true),
      real("missing_ratio", &C::missing_ratio, 0.0, 1.0, false, true),
      real("censor_seconds", &C::censor_seconds, 0.0, inf, true, false),
      {"method",
       [](C& c, std::string_view v) { c.method = parse_completion_method(std::string(v)); },
       [](const C& c) { return completion_method_name(c.method); }},
      count("matrix_rank", &C::matrix_rank, 1),
      int_count("em_max_iter", &C::em_max_iter),
      real("em_tol", &C::em_tol, 0.0, inf, true, true),
      int_count("em_inner_sweeps", &C::em_inner_sweeps),
      count("kfmc_r", &C::kfmc_r, 1),
      {"kfmc_sigma",
       [](C& c, std::string_view v) {
         if (v == "auto") {
           c.kfmc_sigma.reset();
         } else {
           c.kfmc_sigma = config_real(v, 0.0, inf, true, true);
         }
       },
       [](const C& c) { return c.kfmc_sigma ? format_double(*c.kfmc_sigma) : "auto"; }},
      real("kfmc_alpha", &C::kfmc_alpha, 0.0, inf, false, true),
      real("kfmc_beta", &C::kfmc_beta, 0.0, inf, false, true),
      real("kfmc_eta", &C::kfmc_eta, 0.0, 1.0, false, true),
      count("kfmc_n_batch", &C::kfmc_n_batch, 1),
      count("kfmc_n_iter", &C::kfmc_n_iter, 1),
      count("kfmc_n_pass", &C::kfmc_n_pass, 1),
      real("kfmc_update_tol", &C::kfmc_update_tol, 0.0, inf, true, true),
      count("design_k", &C::design_k, 0),
      {"budget",
       [](C& c, std::string_view v) {
         if (v == "auto") {
           c.budget.reset();
         } else {
           c.budget = config_real(v, 0.0, inf, true, true);
         }
       },
       [](const C& c) { return c.budget ? format_double(*c.budget) : "auto"; }},
      real("budget_fraction", &C::budget_fraction, 0.0, 1.0, true, false),
      {"budget_fractions",
       [](C& c, std::string_view v) {
         std::vector<double> out;
         for (std::string_view f : config_list(v)) {
           out.push_back(config_real(f, 0.0, 1.0, true, false));
           if (out.size() > 1 && out.back() <= out[out.size() - 2]) {
             throw ArgumentError("budget_fractions must increase");
           }
         }
         c.budget_fractions = std::move(out);
       },
       [](const C& c) { return join(c.budget_fractions); }},
      real("initial_target_fraction", &C::initial_target_fraction, 0.0, 0.5, true, false),
      count("initial_rank", &C::initial_rank, 0),
      count("top_n", &C::top_n, 1),
      count("ensemble_size", &C::ensemble_size, 1),
      real("energy_fraction", &C::energy_fraction, 0.0, 1.0, true, false),
      real("design_overhead", &C::design_overhead, 0.0, inf, false, true),
      {"spend_remaining",
       [](C& c, std::string_view v) {
         if (v == "true" || v == "1") {
           c.spend_remaining = true;
         } else if (v == "false" || v == "0") {
           c.spend_remaining = false;
         } else {
           throw ArgumentError("expected true or false, got '" + std::string(v) + "'");
         }
       },
       [](const C& c) { return std::string(c.spend_remaining ? "true" : "false"); }},
      {"embedding",
       [](C& c, std::string_view v) {
         if (v == "tucker") {
           c.embedding = EmbeddingMethod::tucker;
         } else if (v == "pca") {
           c.embedding = EmbeddingMethod::pca;
         } else {
           throw ArgumentError("expected tucker or pca, got '" + std::string(v) + "'");
         }
       },
       [](const C& c) {
         return std::string(c.embedding == EmbeddingMethod::tucker ? "tucker" : "pca");
       }},
      count("pca_rank", &C::pca_rank, 1),
      real("training_missing_ratio", &C::training_missing_ratio, 0.0, 1.0, false, true),
  };
  return keys;
}

inline const ConfigKey& find_config_key(std::string_view name) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == name) return k;
  }
  throw ArgumentError("unknown config key '" + std::string(name) + "'");
}

}  // namespace detail

inline std::vector<std::string> config_key_names() {
  std::vector<std::string> out;
  for (const auto& k : detail::config_keys()) out.push_back(k.name);
  return out;
}

// Sets one key; ArgumentError on an unknown key or out-of-range value.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  const detail::ConfigKey& k = detail::find_config_key(key);
  try {
    k.set(c, detail::trim(value));
  } catch (const ArgumentError& e) {
    throw ArgumentError(std::string(key) + ": " + e.what());
  }
}

// "key=value" as given on the command line.
inline void apply_override(RunConfig& c, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ArgumentError("override '" + std::string(assignment) + "' is not key=value");
  }
  set_config_value(c, detail::trim(assignment.substr(0, eq)),
                   assignment.substr(eq + 1));
}

// Applies a config document on top of `c`. Each key may appear once.
inline void load_config(std::istream& in, RunConfig& c) {
  std::string line;
  std::size_t n = 0;
  std::set<std::string, std::less<>> seen;
  while (detail::next_line(in, line, n)) {
    const std::string_view s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const std::size_t eq = s.find('=');
    if (eq == std::string_view::npos) throw ParseError(n, "expected 'key = value'");
    const std::string_view key = detail::trim(s.substr(0, eq));
    if (key.empty()) throw ParseError(n, "missing key");
    if (!seen.insert(std::string(key)).second) {
      throw ParseError(n, "duplicate key '" + std::string(key) + "'");
    }
    try {
      set_config_value(c, key, s.substr(eq + 1));
    } catch (const ArgumentError& e) {
      throw ParseError(n, e.what());
    }
  }
}

inline void load_config_file(const std::filesystem::path& path, RunConfig& c) {
  std::ifstream in = detail::open_input(path);
  detail::with_source(path, [&] {
    load_config(in, c);
    return 0;
  });
}

// Every resolved value, one "key = value" line each, in a fixed order.
inline std::string config_to_text(const RunConfig& c) {
  std::string s;
  for (const auto& k : detail::config_keys()) s += k.name + " = " + k.get(c) + "\n";
  return s;
}

}  // namespace pipesel
