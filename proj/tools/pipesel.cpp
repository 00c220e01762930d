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

// pipesel: generate | complete | design | select | evaluate | report.
//
// Every subcommand reads the run configuration from defaults, then
// --config FILE, then --set key=value overrides (later wins). The resolved
// configuration is echoed to stderr unless --quiet. Outputs are written to a
// temp file and renamed into place. Failures print one line
//   error: <E_CODE>: <message>
// to stderr and exit nonzero.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <new>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pipesel/config.hpp"
#include "pipesel/corpus_io.hpp"
#include "pipesel/design.hpp"
#include "pipesel/harness.hpp"
#include "pipesel/io.hpp"
#include "pipesel/report_io.hpp"

namespace fs = std::filesystem;
using namespace pipesel;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "key = value configuration file");
  cmd->add_option("--set", c.overrides, "override one key (key=value); repeatable")
      ->take_all();
  cmd->add_flag("--quiet", c.quiet, "do not echo the resolved configuration");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_file.empty()) load_config_file(c.config_file, cfg);
  for (const std::string& o : c.overrides) apply_override(cfg, o);
  if (!c.quiet) {
    std::string text = config_to_text(cfg);
    std::string echoed;
    std::size_t start = 0;
    while (start < text.size()) {
      const std::size_t end = text.find('\n', start);
      echoed += "# " + text.substr(start, end - start) + "\n";
      start = end + 1;
    }
    std::cerr << echoed;
  }
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  write_file_atomic(path, [&](std::ostream& out) { out << text; });
}

void write_history(const std::string& path, const std::vector<double>& h) {
  if (path.empty()) return;
  std::string text = "iteration,value\n";
  for (std::size_t i = 0; i < h.size(); ++i) {
    text += std::to_string(i) + "," + format_double(h[i]) + "\n";
  }
  write_text(path, text);
}

// ---------------------------------------------------------------- generate

void cmd_generate(const RunConfig& cfg, const std::string& out_dir) {
  const SyntheticCorpus c = generate_synthetic(cfg.synthetic_spec());
  save_corpus(out_dir, c);
  if (cfg.missing_ratio > 0.0) {
    write_tensor_file(fs::path(out_dir) / "observed.tensor",
                      censor_uniform(c.truth, cfg.missing_ratio, cfg.seed));
  }
  if (std::isfinite(cfg.censor_seconds)) {
    write_tensor_file(fs::path(out_dir) / "censored.tensor",
                      censor_by_runtime(c.truth, c.runtimes, cfg.censor_seconds));
  }
  std::cout << "wrote corpus " << c.truth.shape().dims().size() << "-way, "
            << c.datasets() << " datasets x " << c.pipelines() << " pipelines to "
            << out_dir << "\n";
}

// ---------------------------------------------------------------- complete

void cmd_complete(const RunConfig& cfg, const std::string& input,
                  const std::string& output, const std::string& history,
                  const std::string& embeddings) {
  const ObservedTensor t = read_tensor_file(input);
  const CompletionSettings s = cfg.completion_settings(t.shape());
  DenseTensor completed;
  std::vector<double> h;
  switch (cfg.method) {
    case CompletionMethod::zero_fill:
      completed = t.data();
      break;
    case CompletionMethod::em_tucker: {
      CompletionResult r =
          em_tucker(t, s.tucker_ranks.value_or(TuckerRanks::full(t.shape())), s.em);
      completed = std::move(r.completed);
      h = std::move(r.relative_error_history);
      break;
    }
    case CompletionMethod::em_matrix: {
      CompletionResult r = em_matrix(t, 0, s.matrix_rank, s.em);
      completed = std::move(r.completed);
      h = std::move(r.relative_error_history);
      break;
    }
    case CompletionMethod::kfmc: {
      const std::size_t rows = t.shape()[0];
      const Shape flat{rows, t.data().size() / rows};
      const ObservedTensor m(fold(matricize(t.data(), 0), 0, flat),
                             fold(matricize(t.mask(), 0), 0, flat));
      KfmcFit fit = kfmc_fit(m, s.kfmc);
      completed = fold(fit.completed, 0, t.shape());
      h = std::move(fit.objective_history);
      break;
    }
  }
  write_tensor_file(output, ObservedTensor::fully_observed(completed));
  write_history(history, h);
  if (!embeddings.empty()) {
    // Pipeline embeddings (k x pipelines) of the completed tensor.
    const TuckerRanks ranks = s.tucker_ranks.value_or(TuckerRanks::full(t.shape()));
    const Eigen::MatrixXd y = pipeline_embeddings(tucker_decompose(completed, ranks)).y;
    DenseTensor e(Shape{static_cast<std::size_t>(y.rows()), static_cast<std::size_t>(y.cols())});
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      for (Eigen::Index j = 0; j < y.cols(); ++j)
        e[static_cast<std::size_t>(i * y.cols() + j)] = y(i, j);
    write_tensor_file(embeddings, ObservedTensor::fully_observed(e));
  }
  std::cout << completion_method_name(cfg.method) << ": completed "
            << (t.shape().size() - t.observed_count()) << " missing entries, "
            << h.size() << " iterations\n";
}

// ---------------------------------------------------------------- design

void cmd_design(const RunConfig& cfg, const std::string& embeddings,
                const std::string& runtimes, std::size_t dataset,
                const std::string& output) {
  const DenseTensor y = require_full(read_tensor_file(embeddings), "embeddings");
  detail::require(y.order() == 2, "embeddings must be a k x n matrix");
  const std::size_t n = y.shape()[1];
  DesignPool pool;
  pool.y = matricize(y, 0);
  pool.runtimes = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n),
                                            std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  for (const RuntimeRow& r : read_runtime_file(runtimes)) {
    if (r.dataset != dataset) continue;
    detail::require(r.pipeline < n, "runtime row for pipeline " +
                                        std::to_string(r.pipeline) + " beyond the embeddings");
    detail::require(std::isnan(pool.runtimes(static_cast<Eigen::Index>(r.pipeline))),
                    "duplicate runtime for pipeline " + std::to_string(r.pipeline));
    pool.runtimes(static_cast<Eigen::Index>(r.pipeline)) = r.seconds;
    total += r.seconds;
  }
  for (std::size_t j = 0; j < n; ++j) {
    detail::require(!std::isnan(pool.runtimes(static_cast<Eigen::Index>(j))),
                    "no runtime for pipeline " + std::to_string(j) + " of dataset " +
                        std::to_string(dataset));
  }
  const double budget = cfg.budget.value_or(cfg.budget_fraction * total);
  const auto k = static_cast<Eigen::Index>(
      cfg.design_k == 0 ? y.shape()[0] : std::min(cfg.design_k, y.shape()[0]));
  const DesignResult d = time_constrained_design(pool, budget, k);
  std::string text;
  for (std::size_t j : d.selected) text += std::to_string(j) + "\n";
  write_text(output, text);
  std::cerr << "selected " << d.selected.size() << " of " << n << " pipelines"
            << (d.fallback ? " (fallback: fastest first)" : "") << "\n";
}

// ---------------------------------------------------------------- select

void cmd_select(const RunConfig& cfg, const std::string& corpus_dir,
                std::size_t held_out, const std::string& output) {
  const SyntheticCorpus c = load_corpus(corpus_dir);
  detail::require(held_out < c.datasets(), "held-out dataset out of range");
  detail::require(c.datasets() >= 2, "need at least one training dataset");
  const LooConfig loo = cfg.loo_config(c.truth.shape());
  const MetaModel m = meta_train(c, held_out, loo);
  const double budget =
      cfg.budget.value_or(cfg.budget_fraction * total_runtime(c, held_out));
  detail::require(loo.initial_target_fraction * budget <= budget / 2.0,
                  "initial target exceeds half the budget");
  const SelectionReport r = run_fold_with_budget(c, m, held_out, budget, loo);
  write_file_atomic(output, [&](std::ostream& out) { write_report(out, r); });
  const std::vector<double> truth = dataset_slice(c.truth, held_out);
  const std::size_t pick = engine_pick(r);
  std::cout << "pick " << pick << " (true rank " << true_rank(truth, pick) << " of "
            << truth.size() << "), regret " << format_double(report_regret(r, truth))
            << ", spent " << format_double(r.budget_spent) << " of "
            << format_double(r.total_budget) << " s\n";
}

// ---------------------------------------------------------------- evaluate

void cmd_evaluate(const RunConfig& cfg, const std::string& corpus_dir,
                  const std::string& output) {
  const SyntheticCorpus c = load_corpus(corpus_dir);
  const LooResult r = evaluate_loo(c, cfg.loo_config(c.truth.shape()));
  std::ostringstream table;
  write_loo_table(table, r);
  write_text(output, table.str());
  if (!output.empty() && output != "-") {
    std::istringstream in(table.str());
    std::cout << summarize_loo(read_loo_table(in));
  }
}

// ---------------------------------------------------------------- report

void cmd_report(const std::string& input, const std::string& output) {
  const std::string text = read_text_file(input);
  std::istringstream in(text);
  std::string summary;
  if (text.rfind("dataset,fraction,", 0) == 0) {
    summary = detail::with_source(input, [&] { return summarize_loo(read_loo_table(in)); });
  } else {
    summary = detail::with_source(input, [&] { return summarize_report(read_report(in)); });
  }
  write_text(output, summary);
}

int fail(std::string_view code, const std::string& message) {
  std::string one_line = message;
  for (char& ch : one_line) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  std::cerr << "error: " << code << ": " << one_line << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-constrained pipeline selection from pipeline-performance tensors"};
  app.require_subcommand(1);

  Common common_gen, common_cmp, common_des, common_sel, common_eval;

  std::string out_dir;
  auto* gen = app.add_subcommand("generate", "write a planted synthetic corpus");
  add_common(gen, common_gen);
  gen->add_option("--out-dir", out_dir, "corpus directory")->required();

  std::string c_in, c_out, c_hist, c_emb;
  auto* cmp = app.add_subcommand("complete", "fill the missing entries of a tensor");
  add_common(cmp, common_cmp);
  cmp->add_option("--input", c_in, "observed tensor file")->required();
  cmp->add_option("--output", c_out, "completed tensor file")->required();
  cmp->add_option("--history", c_hist, "per-iteration error/objective CSV");
  cmp->add_option("--embeddings", c_emb, "also write k x n pipeline embeddings");

  std::string d_emb, d_rt, d_out;
  std::size_t d_dataset = 0;
  auto* des = app.add_subcommand("design", "choose pipelines to observe under a budget");
  add_common(des, common_des);
  des->add_option("--embeddings", d_emb, "k x n pipeline embedding tensor file")->required();
  des->add_option("--runtimes", d_rt, "runtime table (dataset,pipeline,seconds)")->required();
  des->add_option("--dataset", d_dataset, "dataset whose runtimes are used");
  des->add_option("--output", d_out, "selected indices, one per line (default stdout)");

  std::string s_dir, s_out;
  std::size_t s_held = 0;
  auto* sel = app.add_subcommand("select", "meta-train, then run the online loop on one dataset");
  add_common(sel, common_sel);
  sel->add_option("--corpus", s_dir, "corpus directory")->required();
  sel->add_option("--held-out", s_held, "dataset used as the new dataset")->required();
  sel->add_option("--output", s_out, "JSON-lines report")->required();

  std::string e_dir, e_out;
  auto* eval = app.add_subcommand("evaluate", "leave-one-dataset-out evaluation");
  add_common(eval, common_eval);
  eval->add_option("--corpus", e_dir, "corpus directory")->required();
  eval->add_option("--output", e_out, "result table (default stdout)");

  std::string r_in, r_out;
  auto* rep = app.add_subcommand("report", "summarize a selection report or result table");
  rep->add_option("--input", r_in, "report or table file")->required();
  rep->add_option("--output", r_out, "summary file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(error_code_name(ErrorCode::kArgument), e.what()) + 1;
  }

  try {
    if (*gen) cmd_generate(resolve(common_gen), out_dir);
    if (*cmp) cmd_complete(resolve(common_cmp), c_in, c_out, c_hist, c_emb);
    if (*des) cmd_design(resolve(common_des), d_emb, d_rt, d_dataset, d_out);
    if (*sel) cmd_select(resolve(common_sel), s_dir, s_held, s_out);
    if (*eval) cmd_evaluate(resolve(common_eval), e_dir, e_out);
    if (*rep) cmd_report(r_in, r_out);
  } catch (const Error& e) {
    return fail(error_code_name(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(error_code_name(ErrorCode::kRun), "out of memory");
  } catch (const std::exception& e) {
    return fail(error_code_name(ErrorCode::kRun), e.what());
  }
  return 0;
}
