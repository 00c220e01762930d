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

// A corpus directory holds truth.tensor (fully observed), runtimes.csv and
// sizes.csv.

#pragma once

#include <filesystem>
#include <system_error>

#include "pipesel/harness.hpp"
#include "pipesel/io.hpp"

namespace pipesel {

inline void save_corpus(const std::filesystem::path& dir, const SyntheticCorpus& c) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  write_tensor_file(dir / "truth.tensor", ObservedTensor::fully_observed(c.truth));
  write_file_atomic(dir / "runtimes.csv", [&](std::ostream& out) {
    write_runtime_table(out, runtime_rows(c.runtimes));
  });
  std::vector<SizeRow> sizes;
  for (std::size_t d = 0; d < c.sizes.size(); ++d) {
    sizes.push_back({d, c.sizes[d].n_points, c.sizes[d].n_features});
  }
  write_file_atomic(dir / "sizes.csv",
                    [&](std::ostream& out) { write_size_table(out, sizes); });
}

inline SyntheticCorpus load_corpus(const std::filesystem::path& dir) {
  SyntheticCorpus c;
  c.truth = require_full(read_tensor_file(dir / "truth.tensor"), "truth.tensor");
  detail::require(c.truth.order() >= 2, "truth.tensor needs at least two modes");
  c.runtimes = runtime_tensor(read_runtime_file(dir / "runtimes.csv"), c.truth.shape());
  const std::vector<SizeRow> sizes = read_size_file(dir / "sizes.csv");
  detail::require(sizes.size() == c.truth.shape()[0],
                  "sizes.csv must list every dataset of truth.tensor");
  for (const SizeRow& r : sizes) c.sizes.push_back({r.n_points, r.n_features});
  return c;
}

}  // namespace pipesel
