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

// Text file formats.
//
//   Tensor file:          Runtime table:               Size table:
//     TENSOR v1             dataset,pipeline,seconds     dataset,n_points,n_features
//     shape 2 3             0,0,1.25                     0,1000,12
//     0 0 0.5               0,1,0.5                      ...
//     1 2 0.25              ...
//
// Tensor bodies list observed entries only (zero-based indices, then the
// value); unlisted entries are missing. Blank lines and lines starting with
// '#' are ignored after the shape line. Numbers are written in the shortest
// form that reads back to the same double.

#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pipesel/error.hpp"
#include "pipesel/tensor.hpp"

namespace pipesel {

// Larger tensors are refused rather than risking an allocation failure on a
// corrupt shape line.
inline constexpr std::size_t kMaxFileEntries = std::size_t{1} << 28;

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::vector<std::string_view> split_char(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::optional<std::size_t> parse_index(std::string_view tok) {
  std::size_t v = 0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_real(std::string_view tok) {
  double v = 0.0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

inline std::size_t parse_index_at(std::string_view tok, std::size_t line,
                                  const char* what) {
  const auto v = parse_index(tok);
  if (!v) {
    throw ParseError(line, std::string("bad ") + what + " '" + std::string(tok) + "'");
  }
  return *v;
}

inline double parse_finite_at(std::string_view tok, std::size_t line,
                              const char* what) {
  const auto v = parse_real(tok);
  if (!v || !std::isfinite(*v)) {
    throw ParseError(line, std::string("bad ") + what + " '" + std::string(tok) + "'");
  }
  return *v;
}

// Reads one line; false at end of input.
inline bool next_line(std::istream& in, std::string& line, std::size_t& number) {
  if (!std::getline(in, line)) return false;
  ++number;
  return true;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

// Prefixes parse errors with the file name.
template <class F>
auto with_source(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e.line(), e.detail());
  }
}

}  // namespace detail

// ---------------------------------------------------------------- tensors

inline ObservedTensor read_tensor(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  if (!detail::next_line(in, line, n) || detail::trim(line) != "TENSOR v1") {
    throw ParseError(1, "expected header 'TENSOR v1'");
  }
  if (!detail::next_line(in, line, n)) throw ParseError(2, "missing shape line");
  const auto head = detail::split_ws(detail::strip_cr(line));
  if (head.empty() || head[0] != "shape") throw ParseError(2, "expected 'shape d1 ... dN'");
  if (head.size() < 2) throw ParseError(2, "shape needs at least one extent");
  if (head.size() - 1 > kMaxOrder) {
    throw ParseError(2, "order exceeds " + std::to_string(kMaxOrder));
  }
  std::vector<std::size_t> dims;
  std::size_t total = 1;
  for (std::size_t i = 1; i < head.size(); ++i) {
    const std::size_t d = detail::parse_index_at(head[i], 2, "extent");
    if (d == 0) throw ParseError(2, "extents must be >= 1");
    if (d > kMaxFileEntries / total) throw ParseError(2, "tensor too large");
    total *= d;
    dims.push_back(d);
  }
  const Shape shape(dims);
  DenseTensor data(shape);
  DenseTensor mask(shape);
  std::vector<std::size_t> index(shape.order());
  while (detail::next_line(in, line, n)) {
    const std::string_view body = detail::strip_cr(line);
    const auto tok = detail::split_ws(body);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok.size() != shape.order() + 1) {
      throw ParseError(n, "expected " + std::to_string(shape.order()) +
                              " indices and a value, got " +
                              std::to_string(tok.size()) + " fields");
    }
    for (std::size_t i = 0; i < shape.order(); ++i) {
      index[i] = detail::parse_index_at(tok[i], n, "index");
      if (index[i] >= shape[i]) {
        throw ParseError(n, "index " + std::to_string(index[i]) +
                                " out of range for mode " + std::to_string(i) +
                                " (extent " + std::to_string(shape[i]) + ")");
      }
    }
    const double v = detail::parse_finite_at(tok.back(), n, "value");
    const std::size_t flat = shape.flat_index(index);
    if (mask[flat] == 1.0) throw ParseError(n, "duplicate index tuple");
    mask[flat] = 1.0;
    data[flat] = v;
  }
  if (in.bad()) throw IoError("read failure");
  return ObservedTensor(std::move(data), std::move(mask));
}

inline void write_tensor(std::ostream& out, const ObservedTensor& t) {
  const Shape& shape = t.shape();
  out << "TENSOR v1\nshape";
  for (std::size_t d : shape.dims()) out << ' ' << d;
  out << '\n';
  for (std::size_t flat = 0; flat < shape.size(); ++flat) {
    if (!t.observed(flat)) continue;
    for (std::size_t i : shape.unravel(flat)) out << i << ' ';
    out << format_double(t.data()[flat]) << '\n';
  }
}

inline void write_tensor(std::ostream& out, const DenseTensor& t) {
  write_tensor(out, ObservedTensor::fully_observed(t));
}

// Dense view of a file that must have every entry present.
inline DenseTensor require_full(const ObservedTensor& t, const std::string& what) {
  if (t.observed_count() != t.shape().size()) {
    throw ArgumentError(what + " must be fully observed");
  }
  return t.data();
}

// ---------------------------------------------------------------- tables

struct RuntimeRow {
  std::size_t dataset = 0;
  std::size_t pipeline = 0;
  double seconds = 0.0;
};

inline std::vector<RuntimeRow> read_runtime_table(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  if (!detail::next_line(in, line, n) ||
      detail::trim(line) != "dataset,pipeline,seconds") {
    throw ParseError(1, "expected header 'dataset,pipeline,seconds'");
  }
  std::vector<RuntimeRow> rows;
  while (detail::next_line(in, line, n)) {
    const std::string_view s = detail::trim(line);
    if (s.empty()) continue;
    const auto f = detail::split_char(s, ',');
    if (f.size() != 3) throw ParseError(n, "expected 3 comma-separated fields");
    RuntimeRow r;
    r.dataset = detail::parse_index_at(detail::trim(f[0]), n, "dataset");
    r.pipeline = detail::parse_index_at(detail::trim(f[1]), n, "pipeline");
    r.seconds = detail::parse_finite_at(detail::trim(f[2]), n, "seconds");
    if (r.seconds <= 0.0) throw ParseError(n, "seconds must be positive");
    rows.push_back(r);
  }
  return rows;
}

inline void write_runtime_table(std::ostream& out, const std::vector<RuntimeRow>& rows) {
  out << "dataset,pipeline,seconds\n";
  for (const RuntimeRow& r : rows) {
    out << r.dataset << ',' << r.pipeline << ',' << format_double(r.seconds) << '\n';
  }
}

// Rows for every entry of a (dataset, ...) runtime tensor; pipeline = flat
// index over the remaining modes.
inline std::vector<RuntimeRow> runtime_rows(const DenseTensor& runtimes) {
  const std::size_t d = runtimes.shape()[0];
  const std::size_t per = runtimes.size() / d;
  std::vector<RuntimeRow> rows;
  rows.reserve(runtimes.size());
  for (std::size_t i = 0; i < runtimes.size(); ++i) {
    rows.push_back({i / per, i % per, runtimes[i]});
  }
  return rows;
}

// Inverse of runtime_rows; every (dataset, pipeline) cell exactly once.
inline DenseTensor runtime_tensor(const std::vector<RuntimeRow>& rows,
                                  const Shape& shape) {
  const std::size_t per = shape.size() / shape[0];
  DenseTensor t(shape);
  std::vector<bool> seen(shape.size(), false);
  for (const RuntimeRow& r : rows) {
    if (r.dataset >= shape[0] || r.pipeline >= per) {
      throw ArgumentError("runtime row (" + std::to_string(r.dataset) + ", " +
                          std::to_string(r.pipeline) + ") outside the tensor");
    }
    const std::size_t flat = r.dataset * per + r.pipeline;
    if (seen[flat]) {
      throw ArgumentError("duplicate runtime for dataset " + std::to_string(r.dataset) +
                          ", pipeline " + std::to_string(r.pipeline));
    }
    seen[flat] = true;
    t[flat] = r.seconds;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) {
      throw ArgumentError("missing runtime for dataset " + std::to_string(i / per) +
                          ", pipeline " + std::to_string(i % per));
    }
  }
  return t;
}

struct SizeRow {
  std::size_t dataset = 0;
  double n_points = 1.0;
  double n_features = 1.0;
};

inline std::vector<SizeRow> read_size_table(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  if (!detail::next_line(in, line, n) ||
      detail::trim(line) != "dataset,n_points,n_features") {
    throw ParseError(1, "expected header 'dataset,n_points,n_features'");
  }
  std::vector<SizeRow> rows;
  while (detail::next_line(in, line, n)) {
    const std::string_view s = detail::trim(line);
    if (s.empty()) continue;
    const auto f = detail::split_char(s, ',');
    if (f.size() != 3) throw ParseError(n, "expected 3 comma-separated fields");
    SizeRow r;
    r.dataset = detail::parse_index_at(detail::trim(f[0]), n, "dataset");
    r.n_points = detail::parse_finite_at(detail::trim(f[1]), n, "n_points");
    r.n_features = detail::parse_finite_at(detail::trim(f[2]), n, "n_features");
    if (r.n_points <= 0.0 || r.n_features <= 0.0) {
      throw ParseError(n, "sizes must be positive");
    }
    if (r.dataset != rows.size()) {
      throw ParseError(n, "datasets must be listed in order 0, 1, 2, ...");
    }
    rows.push_back(r);
  }
  return rows;
}

inline void write_size_table(std::ostream& out, const std::vector<SizeRow>& rows) {
  out << "dataset,n_points,n_features\n";
  for (const SizeRow& r : rows) {
    out << r.dataset << ',' << format_double(r.n_points) << ','
        << format_double(r.n_features) << '\n';
  }
}

// ---------------------------------------------------------------- files

// Writes to "<path>.tmp" and renames over the target on commit(). An
// uncommitted writer removes its temp file, so an interrupted write never
// leaves a partial file at the final path.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path path)
      : path_(std::move(path)), tmp_(path_.string() + ".tmp") {
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open '" + tmp_.string() + "' for writing");
  }
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;
  ~AtomicFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }

  std::ostream& stream() { return out_; }
  const std::filesystem::path& temp_path() const { return tmp_; }

  void commit() {
    out_.flush();
    const bool ok = static_cast<bool>(out_);
    out_.close();
    if (!ok || out_.fail()) throw IoError("write to '" + tmp_.string() + "' failed");
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw IoError("cannot rename onto '" + path_.string() + "': " + ec.message());
    committed_ = true;
  }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

template <class Writer>
void write_file_atomic(const std::filesystem::path& path, Writer&& write) {
  AtomicFile f(path);
  write(f.stream());
  f.commit();
}

inline ObservedTensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  return detail::with_source(path, [&] { return read_tensor(in); });
}

inline void write_tensor_file(const std::filesystem::path& path, const ObservedTensor& t) {
  write_file_atomic(path, [&](std::ostream& out) { write_tensor(out, t); });
}

inline std::vector<RuntimeRow> read_runtime_file(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  return detail::with_source(path, [&] { return read_runtime_table(in); });
}

inline std::vector<SizeRow> read_size_file(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  return detail::with_source(path, [&] { return read_size_table(in); });
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace pipesel
