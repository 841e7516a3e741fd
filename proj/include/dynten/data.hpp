#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dynten/core.hpp"
#include "dynten/rng.hpp"

namespace dynten {

// One observed tensor entry: coordinates (0-based, one per mode), a
// continuous timestamp and the observed value.
struct Observation {
  std::vector<int> index;
  double time = 0.0;
  double value = 0.0;
};

struct Dataset {
  int order = 0;
  std::vector<int> dims;
  std::vector<Observation> observations;
  std::size_t size() const { return observations.size(); }
};

// Observations grouped by exact timestamp, times ascending.
struct TimeIndex {
  std::vector<double> unique_times;
  std::vector<std::vector<int>> buckets;  // observation ids, file order within a bucket
  std::size_t size() const { return unique_times.size(); }
};

// Value standardization statistics and the (optional) affine time map used
// model-side. Fitted on training data only.
struct Standardizer {
  double value_mean = 0.0;
  double value_std = 1.0;
  double time_min = 0.0;
  double time_max = 1.0;
  bool rescale_time = false;

  double standardize_value(double y) const { return (y - value_mean) / value_std; }
  double invert_value(double v) const { return v * value_std + value_mean; }
  double model_time(double t) const {
    return rescale_time ? (t - time_min) / (time_max - time_min) : t;
  }
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    std::size_t b = f.find_first_not_of(" \t");
    std::size_t e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace detail

// Reads `i_1,...,i_K,time,value` rows (optional header). Dimensions default
// to max index + 1 per mode unless an override is supplied.
inline Dataset load_dataset(const std::string& path, int order,
                            const std::vector<int>& dims_override = {}) {
  if (order < 1) throw Error("load_dataset: order must be >= 1");
  std::ifstream in(path);
  if (!in) throw Error("load_dataset: cannot open '" + path + "'");

  Dataset ds;
  ds.order = order;
  const int ncols = order + 2;
  std::string line;
  int lineno = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = detail::split_fields(line);
    if (first_content_line) {
      first_content_line = false;
      double probe;
      if (!detail::parse_double(fields[0], probe)) continue;  // header row
    }
    if (static_cast<int>(fields.size()) != ncols) {
      throw Error("expected " + std::to_string(ncols) + " columns at line " +
                  std::to_string(lineno));
    }
    Observation obs;
    obs.index.resize(order);
    for (int k = 0; k < order; ++k) {
      double v;
      if (!detail::parse_double(fields[k], v) || v != std::floor(v)) {
        throw Error("line " + std::to_string(lineno) + ": cannot parse index '" + fields[k] +
                    "'");
      }
      if (v < 0) {
        throw Error("line " + std::to_string(lineno) + ": negative index in mode " +
                    std::to_string(k));
      }
      obs.index[k] = static_cast<int>(v);
    }
    if (!detail::parse_double(fields[order], obs.time) || !std::isfinite(obs.time)) {
      throw Error("line " + std::to_string(lineno) + ": cannot parse time '" + fields[order] +
                  "'");
    }
    if (obs.time < 0) {
      throw Error("line " + std::to_string(lineno) + ": negative time");
    }
    if (!detail::parse_double(fields[order + 1], obs.value) || !std::isfinite(obs.value)) {
      throw Error("line " + std::to_string(lineno) + ": non-finite value '" +
                  fields[order + 1] + "'");
    }
    ds.observations.push_back(std::move(obs));
  }
  if (ds.observations.empty()) throw Error("load_dataset: no observations in '" + path + "'");

  if (!dims_override.empty()) {
    if (static_cast<int>(dims_override.size()) != order) {
      throw Error("load_dataset: dims override has wrong length");
    }
    ds.dims = dims_override;
  } else {
    ds.dims.assign(order, 0);
  }
  for (std::size_t n = 0; n < ds.observations.size(); ++n) {
    for (int k = 0; k < order; ++k) {
      int i = ds.observations[n].index[k];
      if (!dims_override.empty()) {
        if (i >= ds.dims[k]) {
          throw Error("load_dataset: index " + std::to_string(i) + " out of range in mode " +
                      std::to_string(k));
        }
      } else {
        ds.dims[k] = std::max(ds.dims[k], i + 1);
      }
    }
  }
  return ds;
}

inline void write_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error("write_dataset_csv: cannot open '" + path + "'");
  char buf[64];
  for (const auto& obs : ds.observations) {
    std::string row;
    for (int i : obs.index) row += std::to_string(i) + ",";
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", obs.time, obs.value);
    out << row << buf << "\n";
  }
  if (!out) throw Error("write_dataset_csv: write failed for '" + path + "'");
}

// Deterministic disjoint partition with round(N * fraction) rows in the first
// part. Relative file order is preserved inside each part.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction,
                                         std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("split: fraction must be in [0,1]");
  const std::size_t n = ds.size();
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  Rng rng = Rng::substream(seed, "split");
  rng.shuffle(ids);
  std::size_t n_first =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  std::vector<int> first(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_first));
  std::vector<int> second(ids.begin() + static_cast<std::ptrdiff_t>(n_first), ids.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  auto take = [&](const std::vector<int>& sel) {
    Dataset out;
    out.order = ds.order;
    out.dims = ds.dims;
    out.observations.reserve(sel.size());
    for (int id : sel) out.observations.push_back(ds.observations[static_cast<std::size_t>(id)]);
    return out;
  };
  return {take(first), take(second)};
}

// Population statistics over training values; a zero spread falls back to 1
// so the transform stays invertible.
inline Standardizer fit_standardizer(const Dataset& train, bool rescale_time) {
  if (train.observations.empty()) throw Error("fit_standardizer: empty dataset");
  Standardizer s;
  s.rescale_time = rescale_time;
  double sum = 0.0;
  s.time_min = train.observations.front().time;
  s.time_max = train.observations.front().time;
  for (const auto& obs : train.observations) {
    sum += obs.value;
    s.time_min = std::min(s.time_min, obs.time);
    s.time_max = std::max(s.time_max, obs.time);
  }
  s.value_mean = sum / static_cast<double>(train.size());
  double ss = 0.0;
  for (const auto& obs : train.observations) {
    double d = obs.value - s.value_mean;
    ss += d * d;
  }
  s.value_std = std::sqrt(ss / static_cast<double>(train.size()));
  if (s.value_std == 0.0) s.value_std = 1.0;
  if (rescale_time && s.time_max <= s.time_min) s.time_max = s.time_min + 1.0;
  return s;
}

inline Dataset apply_standardizer(const Standardizer& s, const Dataset& ds) {
  Dataset out = ds;
  for (auto& obs : out.observations) {
    obs.value = s.standardize_value(obs.value);
    obs.time = s.model_time(obs.time);
  }
  return out;
}

// Groups observations by exact timestamp equality.
inline TimeIndex build_time_index(const Dataset& ds) {
  std::map<double, std::vector<int>> groups;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    groups[ds.observations[n].time].push_back(static_cast<int>(n));
  }
  TimeIndex idx;
  idx.unique_times.reserve(groups.size());
  idx.buckets.reserve(groups.size());
  for (auto& [t, bucket] : groups) {
    idx.unique_times.push_back(t);
    idx.buckets.push_back(std::move(bucket));
  }
  return idx;
}

}  // namespace dynten
