#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uedge/tensor.hpp"

namespace uedge {

struct TimingReport {
  std::string dataset_name;
  std::vector<std::int64_t> dataset_shape;  // N, H, W, C
  std::string backend;                      // "float" or "quant"
  std::int64_t repetitions = 0;
  double per_image_mean = 0.0;  // ms
  double per_image_std = 0.0;   // ms, sample (n - 1) estimator
  std::vector<double> raw_dataset_times;  // ms per timed full-dataset pass
  bool single_repetition = false;

  friend bool operator==(const TimingReport&, const TimingReport&) = default;
};

// Reads a monotonic clock. Injectable so the protocol can be tested with a
// simulated clock.
using ClockFn = std::function<std::chrono::nanoseconds()>;
ClockFn steady_clock_fn();

using PredictFn = std::function<void(const Tensor& image)>;

struct Dataset {
  std::string name;
  std::vector<Tensor> images;

  std::vector<std::int64_t> shape() const;
};

// One untimed warm-up pass over the dataset, then `reps` timed passes.
// Each pass contributes pass_time / N as its per-image time.
TimingReport time_dataset(const PredictFn& predict, const Dataset& dataset, int reps = 10,
                          const std::string& backend = "float",
                          const ClockFn& clock = steady_clock_fn());

// Recomputes mean and std from raw pass times and the dataset size.
void summarize(TimingReport& r);

nlohmann::ordered_json to_json(const TimingReport& r);
TimingReport timing_report_from_json(const nlohmann::json& j);

struct ComparisonRow {
  std::string dataset;
  std::string backend;
  double mean = 0.0;
  double std = 0.0;
  double speedup = 1.0;  // baseline mean / this mean
};

std::vector<ComparisonRow> compare(const std::vector<TimingReport>& reports,
                                   std::size_t baseline = 0);
// Aligned text table, times with two decimals.
std::string format_table(const std::vector<ComparisonRow>& rows);

}  // namespace uedge
