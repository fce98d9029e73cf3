#include "uedge/bench.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "uedge/error.hpp"

namespace uedge {

ClockFn steady_clock_fn() {
  return [] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::steady_clock::now().time_since_epoch());
  };
}

std::vector<std::int64_t> Dataset::shape() const {
  if (images.empty()) return {0, 0, 0, 0};
  const Shape& s = images.front().shape();
  return {static_cast<std::int64_t>(images.size()), s.h, s.w, s.c};
}

void summarize(TimingReport& r) {
  const std::int64_t n = r.dataset_shape.empty() ? 0 : r.dataset_shape.front();
  if (n <= 0) throw Error(ErrorKind::argument, "timing report has an empty dataset");
  r.repetitions = static_cast<std::int64_t>(r.raw_dataset_times.size());
  if (r.repetitions == 0) throw Error(ErrorKind::argument, "timing report has no repetitions");
  std::vector<double> per_image;
  per_image.reserve(r.raw_dataset_times.size());
  for (double t : r.raw_dataset_times) per_image.push_back(t / static_cast<double>(n));
  r.per_image_mean =
      std::accumulate(per_image.begin(), per_image.end(), 0.0) / static_cast<double>(per_image.size());
  r.single_repetition = per_image.size() == 1;
  if (r.single_repetition) {
    r.per_image_std = 0.0;
    return;
  }
  double ss = 0.0;
  for (double v : per_image) ss += (v - r.per_image_mean) * (v - r.per_image_mean);
  r.per_image_std = std::sqrt(ss / static_cast<double>(per_image.size() - 1));
}

TimingReport time_dataset(const PredictFn& predict, const Dataset& dataset, int reps,
                          const std::string& backend, const ClockFn& clock) {
  if (dataset.images.empty()) throw Error(ErrorKind::argument, "time_dataset: empty dataset");
  if (reps < 1) throw Error(ErrorKind::argument, "time_dataset: reps must be >= 1");

  // Warm-up: first-inference allocation and load costs stay out of the stats.
  for (const Tensor& img : dataset.images) predict(img);

  TimingReport r;
  r.dataset_name = dataset.name;
  r.dataset_shape = dataset.shape();
  r.backend = backend;
  for (int rep = 0; rep < reps; ++rep) {
    const auto start = clock();
    for (const Tensor& img : dataset.images) predict(img);
    const auto stop = clock();
    r.raw_dataset_times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  summarize(r);
  return r;
}

nlohmann::ordered_json to_json(const TimingReport& r) {
  nlohmann::ordered_json j;
  j["dataset_name"] = r.dataset_name;
  j["dataset_shape"] = r.dataset_shape;
  j["backend"] = r.backend;
  j["repetitions"] = r.repetitions;
  j["per_image_mean"] = r.per_image_mean;
  j["per_image_std"] = r.per_image_std;
  j["raw_dataset_times"] = r.raw_dataset_times;
  if (r.single_repetition) j["note"] = "single repetition";
  return j;
}

TimingReport timing_report_from_json(const nlohmann::json& j) {
  try {
    TimingReport r;
    r.dataset_name = j.at("dataset_name").get<std::string>();
    r.dataset_shape = j.at("dataset_shape").get<std::vector<std::int64_t>>();
    r.backend = j.at("backend").get<std::string>();
    r.repetitions = j.at("repetitions").get<std::int64_t>();
    r.per_image_mean = j.at("per_image_mean").get<double>();
    r.per_image_std = j.at("per_image_std").get<double>();
    r.raw_dataset_times = j.at("raw_dataset_times").get<std::vector<double>>();
    r.single_repetition = j.contains("note") && j.at("note") == "single repetition";
    if (r.dataset_shape.size() != 4) throw Error(ErrorKind::format, "dataset_shape must have 4 entries");
    if (r.repetitions != static_cast<std::int64_t>(r.raw_dataset_times.size())) {
      throw Error(ErrorKind::format, "repetitions does not match raw_dataset_times");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("timing report: ") + e.what());
  }
}

std::vector<ComparisonRow> compare(const std::vector<TimingReport>& reports, std::size_t baseline) {
  if (reports.empty()) throw Error(ErrorKind::argument, "compare: no reports");
  if (baseline >= reports.size()) throw Error(ErrorKind::argument, "compare: baseline out of range");
  const double base = reports[baseline].per_image_mean;
  std::vector<ComparisonRow> rows;
  for (const TimingReport& r : reports) {
    rows.push_back({r.dataset_name, r.backend, r.per_image_mean, r.per_image_std,
                    r.per_image_mean > 0.0 ? base / r.per_image_mean : 0.0});
  }
  return rows;
}

std::string format_table(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %-8s %20s %9s\n", "dataset", "backend", "ms/image",
                "speedup");
  out << line;
  for (const ComparisonRow& r : rows) {
    char cell[64];
    std::snprintf(cell, sizeof cell, "%.2f+-%.2f", r.mean, r.std);
    std::snprintf(line, sizeof line, "%-20s %-8s %20s %9.1f\n", r.dataset.c_str(), r.backend.c_str(),
                  cell, r.speedup);
    out << line;
  }
  return out.str();
}

}  // namespace uedge
