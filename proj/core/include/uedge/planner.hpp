#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uedge {

// Deployment timings in milliseconds: network data transmission time,
// edge per-image prediction time, cloud per-image prediction time.
struct DeployInputs {
  double ndtt = 0.0;
  double etpt = 0.0;
  double ctpt = 0.0;

  void validate() const;
};

enum class Target { edge, cloud };
std::string_view to_string(Target t) noexcept;

// lim n->inf of n*etpt / (ndtt + n*ctpt) = etpt / ctpt.
double suctet_limit(const DeployInputs& d);

// Total time to predict n images: n*etpt on the edge, ndtt + n*ctpt in the
// cloud.
double total_time(const DeployInputs& d, std::int64_t n, Target target);

// Largest n with n*etpt < ndtt + n*ctpt (never below 0), or nullopt when
// etpt <= ctpt and the edge is faster for every n.
std::optional<std::int64_t> break_even_n(const DeployInputs& d);

// Strict inequality; ties go to the cloud.
Target preferred_target(const DeployInputs& d, std::int64_t n);

struct Recommendation {
  std::int64_t n = 0;
  double edge_ms = 0.0;
  double cloud_ms = 0.0;
  Target target = Target::cloud;
};

struct BreakEvenReport {
  DeployInputs inputs;
  double asymptotic_speedup = 0.0;
  std::optional<std::int64_t> break_even_n;
  std::vector<Recommendation> recommendations;

  std::string regime() const;
};

BreakEvenReport plan(const DeployInputs& d, const std::vector<std::int64_t>& candidate_n);

}  // namespace uedge
