#include "uedge/planner.hpp"

#include <cmath>
#include <limits>

#include "uedge/error.hpp"

namespace uedge {

void DeployInputs::validate() const {
  if (!std::isfinite(ndtt) || !std::isfinite(etpt) || !std::isfinite(ctpt)) {
    throw Error(ErrorKind::numeric, "deployment timings must be finite");
  }
  if (ndtt < 0.0) throw Error(ErrorKind::argument, "ndtt must be >= 0");
  if (etpt <= 0.0) throw Error(ErrorKind::argument, "etpt must be > 0");
  if (ctpt <= 0.0) throw Error(ErrorKind::numeric, "ctpt must be > 0");
}

std::string_view to_string(Target t) noexcept { return t == Target::edge ? "edge" : "cloud"; }

double suctet_limit(const DeployInputs& d) {
  d.validate();
  return d.etpt / d.ctpt;
}

double total_time(const DeployInputs& d, std::int64_t n, Target target) {
  if (n < 0) throw Error(ErrorKind::argument, "n must be >= 0");
  const auto count = static_cast<double>(n);
  return target == Target::edge ? count * d.etpt : d.ndtt + count * d.ctpt;
}

Target preferred_target(const DeployInputs& d, std::int64_t n) {
  return total_time(d, n, Target::edge) < total_time(d, n, Target::cloud) ? Target::edge
                                                                          : Target::cloud;
}

std::optional<std::int64_t> break_even_n(const DeployInputs& d) {
  d.validate();
  if (d.etpt <= d.ctpt) return std::nullopt;
  const double limit = d.ndtt / (d.etpt - d.ctpt);
  if (limit > 9.0e15) throw Error(ErrorKind::numeric, "break-even count exceeds integer range");
  // Largest integer strictly below the limit, then settled against the
  // total-time comparison itself so both agree under floating point.
  auto n = static_cast<std::int64_t>(std::ceil(limit)) - 1;
  auto edge_wins = [&d](std::int64_t k) { return preferred_target(d, k) == Target::edge; };
  while (edge_wins(n + 1)) ++n;
  while (n >= 0 && !edge_wins(n)) --n;
  return std::max<std::int64_t>(n, 0);
}

std::string BreakEvenReport::regime() const {
  if (!break_even_n) return "edge faster for every dataset size";
  if (*break_even_n == 0) return "cloud never slower";
  return "edge faster up to n = " + std::to_string(*break_even_n) + ", cloud faster beyond";
}

BreakEvenReport plan(const DeployInputs& d, const std::vector<std::int64_t>& candidate_n) {
  BreakEvenReport r;
  r.inputs = d;
  r.asymptotic_speedup = suctet_limit(d);
  r.break_even_n = break_even_n(d);
  for (std::int64_t n : candidate_n) {
    r.recommendations.push_back({n, total_time(d, n, Target::edge), total_time(d, n, Target::cloud),
                                 preferred_target(d, n)});
  }
  return r;
}

}  // namespace uedge
