#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "assoc/errors.hpp"
#include "assoc/state.hpp"
#include "assoc/topology.hpp"
#include "assoc/traffic_model.hpp"

namespace assoc {

// full: every candidate of every shared zone has a bias and one load weight
// per rate class. per_pair_scalar: one load weight per shared zone, shared by
// all candidates and classes, biases held at zero (57 parameters on the
// 19-cell network).
enum class TyingMode { full, per_pair_scalar };

inline std::string_view to_string(TyingMode m) { return m == TyingMode::full ? "full" : "per-pair-scalar"; }

inline TyingMode parse_tying(std::string_view s) {
  if (s == "full") return TyingMode::full;
  if (s == "per-pair-scalar") return TyingMode::per_pair_scalar;
  throw InvalidArgument("unknown tying mode '" + std::string(s) + "'");
}

// Weight vector theta, flattened zone by zone. In full mode a zone block is
// [bias, w_1 .. w_I] for each candidate in turn.
class PolicyParams {
 public:
  static PolicyParams zeros(const Topology& topo, TyingMode tying = TyingMode::full) {
    PolicyParams p;
    p.tying_ = tying;
    p.num_classes_ = topo.num_classes();
    std::size_t offset = 0;
    for (auto z : topo.shared_zone_ids()) {
      const auto k = topo.zones[z].candidates.size();
      const std::size_t size = tying == TyingMode::full ? k * static_cast<std::size_t>(1 + p.num_classes_) : 1;
      p.offsets_.push_back(offset);
      p.sizes_.push_back(size);
      p.candidates_.push_back(k);
      offset += size;
    }
    p.values_.assign(offset, 0.0);
    return p;
  }

  TyingMode tying() const { return tying_; }
  int num_classes() const { return num_classes_; }
  std::size_t size() const { return values_.size(); }
  std::size_t num_zones() const { return offsets_.size(); }
  std::size_t block_offset(std::size_t zone) const { return offsets_[zone]; }
  std::size_t block_size(std::size_t zone) const { return sizes_[zone]; }
  std::size_t num_candidates(std::size_t zone) const { return candidates_[zone]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> block(std::size_t zone) { return std::span<double>(values_).subspan(offsets_[zone], sizes_[zone]); }
  std::span<const double> block(std::size_t zone) const {
    return std::span<const double>(values_).subspan(offsets_[zone], sizes_[zone]);
  }

  // Effective theta_{c,0,Z}.
  double bias(std::size_t zone, std::size_t cand) const {
    if (tying_ == TyingMode::per_pair_scalar) return 0.0;
    return values_[full_index(zone, cand, 0)];
  }
  // Effective theta_{c,i,Z}, i >= 1.
  double load_weight(std::size_t zone, std::size_t cand, int rate_class) const {
    if (tying_ == TyingMode::per_pair_scalar) return values_[offsets_[zone]];
    return values_[full_index(zone, cand, rate_class)];
  }

  double& bias_ref(std::size_t zone, std::size_t cand) { return values_[full_index(zone, cand, 0)]; }
  double& load_weight_ref(std::size_t zone, std::size_t cand, int rate_class) {
    return values_[full_index(zone, cand, rate_class)];
  }

  bool same_shape(const PolicyParams& o) const {
    return tying_ == o.tying_ && num_classes_ == o.num_classes_ && sizes_ == o.sizes_ && candidates_ == o.candidates_;
  }

 private:
  std::size_t full_index(std::size_t zone, std::size_t cand, int coord) const {
    if (tying_ != TyingMode::full) throw InvalidArgument("per-coordinate access needs full tying");
    return offsets_[zone] + cand * static_cast<std::size_t>(1 + num_classes_) + static_cast<std::size_t>(coord);
  }

  TyingMode tying_ = TyingMode::full;
  int num_classes_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> candidates_;
  std::vector<double> values_;
};

struct ActionDistribution {
  std::vector<double> p;  // per candidate of the zone
};

namespace detail {

inline double candidate_score(const UserConfiguration& n, std::size_t zone, std::size_t cand, std::size_t cell,
                              const PolicyParams& params) {
  double x = params.bias(zone, cand);
  for (int i = 1; i <= params.num_classes(); ++i) x += params.load_weight(zone, cand, i) * n.class_total(cell, i);
  return x;
}

}  // namespace detail

// Softmax over candidate scores theta_{c,0} + sum_i theta_{c,i} T_{c,i}(n),
// written into `out` (one entry per candidate).
inline void action_probs_into(const UserConfiguration& n, std::size_t zone, const PolicyParams& params,
                              std::span<double> out) {
  const auto slots = n.layout().shared_slots(zone);
  double top = -INFINITY;
  for (std::size_t c = 0; c < slots.size(); ++c) {
    out[c] = detail::candidate_score(n, zone, c, n.layout().slot(slots[c]).cell, params);
    top = std::max(top, out[c]);
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < slots.size(); ++c) {
    out[c] = std::exp(out[c] - top);
    sum += out[c];
  }
  for (std::size_t c = 0; c < slots.size(); ++c) out[c] /= sum;
}

inline ActionDistribution action_probs(const UserConfiguration& n, std::size_t zone, const PolicyParams& params) {
  ActionDistribution d;
  d.p.resize(n.layout().shared_slots(zone).size());
  action_probs_into(n, zone, params, d.p);
  return d;
}

// d log p_action / d theta restricted to the zone's block (other blocks are 0).
inline void score_block_into(const UserConfiguration& n, std::size_t zone, std::size_t action,
                             const PolicyParams& params, std::span<double> out) {
  const auto slots = n.layout().shared_slots(zone);
  std::array<double, 16> small{};
  std::vector<double> large;
  std::span<double> p;
  if (slots.size() <= small.size()) {
    p = std::span<double>(small.data(), slots.size());
  } else {
    large.resize(slots.size());
    p = large;
  }
  action_probs_into(n, zone, params, p);
  const int classes = params.num_classes();
  if (params.tying() == TyingMode::per_pair_scalar) {
    double g = 0.0;
    for (std::size_t c = 0; c < slots.size(); ++c)
      g += ((c == action ? 1.0 : 0.0) - p[c]) * n.total(n.layout().slot(slots[c]).cell);
    out[0] = g;
    return;
  }
  for (std::size_t c = 0; c < slots.size(); ++c) {
    const double d = (c == action ? 1.0 : 0.0) - p[c];
    const auto cell = n.layout().slot(slots[c]).cell;
    const std::size_t base = c * static_cast<std::size_t>(1 + classes);
    out[base] = d;
    for (int i = 1; i <= classes; ++i) out[base + static_cast<std::size_t>(i)] = d * n.class_total(cell, i);
  }
}

inline std::vector<double> score(const UserConfiguration& n, std::size_t zone, std::size_t action,
                                 const PolicyParams& params) {
  if (action >= n.layout().shared_slots(zone).size()) throw InvalidArgument("action is not a candidate of the zone");
  std::vector<double> g(params.size(), 0.0);
  score_block_into(n, zone, action, params,
                   std::span<double>(g).subspan(params.block_offset(zone), params.block_size(zone)));
  return g;
}

enum class BaselineKind { best_peak_rate, best_data_rate, smallest_workload, shortest_queue };

inline constexpr BaselineKind kAllBaselines[] = {BaselineKind::best_peak_rate, BaselineKind::best_data_rate,
                                                 BaselineKind::smallest_workload, BaselineKind::shortest_queue};

inline std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::best_peak_rate: return "best-peak-rate";
    case BaselineKind::best_data_rate: return "best-data-rate";
    case BaselineKind::smallest_workload: return "smallest-workload";
    case BaselineKind::shortest_queue: return "shortest-queue";
  }
  return "?";
}

inline BaselineKind parse_baseline(std::string_view s) {
  for (auto k : kAllBaselines)
    if (to_string(k) == s) return k;
  throw InvalidArgument("unknown baseline policy '" + std::string(s) + "'");
}

// Closed-form weights of the four reference policies (full tying).
inline PolicyParams baseline_params(BaselineKind kind, double gamma, const Topology& topo, const TrafficSpec& traffic) {
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be > 0");
  auto params = PolicyParams::zeros(topo, TyingMode::full);
  const auto ids = topo.shared_zone_ids();
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& cands = topo.zones[ids[k]].candidates;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const double peak = topo.rate(cands[c].rate_class);
      if (kind == BaselineKind::best_peak_rate) params.bias_ref(k, c) = gamma * peak;
      for (int i = 1; i <= topo.num_classes(); ++i) {
        double w = 0.0;
        switch (kind) {
          case BaselineKind::best_peak_rate: break;
          case BaselineKind::best_data_rate: w = -gamma / peak; break;
          case BaselineKind::smallest_workload: w = -gamma * traffic.mean_file_size / topo.rate(i); break;
          case BaselineKind::shortest_queue: w = -gamma; break;
        }
        params.load_weight_ref(k, c, i) = w;
      }
    }
  }
  return params;
}

// ---- policies consumed by the simulator ----

template <class P>
concept AssociationPolicy = requires(const P& p, const UserConfiguration& n, std::size_t zone, std::span<double> out) {
  p.fill_action_probs(n, zone, out);
};

class SoftmaxPolicy {
 public:
  explicit SoftmaxPolicy(PolicyParams params) : params_(std::move(params)) {}
  void fill_action_probs(const UserConfiguration& n, std::size_t zone, std::span<double> out) const {
    action_probs_into(n, zone, params_, out);
  }
  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
};

// State-independent attachment with fixed probabilities.
class StaticSplitPolicy {
 public:
  explicit StaticSplitPolicy(AssociationSplit split) : split_(std::move(split)) {}
  void fill_action_probs(const UserConfiguration&, std::size_t zone, std::span<double> out) const {
    std::copy(split_.shares[zone].begin(), split_.shares[zone].end(), out.begin());
  }

 private:
  AssociationSplit split_;
};

// ---- structured text ----

inline nlohmann::json params_to_json(const PolicyParams& p) {
  nlohmann::json blocks = nlohmann::json::array();
  for (std::size_t z = 0; z < p.num_zones(); ++z) {
    auto b = p.block(z);
    blocks.push_back(std::vector<double>(b.begin(), b.end()));
  }
  nlohmann::json j = {{"tying", to_string(p.tying())}, {"num_classes", p.num_classes()}, {"blocks", blocks}};
  if (p.tying() == TyingMode::per_pair_scalar)
    j["note"] = "reconstructed parameterization: one load weight per shared zone, zero biases";
  return j;
}

inline PolicyParams params_from_json(const Topology& topo, const nlohmann::json& j) {
  auto p = PolicyParams::zeros(topo, parse_tying(j.at("tying").get<std::string>()));
  if (j.at("num_classes").get<int>() != p.num_classes()) throw InvalidArgument("parameter file rate-class mismatch");
  const auto& blocks = j.at("blocks");
  if (blocks.size() != p.num_zones()) throw InvalidArgument("parameter file zone count mismatch");
  for (std::size_t z = 0; z < p.num_zones(); ++z) {
    const auto vals = blocks[z].get<std::vector<double>>();
    if (vals.size() != p.block_size(z)) throw InvalidArgument("parameter block " + std::to_string(z) + " size mismatch");
    for (double v : vals)
      if (!std::isfinite(v)) throw InvalidArgument("parameter values must be finite");
    std::copy(vals.begin(), vals.end(), p.block(z).begin());
  }
  return p;
}

}  // namespace assoc
