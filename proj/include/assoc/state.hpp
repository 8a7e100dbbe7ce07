#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "assoc/errors.hpp"
#include "assoc/topology.hpp"

namespace assoc {

// A population counter of the MDP state: exclusive users of class (s, i), or
// users of one shared zone attached to one of its candidates.
struct Slot {
  std::size_t cell = 0;
  int rate_class = 1;
  double rate = 0.0;
  std::optional<std::size_t> shared_ordinal;  // set for shared-zone slots
};

// Maps a topology onto flat slot indices. Built once, shared by every state.
class SlotLayout {
 public:
  explicit SlotLayout(const Topology& topo) : num_cells_(topo.num_cells), num_classes_(topo.num_classes()) {
    if (!validate(topo).empty()) throw InvalidArgument("topology fails validation");
    cell_slots_.resize(num_cells_);
    exclusive_slot_.assign(num_cells_ * static_cast<std::size_t>(num_classes_), npos);
    for (std::size_t z = 0; z < topo.zones.size(); ++z) {
      const auto& zone = topo.zones[z];
      if (zone.kind == ZoneKind::exclusive) {
        const auto& c = zone.candidates.front();
        auto& idx = exclusive_slot_[c.cell * static_cast<std::size_t>(num_classes_) + (c.rate_class - 1)];
        if (idx == npos) idx = add_slot({c.cell, c.rate_class, topo.rate(c.rate_class), std::nullopt});
        zone_slots_.push_back({idx});
      } else {
        const std::size_t ordinal = shared_zone_ids_.size();
        shared_zone_ids_.push_back(z);
        std::vector<std::size_t> slots;
        for (const auto& c : zone.candidates)
          slots.push_back(add_slot({c.cell, c.rate_class, topo.rate(c.rate_class), ordinal}));
        shared_slots_.push_back(slots);
        zone_slots_.push_back(std::move(slots));
      }
    }
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t num_cells() const { return num_cells_; }
  int num_classes() const { return num_classes_; }
  std::size_t num_slots() const { return slots_.size(); }
  std::size_t num_shared_zones() const { return shared_zone_ids_.size(); }
  const Slot& slot(std::size_t k) const { return slots_[k]; }
  std::span<const Slot> slots() const { return slots_; }
  std::span<const std::size_t> cell_slots(std::size_t cell) const { return cell_slots_[cell]; }
  // Slot per candidate of a shared zone, in candidate order.
  std::span<const std::size_t> shared_slots(std::size_t ordinal) const { return shared_slots_[ordinal]; }
  std::size_t shared_zone_id(std::size_t ordinal) const { return shared_zone_ids_[ordinal]; }
  // Slots fed by topology zone z: one for exclusive zones, one per candidate otherwise.
  std::span<const std::size_t> zone_slots(std::size_t z) const { return zone_slots_[z]; }
  std::size_t exclusive_slot(std::size_t cell, int rate_class) const {
    return exclusive_slot_[cell * static_cast<std::size_t>(num_classes_) + (rate_class - 1)];
  }

 private:
  std::size_t add_slot(Slot s) {
    cell_slots_[s.cell].push_back(slots_.size());
    slots_.push_back(s);
    return slots_.size() - 1;
  }

  std::size_t num_cells_;
  int num_classes_;
  std::vector<Slot> slots_;
  std::vector<std::vector<std::size_t>> cell_slots_;
  std::vector<std::vector<std::size_t>> shared_slots_;
  std::vector<std::vector<std::size_t>> zone_slots_;
  std::vector<std::size_t> shared_zone_ids_;
  std::vector<std::size_t> exclusive_slot_;
};

// The user configuration n: a count per slot. Per-cell totals T_s, per-class
// totals T_{s,i} and the rate sum of each cell are cached and kept in step by
// add()/remove().
class UserConfiguration {
 public:
  explicit UserConfiguration(std::shared_ptr<const SlotLayout> layout)
      : layout_(std::move(layout)),
        counts_(layout_->num_slots(), 0),
        cell_total_(layout_->num_cells(), 0),
        class_total_(layout_->num_cells() * static_cast<std::size_t>(layout_->num_classes()), 0),
        cell_rate_sum_(layout_->num_cells(), 0.0) {}

  UserConfiguration(std::shared_ptr<const SlotLayout> layout, std::span<const int> counts)
      : UserConfiguration(std::move(layout)) {
    if (counts.size() != counts_.size()) throw InvalidArgument("count vector does not match the slot layout");
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] < 0) throw InvalidArgument("negative user count");
      for (int u = 0; u < counts[k]; ++u) add(k);
    }
  }

  const SlotLayout& layout() const { return *layout_; }
  const std::shared_ptr<const SlotLayout>& layout_ptr() const { return layout_; }

  int count(std::size_t slot) const { return counts_[slot]; }
  std::span<const int> counts() const { return counts_; }
  int total(std::size_t cell) const { return cell_total_[cell]; }
  int class_total(std::size_t cell, int rate_class) const {
    return class_total_[cell * static_cast<std::size_t>(layout_->num_classes()) + (rate_class - 1)];
  }
  // sum over users at the cell of their peak rates
  double rate_sum(std::size_t cell) const { return cell_rate_sum_[cell]; }
  long total_users() const { return total_users_; }

  void add(std::size_t slot) {
    const auto& s = layout_->slot(slot);
    ++counts_[slot];
    ++cell_total_[s.cell];
    ++class_total_[s.cell * static_cast<std::size_t>(layout_->num_classes()) + (s.rate_class - 1)];
    cell_rate_sum_[s.cell] += s.rate;
    ++total_users_;
  }

  void remove(std::size_t slot) {
    if (counts_[slot] == 0) throw InvalidArgument("departure from an empty slot");
    const auto& s = layout_->slot(slot);
    --counts_[slot];
    --cell_total_[s.cell];
    --class_total_[s.cell * static_cast<std::size_t>(layout_->num_classes()) + (s.rate_class - 1)];
    --total_users_;
    // recompute rather than subtract so an emptied cell is exactly zero
    if (cell_total_[s.cell] == 0) {
      cell_rate_sum_[s.cell] = 0.0;
    } else {
      cell_rate_sum_[s.cell] -= s.rate;
    }
  }

  friend bool operator==(const UserConfiguration& a, const UserConfiguration& b) { return a.counts_ == b.counts_; }

 private:
  std::shared_ptr<const SlotLayout> layout_;
  std::vector<int> counts_;
  std::vector<int> cell_total_;
  std::vector<int> class_total_;
  std::vector<double> cell_rate_sum_;
  long total_users_ = 0;
};

}  // namespace assoc
