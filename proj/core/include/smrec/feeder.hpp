#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace smrec {

struct FeederBranch {
  std::string parent;
  std::string child;
  double resistance_pu = 0.0;
  double reactance_pu = 0.0;
};

// Radial network rooted at the substation.  The topology must be a tree:
// every non-root node has exactly one parent and is reachable from the
// root.  Branches keep their declaration order, which doubles as the
// canonical branch ordering for state estimation; node index 0 is the root
// and the child of branch b has node index b + 1 after normalization.
class FeederModel {
 public:
  FeederModel(std::string root, std::vector<FeederBranch> branches,
              double substation_voltage_sq, double base_power_kva = 1000.0,
              double base_voltage_kv = 12.47);

  const std::string& root() const { return node_names_[0]; }
  double substation_voltage_sq() const { return u0_; }
  double base_power_kva() const { return base_power_kva_; }
  double base_voltage_kv() const { return base_voltage_kv_; }

  int node_count() const { return static_cast<int>(node_names_.size()); }
  int branch_count() const { return static_cast<int>(branches_.size()); }

  const std::vector<std::string>& node_names() const { return node_names_; }
  bool has_node(const std::string& name) const;
  int node_index(const std::string& name) const;  // throws on unknown node

  const std::vector<FeederBranch>& branches() const { return branches_; }
  const FeederBranch& branch(int b) const { return branches_[static_cast<std::size_t>(b)]; }

  int parent_index(int node) const { return parent_[static_cast<std::size_t>(node)]; }  // -1 for root
  int branch_of_node(int node) const;  // branch whose child is `node`; throws for root
  const std::vector<int>& child_branches(int node) const {
    return child_branches_[static_cast<std::size_t>(node)];
  }

  // branch indices on the path root -> node, in root-first order
  const std::vector<int>& root_path(int node) const { return paths_[static_cast<std::size_t>(node)]; }
  int depth(int node) const { return static_cast<int>(paths_[static_cast<std::size_t>(node)].size()); }

  // cumulative impedance from the root down to `node`
  double path_resistance(int node) const { return rsum_[static_cast<std::size_t>(node)]; }
  double path_reactance(int node) const { return xsum_[static_cast<std::size_t>(node)]; }

 private:
  std::vector<std::string> node_names_;  // root first, then branch children in order
  std::unordered_map<std::string, int> index_;
  std::vector<FeederBranch> branches_;  // reordered so branch b ends at node b+1
  std::vector<int> parent_;
  std::vector<std::vector<int>> child_branches_;
  std::vector<std::vector<int>> paths_;
  std::vector<double> rsum_, xsum_;
  double u0_;
  double base_power_kva_;
  double base_voltage_kv_;
};

// Text schema (one record per line, '#' starts a comment):
//   schema smrec-feeder-v1
//   u0 <substation voltage magnitude squared, pu^2>
//   sbase_kva <power base>
//   vbase_kv <voltage base>
//   root <node id>
//   branch <parent> <child> <r_pu> <x_pu>
// u0, sbase_kva, vbase_kv, root and at least one branch are required.
FeederModel parse_feeder_text(std::istream& in, const std::string& origin);
FeederModel load_feeder_file(const std::string& path);
std::string feeder_to_text(const FeederModel& feeder);
void write_feeder_file(const FeederModel& feeder, const std::string& path);

}  // namespace smrec
