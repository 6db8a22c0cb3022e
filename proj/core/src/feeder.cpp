#include "smrec/feeder.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace smrec {

FeederModel::FeederModel(std::string root, std::vector<FeederBranch> branches,
                         double substation_voltage_sq, double base_power_kva,
                         double base_voltage_kv)
    : u0_(substation_voltage_sq),
      base_power_kva_(base_power_kva),
      base_voltage_kv_(base_voltage_kv) {
  if (root.empty()) throw std::invalid_argument("feeder: empty root id");
  if (branches.empty()) throw std::invalid_argument("feeder: no branches");
  if (!(u0_ > 0.0) || !std::isfinite(u0_)) throw std::invalid_argument("feeder: u0 must be > 0");
  if (!(base_power_kva_ > 0.0) || !(base_voltage_kv_ > 0.0)) {
    throw std::invalid_argument("feeder: per-unit bases must be > 0");
  }

  for (const auto& b : branches) {
    if (b.parent.empty() || b.child.empty()) throw std::invalid_argument("feeder: branch with empty node id");
    if (!std::isfinite(b.resistance_pu) || b.resistance_pu < 0.0) {
      throw std::invalid_argument("feeder: branch " + b.parent + "->" + b.child + " has invalid resistance");
    }
    if (!std::isfinite(b.reactance_pu)) {
      throw std::invalid_argument("feeder: branch " + b.parent + "->" + b.child + " has invalid reactance");
    }
    if (b.child == root) {
      throw std::invalid_argument("feeder: root '" + root + "' cannot be a branch child");
    }
    if (b.child == b.parent) {
      throw std::invalid_argument("feeder: self-loop at '" + b.child + "'");
    }
  }

  // unique parent per child
  std::unordered_map<std::string, std::vector<std::size_t>> by_parent;
  std::unordered_set<std::string> children_seen;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (!children_seen.insert(branches[i].child).second) {
      throw std::invalid_argument("feeder: node '" + branches[i].child +
                                  "' has more than one parent (not a tree)");
    }
    by_parent[branches[i].parent].push_back(i);
  }

  // breadth-first walk from the root, keeping declaration order per parent;
  // this normalizes branches so that branch b ends at node index b + 1
  node_names_.push_back(root);
  std::unordered_map<std::string, int> index{{root, 0}};
  std::deque<std::string> queue{root};
  while (!queue.empty()) {
    const std::string at = queue.front();
    queue.pop_front();
    const auto it = by_parent.find(at);
    if (it == by_parent.end()) continue;
    for (std::size_t bi : it->second) {
      const FeederBranch& b = branches[bi];
      branches_.push_back(b);
      index[b.child] = static_cast<int>(node_names_.size());
      node_names_.push_back(b.child);
      queue.push_back(b.child);
    }
  }
  if (branches_.size() != branches.size()) {
    // some branch never became reachable from the root
    for (const auto& b : branches) {
      if (index.find(b.child) == index.end()) {
        throw std::invalid_argument("feeder: node '" + b.child +
                                    "' is not connected to the root (cycle or disconnected component)");
      }
    }
    throw std::invalid_argument("feeder: topology is not a tree");
  }

  index_ = std::move(index);
  parent_.assign(node_names_.size(), -1);
  child_branches_.assign(node_names_.size(), {});
  paths_.assign(node_names_.size(), {});
  rsum_.assign(node_names_.size(), 0.0);
  xsum_.assign(node_names_.size(), 0.0);
  for (int b = 0; b < branch_count(); ++b) {
    const int p = index_.at(branches_[static_cast<std::size_t>(b)].parent);
    const int c = b + 1;
    parent_[static_cast<std::size_t>(c)] = p;
    child_branches_[static_cast<std::size_t>(p)].push_back(b);
    paths_[static_cast<std::size_t>(c)] = paths_[static_cast<std::size_t>(p)];
    paths_[static_cast<std::size_t>(c)].push_back(b);
    rsum_[static_cast<std::size_t>(c)] =
        rsum_[static_cast<std::size_t>(p)] + branches_[static_cast<std::size_t>(b)].resistance_pu;
    xsum_[static_cast<std::size_t>(c)] =
        xsum_[static_cast<std::size_t>(p)] + branches_[static_cast<std::size_t>(b)].reactance_pu;
  }
}

bool FeederModel::has_node(const std::string& name) const {
  return index_.find(name) != index_.end();
}

int FeederModel::node_index(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("feeder: unknown node '" + name + "'");
  return it->second;
}

int FeederModel::branch_of_node(int node) const {
  if (node <= 0 || node >= node_count()) {
    throw std::invalid_argument("feeder: node index " + std::to_string(node) + " has no parent branch");
  }
  return node - 1;
}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    if (!tok.empty() && tok[0] == '#') break;
    out.push_back(tok);
  }
  return out;
}

double parse_double(const std::string& tok, const std::string& origin, int lineno) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size()) {
    throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
  }
  return v;
}

}  // namespace

FeederModel parse_feeder_text(std::istream& in, const std::string& origin) {
  std::string line;
  int lineno = 0;
  bool have_u0 = false, have_sbase = false, have_vbase = false;
  double u0 = 0.0, sbase = 0.0, vbase = 0.0;
  std::string root;
  std::vector<FeederBranch> branches;

  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    const std::string& key = toks[0];
    auto fail = [&](const std::string& msg) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (key == "schema") {
      if (toks.size() != 2 || toks[1] != "smrec-feeder-v1") fail("unsupported feeder schema");
    } else if (key == "u0") {
      if (toks.size() != 2) fail("u0 expects one value");
      if (have_u0) fail("duplicate u0");
      u0 = parse_double(toks[1], origin, lineno);
      have_u0 = true;
    } else if (key == "sbase_kva") {
      if (toks.size() != 2) fail("sbase_kva expects one value");
      sbase = parse_double(toks[1], origin, lineno);
      have_sbase = true;
    } else if (key == "vbase_kv") {
      if (toks.size() != 2) fail("vbase_kv expects one value");
      vbase = parse_double(toks[1], origin, lineno);
      have_vbase = true;
    } else if (key == "root") {
      if (toks.size() != 2) fail("root expects one node id");
      if (!root.empty()) fail("duplicate root");
      root = toks[1];
    } else if (key == "branch") {
      if (toks.size() != 5) fail("branch expects: parent child r_pu x_pu");
      branches.push_back(FeederBranch{toks[1], toks[2], parse_double(toks[3], origin, lineno),
                                      parse_double(toks[4], origin, lineno)});
    } else {
      fail("unknown record '" + key + "'");
    }
  }
  if (!have_u0) throw std::invalid_argument(origin + ": missing u0 record");
  if (!have_sbase || !have_vbase) {
    throw std::invalid_argument(origin + ": per-unit bases sbase_kva/vbase_kv must be declared");
  }
  if (root.empty()) throw std::invalid_argument(origin + ": missing root record");
  if (branches.empty()) throw std::invalid_argument(origin + ": no branch records");
  try {
    return FeederModel(root, std::move(branches), u0, sbase, vbase);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(origin + ": " + e.what());
  }
}

FeederModel load_feeder_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open feeder file '" + path + "'");
  return parse_feeder_text(in, path);
}

std::string feeder_to_text(const FeederModel& feeder) {
  std::ostringstream out;
  out.precision(17);
  out << "schema smrec-feeder-v1\n";
  out << "u0 " << feeder.substation_voltage_sq() << "\n";
  out << "sbase_kva " << feeder.base_power_kva() << "\n";
  out << "vbase_kv " << feeder.base_voltage_kv() << "\n";
  out << "root " << feeder.root() << "\n";
  for (const auto& b : feeder.branches()) {
    out << "branch " << b.parent << " " << b.child << " " << b.resistance_pu << " "
        << b.reactance_pu << "\n";
  }
  return out.str();
}

void write_feeder_file(const FeederModel& feeder, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write feeder file '" + path + "'");
  out << feeder_to_text(feeder);
}

}  // namespace smrec
