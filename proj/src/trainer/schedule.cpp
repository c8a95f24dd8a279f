#include "imanip/trainer/schedule.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "imanip/errors.hpp"
#include "imanip/world/skillworld.hpp"

namespace imanip::trainer {

Notation parse_notation(const std::string& text) {
  static const std::regex re(R"(B(\d{1,4})-(\d{1,4})N(\d{1,4}))");
  std::smatch m;
  if (!std::regex_match(text, m, re)) {
    throw ParseError("schedule '" + text + "' does not match B<n>-<k>N<m>");
  }
  Notation n{std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3])};
  if (n.n < 1) throw ParseError("schedule '" + text + "' needs at least one base skill");
  if (n.k > 0 && n.m < 1) throw ParseError("schedule '" + text + "' has steps without skills");
  return n;
}

std::string format_notation(const Notation& n) {
  return "B" + std::to_string(n.n) + "-" + std::to_string(n.k) + "N" + std::to_string(n.m);
}

FreezePolicy parse_freeze(const std::string& text) {
  if (text == "none") return FreezePolicy::none;
  if (text == "encoder") return FreezePolicy::encoder;
  if (text == "epio") return FreezePolicy::epio;
  if (text == "decoder") return FreezePolicy::decoder;
  if (text == "encoder+epio") return FreezePolicy::encoder_epio;
  throw ConfigError("unknown freeze policy '" + text + "' (none, encoder, epio, decoder, encoder+epio)");
}

const char* freeze_name(FreezePolicy f) {
  switch (f) {
    case FreezePolicy::none: return "none";
    case FreezePolicy::encoder: return "encoder";
    case FreezePolicy::epio: return "epio";
    case FreezePolicy::decoder: return "decoder";
    case FreezePolicy::encoder_epio: return "encoder+epio";
  }
  return "?";
}

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + text + "' (sgd, adam)");
}

const char* optimizer_name(OptimizerKind o) { return o == OptimizerKind::sgd ? "sgd" : "adam"; }

Notation Schedule::notation() const {
  Notation n;
  n.n = static_cast<int>(base.size());
  n.k = static_cast<int>(steps.size());
  n.m = steps.empty() ? 1 : static_cast<int>(steps.front().size());
  return n;
}

void Schedule::validate() const {
  if (base.empty()) throw ConfigError("schedule has no base skills");
  std::set<int> seen;
  auto add = [&](int s) {
    if (s < 0 || s >= static_cast<int>(world::catalog().size())) {
      throw ConfigError("skill " + std::to_string(s) + " is not in the catalog");
    }
    if (!seen.insert(s).second) throw ConfigError("skill " + std::to_string(s) + " appears twice in the schedule");
  };
  for (int s : base) add(s);
  for (const auto& st : steps) {
    if (st.empty()) throw ConfigError("schedule step without skills");
    for (int s : st) add(s);
  }
  if (base_iterations < 0 || step_iterations < 0) throw ConfigError("iteration budgets must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lambda_dis >= 0.0)) throw ConfigError("lambda_dis must be non-negative");
}

Schedule bind_schedule(const Notation& n, const Schedule& defaults) {
  const int available = static_cast<int>(world::catalog().size());
  const long need = static_cast<long>(n.n) + static_cast<long>(n.k) * n.m;
  if (need > available) {
    throw ParseError("schedule " + format_notation(n) + " needs " + std::to_string(need) + " skills but the catalog has " +
                     std::to_string(available));
  }
  Schedule s = defaults;
  s.base.clear();
  s.steps.clear();
  int next = 0;
  for (int i = 0; i < n.n; ++i) s.base.push_back(next++);
  for (int j = 0; j < n.k; ++j) {
    std::vector<int> st;
    for (int i = 0; i < n.m; ++i) st.push_back(next++);
    s.steps.push_back(st);
  }
  return s;
}

Schedule parse_schedule(const std::string& text, const Schedule& defaults) {
  return bind_schedule(parse_notation(text), defaults);
}

}  // namespace imanip::trainer
