#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imanip/memory/replay_buffer.hpp"

namespace imanip::trainer {

// n base skills, then k steps of m new skills.
struct Notation {
  int n = 0, k = 0, m = 0;
  bool operator==(const Notation&) const = default;
};
Notation parse_notation(const std::string& text);  // ParseError on malformed text
std::string format_notation(const Notation& n);

enum class FreezePolicy { none, encoder, epio, decoder, encoder_epio };
FreezePolicy parse_freeze(const std::string& text);  // ConfigError
const char* freeze_name(FreezePolicy f);

enum class OptimizerKind { sgd, adam };
OptimizerKind parse_optimizer(const std::string& text);
const char* optimizer_name(OptimizerKind o);

struct Schedule {
  std::vector<int> base;
  std::vector<std::vector<int>> steps;
  int base_iterations = 1500;
  int step_iterations = 600;
  int batch_size = 8;
  double lr = 0.05;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lambda_dis = 0.01;
  std::size_t replay_k = 2;
  memory::Strategy strategy = memory::Strategy::farthest_entropy;
  FreezePolicy freeze = FreezePolicy::encoder_epio;
  std::uint64_t seed = 0;

  Notation notation() const;
  // Disjoint skill lists, catalog membership, positive budgets.
  void validate() const;
};

// Assign catalog skills in fixed order; throws ParseError when n + k·m exceeds
// the catalog.
Schedule bind_schedule(const Notation& n, const Schedule& defaults = {});
Schedule parse_schedule(const std::string& text, const Schedule& defaults = {});

}  // namespace imanip::trainer
