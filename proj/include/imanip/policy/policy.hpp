#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imanip/grad/ops.hpp"
#include "imanip/grad/params.hpp"
#include "imanip/world/skillworld.hpp"

namespace imanip::policy {

struct PolicyConfig {
  int grid = 8;
  int rot_bins = 12;
  int patch = 2;         // voxel patch edge; tokens = (grid / patch)³
  int width = 64;        // token width d
  int latents = 32;
  int layers = 4;
  int prompt_len = 16;
  int d_new = 8;
  int mlp_ratio = 2;
  int head_hidden = 64;
  int trans_hidden = 16;
  int max_tokens = world::kMaxInstructionTokens;
  int vocab = 0;          // 0 → instruction vocabulary size
  double prompt_init_std = 0.02;
  double new_key_init_std = 0.02;
  bool per_skill_base_prompts = false;
  std::uint64_t seed = 0;

  // Throws DimensionError/ConfigError on inconsistent sizes.
  void validate() const;
  int voxel_tokens() const;
  int cells() const { return grid * grid * grid; }
  int vocab_size() const;

  // Sizes of the four decoder heads as (trans, rot, open, collide) element counts.
  struct HeadShapes {
    std::size_t trans, rot_axes, rot_bins, open, collide;
  };
  HeadShapes head_shapes() const;
};

// Scale-model defaults for experiments at full paper resolution (shape checks only).
PolicyConfig full_scale_config();

struct QValues {
  grad::Tensor trans;    // [G³]
  grad::Tensor rot;      // [3, R]
  grad::Tensor open;     // [2]
  grad::Tensor collide;  // [2]
};

struct ForwardResult {
  QValues q;
  grad::Tensor features;  // pooled decoder-head input [2d]
};

struct ForwardOptions {
  // Prompt blocks to leave out of the input sequence (by block index).
  std::vector<bool> masked_prompts;
};

// Step registration: which skills were learned in an extension step and which
// prompt/weight blocks they own.
struct Registration {
  std::vector<int> skills;
  int prompt_block = 0;
  int weight_block = 0;
};

class PolicyModel {
 public:
  explicit PolicyModel(PolicyConfig config);

  const PolicyConfig& config() const { return config_; }
  grad::ParameterSet& params() { return params_; }
  const grad::ParameterSet& params() const { return params_; }

  // Base step: register the jointly trained skills (one shared prompt block,
  // or one block per skill when configured).
  void register_base(const std::vector<int>& skills);

  // Append zero W_Q / small W_K column blocks to every self-attention layer
  // plus a new prompt block, and freeze every pre-existing encoder, attention
  // and prompt parameter. Decoder heads remain trainable.
  void extend_for_skill(int skill_id);
  void extend_for_skills(const std::vector<int>& skills);

  ForwardResult forward(const world::VoxelObservation& obs, const grad::BoundParams& p,
                        const ForwardOptions& opts = {}) const;
  // Inference with the stored parameters (no tape).
  ForwardResult infer(const world::VoxelObservation& obs, const ForwardOptions& opts = {}) const;

  int prompt_blocks() const { return prompt_blocks_; }
  int weight_blocks() const { return weight_blocks_; }
  // d′ of every self-attention layer.
  int key_width() const;
  const std::vector<Registration>& registry() const { return registry_; }
  bool is_registered(int skill_id) const;

  static std::string prompt_name(int block);
  static std::string wq_name(int layer, int block);
  static std::string wk_name(int layer, int block);

  // Restore bookkeeping (checkpoint loading).
  void restore(grad::ParameterSet params, std::vector<Registration> registry, int prompt_blocks, int weight_blocks);

 private:
  void init_parameters();
  int block_width(int block) const { return block == 0 ? config_.width : config_.d_new; }

  PolicyConfig config_;
  grad::ParameterSet params_;
  std::vector<Registration> registry_;
  int prompt_blocks_ = 0;
  int weight_blocks_ = 1;
};

// Argmax per head; ties resolve to the lowest index.
world::KeyframeAction predict_action(const QValues& q);

// Normalized Σ|∂L_act/∂prompt_b| per prompt block over a batch.
std::vector<double> prompt_attribution(const PolicyModel& model, const std::vector<world::KeyframeSample>& batch);

// Parameter count report used for the freezing ablation.
struct ParamCounts {
  std::size_t total = 0;
  std::size_t trainable = 0;
};
ParamCounts count_parameters(const PolicyModel& model);

}  // namespace imanip::policy
