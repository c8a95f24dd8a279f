#include "imanip/policy/policy.hpp"

#include <cmath>
#include <numbers>

#include "imanip/errors.hpp"
#include "imanip/losses/losses.hpp"
#include "imanip/rng.hpp"

namespace imanip::policy {

using grad::Tensor;
namespace g = imanip::grad;

namespace {

// Dilated axis stencil: distances 1, 2 and 4 along each axis.
constexpr int kNeighbors = 18;
constexpr int kNeighborOffsets[kNeighbors][3] = {
    {1, 0, 0},  {-1, 0, 0}, {0, 1, 0},  {0, -1, 0}, {0, 0, 1},  {0, 0, -1}, {2, 0, 0},  {-2, 0, 0}, {0, 2, 0},
    {0, -2, 0}, {0, 0, 2},  {0, 0, -2}, {4, 0, 0},  {-4, 0, 0}, {0, 4, 0},  {0, -4, 0}, {0, 0, 4},  {0, 0, -4}};

std::size_t u(int v) { return static_cast<std::size_t>(v); }

Tensor normal_tensor(g::Shape shape, double stddev, SplitMix64& rng) {
  std::vector<double> data(g::shape_numel(shape));
  for (auto& v : data) v = stddev * rng.normal();
  return Tensor(std::move(shape), std::move(data));
}

int skip_feature_count(const PolicyConfig& c) {
  return (1 + kNeighbors) * world::kChannels + c.grid;
}

// Patch-flattened voxels [tokens, patch³·C], sparse.
g::SparseRows patch_matrix(const world::VoxelObservation& obs, const PolicyConfig& c) {
  const int n = c.grid / c.patch;
  const int cols = c.patch * c.patch * c.patch * world::kChannels;
  const auto v = obs.voxels.data();
  g::SparseRows f;
  f.rows = u(n * n * n);
  f.cols = u(cols);
  f.row_begin.push_back(0);
  for (int px = 0; px < n; ++px) {
    for (int py = 0; py < n; ++py) {
      for (int pz = 0; pz < n; ++pz) {
        int local = 0;
        for (int ix = 0; ix < c.patch; ++ix) {
          for (int iy = 0; iy < c.patch; ++iy) {
            for (int iz = 0; iz < c.patch; ++iz, ++local) {
              const world::Cell cell{px * c.patch + ix, py * c.patch + iy, pz * c.patch + iz};
              const std::size_t base = u(world::cell_index(cell, c.grid)) * world::kChannels;
              for (int ch = 0; ch < world::kChannels; ++ch) {
                const double val = v[base + u(ch)];
                if (val != 0.0) {
                  f.col.push_back(u(local * world::kChannels + ch));
                  f.value.push_back(val);
                }
              }
            }
          }
        }
        f.row_begin.push_back(f.col.size());
      }
    }
  }
  return f;
}

// Per-voxel skip features [G³, 19C + G]: own channels, the stencil
// neighbours' channels, and the one-hot height. Table-plane position is left
// out on purpose: with it the head can memorize scenes by location.
g::SparseRows skip_matrix(const world::VoxelObservation& obs, const PolicyConfig& c) {
  const int gsz = c.grid;
  const auto v = obs.voxels.data();
  g::SparseRows f;
  f.rows = u(c.cells());
  f.cols = u(skip_feature_count(c));
  f.row_begin.reserve(f.rows + 1);
  f.row_begin.push_back(0);
  for (int idx = 0; idx < c.cells(); ++idx) {
    const world::Cell cell = world::index_cell(idx, gsz);
    auto emit = [&](const world::Cell& at, int slot) {
      if (!world::in_bounds(at, gsz)) return;
      const std::size_t base = u(world::cell_index(at, gsz)) * world::kChannels;
      for (int ch = 0; ch < world::kChannels; ++ch) {
        const double val = v[base + u(ch)];
        if (val != 0.0) {
          f.col.push_back(u(slot * world::kChannels + ch));
          f.value.push_back(val);
        }
      }
    };
    emit(cell, 0);
    for (int k = 0; k < kNeighbors; ++k) {
      emit({cell.x + kNeighborOffsets[k][0], cell.y + kNeighborOffsets[k][1], cell.z + kNeighborOffsets[k][2]}, 1 + k);
    }
    const int coords = (1 + kNeighbors) * world::kChannels;
    f.col.push_back(u(coords + cell.z));
    f.value.push_back(1.0);
    f.row_begin.push_back(f.col.size());
  }
  return f;
}

// Proprioception with sinusoidal encodings at four octaves, so that one
// keyframe of timestep difference is visible to linear readouts.
constexpr int kOctaves = 4;
constexpr int kStateFeatures = world::kProprioSize * (1 + 2 * kOctaves);

Tensor state_features(const world::VoxelObservation& obs) {
  std::vector<double> f;
  f.reserve(kStateFeatures);
  for (double x : obs.proprio) {
    f.push_back(x);
    for (int k = 0; k < kOctaves; ++k) {
      const double w = std::numbers::pi * static_cast<double>(1 << k) * x;
      f.push_back(std::sin(w));
      f.push_back(std::cos(w));
    }
  }
  return Tensor::matrix(1, kStateFeatures, std::move(f));
}

std::vector<std::size_t> patch_of_voxel(const PolicyConfig& c) {
  const int n = c.grid / c.patch;
  std::vector<std::size_t> out(u(c.cells()));
  for (int idx = 0; idx < c.cells(); ++idx) {
    const world::Cell cell = world::index_cell(idx, c.grid);
    out[u(idx)] = u(((cell.x / c.patch) * n + cell.y / c.patch) * n + cell.z / c.patch);
  }
  return out;
}

Tensor ln(const Tensor& x, const g::BoundParams& p, const std::string& prefix) {
  return g::layer_norm(x, p(prefix + ".g"), p(prefix + ".b"));
}

Tensor mlp(const Tensor& x, const g::BoundParams& p, const std::string& prefix) {
  const Tensor h = g::gelu(g::linear(x, p(prefix + ".w1"), p(prefix + ".b1")));
  return g::linear(h, p(prefix + ".w2"), p(prefix + ".b2"));
}

Tensor attend(const Tensor& scores, const Tensor& values, double scale_factor) {
  return g::matmul(g::softmax(g::scale(scores, scale_factor), 1), values);
}

}  // namespace

int PolicyConfig::voxel_tokens() const {
  const int n = grid / patch;
  return n * n * n;
}

int PolicyConfig::vocab_size() const { return vocab > 0 ? vocab : static_cast<int>(world::vocabulary().size()); }

void PolicyConfig::validate() const {
  if (grid <= 0 || patch <= 0 || grid % patch != 0) {
    throw DimensionError("grid " + std::to_string(grid) + " is not divisible by patch " + std::to_string(patch));
  }
  if (rot_bins <= 0 || width <= 0 || latents <= 0 || layers < 0 || prompt_len <= 0 || d_new <= 0 ||
      mlp_ratio <= 0 || head_hidden <= 0 || trans_hidden <= 0 || max_tokens <= 0) {
    throw ConfigError("policy sizes must be positive");
  }
}

PolicyConfig::HeadShapes PolicyConfig::head_shapes() const {
  return {static_cast<std::size_t>(grid) * u(grid) * u(grid), 3, u(rot_bins), 2, 2};
}

PolicyConfig full_scale_config() {
  PolicyConfig c;
  c.grid = 100;
  c.rot_bins = 72;
  c.patch = 5;
  c.width = 512;
  c.latents = 512;
  c.layers = 6;
  return c;
}

PolicyModel::PolicyModel(PolicyConfig config) : config_(std::move(config)) {
  config_.validate();
  init_parameters();
}

std::string PolicyModel::prompt_name(int block) { return "prompt." + std::to_string(block); }
std::string PolicyModel::wq_name(int layer, int block) {
  return "epio.layer" + std::to_string(layer) + ".wq." + std::to_string(block);
}
std::string PolicyModel::wk_name(int layer, int block) {
  return "epio.layer" + std::to_string(layer) + ".wk." + std::to_string(block);
}

void PolicyModel::init_parameters() {
  const auto& c = config_;
  SplitMix64 rng(derive_seed(c.seed, 0x90110c7u));
  const std::size_t d = u(c.width);
  const std::size_t hid = u(c.width * c.mlp_ratio);
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out, double gain = 1.0) {
    params_.add(name, normal_tensor({in, out}, gain / std::sqrt(static_cast<double>(in)), rng));
  };
  auto zeros = [&](const std::string& name, g::Shape shape) { params_.add(name, Tensor::zeros(std::move(shape))); };
  auto layer_norm = [&](const std::string& name, std::size_t n = 0) {
    params_.add(name + ".g", Tensor::ones({n ? n : d}));
    zeros(name + ".b", {n ? n : d});
  };
  auto feed_forward = [&](const std::string& name) {
    dense(name + ".w1", d, hid);
    zeros(name + ".b1", {hid});
    dense(name + ".w2", hid, d, 0.5);
    zeros(name + ".b2", {d});
  };

  const std::size_t patch_in = u(c.patch * c.patch * c.patch * world::kChannels);
  dense("encoder.voxel.w1", patch_in, d);
  zeros("encoder.voxel.b1", {d});
  dense("encoder.voxel.w2", d, d);
  zeros("encoder.voxel.b2", {d});
  params_.add("encoder.voxel.pos", normal_tensor({u(c.voxel_tokens()), d}, 0.2, rng));
  dense("encoder.proprio.w", world::kProprioSize, d);
  zeros("encoder.proprio.b", {d});
  params_.add("encoder.lang.embed", normal_tensor({u(c.vocab_size()), d}, 0.5, rng));
  params_.add("encoder.lang.pos", normal_tensor({u(c.max_tokens), d}, 0.2, rng));

  params_.add("epio.latents", normal_tensor({u(c.latents), d}, 0.5, rng));
  for (const std::string& ca : {std::string("epio.in"), std::string("epio.out")}) {
    layer_norm(ca + ".ln_q");
    layer_norm(ca + ".ln_kv");
    for (const char* w : {".wq", ".wk", ".wv"}) dense(ca + w, d, d);
    dense(ca + ".wo", d, d, 0.5);
  }
  layer_norm("epio.in.ln_m");
  feed_forward("epio.in.mlp");
  for (int l = 0; l < c.layers; ++l) {
    const std::string pre = "epio.layer" + std::to_string(l);
    layer_norm(pre + ".ln");
    dense(wq_name(l, 0), d, d);
    dense(wk_name(l, 0), d, d);
    dense(pre + ".wv", d, d);
    dense(pre + ".wo", d, d, 0.5);
    layer_norm(pre + ".ln_m");
    feed_forward(pre + ".mlp");
  }

  const std::size_t th = u(c.trans_hidden);
  dense("decoder.trans.wu", d, th);
  zeros("decoder.trans.bu", {th});
  dense("decoder.trans.ws", u(skip_feature_count(c)), th);
  layer_norm("decoder.trans.ln_ctx");
  dense("decoder.lang.w", d, d);
  zeros("decoder.lang.b", {d});
  layer_norm("decoder.lang.ln");
  dense("decoder.trans.wg", 2 * d + kStateFeatures, th);
  const auto hs = c.head_shapes();
  const std::size_t head_out = hs.rot_axes * hs.rot_bins + hs.open + hs.collide;
  layer_norm("decoder.head.ln", 2 * d);
  dense("decoder.head.w1", 3 * d + kStateFeatures, u(c.head_hidden));
  zeros("decoder.head.b1", {u(c.head_hidden)});
  dense("decoder.head.w2", u(c.head_hidden), head_out, 0.1);
  zeros("decoder.head.b2", {head_out});
}

void PolicyModel::register_base(const std::vector<int>& skills) {
  if (!registry_.empty()) throw RegistryError("base skills already registered");
  if (skills.empty()) throw RegistryError("base step needs at least one skill");
  SplitMix64 rng(derive_seed(config_.seed, 0xba5eu));
  const std::size_t d = u(config_.width);
  if (config_.per_skill_base_prompts) {
    for (int s : skills) {
      params_.add(prompt_name(prompt_blocks_), normal_tensor({u(config_.prompt_len), d}, config_.prompt_init_std, rng));
      registry_.push_back({{s}, prompt_blocks_, 0});
      ++prompt_blocks_;
    }
  } else {
    params_.add(prompt_name(0), normal_tensor({u(config_.prompt_len), d}, config_.prompt_init_std, rng));
    registry_.push_back({skills, 0, 0});
    prompt_blocks_ = 1;
  }
}

bool PolicyModel::is_registered(int skill_id) const {
  for (const auto& r : registry_) {
    for (int s : r.skills) {
      if (s == skill_id) return true;
    }
  }
  return false;
}

void PolicyModel::extend_for_skill(int skill_id) { extend_for_skills({skill_id}); }

void PolicyModel::extend_for_skills(const std::vector<int>& skills) {
  if (skills.empty()) throw RegistryError("extension needs at least one skill");
  for (int s : skills) {
    if (is_registered(s)) throw RegistryError("skill " + std::to_string(s) + " is already registered");
  }
  // Everything learned so far outside the decoder becomes frozen.
  for (const auto& name : params_.names()) {
    if (!g::path_has_prefix(name, "decoder")) params_.set_trainable(name, false);
  }
  const int block = weight_blocks_;
  SplitMix64 rng(derive_seed(config_.seed, 0xe7e9d00u + static_cast<unsigned>(block)));
  const std::size_t d = u(config_.width);
  const std::size_t dn = u(config_.d_new);
  for (int l = 0; l < config_.layers; ++l) {
    params_.add(wq_name(l, block), Tensor::zeros({d, dn}));
    params_.add(wk_name(l, block), normal_tensor({d, dn}, config_.new_key_init_std, rng));
  }
  const int pblock = prompt_blocks_;
  params_.add(prompt_name(pblock), normal_tensor({u(config_.prompt_len), d}, config_.prompt_init_std, rng));
  registry_.push_back({skills, pblock, block});
  ++prompt_blocks_;
  ++weight_blocks_;
}

int PolicyModel::key_width() const { return config_.width + (weight_blocks_ - 1) * config_.d_new; }

void PolicyModel::restore(g::ParameterSet params, std::vector<Registration> registry, int prompt_blocks,
                          int weight_blocks) {
  params_ = std::move(params);
  registry_ = std::move(registry);
  prompt_blocks_ = prompt_blocks;
  weight_blocks_ = weight_blocks;
}

ForwardResult PolicyModel::forward(const world::VoxelObservation& obs, const g::BoundParams& p,
                                   const ForwardOptions& opts) const {
  const auto& c = config_;
  const auto ug = u(c.grid);
  if (obs.grid != c.grid || obs.voxels.shape() != g::Shape{ug, ug, ug, u(world::kChannels)}) {
    throw DimensionError("observation grid " + g::shape_string(obs.voxels.shape()) + " does not match model grid " +
                         std::to_string(c.grid));
  }
  if (obs.tokens.empty() || static_cast<int>(obs.tokens.size()) > c.max_tokens) {
    throw DimensionError("instruction length " + std::to_string(obs.tokens.size()) + " outside [1," +
                         std::to_string(c.max_tokens) + "]");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c.width));
  const std::size_t tv = u(c.voxel_tokens());

  // Voxel tokens: patch-flatten conv, pointwise conv, position and proprioception.
  Tensor vox = g::gelu(g::add_row(g::sparse_matmul(patch_matrix(obs, c), p("encoder.voxel.w1")), p("encoder.voxel.b1")));
  vox = g::linear(vox, p("encoder.voxel.w2"), p("encoder.voxel.b2"));
  vox = g::add(vox, p("encoder.voxel.pos"));
  const Tensor prop = g::linear(Tensor::matrix(1, world::kProprioSize, {obs.proprio.begin(), obs.proprio.end()}),
                                p("encoder.proprio.w"), p("encoder.proprio.b"));
  const std::vector<std::size_t> repeat(tv, 0);
  vox = g::add(vox, g::gather(prop, 0, repeat));

  std::vector<std::size_t> ids, positions;
  for (std::size_t i = 0; i < obs.tokens.size(); ++i) {
    if (obs.tokens[i] < 0 || obs.tokens[i] >= c.vocab_size()) throw IndexError("token id out of range");
    ids.push_back(u(obs.tokens[i]));
    positions.push_back(i);
  }
  const Tensor lang = g::add(g::gather(p("encoder.lang.embed"), 0, ids), g::gather(p("encoder.lang.pos"), 0, positions));

  std::vector<Tensor> parts{vox, lang};
  for (int b = 0; b < prompt_blocks_; ++b) {
    if (u(b) < opts.masked_prompts.size() && opts.masked_prompts[u(b)]) continue;
    parts.push_back(p(prompt_name(b)));
  }
  const Tensor x = g::concat(parts, 0);

  // Latent encoder: latents cross-attend to the multimodal sequence.
  Tensor lat = p("epio.latents");
  {
    const Tensor q = g::matmul(ln(lat, p, "epio.in.ln_q"), p("epio.in.wq"));
    const Tensor kv = ln(x, p, "epio.in.ln_kv");
    const Tensor k = g::matmul(kv, p("epio.in.wk"));
    const Tensor v = g::matmul(kv, p("epio.in.wv"));
    lat = g::add(lat, g::matmul(attend(g::matmul_nt(q, k), v, inv_sqrt_d), p("epio.in.wo")));
    lat = g::add(lat, mlp(ln(lat, p, "epio.in.ln_m"), p, "epio.in.mlp"));
  }

  // Weight-extendable self-attention: scores sum over W_Q/W_K column blocks.
  for (int l = 0; l < c.layers; ++l) {
    const std::string pre = "epio.layer" + std::to_string(l);
    const Tensor h = ln(lat, p, pre + ".ln");
    Tensor scores;
    for (int b = 0; b < weight_blocks_; ++b) {
      const Tensor sb = g::matmul_nt(g::matmul(h, p(wq_name(l, b))), g::matmul(h, p(wk_name(l, b))));
      scores = b == 0 ? sb : g::add(scores, sb);
    }
    const Tensor v = g::matmul(h, p(pre + ".wv"));
    lat = g::add(lat, g::matmul(attend(scores, v, inv_sqrt_d), p(pre + ".wo")));
    lat = g::add(lat, mlp(ln(lat, p, pre + ".ln_m"), p, pre + ".mlp"));
  }

  // Latent decoder: voxel tokens query the encoded latents.
  Tensor dec;
  {
    const Tensor q = g::matmul(ln(vox, p, "epio.out.ln_q"), p("epio.out.wq"));
    const Tensor kv = ln(lat, p, "epio.out.ln_kv");
    const Tensor k = g::matmul(kv, p("epio.out.wk"));
    const Tensor v = g::matmul(kv, p("epio.out.wv"));
    dec = g::add(vox, g::matmul(attend(g::matmul_nt(q, k), v, inv_sqrt_d), p("epio.out.wo")));
  }

  // Instruction summary shared by the heads.
  const double inv_tok = 1.0 / static_cast<double>(ids.size());
  // Per-token nonlinearity before pooling keeps word order (position and
  // identity mix), which a plain mean would lose.
  const Tensor per_word = g::gelu(g::linear(lang, p("decoder.lang.w"), p("decoder.lang.b")));
  const Tensor words = ln(g::reshape(g::scale(g::sum(per_word, 0), inv_tok), {1, u(c.width)}), p, "decoder.lang.ln");

  ForwardResult out;
  // Translation head: patch features modulate per-voxel skip features.
  {
    static thread_local std::vector<std::size_t> owner;
    static thread_local int owner_grid = -1, owner_patch = -1;
    if (owner_grid != c.grid || owner_patch != c.patch) {
      owner = patch_of_voxel(c);
      owner_grid = c.grid;
      owner_patch = c.patch;
    }
    // Patch queries plus a global query from the latent summary, the pooled
    // instruction and the proprioception.
    const double inv_lat = 1.0 / static_cast<double>(c.latents);
    const Tensor ctx = ln(g::reshape(g::scale(g::sum(lat, 0), inv_lat), {1, u(c.width)}), p, "decoder.trans.ln_ctx");
    const Tensor state = state_features(obs);
    const Tensor gq = g::matmul(g::concat({ctx, words, state}, 1), p("decoder.trans.wg"));
    const Tensor queries = g::add(g::linear(dec, p("decoder.trans.wu"), p("decoder.trans.bu")), g::gather(gq, 0, repeat));
    const Tensor up = g::gather(queries, 0, owner);
    const Tensor skip = g::sparse_matmul(skip_matrix(obs, c), p("decoder.trans.ws"));
    out.q.trans = g::sum(g::mul(up, skip), 1);
  }
  // Global max pool and spatial-softmax weighted mean feed the MLP heads.
  {
    const Tensor pooled = g::max(dec, 0);
    const Tensor ssm = g::sum(g::mul(g::softmax(dec, 0), dec), 0);
    const Tensor feat = g::concat({pooled, ssm}, 0);
    out.features = feat;
    const Tensor feat_n = g::reshape(ln(g::reshape(feat, {1, 2 * u(c.width)}), p, "decoder.head.ln"), {2 * u(c.width)});
    const Tensor head_in = g::concat({feat_n, g::reshape(words, {u(c.width)}),
                                      g::reshape(state_features(obs), {u(kStateFeatures)})}, 0);
    const std::size_t d2 = head_in.numel();
    const Tensor hidden = g::gelu(g::linear(g::reshape(head_in, {1, d2}), p("decoder.head.w1"), p("decoder.head.b1")));
    const Tensor o = g::linear(hidden, p("decoder.head.w2"), p("decoder.head.b2"));
    const auto hs = c.head_shapes();
    const std::size_t nr = hs.rot_axes * hs.rot_bins;
    out.q.rot = g::reshape(g::slice(o, 1, 0, nr), {hs.rot_axes, hs.rot_bins});
    out.q.open = g::reshape(g::slice(o, 1, nr, nr + 2), {2});
    out.q.collide = g::reshape(g::slice(o, 1, nr + 2, nr + 4), {2});
  }
  return out;
}

ForwardResult PolicyModel::infer(const world::VoxelObservation& obs, const ForwardOptions& opts) const {
  return forward(obs, params_.bind(nullptr), opts);
}

namespace {

int argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace

world::KeyframeAction predict_action(const QValues& q) {
  for (const Tensor* t : {&q.trans, &q.rot, &q.open, &q.collide}) {
    if (!t->all_finite()) throw ContractError("predict_action: non-finite Q-values");
  }
  world::KeyframeAction a;
  a.trans = argmax(q.trans.data());
  const std::size_t bins = q.rot.dim(1);
  for (std::size_t axis = 0; axis < 3; ++axis) a.rot[axis] = argmax(q.rot.data().subspan(axis * bins, bins));
  a.open = argmax(q.open.data());
  a.collide = argmax(q.collide.data());
  return a;
}

std::vector<double> prompt_attribution(const PolicyModel& model, const std::vector<world::KeyframeSample>& batch) {
  if (batch.empty()) throw ContractError("prompt_attribution: empty batch");
  if (model.prompt_blocks() == 0) throw ContractError("prompt_attribution: no prompt blocks registered");
  g::Tape tape;
  g::TapeScope scope(tape);
  const g::BoundParams p = model.params().bind(&tape, /*watch_all=*/true);
  std::vector<Tensor> terms;
  for (const auto& s : batch) terms.push_back(losses::action_loss(model.forward(s.obs, p).q, s.action));
  const Tensor loss = g::scale(g::sum(g::concat(terms, 0)), 1.0 / static_cast<double>(batch.size()));
  const g::GradientMap grads = tape.backward(loss);
  std::vector<double> mass(u(model.prompt_blocks()), 0.0);
  double total = 0.0;
  for (int b = 0; b < model.prompt_blocks(); ++b) {
    auto it = grads.find(PolicyModel::prompt_name(b));
    if (it == grads.end()) continue;
    for (double v : it->second.data()) mass[u(b)] += std::abs(v);
    total += mass[u(b)];
  }
  if (total <= 0.0) throw ContractError("prompt_attribution: prompt gradients vanished");
  for (auto& m : mass) m /= total;
  return mass;
}

ParamCounts count_parameters(const PolicyModel& model) {
  return {model.params().scalar_count(), model.params().trainable_scalar_count()};
}

}  // namespace imanip::policy
