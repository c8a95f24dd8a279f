#include "imanip/policy/checkpoint.hpp"

#include <json.hpp>

#include "imanip/binary_io.hpp"

namespace imanip::policy {

namespace {

constexpr char kMagic[8] = {'I', 'M', 'C', 'K', 'P', 'T', '1', '\0'};

nlohmann::json config_json(const PolicyConfig& c) {
  return {{"grid", c.grid},
          {"rot_bins", c.rot_bins},
          {"patch", c.patch},
          {"width", c.width},
          {"latents", c.latents},
          {"layers", c.layers},
          {"prompt_len", c.prompt_len},
          {"d_new", c.d_new},
          {"mlp_ratio", c.mlp_ratio},
          {"head_hidden", c.head_hidden},
          {"trans_hidden", c.trans_hidden},
          {"max_tokens", c.max_tokens},
          {"vocab", c.vocab},
          {"prompt_init_std", c.prompt_init_std},
          {"new_key_init_std", c.new_key_init_std},
          {"per_skill_base_prompts", c.per_skill_base_prompts},
          {"seed", c.seed}};
}

PolicyConfig config_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.grid = j.at("grid");
  c.rot_bins = j.at("rot_bins");
  c.patch = j.at("patch");
  c.width = j.at("width");
  c.latents = j.at("latents");
  c.layers = j.at("layers");
  c.prompt_len = j.at("prompt_len");
  c.d_new = j.at("d_new");
  c.mlp_ratio = j.at("mlp_ratio");
  c.head_hidden = j.at("head_hidden");
  c.trans_hidden = j.at("trans_hidden");
  c.max_tokens = j.at("max_tokens");
  c.vocab = j.at("vocab");
  c.prompt_init_std = j.at("prompt_init_std");
  c.new_key_init_std = j.at("new_key_init_std");
  c.per_skill_base_prompts = j.at("per_skill_base_prompts");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const PolicyModel& model) {
  io::Writer w;
  w.bytes(kMagic, sizeof kMagic);
  nlohmann::json header;
  header["config"] = config_json(model.config());
  header["prompt_blocks"] = model.prompt_blocks();
  header["weight_blocks"] = model.weight_blocks();
  header["registry"] = nlohmann::json::array();
  for (const auto& r : model.registry()) {
    header["registry"].push_back({{"skills", r.skills}, {"prompt_block", r.prompt_block}, {"weight_block", r.weight_block}});
  }
  w.str(header.dump());
  const auto& params = model.params();
  const auto names = params.names();
  w.u32(static_cast<std::uint32_t>(names.size()));
  for (const auto& n : names) {
    w.str(n);
    w.u8(params.trainable(n) ? 1 : 0);
    const auto& shape = params.get(n).shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.u64(d);
  }
  for (const auto& n : names) {
    for (double v : params.get(n).data()) w.f64(v);
  }
  const std::uint32_t crc = io::crc32(w.buffer().data(), w.buffer().size());
  w.u32(crc);
  return w.buffer();
}

PolicyModel decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 4) throw FormatError("checkpoint truncated");
  io::Reader tail(bytes.data() + bytes.size() - 4, 4);
  if (tail.u32() != io::crc32(bytes.data(), bytes.size() - 4)) throw FormatError("checkpoint CRC mismatch");
  io::Reader r(bytes.data(), bytes.size() - 4);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not an IMCKPT1 checkpoint");
  const auto header = nlohmann::json::parse(r.str());
  PolicyModel model(config_from_json(header.at("config")));
  std::vector<Registration> registry;
  for (const auto& e : header.at("registry")) {
    registry.push_back({e.at("skills").get<std::vector<int>>(), e.at("prompt_block"), e.at("weight_block")});
  }
  const std::uint32_t count = r.u32();
  struct Row {
    std::string name;
    bool trainable;
    grad::Shape shape;
  };
  std::vector<Row> rows;
  for (std::uint32_t i = 0; i < count; ++i) {
    Row row;
    row.name = r.str();
    row.trainable = r.u8() != 0;
    const std::uint32_t rank = r.u32();
    for (std::uint32_t k = 0; k < rank; ++k) row.shape.push_back(r.u64());
    rows.push_back(std::move(row));
  }
  grad::ParameterSet params;
  for (const auto& row : rows) {
    std::vector<double> data(grad::shape_numel(row.shape));
    for (auto& v : data) v = r.f64();
    params.add(row.name, grad::Tensor(row.shape, std::move(data)), row.trainable);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint payload");
  model.restore(std::move(params), std::move(registry), header.at("prompt_blocks"), header.at("weight_blocks"));
  return model;
}

void save_checkpoint(const PolicyModel& model, const std::string& path) { io::write_file(path, encode_checkpoint(model)); }

PolicyModel load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

std::string model_hash(const PolicyModel& model) { return io::sha256_hex(encode_checkpoint(model)); }

}  // namespace imanip::policy
