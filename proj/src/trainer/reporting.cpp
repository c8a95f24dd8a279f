#include "imanip/trainer/reporting.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include "imanip/binary_io.hpp"
#include "imanip/errors.hpp"

namespace imanip::trainer {

namespace {

std::string num(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

nlohmann::json step_json(const StepReport& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["skills"] = r.skills;
  j["new_skills"] = r.new_skills;
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [s, v] : r.success) per[world::skill(s).name] = v;
  j["success"] = per;
  j["old"] = r.old_rate ? nlohmann::json(*r.old_rate) : nlohmann::json(nullptr);
  j["new"] = r.new_rate;
  j["all"] = r.all_rate;
  j["trainable_params"] = r.trainable_params;
  j["total_params"] = r.total_params;
  j["iterations"] = r.iterations;
  j["wall_ms"] = r.wall_ms;
  j["l_act"] = r.l_act;
  j["l_dis"] = r.l_dis;
  return j;
}

}  // namespace

std::string metrics_csv(const RunReport& run) {
  std::ostringstream os;
  os << "step,skill,phase,success_rate,l_act,l_dis,trainable_params,wall_ms\n";
  for (const auto& r : run.steps) {
    for (int s : r.skills) {
      const bool is_new = std::find(r.new_skills.begin(), r.new_skills.end(), s) != r.new_skills.end();
      os << r.step << ',' << world::skill(s).name << ',' << (is_new ? "new" : "old") << ',' << num(r.success.at(s))
         << ',' << num(r.l_act) << ',' << num(r.l_dis) << ',' << r.trainable_params << ',' << num(r.wall_ms, "%.1f")
         << '\n';
    }
  }
  return os.str();
}

std::string svg_curves(const std::string& title, const std::vector<Series>& series,
                       const std::vector<std::string>& x_labels) {
  const double w = 520, h = 320, left = 50, right = 130, top = 30, bottom = 40;
  const double pw = w - left - right, ph = h - top - bottom;
  const std::size_t n = x_labels.size();
  auto xpos = [&](std::size_t i) { return left + (n <= 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(n - 1)); };
  auto ypos = [&](double pct) { return top + ph * (1.0 - pct / 100.0); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
  for (int pct = 0; pct <= 100; pct += 25) {
    os << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << num(ypos(pct), "%.1f") << "\" y2=\""
       << num(ypos(pct), "%.1f") << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << num(ypos(pct) + 4, "%.1f") << "\" text-anchor=\"end\">" << pct
       << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    os << "<text x=\"" << num(xpos(i), "%.1f") << "\" y=\"" << h - bottom + 16 << "\" text-anchor=\"middle\">"
       << x_labels[i] << "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = colors[k % 8];
    std::string pts;
    for (std::size_t i = 0; i < series[k].values.size() && i < n; ++i) {
      const double v = series[k].values[i];
      if (std::isnan(v)) continue;
      pts += num(xpos(i), "%.1f") + "," + num(ypos(v), "%.1f") + " ";
      os << "<circle cx=\"" << num(xpos(i), "%.1f") << "\" cy=\"" << num(ypos(v), "%.1f") << "\" r=\"3\" fill=\"" << c
         << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    const double ly = top + 14.0 * static_cast<double>(k);
    os << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 28 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 32 << "\" y=\"" << ly + 4 << "\">" << series[k].label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

nlohmann::json write_run_artifacts(const std::string& dir, const RunReport& run, const TrainerOptions& opts,
                                   const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nlohmann::json files = nlohmann::json::array();
  auto emit = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
    io::write_file((std::filesystem::path(dir) / name).string(), bytes);
    files.push_back({{"path", name}, {"sha256", io::sha256_hex(bytes)}, {"bytes", bytes.size()}});
  };
  auto emit_text = [&](const std::string& name, const std::string& text) {
    emit(name, std::vector<std::uint8_t>(text.begin(), text.end()));
  };

  emit_text("metrics.csv", metrics_csv(run));
  std::vector<std::string> xl;
  Series all{std::string(method_name(run.method)) + " all", {}};
  Series old{std::string(method_name(run.method)) + " old", {}};
  for (const auto& r : run.steps) {
    xl.push_back(r.step == 0 ? "base" : "step " + std::to_string(r.step));
    all.values.push_back(100.0 * r.all_rate);
    old.values.push_back(r.old_rate ? 100.0 * *r.old_rate : std::numeric_limits<double>::quiet_NaN());
  }
  emit_text("curves.svg", svg_curves(format_notation(run.schedule.notation()) + " success rate (%)", {all, old}, xl));
  for (std::size_t i = 0; i < run.steps.size(); ++i) {
    emit("step" + std::to_string(i) + ".ckpt", run.checkpoint_bytes[i]);
    emit("memory_step" + std::to_string(i) + ".bin", run.memory_bytes[i]);
  }

  const auto& s = run.schedule;
  nlohmann::json m;
  m["format"] = "imanip-run-1";
  m["method"] = method_name(run.method);
  m["schedule"] = {{"notation", format_notation(s.notation())},
                   {"base", s.base},
                   {"steps", s.steps},
                   {"base_iterations", s.base_iterations},
                   {"step_iterations", s.step_iterations},
                   {"batch_size", s.batch_size},
                   {"lr", s.lr},
                   {"optimizer", optimizer_name(s.optimizer)},
                   {"lambda_dis", s.lambda_dis},
                   {"replay_k", s.replay_k},
                   {"strategy", memory::strategy_name(s.strategy)},
                   {"freeze", freeze_name(s.freeze)}};
  m["seeds"] = {{"run", s.seed}, {"data", data_seed_for(s.seed)}};
  m["policy"] = {{"width", opts.policy.width},       {"latents", opts.policy.latents},
                 {"layers", opts.policy.layers},     {"patch", opts.policy.patch},
                 {"prompt_len", opts.policy.prompt_len}, {"d_new", opts.policy.d_new},
                 {"grid", opts.world.grid},          {"rot_bins", opts.world.rot_bins}};
  m["demos_per_skill"] = opts.demos_per_skill;
  m["eval_episodes"] = opts.eval_episodes;
  m["data_hash"] = run.data_hash;
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t i = 0; i < run.steps.size(); ++i) {
    auto j = step_json(run.steps[i]);
    j["checkpoint_sha256"] = run.checkpoints[i];
    j["memory"] = nlohmann::json::parse(run.memory_index[i]);
    steps.push_back(std::move(j));
  }
  m["steps"] = steps;
  m["all_average"] = run.all_average();
  m["files"] = files;
  if (!extra.is_null()) m["extra"] = extra;
  io::write_text((std::filesystem::path(dir) / "manifest.json").string(), m.dump(2) + "\n");
  return m;
}

Comparison compare_manifests(const std::vector<nlohmann::json>& manifests) {
  if (manifests.empty()) throw ConfigError("report needs at least one manifest");
  std::size_t n_steps = 0;
  for (const auto& m : manifests) n_steps = std::max(n_steps, m.at("steps").size());
  std::ostringstream os;
  os << "method,seed";
  for (std::size_t i = 0; i < n_steps; ++i) {
    if (i == 0) {
      os << ",base_all";
    } else {
      os << ",step" << i << "_old,step" << i << "_all";
    }
  }
  os << ",avg_old,avg_all\n";
  std::vector<Series> series;
  for (const auto& m : manifests) {
    const std::string method = m.at("method");
    os << method << ',' << m.at("seeds").at("run").get<std::uint64_t>();
    Series sr{method + " (seed " + std::to_string(m.at("seeds").at("run").get<std::uint64_t>()) + ")", {}};
    double old_sum = 0, all_sum = 0;
    int old_n = 0;
    const auto& steps = m.at("steps");
    for (std::size_t i = 0; i < n_steps; ++i) {
      if (i >= steps.size()) {
        os << (i == 0 ? "," : ",,");
        sr.values.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const double all = 100.0 * steps[i].at("all").get<double>();
      all_sum += all;
      sr.values.push_back(all);
      if (i == 0) {
        os << ',' << num(all, "%.1f");
      } else {
        const double old = 100.0 * steps[i].at("old").get<double>();
        old_sum += old;
        ++old_n;
        os << ',' << num(old, "%.1f") << ',' << num(all, "%.1f");
      }
    }
    os << ',' << (old_n ? num(old_sum / old_n, "%.1f") : "") << ',' << num(all_sum / static_cast<double>(steps.size()), "%.1f")
       << '\n';
    series.push_back(std::move(sr));
  }
  std::vector<std::string> xl;
  for (std::size_t i = 0; i < n_steps; ++i) xl.push_back(i == 0 ? "base" : "step " + std::to_string(i));
  return {os.str(), svg_curves("All-skill success rate (%)", series, xl)};
}

}  // namespace imanip::trainer
