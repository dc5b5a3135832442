#include "dagl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace dagl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw ConfigError("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"channels", [](RunConfig& c, const std::string& v) { c.model.channels = parse_size(v); }},
      {"rb_per_stage", [](RunConfig& c, const std::string& v) { c.model.rb_per_stage = parse_size(v); }},
      {"heads", [](RunConfig& c, const std::string& v) { c.model.heads = parse_size(v); }},
      {"stages", [](RunConfig& c, const std::string& v) { c.model.stages = parse_size(v); }},
      {"patch_w", [](RunConfig& c, const std::string& v) { c.model.patch.patch_w = parse_size(v); }},
      {"patch_h", [](RunConfig& c, const std::string& v) { c.model.patch.patch_h = parse_size(v); }},
      {"stride", [](RunConfig& c, const std::string& v) { c.model.patch.stride = parse_size(v); }},
      {"mode", [](RunConfig& c, const std::string& v) { c.model.mode = parse_ablation_mode(v); }},
      {"color", [](RunConfig& c, const std::string& v) { c.model.color = parse_color_mode(v); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.train.lr = parse_real(v); }},
      {"halve_every", [](RunConfig& c, const std::string& v) { c.train.halve_every = parse_size(v); }},
      {"batch", [](RunConfig& c, const std::string& v) { c.train.batch = parse_size(v); }},
      {"crop", [](RunConfig& c, const std::string& v) { c.train.crop = parse_size(v); }},
      {"sigma", [](RunConfig& c, const std::string& v) { c.train.sigma = parse_real(v); }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_size(v); }},
      {"iters_per_epoch", [](RunConfig& c, const std::string& v) { c.train.iters_per_epoch = parse_size(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_size(v); }},
      {"grad_clip", [](RunConfig& c, const std::string& v) { c.train.grad_clip = parse_bool(v); }},
  };
  return table;
}

std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  cfg.model.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

std::string to_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  os << "channels = " << m.channels << '\n'
     << "rb_per_stage = " << m.rb_per_stage << '\n'
     << "heads = " << m.heads << '\n'
     << "stages = " << m.stages << '\n'
     << "patch_w = " << m.patch.patch_w << '\n'
     << "patch_h = " << m.patch.patch_h << '\n'
     << "stride = " << m.patch.stride << '\n'
     << "mode = " << to_string(m.mode) << '\n'
     << "color = " << to_string(m.color) << '\n'
     << "lr = " << real_text(t.lr) << '\n'
     << "halve_every = " << t.halve_every << '\n'
     << "batch = " << t.batch << '\n'
     << "crop = " << t.crop << '\n'
     << "sigma = " << real_text(t.sigma) << '\n'
     << "epochs = " << t.epochs << '\n'
     << "iters_per_epoch = " << t.iters_per_epoch << '\n'
     << "seed = " << t.seed << '\n'
     << "grad_clip = " << (t.grad_clip ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace dagl
