#include "diffusion/config.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace diffusion {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(trim(tok)));
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw std::invalid_argument("config: bad boolean value '" + s + "'");
}

}  // namespace

RunConfig parse_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());

  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value, got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (kv.count(key)) throw std::invalid_argument("config: duplicate key '" + key + "'");
    kv[key] = val;
  }

  RunConfig cfg;
  cfg.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  bool learn_schedule_set = false;

  for (const auto& [key, val] : kv) {
    if (key == "experiment") cfg.experiment = val;
    else if (key == "data") cfg.data_path = cfg.base_dir / val;
    else if (key == "out_dir") cfg.out_dir = cfg.base_dir / val;
    else if (key == "T") cfg.steps_T = std::stoi(val);
    else if (key == "beta1") cfg.beta1 = std::stod(val);
    else if (key == "schedule") {
      if (val == "fixed") cfg.schedule_mode = ScheduleMode::fixed_rule;
      else if (val == "learnable") cfg.schedule_mode = ScheduleMode::learnable;
      else throw std::invalid_argument("config: schedule must be fixed|learnable");
    } else if (key == "model") {
      if (val == "rbf") cfg.model.family = ModelFamily::rbf;
      else if (val == "mlp") cfg.model.family = ModelFamily::mlp;
      else throw std::invalid_argument("config: model must be rbf|mlp");
    } else if (key == "hidden") cfg.model.hidden = parse_int_list(val);
    else if (key == "readout") {
      if (val == "per-step") cfg.model.readout = ReadoutMode::per_step;
      else if (val == "bump") cfg.model.readout = ReadoutMode::bump;
      else throw std::invalid_argument("config: readout must be per-step|bump");
    } else if (key == "bumps") cfg.model.bumps = std::stoi(val);
    else if (key == "output") {
      if (val == "transform") cfg.model.output = GaussianOutputMode::transform;
      else if (val == "direct") cfg.model.output = GaussianOutputMode::direct;
      else throw std::invalid_argument("config: output must be transform|direct");
    } else if (key == "batch") cfg.train.batch = std::stoi(val);
    else if (key == "steps") cfg.train.steps = std::stol(val);
    else if (key == "lr") cfg.train.lr = std::stod(val);
    else if (key == "lr_final") cfg.train.lr_final = std::stod(val);
    else if (key == "decay") cfg.train.accumulator_decay = std::stod(val);
    else if (key == "seed") cfg.train.seed = std::stoull(val);
    else if (key == "t_subsample") cfg.train.t_subsample = std::stoi(val);
    else if (key == "learn_schedule") {
      cfg.train.learn_schedule = parse_bool(val);
      learn_schedule_set = true;
    } else if (key == "eval_every") cfg.train.eval_every = std::stol(val);
    else if (key == "eval_batch") cfg.train.eval_batch = std::stoi(val);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }

  if (cfg.experiment.empty()) throw std::invalid_argument("config: missing 'experiment'");
  if (cfg.data_path.empty()) throw std::invalid_argument("config: missing 'data'");
  if (cfg.out_dir.empty()) throw std::invalid_argument("config: missing 'out_dir'");
  if (cfg.steps_T < 1) throw std::invalid_argument("config: missing or bad 'T'");
  if (cfg.model.hidden.empty()) throw std::invalid_argument("config: missing 'hidden'");
  if (!learn_schedule_set)
    cfg.train.learn_schedule = cfg.schedule_mode == ScheduleMode::learnable;
  return cfg;
}

}  // namespace diffusion
