#include "cdnet/config_io.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace cdnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return d;
}

std::uint64_t to_uint(const std::string& v) {
  if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
  std::size_t used = 0;
  const unsigned long long u = std::stoull(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return u;
}

bool to_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::invalid_argument(v);
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"levels", [](RunConfig& c, const std::string& v) { c.network.levels = to_uint(v); }},
      {"base_filters", [](RunConfig& c, const std::string& v) { c.network.base_filters = to_uint(v); }},
      {"input_h", [](RunConfig& c, const std::string& v) { c.network.input_h = to_uint(v); }},
      {"input_w", [](RunConfig& c, const std::string& v) { c.network.input_w = to_uint(v); }},
      {"input_channels", [](RunConfig& c, const std::string& v) { c.network.input_channels = to_uint(v); }},
      {"enable_aux", [](RunConfig& c, const std::string& v) { c.network.enable_aux = to_bool(v); }},
      {"enable_fw", [](RunConfig& c, const std::string& v) { c.network.enable_fw = to_bool(v); }},
      {"enable_asdic", [](RunConfig& c, const std::string& v) { c.network.enable_asdic = to_bool(v); }},
      {"gn_groups", [](RunConfig& c, const std::string& v) { c.network.gn_groups = to_uint(v); }},
      {"aux_per_branch_loss",
       [](RunConfig& c, const std::string& v) { c.network.aux_per_branch_loss = to_bool(v); }},
      {"lr_phase1", [](RunConfig& c, const std::string& v) { c.train.lr_phase1 = to_double(v); }},
      {"phase1_epochs", [](RunConfig& c, const std::string& v) { c.train.phase1_epochs = to_uint(v); }},
      {"lr_phase2", [](RunConfig& c, const std::string& v) { c.train.lr_phase2 = to_double(v); }},
      {"total_epochs", [](RunConfig& c, const std::string& v) { c.train.total_epochs = to_uint(v); }},
      {"plateau_patience", [](RunConfig& c, const std::string& v) { c.train.plateau_patience = to_uint(v); }},
      {"plateau_factor", [](RunConfig& c, const std::string& v) { c.train.plateau_factor = to_double(v); }},
      {"early_stop_patience",
       [](RunConfig& c, const std::string& v) { c.train.early_stop_patience = to_uint(v); }},
      {"adam_beta1", [](RunConfig& c, const std::string& v) { c.train.adam_beta1 = to_double(v); }},
      {"adam_beta2", [](RunConfig& c, const std::string& v) { c.train.adam_beta2 = to_double(v); }},
      {"adam_eps", [](RunConfig& c, const std::string& v) { c.train.adam_eps = to_double(v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = to_uint(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = to_uint(v); }},
      {"alpha", [](RunConfig& c, const std::string& v) { c.loss.alpha = to_double(v); }},
      {"beta", [](RunConfig& c, const std::string& v) { c.loss.beta = to_double(v); }},
      {"gamma", [](RunConfig& c, const std::string& v) { c.loss.gamma = to_double(v); }},
      {"epsilon", [](RunConfig& c, const std::string& v) { c.loss.epsilon = to_double(v); }},
      {"focal_gamma", [](RunConfig& c, const std::string& v) { c.loss.focal_gamma = to_double(v); }},
      {"include_background",
       [](RunConfig& c, const std::string& v) { c.loss.include_background = to_bool(v); }},
      {"kind", [](RunConfig& c, const std::string& v) { c.loss.kind = loss_kind_from_name(v); }},
      {"threshold", [](RunConfig& c, const std::string& v) { c.threshold = to_double(v); }},
      {"init_seed", [](RunConfig& c, const std::string& v) { c.init_seed = to_uint(v); }},
  };
  return table;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value '" + value +
                        "' for " + key);
    }
  }
  cfg.network.validate();
  cfg.train.validate();
  cfg.loss.validate();
  if (!(cfg.threshold >= 0.0 && cfg.threshold <= 1.0)) {
    throw ConfigError("config: threshold must lie in [0, 1]");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  const auto& n = c.network;
  const auto& t = c.train;
  const auto& l = c.loss;
  os << "# network\n"
     << "levels = " << n.levels << "\nbase_filters = " << n.base_filters << "\ninput_h = " << n.input_h
     << "\ninput_w = " << n.input_w << "\ninput_channels = " << n.input_channels
     << "\nenable_aux = " << n.enable_aux << "\nenable_fw = " << n.enable_fw
     << "\nenable_asdic = " << n.enable_asdic << "\ngn_groups = " << n.gn_groups
     << "\naux_per_branch_loss = " << n.aux_per_branch_loss << "\ninit_seed = " << c.init_seed << "\n"
     << "# training\n"
     << "lr_phase1 = " << t.lr_phase1 << "\nphase1_epochs = " << t.phase1_epochs
     << "\nlr_phase2 = " << t.lr_phase2 << "\ntotal_epochs = " << t.total_epochs
     << "\nplateau_patience = " << t.plateau_patience << "\nplateau_factor = " << t.plateau_factor
     << "\nearly_stop_patience = " << t.early_stop_patience << "\nadam_beta1 = " << t.adam_beta1
     << "\nadam_beta2 = " << t.adam_beta2 << "\nadam_eps = " << t.adam_eps
     << "\nbatch_size = " << t.batch_size << "\nseed = " << t.seed << "\n"
     << "# loss\n"
     << "kind = " << loss_kind_name(l.kind) << "\nalpha = " << l.alpha << "\nbeta = " << l.beta
     << "\ngamma = " << l.gamma << "\nepsilon = " << l.epsilon << "\nfocal_gamma = " << l.focal_gamma
     << "\ninclude_background = " << l.include_background << "\nthreshold = " << c.threshold << "\n";
  return os.str();
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "epoch,total_loss,output_loss,supervision_loss,lr\n" << std::setprecision(10);
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << e.total_loss << ',' << e.output_loss << ',' << e.supervision_loss << ','
        << e.lr << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cdnet
