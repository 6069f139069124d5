#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "lantern/trainer.hpp"

namespace lantern {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Lantern: return "lantern";
    case Variant::Rnn: return "rnn";
    case Variant::Pr: return "pr";
  }
  return "lantern";
}

Variant parse_variant(const std::string& s) {
  if (s == "lantern") return Variant::Lantern;
  if (s == "rnn") return Variant::Rnn;
  if (s == "pr") return Variant::Pr;
  throw Error(Errc::ConfigError, "unknown variant '" + s + "' (lantern|rnn|pr)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(Errc::ConfigError, "batch_size must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error(Errc::ConfigError, "gamma must lie in (0, 1]");
  if (!(entropy_coef >= 0.0)) throw Error(Errc::ConfigError, "entropy_coef must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw Error(Errc::ConfigError, "train_fraction must lie in (0, 1]");
  if (min_length < 2) throw Error(Errc::ConfigError, "min_length must be >= 2");
  if (threads < 1) throw Error(Errc::ConfigError, "threads must be >= 1");
  gen_adam.validate();
  disc_adam.validate();
  embedding.validate();
  if (descendants < 1) throw Error(Errc::ConfigError, "descendants must be >= 1");
}

GeneratorConfig TrainConfig::generator() const {
  GeneratorConfig g;
  g.embedding = embedding;
  g.kind = variant == Variant::Rnn ? IntensityKind::Rnn : IntensityKind::Attention;
  g.descendants = descendants;
  g.time_input = time_input;
  g.forbid_reactivation = forbid_reactivation;
  return g;
}

DiscriminatorConfig TrainConfig::discriminator() const {
  DiscriminatorConfig d;
  d.embedding = embedding;
  d.causal = disc_causal;
  d.share_embeddings = share_embeddings;
  return d;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error(Errc::ConfigError, key + ": expected a number, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(Errc::ConfigError, key + ": expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(Errc::ConfigError, key + ": expected true or false, got '" + v + "'");
}

using Setter = void (*)(TrainConfig&, const std::string&, const std::string&);

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"variant", [](TrainConfig& c, const std::string&, const std::string& v) { c.variant = parse_variant(v); }},
      {"batch_size", [](TrainConfig& c, const std::string& k, const std::string& v) { c.batch_size = to_uint(k, v); }},
      {"steps", [](TrainConfig& c, const std::string& k, const std::string& v) { c.steps = to_uint(k, v); }},
      {"gamma", [](TrainConfig& c, const std::string& k, const std::string& v) { c.gamma = to_double(k, v); }},
      {"entropy_coef", [](TrainConfig& c, const std::string& k, const std::string& v) { c.entropy_coef = to_double(k, v); }},
      {"gen_alpha", [](TrainConfig& c, const std::string& k, const std::string& v) { c.gen_adam.alpha = to_double(k, v); }},
      {"gen_beta1", [](TrainConfig& c, const std::string& k, const std::string& v) { c.gen_adam.beta1 = to_double(k, v); }},
      {"gen_beta2", [](TrainConfig& c, const std::string& k, const std::string& v) { c.gen_adam.beta2 = to_double(k, v); }},
      {"gen_epsilon", [](TrainConfig& c, const std::string& k, const std::string& v) { c.gen_adam.epsilon = to_double(k, v); }},
      {"disc_alpha", [](TrainConfig& c, const std::string& k, const std::string& v) { c.disc_adam.alpha = to_double(k, v); }},
      {"disc_beta1", [](TrainConfig& c, const std::string& k, const std::string& v) { c.disc_adam.beta1 = to_double(k, v); }},
      {"disc_beta2", [](TrainConfig& c, const std::string& k, const std::string& v) { c.disc_adam.beta2 = to_double(k, v); }},
      {"disc_epsilon", [](TrainConfig& c, const std::string& k, const std::string& v) { c.disc_adam.epsilon = to_double(k, v); }},
      {"dim", [](TrainConfig& c, const std::string& k, const std::string& v) { c.embedding.dim = to_uint(k, v); }},
      {"heads", [](TrainConfig& c, const std::string& k, const std::string& v) { c.embedding.heads = to_uint(k, v); }},
      {"eta", [](TrainConfig& c, const std::string& k, const std::string& v) { c.embedding.eta = to_double(k, v); }},
      {"descendants", [](TrainConfig& c, const std::string& k, const std::string& v) { c.descendants = to_uint(k, v); }},
      {"time_input",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "parent") c.time_input = TimeInput::Parent;
         else if (v == "last_event") c.time_input = TimeInput::LastEvent;
         else throw Error(Errc::ConfigError, k + ": expected parent or last_event");
       }},
      {"forbid_reactivation",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.forbid_reactivation = to_bool(k, v); }},
      {"disc_causal", [](TrainConfig& c, const std::string& k, const std::string& v) { c.disc_causal = to_bool(k, v); }},
      {"share_embeddings",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.share_embeddings = to_bool(k, v); }},
      {"paper_literal_signs",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.paper_literal_signs = to_bool(k, v); }},
      {"time_gradient",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "pathwise") c.time_gradient = TimeGradient::Pathwise;
         else if (v == "none") c.time_gradient = TimeGradient::None;
         else throw Error(Errc::ConfigError, k + ": expected pathwise or none");
       }},
      {"rollout_length",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.rollout_length = v == "match_real" ? 0 : to_uint(k, v);
       }},
      {"pr_constant", [](TrainConfig& c, const std::string& k, const std::string& v) { c.pr_constant = to_double(k, v); }},
      {"train_fraction",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.train_fraction = to_double(k, v); }},
      {"min_length", [](TrainConfig& c, const std::string& k, const std::string& v) { c.min_length = to_uint(k, v); }},
      {"checkpoint_every",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.checkpoint_every = to_uint(k, v); }},
      {"threads", [](TrainConfig& c, const std::string& k, const std::string& v) { c.threads = to_uint(k, v); }},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = to_uint(k, v); }},
  };
  return table;
}

}  // namespace

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw Error(Errc::ConfigError, "unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::ConfigError, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(Errc::ConfigError, "config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

TrainConfig read_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return {
      {"variant", to_string(c.variant)},
      {"batch_size", c.batch_size},
      {"steps", c.steps},
      {"gamma", c.gamma},
      {"entropy_coef", c.entropy_coef},
      {"gen_alpha", c.gen_adam.alpha},
      {"gen_beta1", c.gen_adam.beta1},
      {"gen_beta2", c.gen_adam.beta2},
      {"gen_epsilon", c.gen_adam.epsilon},
      {"disc_alpha", c.disc_adam.alpha},
      {"disc_beta1", c.disc_adam.beta1},
      {"disc_beta2", c.disc_adam.beta2},
      {"disc_epsilon", c.disc_adam.epsilon},
      {"dim", c.embedding.dim},
      {"heads", c.embedding.heads},
      {"eta", c.embedding.eta},
      {"descendants", c.descendants},
      {"time_input", c.time_input == TimeInput::Parent ? "parent" : "last_event"},
      {"forbid_reactivation", c.forbid_reactivation},
      {"disc_causal", c.disc_causal},
      {"share_embeddings", c.share_embeddings},
      {"paper_literal_signs", c.paper_literal_signs},
      {"time_gradient", c.time_gradient == TimeGradient::Pathwise ? "pathwise" : "none"},
      {"rollout_length", c.rollout_length},
      {"pr_constant", c.pr_constant},
      {"train_fraction", c.train_fraction},
      {"min_length", c.min_length},
      {"checkpoint_every", c.checkpoint_every},
      {"threads", c.threads},
      {"seed", c.seed},
  };
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number_unsigned()) {
      text = std::to_string(value.get<std::uint64_t>());
    } else if (value.is_number_integer()) {
      text = std::to_string(value.get<std::int64_t>());
    } else if (value.is_number()) {
      // Shortest round-trip form keeps doubles exact.
      text = nlohmann::json(value.get<double>()).dump();
    } else {
      throw Error(Errc::ConfigError, "config key '" + key + "' has an unsupported JSON type");
    }
    set_config_value(c, key, text);
  }
  c.validate();
  return c;
}

}  // namespace lantern
