#include "ov2vss/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace ov::inline OV2VSS_ABI {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void flatten(const nlohmann::json& j, const std::string& prefix, KeyValues& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
    return;
  }
  if (j.is_array()) {
    std::string joined;
    const bool strings = !j.empty() && j.front().is_string();
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i) joined += strings ? "|" : ",";
      joined += j[i].is_string() ? j[i].get<std::string>() : j[i].dump();
    }
    out[prefix] = joined;
    return;
  }
  out[prefix] = j.is_string() ? j.get<std::string>() : j.dump();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return int(x);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
}

std::string fmt_double(double d) {
  std::ostringstream o;
  o.precision(17);
  o << d;
  return o.str();
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join_strings(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "|" : "") + v[i];
  return s;
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& p : split(v, ',')) out.push_back(to_int(key, p));
  return out;
}

}  // namespace

int parse_int(const std::string& key, const std::string& v) { return to_int(key, v); }
double parse_double(const std::string& key, const std::string& v) { return to_double(key, v); }
bool parse_bool(const std::string& key, const std::string& v) { return to_bool(key, v); }
std::vector<std::string> parse_list(const std::string& v) {
  return split(v, v.find('|') != std::string::npos ? '|' : ',');
}

namespace {

struct Field {
  std::string key;
  std::function<std::string(const Settings&)> get;
  std::function<void(Settings&, const std::string&)> set;
};

#define OV_INT(k, member)                                                         \
  Field{k, [](const Settings& s) { return std::to_string(s.member); },            \
        [](Settings& s, const std::string& v) { s.member = to_int(k, v); }}
#define OV_DBL(k, member)                                                         \
  Field{k, [](const Settings& s) { return fmt_double(s.member); },                \
        [](Settings& s, const std::string& v) { s.member = to_double(k, v); }}
#define OV_BOOL(k, member)                                                        \
  Field{k, [](const Settings& s) { return std::string(s.member ? "true" : "false"); }, \
        [](Settings& s, const std::string& v) { s.member = to_bool(k, v); }}
#define OV_STR(k, member)                                                         \
  Field{k, [](const Settings& s) { return s.member; },                            \
        [](Settings& s, const std::string& v) { s.member = v; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      OV_STR("encoders.image", model.encoders.image_encoder),
      OV_STR("encoders.text", model.encoders.text_encoder),
      OV_STR("encoders.weights", model.encoders.weights),
      OV_INT("encoders.levels", model.encoders.levels),
      Field{"encoders.channels", [](const Settings& s) { return join_ints(s.model.encoders.channels); },
            [](Settings& s, const std::string& v) { s.model.encoders.channels = to_ints("encoders.channels", v); }},
      OV_INT("encoders.text_dim", model.encoders.text_dim),
      OV_INT("encoders.text_buckets", model.encoders.text_buckets),
      Field{"encoders.pool_ratios", [](const Settings& s) { return join_ints(s.model.encoders.pool_ratios); },
            [](Settings& s, const std::string& v) { s.model.encoders.pool_ratios = to_ints("encoders.pool_ratios", v); }},
      Field{"encoders.templates", [](const Settings& s) { return join_strings(s.model.encoders.templates); },
            [](Settings& s, const std::string& v) { s.model.encoders.templates = split(v, '|'); }},
      OV_INT("encoders.visual_level", model.encoders.visual_level),
      OV_BOOL("stcf.raw_affinity", model.stcf.raw_affinity),
      OV_INT("stcf.conv_kernel", model.stcf.conv_kernel),
      OV_INT("stcf.attn_dim", model.stcf.attn_dim),
      OV_BOOL("rfe.enabled", model.rfe.enabled),
      Field{"rfe.regions",
            [](const Settings& s) { return s.model.rfe.regions == 0 ? std::string("auto") : std::to_string(s.model.rfe.regions); },
            [](Settings& s, const std::string& v) { s.model.rfe.regions = v == "auto" ? 0 : to_int("rfe.regions", v); }},
      OV_INT("rfe.heads", model.rfe.heads),
      OV_BOOL("rfe.residual", model.rfe.residual),
      OV_INT("rfe.first_level", model.rfe.first_level),
      OV_STR("vte.fusion", model.vte.fusion),
      OV_STR("vte.text_refine", model.vte.text_refine),
      OV_INT("vte.pos_channels", model.vte.pos_channels),
      OV_INT("vte.heads", model.vte.heads),
      OV_INT("vte.head_hidden", model.vte.head_hidden),
      OV_INT("vte.head_kernel", model.vte.head_kernel),
      OV_STR("vte.text_frames", model.vte.text_frames),
      OV_INT("clip.past_frames", clip.past_frames),
      OV_INT("clip.spacing", clip.spacing),
      OV_DBL("train.alpha", train.alpha),
      OV_DBL("train.beta", train.beta),
      OV_INT("train.iterations", train.iterations),
      OV_INT("train.batch_size", train.batch_size),
      OV_DBL("train.lr", train.lr),
      OV_DBL("train.weight_decay", train.weight_decay),
      OV_INT("train.warmup_iters", train.warmup_iters),
      OV_DBL("train.adam_beta1", train.adam_beta1),
      OV_DBL("train.adam_beta2", train.adam_beta2),
      OV_DBL("train.adam_eps", train.adam_eps),
      OV_INT("train.crop", train.crop),
      OV_DBL("train.scale_min", train.scale_min),
      OV_DBL("train.scale_max", train.scale_max),
      OV_STR("train.supervision", train.supervision),
      OV_BOOL("train.mask_unseen", train.mask_unseen),
      OV_INT("train.log_every", train.log_every),
      OV_INT("train.checkpoint_every", train.checkpoint_every),
      Field{"seed", [](const Settings& s) { return std::to_string(s.seed); },
            [](Settings& s, const std::string& v) {
              try {
                s.seed = std::stoull(v);
              } catch (const std::exception&) {
                throw ConfigError("key 'seed' expects a non-negative integer, got '" + v + "'");
              }
            }},
  };
  return table;
}

#undef OV_INT
#undef OV_DBL
#undef OV_BOOL
#undef OV_STR

}  // namespace

KeyValues parse_config_text(const std::string& text) {
  KeyValues out;
  const std::string t = trim(text);
  if (!t.empty() && t.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(t);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid JSON config: ") + e.what());
    }
    flatten(j, "", out);
    return out;
  }
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value'");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

KeyValues load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

KeyValues parse_overrides(const std::vector<std::string>& items) {
  KeyValues out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + item + "' is not key=value");
    out[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  return out;
}

std::vector<std::string> valid_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void apply_settings(Settings& s, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    const Field* found = nullptr;
    for (const auto& f : fields()) {
      if (f.key == key) found = &f;
    }
    if (!found) {
      std::string msg = "unknown config key '" + key + "'; valid keys:";
      for (const auto& k : valid_keys()) msg += " " + k;
      throw ConfigError(msg);
    }
    found->set(s, value);
  }
}

KeyValues settings_to_key_values(const Settings& s) {
  KeyValues kv;
  for (const auto& f : fields()) kv[f.key] = f.get(s);
  return kv;
}

void validate_settings(const Settings& s) {
  const auto& t = s.train;
  if (t.alpha < 0 || t.beta < 0) throw ConfigError("train.alpha and train.beta must be >= 0");
  if (!(t.lr > 0)) throw ConfigError("train.lr must be > 0");
  if (t.iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (t.warmup_iters < 0 || t.warmup_iters > std::max(t.iterations, 0)) {
    if (t.iterations > 0 || t.warmup_iters < 0) {
      throw ConfigError("train.warmup_iters must lie in [0, train.iterations]");
    }
  }
  if (t.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (t.scale_min <= 0 || t.scale_max < t.scale_min) throw ConfigError("train.scale_min/scale_max invalid");
  if (t.supervision != "target" && t.supervision != "all_frames") {
    throw ConfigError("train.supervision must be 'target' or 'all_frames'");
  }
  const auto& m = s.model;
  if (m.encoders.levels < 2) throw ConfigError("encoders.levels must be >= 2");
  if (int(m.encoders.channels.size()) != m.encoders.levels) {
    throw ConfigError("encoders.channels must list one width per level");
  }
  if (m.encoders.pool_ratios.empty()) throw ConfigError("encoders.pool_ratios must not be empty");
  if (m.encoders.templates.empty()) throw ConfigError("encoders.templates must not be empty");
  if (m.encoders.visual_level < 1 || m.encoders.visual_level > m.encoders.levels) {
    throw ConfigError("encoders.visual_level out of range");
  }
  if (m.rfe.first_level < 1 || m.rfe.first_level > m.encoders.levels) {
    throw ConfigError("rfe.first_level out of range");
  }
  if (m.stcf.conv_kernel < 1 || m.stcf.conv_kernel % 2 == 0) throw ConfigError("stcf.conv_kernel must be odd");
  if (m.vte.fusion != "concat" && m.vte.fusion != "add") throw ConfigError("vte.fusion must be concat or add");
  if (m.vte.text_refine != "mhsa" && m.vte.text_refine != "mhsa+ffn" && m.vte.text_refine != "off") {
    throw ConfigError("vte.text_refine must be mhsa, mhsa+ffn or off");
  }
  if (m.vte.text_frames != "clip" && m.vte.text_frames != "target") {
    throw ConfigError("vte.text_frames must be clip or target");
  }
  if (m.vte.head_kernel < 1 || m.vte.head_kernel % 2 == 0) throw ConfigError("vte.head_kernel must be odd");
  if (s.clip.past_frames < 0 || s.clip.spacing < 1) throw ConfigError("clip.past_frames/spacing invalid");
  const int dim = m.encoders.text_dim;
  if (m.vte.heads < 1 || dim % m.vte.heads != 0) throw ConfigError("encoders.text_dim must be divisible by vte.heads");
  if (m.rfe.heads < 1 || dim % m.rfe.heads != 0) throw ConfigError("encoders.text_dim must be divisible by rfe.heads");
}

std::string settings_fingerprint(const Settings& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [k, v] : settings_to_key_values(s)) {
    for (char c : k + "=" + v + "\n") {
      h ^= std::uint8_t(c);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream o;
  o << std::hex;
  o.width(16);
  o.fill('0');
  o << h;
  return o.str();
}

}  // namespace ov::inline OV2VSS_ABI
