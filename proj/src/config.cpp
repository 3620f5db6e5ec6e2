#include "zol/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "zol/errors.hpp"

namespace zol::cli {

namespace {

enum class Kind { kDouble, kInt, kUInt, kBool, kString, kIntList, kUIntList };

struct KeySpec {
  const char* name;
  Kind kind;
  double lo;
  double hi;
  bool hi_exclusive;
  const char* def;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

// Every tunable exposed by the pipeline, with its declared range and default.
const KeySpec kKeys[] = {
    // data collection
    {"sigma", Kind::kDouble, 1e-6, kInf, false, "0.6"},
    {"n_records", Kind::kUInt, 0, kInf, false, "100000"},
    {"seed", Kind::kUInt, 0, kInf, false, "0"},
    {"csv", Kind::kBool, 0, 1, false, "0"},
    // model
    {"d", Kind::kInt, 2, 4096, false, "32"},
    {"gamma", Kind::kDouble, 0.0, 1.0, true, "0.98"},
    {"f_hidden", Kind::kIntList, 1, 1 << 20, false, "128,128"},
    {"b_hidden", Kind::kIntList, 1, 1 << 20, false, "128"},
    {"hidden_act", Kind::kString, 0, 0, false, "tanh"},
    {"b_output", Kind::kString, 0, 0, false, "l2norm"},
    {"b_state_action", Kind::kBool, 0, 1, false, "0"},
    // FB pretraining
    {"fb_steps", Kind::kInt, 0, kInf, false, "16000"},
    {"fb_batch", Kind::kInt, 1, kInf, false, "256"},
    {"fb_lr", Kind::kDouble, 1e-12, kInf, false, "0.001"},
    {"fb_lr_final", Kind::kDouble, 0.0, kInf, false, "0.0001"},
    {"polyak_tau", Kind::kDouble, 1e-12, 1.0, false, "0.01"},
    {"ortho_coef", Kind::kDouble, 0.0, kInf, false, "1.0"},
    {"latent_mix", Kind::kDouble, 0.0, 1.0, false, "0.5"},
    // latent adaptation
    {"eta", Kind::kDouble, 1e-12, kInf, false, "0.0005"},
    {"steps", Kind::kInt, 0, kInf, false, "200"},
    {"lambda_chi", Kind::kDouble, 0.0, kInf, false, "0.001"},
    {"lambda_trust", Kind::kDouble, 0.0, kInf, false, "0.02"},
    {"weight_clip", Kind::kDouble, 1e-12, kInf, false, "100"},
    {"reset_samples", Kind::kInt, 1, kInf, false, "256"},
    {"batch_size", Kind::kInt, 1, kInf, false, "1024"},
    {"norm_eps", Kind::kDouble, 1e-300, kInf, false, "1e-6"},
    {"grad_clip", Kind::kDouble, 1e-12, kInf, false, "10"},
    {"center_global", Kind::kBool, 0, 1, false, "0"},
    {"infer_samples", Kind::kInt, 1, kInf, false, "4096"},
    {"task", Kind::kString, 0, 0, false, "cross"},
    {"seeds", Kind::kUIntList, 0, kInf, false, "0,1,2,3,4"},
    // verification
    {"verify_instances", Kind::kInt, 1, kInf, false, "50"},
    // paths
    {"dataset", Kind::kString, 0, 0, false, ""},
    {"checkpoint", Kind::kString, 0, 0, false, ""},
    {"out", Kind::kString, 0, 0, false, "runs"},
};

const KeySpec* find_key(const std::string& name) {
  for (const KeySpec& k : kKeys) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& v, const std::string& where) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (...) {
    throw ConfigError(where + ": not a number: '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError(where + ": trailing junk in number: '" + v + "'");
  if (!std::isfinite(x)) throw ConfigError(where + ": value must be finite");
  return x;
}

void check_range(const KeySpec& spec, double x, const std::string& where) {
  const bool too_high = spec.hi_exclusive ? x >= spec.hi : x > spec.hi;
  if (x < spec.lo || too_high) {
    std::ostringstream os;
    os << where << ": value " << x << " out of range [" << spec.lo << ", " << spec.hi
       << (spec.hi_exclusive ? ")" : "]") << " for key '" << spec.name << "'";
    throw ConfigError(os.str());
  }
}

void validate_value(const KeySpec& spec, const std::string& value, const std::string& where) {
  switch (spec.kind) {
    case Kind::kDouble:
      check_range(spec, parse_double(value, where), where);
      break;
    case Kind::kInt:
    case Kind::kUInt: {
      const double x = parse_double(value, where);
      if (x != std::floor(x)) throw ConfigError(where + ": expected an integer");
      if (spec.kind == Kind::kUInt && x < 0) throw ConfigError(where + ": expected >= 0");
      check_range(spec, x, where);
      break;
    }
    case Kind::kBool:
      if (value != "0" && value != "1") {
        throw ConfigError(where + ": expected 0 or 1 for key '" + std::string(spec.name) + "'");
      }
      break;
    case Kind::kString:
      break;
    case Kind::kIntList:
    case Kind::kUIntList: {
      std::stringstream ss(value);
      std::string item;
      bool any = false;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(where + ": empty list element");
        const double x = parse_double(item, where);
        if (x != std::floor(x)) throw ConfigError(where + ": expected integer list");
        check_range(spec, x, where);
        any = true;
      }
      if (!any) throw ConfigError(where + ": empty list");
      break;
    }
  }
}

}  // namespace

RunConfig RunConfig::parse_string(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const KeySpec* spec = find_key(key);
    if (spec == nullptr) throw ConfigError(where + ": unknown key '" + key + "'");
    if (cfg.values_.count(key) > 0) throw ConfigError(where + ": duplicate key '" + key + "'");
    validate_value(*spec, value, where);
    cfg.values_.emplace(key, value);
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str(), path);
}

std::string RunConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) throw ConfigError("unknown config key '" + key + "'");
  return spec->def;
}

double RunConfig::get_double(const std::string& key) const {
  return parse_double(raw(key), "config key '" + key + "'");
}

long RunConfig::get_int(const std::string& key) const {
  return static_cast<long>(get_double(key));
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  const double x = get_double(key);
  return static_cast<std::uint64_t>(x);
}

bool RunConfig::get_bool(const std::string& key) const { return raw(key) == "1"; }

std::string RunConfig::get_string(const std::string& key) const { return raw(key); }

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<int>(std::stod(item)));
  }
  return out;
}

std::vector<std::uint64_t> RunConfig::get_uint_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<std::uint64_t>(std::stod(item)));
  }
  return out;
}

std::string RunConfig::describe() const {
  std::ostringstream os;
  for (const KeySpec& k : kKeys) {
    os << k.name << " = " << raw(k.name) << '\n';
  }
  return os.str();
}

}  // namespace zol::cli
