#include "graphpatch/config.hpp"

#include "graphpatch/tensor.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gp {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
bool parse_integer(const std::string& text, T& out) {
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(text, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == text.size() && std::isfinite(out);
}

bool parse_bool(const std::string& text, bool& out) {
  if (text == "true" || text == "1" || text == "yes") {
    out = true;
    return true;
  }
  if (text == "false" || text == "0" || text == "no") {
    out = false;
    return true;
  }
  return false;
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

RunConfig::RunConfig(std::vector<KeySpec> schema) : schema_(std::move(schema)) {
  for (const auto& s : schema_)
    if (!s.default_value.empty()) set(s.key, s.default_value);
}

const KeySpec& RunConfig::spec(const std::string& key) const {
  auto it = std::find_if(schema_.begin(), schema_.end(), [&](const KeySpec& s) { return s.key == key; });
  if (it == schema_.end()) throw Error("unknown config key '" + key + "'");
  return *it;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  load_text(buffer.str(), path.string());
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    try {
      set(key, unquote(trim(line.substr(eq + 1))));
    } catch (const Error& e) {
      throw Error(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec& s = spec(key);
  bool ok = true;
  switch (s.kind) {
    case ValueKind::kString:
      break;
    case ValueKind::kInt: {
      std::int64_t v;
      ok = parse_integer(value, v);
      break;
    }
    case ValueKind::kUnsigned: {
      std::uint64_t v;
      ok = parse_integer(value, v);
      break;
    }
    case ValueKind::kFloat: {
      double v;
      ok = parse_double(value, v);
      break;
    }
    case ValueKind::kBool: {
      bool v;
      ok = parse_bool(value, v);
      break;
    }
  }
  if (!ok) throw Error("invalid value '" + value + "' for key '" + key + "'");
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
  spec(key);
  return values_.count(key) > 0;
}

const std::string& RunConfig::get_string(const std::string& key) const {
  spec(key);
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("missing required setting '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  std::int64_t v = 0;
  parse_integer(get_string(key), v);
  return v;
}

std::uint64_t RunConfig::get_unsigned(const std::string& key) const {
  std::uint64_t v = 0;
  parse_integer(get_string(key), v);
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0;
  parse_double(get_string(key), v);
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  bool v = false;
  parse_bool(get_string(key), v);
  return v;
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& s : schema_) {
    auto it = values_.find(s.key);
    if (it == values_.end()) {
      j[s.key] = nullptr;
      continue;
    }
    switch (s.kind) {
      case ValueKind::kString: j[s.key] = it->second; break;
      case ValueKind::kInt: j[s.key] = get_int(s.key); break;
      case ValueKind::kUnsigned: j[s.key] = get_unsigned(s.key); break;
      case ValueKind::kFloat: j[s.key] = get_double(s.key); break;
      case ValueKind::kBool: j[s.key] = get_bool(s.key); break;
    }
  }
  return j.dump(2);
}

}  // namespace gp
