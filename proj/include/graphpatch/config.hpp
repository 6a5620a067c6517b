#pragma once

// Flat "key = value" run configuration checked against a per-command schema.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gp {

enum class ValueKind { kString, kInt, kUnsigned, kFloat, kBool };

struct KeySpec {
  std::string key;
  ValueKind kind;
  std::string default_value;  // empty string means "unset"
};

class RunConfig {
 public:
  explicit RunConfig(std::vector<KeySpec> schema);

  /// Parses `key = value` lines; '#' starts a comment. Unknown keys are errors.
  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin = "<config>");
  /// Sets a key after validating the value against its kind.
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_unsigned(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Resolved values in schema order, typed for JSON output.
  std::string to_json() const;
  const std::vector<KeySpec>& schema() const { return schema_; }

 private:
  const KeySpec& spec(const std::string& key) const;

  std::vector<KeySpec> schema_;
  std::map<std::string, std::string> values_;
};

}  // namespace gp
