#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

namespace fhvae {

// Flat key=value configuration with [section] grouping. Keys are stored as
// "section.key"; lookups fall back to the supplied default so every field
// always has a value. Flag overrides are applied with set().
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_stream(std::istream& is, const std::string& origin);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Sections sorted, keys sorted within each section.
  void dump(std::ostream& os) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fhvae
