#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace granlab {

/// Ordered key=value store used for run configs, checkpoint headers and
/// reports. One entry per line, '#' starts a comment, blank lines are
/// ignored. Setting an existing key replaces it in place.
class KeyValues {
 public:
  // Throws UsageError naming the line for anything that is not key=value.
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::string& path);

  std::string serialize() const;
  void save(const std::string& path) const;

  void set(const std::string& key, std::string value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::size_t value);
  void set(const std::string& key, bool value) = delete;

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  const std::string& require(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  // Later entries win.
  void merge(const KeyValues& other);

  std::vector<std::string> keys() const;
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest text that reads back to the same double.
std::string format_real(double v);

double parse_real(const std::string& text, const std::string& what);
std::size_t parse_count(const std::string& text, const std::string& what);
std::vector<std::size_t> parse_count_list(const std::string& text,
                                          const std::string& what);
std::string join_counts(const std::vector<std::size_t>& values, char sep = ',');

}  // namespace granlab
