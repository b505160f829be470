#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "advspk/tensor.hpp"

namespace advspk {

struct Parameter {
  Tensor value;
  bool trainable = true;
};

/// Named parameter set. Iteration order is lexicographic by name, which keeps
/// optimizer updates and serialization deterministic.
class Parameters {
 public:
  void add(const std::string& name, Tensor value, bool trainable = true);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& value(const std::string& name) { return at(name).value; }

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  /// Scalar count over trainable entries.
  std::size_t trainable_count() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  friend bool operator==(const Parameters& a, const Parameters& b);

 private:
  std::map<std::string, Parameter> entries_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary container: magic "ADVSPKPR", u32 format version, u32 entry count, then
// per entry (sorted by name): u32 name length, name bytes, u8 trainable flag,
// u32 rank, u64 dims, little-endian float32 row-major values.
inline constexpr std::uint32_t kParameterFormatVersion = 1;

void write_parameters(std::ostream& out, const Parameters& params);
Parameters read_parameters(std::istream& in);
void save_parameters(const std::filesystem::path& path, const Parameters& params);
Parameters load_parameters(const std::filesystem::path& path);

/// Rounds every value to float32, matching what a save/load cycle produces.
void quantize_to_f32(Parameters& params);

}  // namespace advspk
