#include "advspk/parameters.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace advspk {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian host");

void Parameters::add(const std::string& name, Tensor value, bool trainable) {
  if (name.empty()) throw std::invalid_argument("parameters: empty name");
  auto [it, inserted] = entries_.emplace(name, Parameter{std::move(value), trainable});
  if (!inserted) throw std::invalid_argument("parameters: duplicate name '" + name + "'");
}

const Parameter& Parameters::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("parameters: no entry '" + name + "'");
  return it->second;
}

Parameter& Parameters::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("parameters: no entry '" + name + "'");
  return it->second;
}

std::vector<std::string> Parameters::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t Parameters::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : entries_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

bool operator==(const Parameters& a, const Parameters& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  auto ib = b.entries_.begin();
  for (const auto& [name, p] : a.entries_) {
    if (name != ib->first || p.trainable != ib->second.trainable || !(p.value == ib->second.value)) {
      return false;
    }
    ++ib;
  }
  return true;
}

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'S', 'P', 'K', 'P', 'R'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("parameters: truncated container");
  return v;
}

}  // namespace

void write_parameters(std::ostream& out, const Parameters& params) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kParameterFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, p.trainable ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) put<std::uint64_t>(out, d);
    std::vector<float> buf(p.value.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(p.value[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw FormatError("parameters: write failed");
}

Parameters read_parameters(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("parameters: bad magic, not a parameter container");
  }
  auto version = get<std::uint32_t>(in);
  if (version != kParameterFormatVersion) {
    throw FormatError("parameters: unsupported format version " + std::to_string(version));
  }
  auto count = get<std::uint32_t>(in);
  Parameters params;
  for (std::uint32_t e = 0; e < count; ++e) {
    auto len = get<std::uint32_t>(in);
    if (len > 4096) throw FormatError("parameters: implausible name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    bool trainable = get<std::uint8_t>(in) != 0;
    auto rank = get<std::uint32_t>(in);
    if (rank == 0 || rank > 8) throw FormatError("parameters: bad rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
    std::vector<float> buf(element_count(shape));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError("parameters: truncated data for '" + name + "'");
    std::vector<double> data(buf.begin(), buf.end());
    params.add(name, Tensor(std::move(shape), std::move(data)), trainable);
  }
  return params;
}

void save_parameters(const std::filesystem::path& path, const Parameters& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("parameters: cannot open " + path.string() + " for writing");
  write_parameters(out, params);
}

Parameters load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("parameters: cannot open " + path.string());
  return read_parameters(in);
}

void quantize_to_f32(Parameters& params) {
  for (auto& [_, p] : params) {
    for (auto& v : p.value.storage()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace advspk
