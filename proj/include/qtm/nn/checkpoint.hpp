#pragma once

#include "qtm/common/binary_io.hpp"
#include "qtm/nn/layers.hpp"

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace qtm::nn {

// Layout, all integers little-endian:
//   char[8]  "QTMPARAM"
//   u32      version (1)
//   u64      tensor count
//   per tensor: u64 name length, name bytes, u64 rows, u64 cols
//   per tensor, in table order: rows*cols doubles, row-major
inline constexpr char kParamMagic[8] = {'Q', 'T', 'M', 'P', 'A', 'R', 'A', 'M'};
inline constexpr std::uint32_t kParamVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void save_parameters(std::ostream& os, const ParamList& ps) {
  os.write(kParamMagic, sizeof kParamMagic);
  io::write_pod(os, kParamVersion);
  io::write_pod<std::uint64_t>(os, ps.size());
  for (const Parameter* p : ps) {
    io::write_string(os, p->name);
    io::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.rows()));
    io::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.cols()));
  }
  for (const Parameter* p : ps) io::write_doubles(os, p->value.data(), static_cast<std::size_t>(p->value.size()));
  if (!os) throw CheckpointError("save_parameters: write failed");
}

/// Loads into existing parameters; names and shapes must match exactly.
inline void load_parameters(std::istream& is, const ParamList& ps) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + 8, kParamMagic)) throw CheckpointError("load_parameters: bad magic");
  const auto version = io::read_pod<std::uint32_t>(is);
  if (version != kParamVersion) throw CheckpointError("load_parameters: unsupported version " + std::to_string(version));
  const auto n = io::read_pod<std::uint64_t>(is);
  if (n != ps.size())
    throw CheckpointError("load_parameters: expected " + std::to_string(ps.size()) + " tensors, found " +
                          std::to_string(n));
  for (const Parameter* p : ps) {
    const std::string name = io::read_string(is);
    const auto r = io::read_pod<std::uint64_t>(is);
    const auto c = io::read_pod<std::uint64_t>(is);
    if (name != p->name) throw CheckpointError("load_parameters: expected tensor " + p->name + ", found " + name);
    if (r != static_cast<std::uint64_t>(p->value.rows()) || c != static_cast<std::uint64_t>(p->value.cols()))
      throw CheckpointError("load_parameters: shape mismatch for " + name);
  }
  for (Parameter* p : ps) {
    io::read_doubles(is, p->value.data(), static_cast<std::size_t>(p->value.size()));
    p->zero_grad();
  }
}

}  // namespace qtm::nn
