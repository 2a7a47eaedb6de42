#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "tightham/errors.hpp"
#include "tightham/hypergraph.hpp"

namespace tightham {

/// Packs vertex sets of size <= r into one 64-bit word. Each slot stores v+1 so
/// sets of different sizes never collide; slots are filled in ascending order.
class SetPacker {
 public:
  SetPacker() = default;
  SetPacker(std::size_t n, int r)
      : bits_(std::max(1, static_cast<int>(std::bit_width(static_cast<std::uint64_t>(n))))), r_(r) {
    if (bits_ * r > 64) {
      throw invalid_input("KeyWidth", "r * ceil(log2(n+1)) must be <= 64 for compact exposure keys");
    }
  }

  int bits() const { return bits_; }

  /// Packs an arbitrary-order set; the input need not be sorted.
  std::uint64_t pack(std::span<const VertexId> vs) const {
    VertexId buf[16];
    const std::size_t k = vs.size();
    std::copy(vs.begin(), vs.end(), buf);
    std::sort(buf, buf + k);
    return pack_sorted(std::span<const VertexId>(buf, k));
  }

  std::uint64_t pack_sorted(std::span<const VertexId> vs) const {
    std::uint64_t key = 0;
    for (VertexId v : vs) key = (key << bits_) | (static_cast<std::uint64_t>(v) + 1);
    return key;
  }

  std::vector<VertexId> unpack(std::uint64_t key) const {
    std::vector<VertexId> out;
    const std::uint64_t mask = (std::uint64_t{1} << bits_) - 1;
    while (key != 0) {
      out.push_back(static_cast<VertexId>((key & mask) - 1));
      key >>= bits_;
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  int bits_ = 1;
  int r_ = 0;
};

}  // namespace tightham
