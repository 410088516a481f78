#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ounet {

// Row index meaning "no node here"; gathers through it read a zero row.
inline constexpr std::int32_t kSentinel = -1;

// Dense row-major table of row indices (rows x cols), e.g. 27 neighbours per node.
struct IndexTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> data;

  IndexTable() = default;
  IndexTable(std::size_t r, std::size_t c, std::int32_t fill = kSentinel)
      : rows(r), cols(c), data(r * c, fill) {}

  static IndexTable column(std::vector<std::int32_t> idx) {
    IndexTable t;
    t.rows = idx.size();
    t.cols = 1;
    t.data = std::move(idx);
    return t;
  }

  std::int32_t& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  std::int32_t operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const IndexTable&, const IndexTable&) = default;
};

}  // namespace ounet
