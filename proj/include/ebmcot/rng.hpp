#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "ebmcot/tensor.hpp"

namespace ebmcot {

// Deterministic counter-based random stream. A stream is keyed by
// (seed, purpose, indices...), so any consumer can reconstruct exactly the
// draws it needs without threading generator state through the call graph.
// Two streams with different keys are independent for our purposes.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view purpose,
            std::initializer_list<std::uint64_t> indices = {});

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double gaussian();                     // standard normal
  int uniform_int(int lo, int hi);       // inclusive on both ends

  Tensor gaussian_tensor(std::vector<int> shape, double stddev = 1.0);

  // Fisher-Yates over indices [0, n)
  std::vector<int> permutation(int n);

 private:
  std::uint64_t state_;
};

}  // namespace ebmcot
