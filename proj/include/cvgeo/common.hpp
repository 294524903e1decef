#pragma once

#include <atomic>
#include <cstdint>

namespace cvgeo {

/// Call counters for the training-only paths. Inference must leave them alone.
struct Instrumentation {
  std::atomic<std::uint64_t> pano_to_bev{0};
  std::atomic<std::uint64_t> pcm_loss{0};

  void reset() {
    pano_to_bev = 0;
    pcm_loss = 0;
  }
};

inline Instrumentation& instrumentation() {
  static Instrumentation counters;
  return counters;
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

}  // namespace cvgeo
