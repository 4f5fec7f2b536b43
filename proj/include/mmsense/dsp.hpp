#pragma once

#include <cstdint>
#include <vector>

#include "mmsense/radar.hpp"

namespace mmsense::dsp {

struct Options {
  /// Periodic Hann taper on both FFT axes. Off by default.
  bool hann_window = false;
};

/// Complex range profile, layout [range bin][chirp][channel].
struct RangeProfile {
  std::uint32_t burst_id = 0;
  std::uint64_t timestamp_us = 0;
  int range_bins = 0;
  int chirps = 0;
  int channels = 0;
  std::vector<Complex> data;

  std::size_t index(int range, int chirp, int channel) const {
    return (static_cast<std::size_t>(range) * chirps + chirp) * channels + channel;
  }
  const Complex& at(int range, int chirp, int channel) const {
    return data[index(range, chirp, channel)];
  }
};

/// Complex range-Doppler map, layout [range bin][doppler bin][channel].
/// Doppler bin P/2 is zero velocity.
struct Crd {
  std::uint32_t burst_id = 0;
  std::uint64_t timestamp_us = 0;
  int range_bins = 0;
  int doppler_bins = 0;
  int channels = 0;
  std::vector<Complex> data;

  std::size_t index(int range, int doppler, int channel) const {
    return (static_cast<std::size_t>(range) * doppler_bins + doppler) * channels + channel;
  }
  const Complex& at(int range, int doppler, int channel) const {
    return data[index(range, doppler, channel)];
  }
};

/// Unnormalized N-point forward DFT over fast time, per chirp and channel.
RangeProfile range_profile(const RawBurst& burst, const Options& options = {});

/// Unnormalized P-point forward DFT over chirps, per range bin and channel,
/// followed by a centre shift of the Doppler axis.
Crd complex_range_doppler(const RangeProfile& rp, const Options& options = {});

/// Elementwise magnitude.
ArdFrame ard(const Crd& crd);

/// ard(complex_range_doppler(range_profile(burst))).
ArdFrame process_burst(const RawBurst& burst, const Options& options = {});

/// As above, but first rejects a burst whose dimensions differ from `config`.
ArdFrame process_burst(const RawBurst& burst, const RadarConfig& config,
                       const Options& options = {});

}  // namespace mmsense::dsp
