#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmsense/dsp.hpp"
#include "mmsense/radar.hpp"
#include "mmsense/scene.hpp"
#include "mmsense/transdope.hpp"

namespace mmsense::bench {

/// Summary of a latency sample, in microseconds.
struct LatencyStats {
  std::size_t count = 0;
  double min = 0.0;
  double mean = 0.0;
  double p95 = 0.0;
  double max = 0.0;

  /// p95 is the nearest-rank percentile.
  static LatencyStats from(std::vector<double> samples);
};

struct BenchOptions {
  std::uint64_t bursts = 10000;
  ScenePreset preset = ScenePreset::crowd_one_metal;
  std::uint64_t seed = 7;
  RadarConfig config;
  dsp::Options dsp;
  /// Distinct synthetic bursts generated up front and cycled through.
  int burst_pool = 100;
  /// Run the staged concurrent pipeline instead of the single-threaded loop.
  bool pipeline = false;
  /// Pipeline only: feed at this rate with drop-oldest hand-offs. Zero feeds
  /// as fast as the stages accept (blocking hand-offs, no drops).
  double rate_hz = 0.0;
  /// Timed repetitions of the 1x8 / 2x8 comparison.
  int ratio_repeats = 21;
};

struct BenchReport {
  std::string mode;  // "single" or "pipeline"
  std::string machine;
  std::uint64_t bursts = 0;
  std::uint64_t processed = 0;
  std::uint64_t detections = 0;
  std::uint64_t drops = 0;
  double wall_s = 0.0;
  double throughput = 0.0;  // processed bursts per second of wall time
  LatencyStats decode, dsp, inference;
  LatencyStats total;  // per-burst end to end
  double stage_sum_mean_us = 0.0;  // decode.mean + dsp.mean + inference.mean
  /// Median full forward pass on one 8-frame sequence, and on two.
  double sequence_1x8_ms = 0.0;
  double sequence_2x8_ms = 0.0;
  double ratio_2x8 = 0.0;
  double per_frame_ms = 0.0;  // sequence_1x8_ms / seq_len
};

std::string machine_descriptor();

/// Feeds encoded synthetic bursts through decode -> DSP -> sliding-window
/// inference and times every stage.
BenchReport run_bench(const transdope::TransDopeModel& model, const BenchOptions& options);

/// One `key=value` per line.
std::string format_report(const BenchReport& report);

}  // namespace mmsense::bench
