#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stop_token>

#include "mmsense/dsp.hpp"
#include "mmsense/net.hpp"
#include "mmsense/radar.hpp"
#include "mmsense/scene.hpp"
#include "mmsense/transdope.hpp"
#include "mmsense/wire.hpp"

namespace mmsense::stream {

/// Depth-1 hand-off between two threads.
///
/// push() keeps only the newest item: an unconsumed older item is discarded
/// and counted as a drop. push_wait() instead blocks until the slot is free.
template <typename T>
class LatestSlot {
 public:
  /// Returns true if an unconsumed item was overwritten.
  bool push(T item) {
    std::lock_guard lock(mutex_);
    const bool dropped = value_.has_value();
    if (dropped) ++drops_;
    value_ = std::move(item);
    ready_.notify_all();
    return dropped;
  }

  /// Blocks while the slot is full. Returns false if stopped or closed.
  bool push_wait(T item, std::stop_token stop = {}) {
    std::unique_lock lock(mutex_);
    ready_.wait(lock, stop, [&] { return !value_.has_value() || closed_; });
    if (stop.stop_requested() || closed_) return false;
    value_ = std::move(item);
    ready_.notify_all();
    return true;
  }

  /// Waits for an item. nullopt once closed and drained, or on stop.
  std::optional<T> pop_wait(std::stop_token stop = {}) {
    std::unique_lock lock(mutex_);
    ready_.wait(lock, stop, [&] { return value_.has_value() || closed_; });
    return take(lock);
  }

  std::optional<T> try_pop() {
    std::unique_lock lock(mutex_);
    return take(lock);
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    ready_.notify_all();
  }

  std::uint64_t drops() const {
    std::lock_guard lock(mutex_);
    return drops_;
  }

 private:
  std::optional<T> take(std::unique_lock<std::mutex>&) {
    std::optional<T> out = std::move(value_);
    value_.reset();
    if (out) ready_.notify_all();
    return out;
  }

  mutable std::mutex mutex_;
  std::condition_variable_any ready_;
  std::optional<T> value_;
  bool closed_ = false;
  std::uint64_t drops_ = 0;
};

/// Deterministic live burst source for a scene preset. The scene is redrawn
/// every `segment_bursts` bursts so walking scatterers stay in range.
class BurstSource {
 public:
  BurstSource(ScenePreset preset, std::uint64_t seed, RadarConfig config, SceneKnobs knobs = {},
              int segment_bursts = 25);

  RawBurst burst(std::uint32_t burst_id, std::uint64_t timestamp_us) const;
  const RadarConfig& config() const { return config_; }

 private:
  ScenePreset preset_;
  std::uint64_t seed_;
  RadarConfig config_;
  SceneKnobs knobs_;
  int segment_bursts_;
};

struct ProducerOptions {
  ScenePreset preset = ScenePreset::crowd_one_metal;
  net::Endpoint endpoint;
  double rate_hz = 25.0;
  std::uint64_t seed = 7;
  RadarConfig config;
  SceneKnobs knobs;
  int segment_bursts = 25;
  /// Stop after this many bursts (the service runs forever otherwise).
  std::optional<std::uint64_t> max_bursts;
  /// Start the burst clock only once the first consumer has connected.
  bool wait_for_consumer = true;
  /// SO_SNDBUF for accepted connections; 0 keeps the kernel default.
  int send_buffer_bytes = 0;
  std::function<void(std::uint16_t port)> on_listening;
};

struct ProducerStats {
  std::uint64_t generated = 0;
  std::uint64_t sent = 0;
  std::uint64_t dropped = 0;         // overwritten in the depth-1 slot
  std::uint64_t lost_on_disconnect = 0;
  std::uint64_t connections = 0;
};

/// Serves bursts at rate_hz to one consumer at a time. Every new connection
/// first receives a config frame. Bursts are never queued beyond one: if the
/// transport is still busy when the next burst is due, the stale one is
/// dropped.
ProducerStats run_producer(const ProducerOptions& options, std::stop_token stop = {});

struct ConsumerOptions {
  net::Endpoint endpoint;
  const transdope::TransDopeModel* model = nullptr;
  double threshold = 0.5;
  dsp::Options dsp;
  std::chrono::milliseconds connect_timeout{5000};
  /// Stop after this many bursts have been processed.
  std::optional<std::uint64_t> max_bursts;
  /// Called before each burst is processed; tests use it to stall the stage.
  std::function<void(std::uint32_t burst_id)> before_process;
  /// SO_RCVBUF for the connection; 0 keeps the kernel default.
  int recv_buffer_bytes = 0;
};

struct ConsumerStats {
  std::uint64_t frames_received = 0;
  std::uint64_t bursts_processed = 0;
  std::uint64_t detections = 0;
  std::uint64_t dropped = 0;  // overwritten in the decode->process slot
  std::uint64_t malformed = 0;
  std::uint64_t crc_errors = 0;
  std::uint64_t out_of_order = 0;
  std::uint64_t config_frames = 0;
};

/// Connects to a producer, decodes frames on a reader thread and hands the
/// newest burst to the processing stage (DSP, sliding 8-frame window,
/// inference). One Detection per burst once the window is full, in burst
/// order. Returns when the producer closes, max_bursts is reached, or stop
/// is requested.
ConsumerStats run_consumer(const ConsumerOptions& options,
                           const std::function<void(const wire::Detection&)>& on_detection,
                           std::stop_token stop = {});

}  // namespace mmsense::stream
