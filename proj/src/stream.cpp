#include "mmsense/stream.hpp"

#include <atomic>
#include <deque>
#include <thread>

#include "mmsense/rng.hpp"

namespace mmsense::stream {

using Clock = std::chrono::steady_clock;

BurstSource::BurstSource(ScenePreset preset, std::uint64_t seed, RadarConfig config, SceneKnobs knobs,
                         int segment_bursts)
    : preset_(preset), seed_(seed), config_(config), knobs_(knobs), segment_bursts_(segment_bursts) {
  if (segment_bursts_ < 1) throw Error("segment_bursts must be >= 1");
}

RawBurst BurstSource::burst(std::uint32_t burst_id, std::uint64_t timestamp_us) const {
  const std::uint32_t segment = burst_id / static_cast<std::uint32_t>(segment_bursts_);
  const std::uint32_t offset = burst_id % static_cast<std::uint32_t>(segment_bursts_);
  const Scene scene = make_scene(preset_, derive_seed({seed_, segment}), config_, knobs_);
  RawBurst b = synthesize_burst(scene, config_, offset / config_.burst_rate_hz(), burst_id);
  b.timestamp_us = timestamp_us;
  return b;
}

ProducerStats run_producer(const ProducerOptions& options, std::stop_token stop) {
  if (!(options.rate_hz > 0.0)) throw Error("producer rate must be > 0");
  const BurstSource source(options.preset, options.seed, options.config, options.knobs, options.segment_bursts);
  auto listener = net::TcpListener::bind(options.endpoint);
  if (options.on_listening) options.on_listening(listener.port());

  LatestSlot<RawBurst> slot;
  std::atomic<std::uint64_t> generated{0};
  std::atomic<bool> clock_started{!options.wait_for_consumer};
  std::stop_source generator_stop;

  std::jthread generator([&](std::stop_token) {
    const auto interval = std::chrono::duration<double>(1.0 / options.rate_hz);
    {
      // Wait for the first consumer when asked to.
      while (!clock_started.load() && !stop.stop_requested() && !generator_stop.stop_requested()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
    }
    const auto start = Clock::now();
    for (std::uint64_t id = 0; !options.max_bursts || id < *options.max_bursts; ++id) {
      const auto due = start + std::chrono::duration_cast<Clock::duration>(interval * static_cast<double>(id));
      while (Clock::now() < due) {
        if (stop.stop_requested() || generator_stop.stop_requested()) {
          slot.close();
          return;
        }
        std::this_thread::sleep_until(std::min(due, Clock::now() + std::chrono::milliseconds(20)));
      }
      const auto timestamp = static_cast<std::uint64_t>(std::llround(id * 1e6 / options.rate_hz));
      slot.push(source.burst(static_cast<std::uint32_t>(id), timestamp));
      generated.fetch_add(1);
    }
    slot.close();
  });

  ProducerStats stats;
  const auto config_bytes = wire::encode_frame(wire::make_config_frame(options.config));
  std::vector<std::uint8_t> buffer;
  bool finished = false;
  while (!finished && !stop.stop_requested()) {
    auto conn = listener.accept_for(std::chrono::milliseconds(50));
    if (!conn) continue;
    ++stats.connections;
    if (options.send_buffer_bytes > 0) conn->set_send_buffer(options.send_buffer_bytes);
    if (!conn->send_all(config_bytes, stop)) continue;
    clock_started.store(true);
    while (true) {
      auto burst = slot.pop_wait(stop);
      if (!burst) {
        finished = true;
        break;
      }
      buffer.clear();
      wire::encode_frame_into(wire::make_burst_frame(*burst), buffer);
      if (!conn->send_all(buffer, stop)) {
        if (!stop.stop_requested()) ++stats.lost_on_disconnect;
        break;  // reconnect: the next consumer gets a fresh config frame
      }
      ++stats.sent;
    }
    conn->shutdown();
  }
  generator_stop.request_stop();
  generator.join();
  stats.generated = generated.load();
  stats.dropped = slot.drops();
  return stats;
}

ConsumerStats run_consumer(const ConsumerOptions& options,
                           const std::function<void(const wire::Detection&)>& on_detection,
                           std::stop_token stop) {
  if (options.model == nullptr) throw Error("consumer needs a model");
  const auto& model = *options.model;
  auto conn = net::TcpStream::connect(options.endpoint, options.connect_timeout);
  if (options.recv_buffer_bytes > 0) conn.set_recv_buffer(options.recv_buffer_bytes);

  ConsumerStats stats;
  LatestSlot<RawBurst> slot;
  std::atomic<std::uint64_t> frames{0}, bad_payloads{0}, rejected{0}, crc_errors{0}, configs{0};
  std::stop_source reader_stop;
  std::exception_ptr reader_error;

  std::jthread reader([&](std::stop_token) {
    try {
      wire::StreamParser parser;
      std::vector<std::uint8_t> buf(64 * 1024);
      std::optional<RadarConfig> config;
      while (!stop.stop_requested() && !reader_stop.stop_requested()) {
        const auto n = conn.recv_for(buf, std::chrono::milliseconds(20));
        if (!n) continue;
        if (*n == 0) break;
        parser.feed({buf.data(), *n});
        while (auto frame = parser.next()) {
          frames.fetch_add(1);
          if (frame->kind == wire::FrameKind::config) {
            config = wire::config_from_frame(*frame);
            if (config->samples() != model.config.range_bins || config->chirps() != model.config.doppler_bins ||
                config->channels() != model.config.channels) {
              throw Error("producer radar config does not match the model input shape");
            }
            configs.fetch_add(1);
          } else if (frame->kind == wire::FrameKind::burst) {
            try {
              slot.push(wire::burst_from_frame(*frame, config.value_or(RadarConfig{})));
            } catch (const Error&) {
              bad_payloads.fetch_add(1);
            }
          }
        }
        crc_errors.store(parser.crc_errors());
        rejected.store(parser.rejected_frames());
      }
    } catch (...) {
      reader_error = std::current_exception();
    }
    slot.close();
  });

  transdope::StreamingClassifier classifier(model);
  std::deque<std::uint32_t> window_ids;
  std::optional<std::uint32_t> last_id;
  std::vector<float> frame_values;
  while (true) {
    if (options.max_bursts && stats.bursts_processed >= *options.max_bursts) break;
    auto burst = slot.pop_wait(stop);
    if (!burst) break;
    if (last_id && burst->burst_id <= *last_id) {
      ++stats.out_of_order;
      continue;
    }
    last_id = burst->burst_id;
    if (options.before_process) options.before_process(burst->burst_id);

    const ArdFrame ard = dsp::process_burst(*burst, options.dsp);
    frame_values.assign(ard.values.begin(), ard.values.end());
    const auto t0 = Clock::now();
    const auto probability = classifier.push(frame_values);
    const auto t1 = Clock::now();
    ++stats.bursts_processed;
    window_ids.push_back(burst->burst_id);
    while (window_ids.size() > static_cast<std::size_t>(model.config.seq_len)) window_ids.pop_front();
    if (probability) {
      wire::Detection d;
      d.first_burst_id = window_ids.front();
      d.last_burst_id = burst->burst_id;
      d.probability = *probability;
      d.decision = *probability >= options.threshold;
      d.inference_latency_us =
          static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count());
      ++stats.detections;
      if (on_detection) on_detection(d);
    }
  }
  reader_stop.request_stop();
  reader.join();
  if (reader_error) std::rethrow_exception(reader_error);

  stats.frames_received = frames.load();
  stats.malformed = rejected.load() + bad_payloads.load();
  stats.crc_errors = crc_errors.load();
  stats.config_frames = configs.load();
  stats.dropped = slot.drops();
  return stats;
}

}  // namespace mmsense::stream
