#include "mmsense/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "mmsense/dataset.hpp"
#include "mmsense/rng.hpp"
#include "mmsense/stream.hpp"
#include "mmsense/wire.hpp"

namespace mmsense::bench {

using Clock = std::chrono::steady_clock;

namespace {

double micros(Clock::duration d) { return std::chrono::duration<double, std::micro>(d).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::vector<RawBurst> make_pool(const BenchOptions& options) {
  const stream::BurstSource source(options.preset, options.seed, options.config);
  std::vector<RawBurst> pool;
  pool.reserve(options.burst_pool);
  for (int i = 0; i < options.burst_pool; ++i) {
    pool.push_back(source.burst(static_cast<std::uint32_t>(i), 0));
  }
  return pool;
}

std::vector<std::uint8_t> encode_burst(const std::vector<RawBurst>& pool, std::uint64_t i, double rate_hz) {
  RawBurst b = pool[i % pool.size()];
  b.burst_id = static_cast<std::uint32_t>(i);
  b.timestamp_us = static_cast<std::uint64_t>(std::llround(static_cast<double>(i) * 1e6 / rate_hz));
  return wire::encode_frame(wire::make_burst_frame(b));
}

void time_sequences(const transdope::TransDopeModel& model, const std::vector<RawBurst>& pool,
                    const BenchOptions& options, BenchReport& report) {
  const int T = model.config.seq_len;
  std::vector<float> seq1, seq2;
  for (int t = 0; t < 2 * T; ++t) {
    const ArdFrame f = dsp::process_burst(pool[static_cast<std::size_t>(t) % pool.size()], options.dsp);
    auto& dst = t < T ? seq1 : seq2;
    dst.insert(dst.end(), f.values.begin(), f.values.end());
  }
  std::vector<double> one, two;
  volatile double sink = 0.0;
  for (int r = 0; r < options.ratio_repeats; ++r) {
    auto t0 = Clock::now();
    sink = sink + transdope::forward(seq1, model);
    auto t1 = Clock::now();
    sink = sink + transdope::forward(seq1, model);
    sink = sink + transdope::forward(seq2, model);
    auto t2 = Clock::now();
    one.push_back(micros(t1 - t0));
    two.push_back(micros(t2 - t1));
  }
  report.sequence_1x8_ms = median(one) / 1000.0;
  report.sequence_2x8_ms = median(two) / 1000.0;
  report.ratio_2x8 = report.sequence_2x8_ms / report.sequence_1x8_ms;
  report.per_frame_ms = report.sequence_1x8_ms / T;
}

struct Timings {
  std::vector<double> decode, dsp, inference, total;
  void reserve(std::size_t n) {
    decode.reserve(n);
    dsp.reserve(n);
    inference.reserve(n);
    total.reserve(n);
  }
};

void run_single(const transdope::TransDopeModel& model, const std::vector<RawBurst>& pool,
                const BenchOptions& options, BenchReport& report, Timings& timings) {
  transdope::StreamingClassifier classifier(model);
  std::vector<float> values;
  double wall_us = 0.0;
  for (std::uint64_t i = 0; i < options.bursts; ++i) {
    const auto bytes = encode_burst(pool, i, options.config.burst_rate_hz());
    const auto t0 = Clock::now();
    const RawBurst burst = wire::burst_from_frame(wire::decode_frame(bytes), options.config);
    const auto t1 = Clock::now();
    const ArdFrame frame = dsp::process_burst(burst, options.dsp);
    const auto t2 = Clock::now();
    values.assign(frame.values.begin(), frame.values.end());
    const auto p = classifier.push(values);
    const auto t3 = Clock::now();
    if (p) ++report.detections;
    timings.decode.push_back(micros(t1 - t0));
    timings.dsp.push_back(micros(t2 - t1));
    timings.inference.push_back(micros(t3 - t2));
    timings.total.push_back(micros(t3 - t0));
    wall_us += micros(t3 - t0);
  }
  report.processed = options.bursts;
  report.wall_s = wall_us / 1e6;
}

struct PipelineItem {
  std::uint64_t id = 0;
  Clock::time_point fed;
  std::vector<std::uint8_t> bytes;
  RawBurst burst;
  ArdFrame frame;
  double decode_us = 0.0;
  double dsp_us = 0.0;
};

void run_pipeline(const transdope::TransDopeModel& model, const std::vector<RawBurst>& pool,
                  const BenchOptions& options, BenchReport& report, Timings& timings) {
  const bool paced = options.rate_hz > 0.0;
  stream::LatestSlot<PipelineItem> to_decode, to_dsp, to_infer;
  auto hand_off = [paced](stream::LatestSlot<PipelineItem>& slot, PipelineItem item) {
    if (paced) {
      slot.push(std::move(item));
    } else {
      slot.push_wait(std::move(item));
    }
  };

  // Encoding is not part of the measured path, so it happens up front.
  std::vector<std::vector<std::uint8_t>> encoded;
  encoded.reserve(options.bursts);
  for (std::uint64_t i = 0; i < options.bursts; ++i) {
    encoded.push_back(encode_burst(pool, i, options.config.burst_rate_hz()));
  }

  const auto start = Clock::now();
  std::jthread feeder([&] {
    for (std::uint64_t i = 0; i < options.bursts; ++i) {
      if (paced) {
        std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(
                                                  std::chrono::duration<double>(i / options.rate_hz)));
      }
      PipelineItem item;
      item.id = i;
      item.bytes = std::move(encoded[i]);
      item.fed = Clock::now();
      hand_off(to_decode, std::move(item));
    }
    to_decode.close();
  });
  std::jthread decoder([&] {
    while (auto item = to_decode.pop_wait()) {
      const auto t0 = Clock::now();
      item->burst = wire::burst_from_frame(wire::decode_frame(item->bytes), options.config);
      item->decode_us = micros(Clock::now() - t0);
      hand_off(to_dsp, std::move(*item));
    }
    to_dsp.close();
  });
  std::jthread dsp_stage([&] {
    while (auto item = to_dsp.pop_wait()) {
      const auto t0 = Clock::now();
      item->frame = dsp::process_burst(item->burst, options.dsp);
      item->dsp_us = micros(Clock::now() - t0);
      hand_off(to_infer, std::move(*item));
    }
    to_infer.close();
  });

  transdope::StreamingClassifier classifier(model);
  std::vector<float> values;
  while (auto item = to_infer.pop_wait()) {
    const auto t0 = Clock::now();
    values.assign(item->frame.values.begin(), item->frame.values.end());
    const auto p = classifier.push(values);
    const auto t1 = Clock::now();
    if (p) ++report.detections;
    ++report.processed;
    timings.decode.push_back(item->decode_us);
    timings.dsp.push_back(item->dsp_us);
    timings.inference.push_back(micros(t1 - t0));
    timings.total.push_back(micros(t1 - item->fed));
  }
  report.wall_s = std::chrono::duration<double>(Clock::now() - start).count();
  report.drops = to_decode.drops() + to_dsp.drops() + to_infer.drops();
}

}  // namespace

LatencyStats LatencyStats::from(std::vector<double> samples) {
  LatencyStats s;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  s.count = samples.size();
  s.min = samples.front();
  s.max = samples.back();
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(samples.size())));
  s.p95 = samples[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::string machine_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  std::ostringstream out;
  out << cpu << ", " << std::thread::hardware_concurrency() << " hw threads";
#if defined(__clang__)
  out << ", clang " << __clang_major__ << "." << __clang_minor__;
#elif defined(__GNUC__)
  out << ", gcc " << __GNUC__ << "." << __GNUC_MINOR__;
#endif
  return out.str();
}

BenchReport run_bench(const transdope::TransDopeModel& model, const BenchOptions& options) {
  if (options.bursts == 0) throw Error("bench needs at least one burst");
  if (options.burst_pool < 1) throw Error("burst_pool must be >= 1");
  if (options.ratio_repeats < 1) throw Error("ratio_repeats must be >= 1");
  if (options.config.samples() != model.config.range_bins || options.config.chirps() != model.config.doppler_bins ||
      options.config.channels() != model.config.channels) {
    throw Error("radar config does not match the model input shape");
  }

  BenchReport report;
  report.mode = options.pipeline ? "pipeline" : "single";
  report.machine = machine_descriptor();
  report.bursts = options.bursts;

  const auto pool = make_pool(options);
  time_sequences(model, pool, options, report);

  Timings timings;
  timings.reserve(options.bursts);
  if (options.pipeline) {
    run_pipeline(model, pool, options, report, timings);
  } else {
    run_single(model, pool, options, report, timings);
  }
  report.decode = LatencyStats::from(std::move(timings.decode));
  report.dsp = LatencyStats::from(std::move(timings.dsp));
  report.inference = LatencyStats::from(std::move(timings.inference));
  report.total = LatencyStats::from(std::move(timings.total));
  report.stage_sum_mean_us = report.decode.mean + report.dsp.mean + report.inference.mean;
  report.throughput = report.wall_s > 0.0 ? static_cast<double>(report.processed) / report.wall_s : 0.0;
  return report;
}

std::string format_report(const BenchReport& r) {
  std::ostringstream out;
  out.precision(6);
  auto stats = [&](const char* name, const LatencyStats& s) {
    out << name << "_min_us=" << s.min << '\n'
        << name << "_mean_us=" << s.mean << '\n'
        << name << "_p95_us=" << s.p95 << '\n'
        << name << "_max_us=" << s.max << '\n';
  };
  out << "mode=" << r.mode << '\n'
      << "machine=" << r.machine << '\n'
      << "bursts=" << r.bursts << '\n'
      << "processed=" << r.processed << '\n'
      << "detections=" << r.detections << '\n'
      << "drops=" << r.drops << '\n'
      << "wall_s=" << r.wall_s << '\n'
      << "throughput_bursts_per_s=" << r.throughput << '\n';
  stats("decode", r.decode);
  stats("dsp", r.dsp);
  stats("inference", r.inference);
  stats("total", r.total);
  out << "stage_sum_mean_us=" << r.stage_sum_mean_us << '\n'
      << "sequence_1x8_ms=" << r.sequence_1x8_ms << '\n'
      << "sequence_2x8_ms=" << r.sequence_2x8_ms << '\n'
      << "ratio_2x8_over_1x8=" << r.ratio_2x8 << '\n'
      << "per_frame_amortized_ms=" << r.per_frame_ms << '\n';
  return out.str();
}

}  // namespace mmsense::bench
