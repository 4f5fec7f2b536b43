#include "mmsense/dsp.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

namespace mmsense::dsp {

namespace {

static_assert(sizeof(Complex) == sizeof(fftw_complex));

enum class Axis { fast_time, slow_time };

struct PlanDeleter {
  void operator()(fftw_plan_s* plan) const { fftw_destroy_plan(plan); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is.
class PlanCache {
 public:
  fftw_plan get(Axis axis, int N, int P, int C) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(axis, N, P, C);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second.get();

    std::vector<Complex> in(static_cast<std::size_t>(N) * P * C);
    std::vector<Complex> out(in.size());
    fftw_iodim dims[1];
    fftw_iodim howmany[2];
    if (axis == Axis::fast_time) {
      // burst [p][n][c] -> range profile [n][p][c]
      dims[0] = {N, C, P * C};
      howmany[0] = {P, N * C, C};
      howmany[1] = {C, 1, 1};
    } else {
      // range profile [n][p][c] -> crd [n][d][c]
      dims[0] = {P, C, C};
      howmany[0] = {N, P * C, P * C};
      howmany[1] = {C, 1, 1};
    }
    fftw_plan plan = fftw_plan_guru_dft(1, dims, 2, howmany,
                                        reinterpret_cast<fftw_complex*>(in.data()),
                                        reinterpret_cast<fftw_complex*>(out.data()),
                                        FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) throw Error("FFTW failed to create a plan");
    auto [it, inserted] = plans_.emplace(key, PlanHandle(plan));
    return it->second.get();
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<Axis, int, int, int>, PlanHandle> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void execute(fftw_plan plan, const std::vector<Complex>& in, std::vector<Complex>& out) {
  // FFTW_ESTIMATE plans never write to the input of an out-of-place transform
  // for 1-D complex DFTs, but the API takes a non-const pointer.
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

double hann(int i, int n) { return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / n)); }

void check_dims(int a, int b, int c, std::size_t size, const char* what) {
  auto pow2 = [](int v) { return v >= 2 && std::has_single_bit(static_cast<unsigned>(v)); };
  if (!pow2(a) || !pow2(b) || c < 1 ||
      size != static_cast<std::size_t>(a) * static_cast<std::size_t>(b) * c) {
    std::ostringstream os;
    os << what << " has inconsistent dimensions " << a << "x" << b << "x" << c << " for "
       << size << " elements";
    throw Error(os.str());
  }
}

}  // namespace

RangeProfile range_profile(const RawBurst& burst, const Options& options) {
  check_dims(burst.chirps, burst.samples, burst.channels, burst.data.size(), "burst");
  const int P = burst.chirps, N = burst.samples, C = burst.channels;

  RangeProfile rp;
  rp.burst_id = burst.burst_id;
  rp.timestamp_us = burst.timestamp_us;
  rp.range_bins = N;
  rp.chirps = P;
  rp.channels = C;
  rp.data.resize(burst.data.size());

  const fftw_plan plan = plan_cache().get(Axis::fast_time, N, P, C);
  if (!options.hann_window) {
    execute(plan, burst.data, rp.data);
  } else {
    std::vector<Complex> tapered = burst.data;
    for (int p = 0; p < P; ++p)
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) tapered[burst.index(p, n, c)] *= hann(n, N);
    execute(plan, tapered, rp.data);
  }
  return rp;
}

Crd complex_range_doppler(const RangeProfile& rp, const Options& options) {
  check_dims(rp.range_bins, rp.chirps, rp.channels, rp.data.size(), "range profile");
  const int N = rp.range_bins, P = rp.chirps, C = rp.channels;

  std::vector<Complex> spectrum(rp.data.size());
  const fftw_plan plan = plan_cache().get(Axis::slow_time, N, P, C);
  if (!options.hann_window) {
    execute(plan, rp.data, spectrum);
  } else {
    std::vector<Complex> tapered = rp.data;
    for (int n = 0; n < N; ++n)
      for (int p = 0; p < P; ++p)
        for (int c = 0; c < C; ++c) tapered[rp.index(n, p, c)] *= hann(p, P);
    execute(plan, tapered, spectrum);
  }

  Crd crd;
  crd.burst_id = rp.burst_id;
  crd.timestamp_us = rp.timestamp_us;
  crd.range_bins = N;
  crd.doppler_bins = P;
  crd.channels = C;
  crd.data.resize(spectrum.size());
  const int half = P / 2;
  for (int n = 0; n < N; ++n)
    for (int d = 0; d < P; ++d)
      for (int c = 0; c < C; ++c)
        crd.data[crd.index(n, d, c)] = spectrum[crd.index(n, (d + half) % P, c)];
  return crd;
}

ArdFrame ard(const Crd& crd) {
  ArdFrame frame;
  frame.burst_id = crd.burst_id;
  frame.timestamp_us = crd.timestamp_us;
  frame.range_bins = crd.range_bins;
  frame.doppler_bins = crd.doppler_bins;
  frame.channels = crd.channels;
  frame.values.resize(crd.data.size());
  for (std::size_t i = 0; i < crd.data.size(); ++i) frame.values[i] = std::abs(crd.data[i]);
  return frame;
}

ArdFrame process_burst(const RawBurst& burst, const Options& options) {
  return ard(complex_range_doppler(range_profile(burst, options), options));
}

ArdFrame process_burst(const RawBurst& burst, const RadarConfig& config, const Options& options) {
  if (!burst.matches(config)) {
    std::ostringstream os;
    os << "burst dimensions " << burst.chirps << "x" << burst.samples << "x" << burst.channels
       << " do not match config " << config.chirps() << "x" << config.samples() << "x"
       << config.channels();
    throw Error(os.str());
  }
  return process_burst(burst, options);
}

}  // namespace mmsense::dsp
